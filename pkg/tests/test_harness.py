import csv
import io

import numpy as np
import pytest

from codiff import pgm
from codiff.cli import main
from codiff.config import ConfigError, loads_config, load_config
from codiff.harness import (COLUMNS, SummaryError, emit_summary, preset_configs, read_rows, run_scenario,
                            summarize_rows)

MINIMAL = """
seed = 7
[prompts]
u1 = "Apple on Table"
u2 = "Lemon on Table"
"""


def small_config(tmp_path, extra="", reps=3, tables=""):
    path = tmp_path / "scenario.toml"
    path.write_text(f'name = "small"\nrepetitions = {reps}\narchitecture = "d2d"\n{extra}\n{MINIMAL}\n{tables}')
    return path


class TestConfig:
    def test_defaults(self):
        cfg = loads_config(MINIMAL)
        assert (cfg.T, cfg.width, cfg.height) == (11, 16, 16)
        assert cfg.channel == "fixed" and cfg.ber == (0.0,)
        assert cfg.users == ("u1", "u2")

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="colour"):
            loads_config('colour = "red"\n' + MINIMAL)

    def test_ber_grid_cells(self):
        cfg = loads_config("ber = [0, 0.005, 0.01, 0.02, 0.05, 0.1]\n" + MINIMAL)
        assert len(cfg.cells()) == 6

    def test_cells_product(self):
        cfg = loads_config("shared_steps = [3, 5]\nber = [0, 0.1]\n" + MINIMAL)
        assert cfg.cells() == [(3, 0.0), (3, 0.1), (5, 0.0), (5, 0.1)]

    def test_parse_error_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            loads_config('seed = 1\nname = \n')

    @pytest.mark.parametrize("bad", [
        "ber = []", "ber = [1.5]", "repetitions = 0", "shared_steps = [12]", 'architecture = "mesh"',
        "T = 2.5", 'seed = "x"', 'graph = "missing.toml"', 'channel = "carrier-pigeon"', "bits = 0",
    ])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            loads_config(bad + "\n" + MINIMAL)

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="prompts"):
            loads_config("seed = 1\n")

    def test_relative_assets(self, tmp_path):
        (tmp_path / "apple.pgm").write_bytes(pgm.encode(np.zeros((16, 16))))
        path = small_config(tmp_path, tables='[prototypes]\napple = "apple.pgm"\nlemon = "procedural"\n')
        cfg = load_config(path)
        assert dict(cfg.prototypes)["apple"] == str(tmp_path / "apple.pgm")


class TestPgm:
    def test_encode_layout(self):
        img = np.array([[0.0, 1.0, 0.5], [2.0, -1.0, 0.25]])
        blob = pgm.encode(img)
        assert blob.startswith(b"P5\n3 2\n255\n")
        assert list(blob[-6:]) == [0, 255, 128, 255, 0, 64]

    def test_roundtrip_exact(self, tmp_path):
        img = np.random.default_rng(0).uniform(-0.2, 1.2, (16, 16))
        pgm.write_pgm(tmp_path / "x.pgm", img)
        back = pgm.read_pgm(tmp_path / "x.pgm")
        np.testing.assert_array_equal(back * 255, pgm.to_bytes(img).astype(float))

    def test_comments_in_header(self):
        blob = b"P5\n# made by hand\n2 1\n255\n" + bytes([3, 4])
        assert pgm.decode(blob).tolist() == [[3, 4]]

    @pytest.mark.parametrize("blob", [b"P2\n1 1\n255\n0", b"P5\n2 2\n255\n\x00", b"P5\n1 1\n65535\n\x00\x00"])
    def test_rejects(self, blob):
        with pytest.raises(pgm.PGMError):
            pgm.decode(blob)


class TestRunner:
    def test_row_count_and_columns(self, tmp_path):
        cfg = load_config(small_config(tmp_path, "ber = [0.0, 0.05]"))
        art = run_scenario(cfg, tmp_path / "out")
        rows = list(csv.DictReader(art.csv_path.open()))
        assert len(rows) == 2 * 3 * 2 == art.rows
        assert tuple(rows[0]) == COLUMNS
        assert {r["user"] for r in rows} == {"u1", "u2"}
        for r in rows:
            assert all(np.isfinite(float(r[c])) for c in ("psnr_ref", "ssim_ref", "latency_s"))

    def test_images_are_valid(self, tmp_path):
        cfg = load_config(small_config(tmp_path))
        art = run_scenario(cfg, tmp_path / "out")
        assert len(art.images) == 4
        for p in art.images:
            img = pgm.read_pgm(p)
            assert img.shape == (16, 16)
            assert pgm.encode(img) == p.read_bytes()

    def test_error_free_reference(self, tmp_path):
        cfg = load_config(small_config(tmp_path))
        rows = list(csv.DictReader(run_scenario(cfg, tmp_path / "out").csv_path.open()))
        assert all(float(r["psnr_ref"]) == 120.0 for r in rows)

    def test_parallel_matches_serial(self, tmp_path):
        cfg = load_config(small_config(tmp_path, "ber = [0.0, 0.05]"))
        a = run_scenario(cfg, tmp_path / "a", jobs=1)
        b = run_scenario(cfg, tmp_path / "b", jobs=3)
        assert a.csv_path.read_bytes() == b.csv_path.read_bytes()
        assert a.summary_path.read_bytes() == b.summary_path.read_bytes()

    def test_unknown_prototype_concept(self, tmp_path):
        path = tmp_path / "s.toml"
        path.write_text('seed = 1\n[prompts]\nu1 = "A dog on a chair"\n')
        with pytest.raises(ValueError, match="prototype"):
            run_scenario(load_config(path), tmp_path / "out")

    def test_presets_validate(self):
        names = [c.name for n in ("ber_sweep", "split_sweep", "mismatch", "arch_compare")
                 for c in preset_configs(n)]
        assert len(names) == len(set(names)) == 9
        with pytest.raises(ValueError):
            preset_configs("nope")


class TestSummary:
    def _csv(self, tmp_path, rows):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: r.get(c, "0") for c in COLUMNS})
        path = tmp_path / "r.csv"
        path.write_text(buf.getvalue())
        return path

    def test_single_rep_std_zero(self, tmp_path):
        path = self._csv(tmp_path, [{"user": "u1", "psnr_ref": "30"}])
        (rec,) = summarize_rows(read_rows(path))
        assert rec["psnr_ref_mean"] == 30 and rec["psnr_ref_std"] == 0 and rec["n"] == 1

    def test_hand_means(self, tmp_path):
        rows = [{"cell": "0", "user": "u1", "fidelity": "1"}, {"cell": "0", "user": "u1", "fidelity": "0"},
                {"cell": "1", "user": "u1", "fidelity": "1"}, {"cell": "1", "user": "u1", "fidelity": "1"}]
        out = emit_summary(self._csv(tmp_path, rows), tmp_path / "s.csv")
        recs = list(csv.DictReader(out.open()))
        assert [float(r["fidelity_mean"]) for r in recs] == [0.5, 1.0]
        assert [float(r["fidelity_std"]) for r in recs] == [0.5, 0.0]

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("scenario,cell\nx,0\n")
        with pytest.raises(SummaryError, match="missing column 'user'"):
            read_rows(path)

    def test_non_numeric(self, tmp_path):
        path = self._csv(tmp_path, [{"psnr_ref": "loud"}])
        with pytest.raises(SummaryError, match="psnr_ref"):
            read_rows(path)


class TestCli:
    def test_run_and_summarize(self, tmp_path, capsys):
        path = small_config(tmp_path)
        assert main(["run", str(path), "--out-dir", str(tmp_path / "o"), "--seed", "3", "--reps", "2"]) == 0
        csv_path = tmp_path / "o" / "small" / "results.csv"
        assert len(list(csv.DictReader(csv_path.open()))) == 4
        assert main(["summarize", str(csv_path)]) == 0
        assert (tmp_path / "o" / "small" / "results_summary.csv").exists()

    def test_seed_flag_changes_output(self, tmp_path):
        path = small_config(tmp_path, "ber = [0.05]", reps=1)
        main(["run", str(path), "--out-dir", str(tmp_path / "a"), "--seed", "1"])
        main(["run", str(path), "--out-dir", str(tmp_path / "b"), "--seed", "2"])
        a = (tmp_path / "a" / "small" / "results.csv").read_bytes()
        b = (tmp_path / "b" / "small" / "results.csv").read_bytes()
        assert a != b

    def test_graph_show(self, capsys):
        assert main(["graph", "show"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("schema_version = 1") and '["apple", "fruit"]' in out

    def test_config_error_exit(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text('colour = "red"\n' + MINIMAL)
        assert main(["run", str(path)]) == 2
        err = capsys.readouterr().err
        assert "error[config]" in err and "colour" in err

    def test_missing_file_exit(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "nope.toml")]) == 4
        assert "error[io]" in capsys.readouterr().err

    def test_domain_error_exit(self, tmp_path, capsys):
        path = tmp_path / "s.toml"
        path.write_text('seed = 1\n[prompts]\nu1 = "xyzzy"\n')
        assert main(["run", str(path), "--out-dir", str(tmp_path)]) == 3
        assert "error[domain]" in capsys.readouterr().err

    def test_data_error_exit(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        assert main(["summarize", str(path)]) == 5
        assert "error[data]" in capsys.readouterr().err

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["preset", "nope"])
        assert exc.value.code != 0
