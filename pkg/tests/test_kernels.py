"""The compiled and pure-Python kernels must agree."""
import numpy as np
import pytest

from codiff import kernels
from codiff.metrics import SsimParams

py = kernels.get_backend("python")
cy = kernels.get_backend("cython") if kernels.compiled_available() else None
needs_ext = pytest.mark.skipif(not kernels.compiled_available(), reason="compiled extension not built")


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@needs_ext
class TestAgreement:
    @pytest.mark.parametrize("seed", range(5))
    def test_mixture_score(self, seed):
        rng = np.random.default_rng(seed)
        k, d = rng.integers(1, 8), 256
        x = rng.standard_normal(d)
        means = rng.standard_normal((k, d))
        log_w = np.log(rng.dirichlet(np.ones(k)))
        var = rng.uniform(0.05, 1.0, k)
        a = py.mixture_score(x, means, log_w, var)
        b = cy.mixture_score(x, means, log_w, var)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)

    def test_ddpm_update(self):
        rng = np.random.default_rng(1)
        x, eps, z = rng.standard_normal((3, 256))
        for sigma, zz in ((0.3, z), (0.0, None)):
            np.testing.assert_allclose(py.ddpm_update(x, eps, 1.1, 0.4, sigma, zz),
                                       cy.ddpm_update(x, eps, 1.1, 0.4, sigma, zz), rtol=1e-15)

    def test_ssim(self):
        rng = np.random.default_rng(2)
        p = SsimParams()
        for _ in range(5):
            a, b = rng.random((2, 16, 16))
            assert py.ssim_mean(a, b, p.kernel(), p.c1, p.c2) == pytest.approx(
                cy.ssim_mean(a, b, p.kernel(), p.c1, p.c2), abs=1e-13)

    @pytest.mark.parametrize("bits", [1, 5, 8, 11, 16])
    def test_codec(self, bits):
        rng = np.random.default_rng(bits)
        x = rng.uniform(-6, 6, 257)
        ca, cb = py.quantize_codes(x, -4.0, 4.0, bits), cy.quantize_codes(x, -4.0, 4.0, bits)
        np.testing.assert_array_equal(ca, cb)
        pa, pb = py.pack_codes(ca, bits), cy.pack_codes(cb, bits)
        np.testing.assert_array_equal(pa, pb)
        np.testing.assert_array_equal(py.unpack_codes(pa, 257, bits), cy.unpack_codes(pb, 257, bits))
        np.testing.assert_array_equal(py.unpack_codes(pa, 257, bits), ca)


def test_env_forces_fallback():
    import os
    import subprocess
    import sys

    env = dict(os.environ, CODIFF_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import codiff; print(codiff.BACKEND)"], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
