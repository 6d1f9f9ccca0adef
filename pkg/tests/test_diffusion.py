import math

import numpy as np
import pytest

from codiff.diffusion import (Condition, ConditionError, Latent, MixtureModel, ScheduleError,
                              build_schedule, forward_diffuse, mixture_score, predict_noise,
                              reverse_step, sample, schedule_from_betas, split_sample)
from codiff.metrics import classify
from codiff.rng import RngStreams

import oracles


class TestSchedule:
    def test_default_alpha_bar_matches_oracle(self, schedule):
        expected = oracles.alpha_bars(11, 0.1, 0.6)
        np.testing.assert_allclose(schedule.alpha_bars, expected, rtol=1e-14)
        assert schedule.alpha_bar(11) == pytest.approx(oracles.ALPHA_BAR_11_DEFAULT, rel=1e-9)
        assert schedule.alpha_bar(11) <= 0.02

    def test_betas_linear(self, schedule):
        np.testing.assert_allclose(np.diff(schedule.betas), 0.05, atol=1e-15)
        assert schedule.beta(1) == 0.1 and schedule.beta(11) == pytest.approx(0.6)

    def test_single_step_rejected(self):
        with pytest.raises(ScheduleError, match="noise"):
            schedule_from_betas([0.5])

    @pytest.mark.parametrize("args", [(0, 0.1, 0.6), (11, 1.2, 0.6), (11, 0.0, 0.6), (11, 0.6, 0.1)])
    def test_domain_errors(self, args):
        with pytest.raises(ScheduleError):
            build_schedule(*args)

    def test_sanity(self, schedule):
        assert np.all(np.diff(schedule.alpha_bars) < 0)
        sig = [schedule.sigma(t) for t in range(1, 12)]
        assert all(s >= 0 for s in sig)
        assert sig[0] == 0.0

    def test_sigma_hand_value(self):
        # beta_2 = 0.2 with abar_1 = 0.5 and abar_2 = 0.4; trailing steps only reach noise
        sched = schedule_from_betas([0.5, 0.2, 0.9, 0.9])
        assert sched.alpha_bar(2) == pytest.approx(0.4)
        assert sched.sigma(2) ** 2 == pytest.approx(0.2 * 0.5 / 0.6, rel=1e-12)


class TestLatentAndMixture:
    def test_latent_shape_check(self):
        with pytest.raises(ValueError):
            Latent(np.zeros(5), 2, 2, 0)
        lat = Latent(np.arange(6.0), 3, 2, 4)
        assert lat.image().shape == (2, 3)
        assert not lat.data.flags.writeable

    def test_mixture_weights_normalised(self):
        m = MixtureModel.build({"a": np.zeros(4), "b": np.ones(4), "c": np.ones(4)}, 2, 2,
                               weights={"a": 1, "b": 2, "c": 7})
        assert sum(c.weight for c in m.components) == pytest.approx(1.0, abs=1e-12)

    def test_mixture_dimension_check(self):
        with pytest.raises(ValueError):
            MixtureModel.build({"a": np.zeros(4), "b": np.zeros(5)}, 2, 2)

    def test_condition_unknown_concept(self, tiny_mixture, schedule):
        with pytest.raises(ConditionError):
            mixture_score(np.zeros(4), 3, tiny_mixture, Condition(("zebra",)), schedule)

    def test_condition_empty(self):
        with pytest.raises(ConditionError):
            Condition(())

    def test_scene_concept_alone_enables_nothing(self, mixture, schedule):
        with pytest.raises(ConditionError):
            mixture_score(np.zeros(256), 3, mixture, Condition(("table",)), schedule)


class TestForward:
    def test_zero_noise(self, schedule):
        x0 = Latent(np.linspace(-1, 1, 4), 2, 2, 0)
        out = forward_diffuse(x0, 5, np.zeros(4), schedule)
        np.testing.assert_allclose(out.data, math.sqrt(schedule.alpha_bar(5)) * x0.data, rtol=0, atol=0)

    def test_zero_signal(self, schedule):
        eps = np.array([0.3, -1.2, 2.0, 0.0])
        out = forward_diffuse(Latent(np.zeros(4), 2, 2, 0), 7, eps, schedule)
        np.testing.assert_allclose(out.data, math.sqrt(1 - schedule.alpha_bar(7)) * eps)

    def test_closed_form_at_T(self, schedule):
        mu = np.array([0.9, 0.1, -0.4, 0.6])
        e = np.array([1.5, -0.25, 0.75, -2.0])
        ab = oracles.alpha_bars(11, 0.1, 0.6)[11]
        out = forward_diffuse(Latent(mu, 2, 2, 0), 11, e, schedule)
        expected = [math.sqrt(ab) * m + math.sqrt(1 - ab) * n for m, n in zip(mu, e)]
        np.testing.assert_allclose(out.data, expected, rtol=1e-14)
        assert out.t == 11

    def test_dimension_mismatch(self, schedule):
        with pytest.raises(ValueError):
            forward_diffuse(Latent(np.zeros(4), 2, 2, 0), 3, np.zeros(3), schedule)


class TestScore:
    def test_single_component(self, schedule):
        mu = np.array([0.2, 0.7, 0.1, 0.5])
        m = MixtureModel.build({"a": mu}, 2, 2, sigma0=0.1)
        x = np.array([1.0, -0.5, 0.3, 0.0])
        for t in (1, 6, 11):
            ab = schedule.alpha_bar(t)
            s2 = ab * 0.01 + 1 - ab
            got = mixture_score(x, t, m, Condition(("a",)), schedule)
            np.testing.assert_allclose(got, -(x - math.sqrt(ab) * mu) / s2, rtol=1e-13)

    def test_symmetric_pair_zero(self, tiny_mixture, schedule):
        got = mixture_score(np.zeros(4), 4, tiny_mixture, Condition(("a", "b")), schedule)
        np.testing.assert_allclose(got, 0.0, atol=1e-15)

    def test_asymmetric_matches_finite_difference(self, schedule):
        means = [np.array([0.9, 0.2, 0.4]), np.array([-0.3, 0.8, 0.1])]
        m = MixtureModel.build({"a": means[0], "b": means[1]}, 3, 1, sigma0={"a": 0.1, "b": 0.3},
                               weights={"a": 0.3, "b": 0.7})
        x = np.array([0.2, 0.1, -0.6])
        t = 3
        got = mixture_score(x, t, m, Condition(("a", "b")), schedule)
        ref = oracles.fd_score(x, means, [0.3, 0.7], [0.1, 0.3], schedule.alpha_bar(t))
        assert np.linalg.norm(got - ref) / np.linalg.norm(ref) < 1e-6

    def test_condition_restricts(self, tiny_mixture, schedule):
        x = np.full(4, 0.5)
        only_b = mixture_score(x, 2, tiny_mixture, Condition(("b",)), schedule)
        ab = schedule.alpha_bar(2)
        s2 = ab * 0.01 + 1 - ab
        np.testing.assert_allclose(only_b, -(x + math.sqrt(ab) * 0.8) / s2, rtol=1e-12)

    def test_background_reweights(self, tiny_mixture, schedule):
        x = np.full(4, -0.05)
        hard = mixture_score(x, 2, tiny_mixture, Condition(("a",)), schedule)
        soft = mixture_score(x, 2, tiny_mixture, Condition(("a",), background=1.0), schedule)
        both = mixture_score(x, 2, tiny_mixture, Condition(("a", "b")), schedule)
        np.testing.assert_allclose(soft, both, rtol=1e-12)
        assert not np.allclose(hard, soft)

    def test_far_point_is_stable(self, tiny_mixture, schedule):
        got = mixture_score(np.full(4, 1e3), 1, tiny_mixture, Condition(("a", "b")), schedule)
        assert np.all(np.isfinite(got))


class TestNoisePrediction:
    def test_identity(self, mixture, schedule):
        x = np.random.default_rng(3).standard_normal(256)
        cond = Condition(("apple", "lemon"))
        for t in (1, 5, 11):
            eps = predict_noise(x, t, mixture, cond, schedule)
            score = mixture_score(x, t, mixture, cond, schedule)
            np.testing.assert_allclose(eps + math.sqrt(1 - schedule.alpha_bar(t)) * score, 0.0, atol=1e-12)

    def test_mode_gives_zero(self, schedule):
        mu = np.array([0.3, 0.6, 0.9, 0.2])
        m = MixtureModel.build({"a": mu}, 2, 2, sigma0=0.0)
        x = math.sqrt(schedule.alpha_bar(6)) * mu
        np.testing.assert_allclose(predict_noise(x, 6, m, Condition(("a",)), schedule), 0.0, atol=1e-14)

    def test_matches_fd_oracle(self, tiny_mixture, schedule):
        x = np.array([0.4, -0.2, 0.1, 0.3])
        ab = schedule.alpha_bar(8)
        ref = -math.sqrt(1 - ab) * oracles.fd_score(x, [np.full(4, 0.8), np.full(4, -0.8)], [0.5, 0.5], [0.1, 0.1], ab)
        got = predict_noise(x, 8, tiny_mixture, Condition(("a", "b")), schedule)
        assert np.linalg.norm(got - ref) / np.linalg.norm(ref) < 1e-6


class TestReverseStep:
    def test_t1_is_deterministic(self, schedule):
        x = Latent(np.array([0.1, 0.2, 0.3, 0.4]), 2, 2, 1)
        a = reverse_step(x, 1, np.ones(4), schedule, np.random.default_rng(0))
        b = reverse_step(x, 1, np.ones(4), schedule, None)
        np.testing.assert_array_equal(a.data, b.data)
        assert a.t == 0

    def test_hand_formula(self, schedule):
        x = np.array([0.5, -1.0, 2.0, 0.0])
        eps = np.array([0.1, 0.2, -0.3, 0.4])
        t = 6
        rng = np.random.default_rng(11)
        z = np.random.default_rng(11).standard_normal(4)
        out = reverse_step(Latent(x, 2, 2, t), t, eps, schedule, rng)
        beta = 0.1 + 0.05 * (t - 1)
        ab = oracles.alpha_bars(11, 0.1, 0.6)
        sigma = math.sqrt(beta * (1 - ab[t - 1]) / (1 - ab[t]))
        expected = (x - beta / math.sqrt(1 - ab[t]) * eps) / math.sqrt(1 - beta) + sigma * z
        np.testing.assert_allclose(out.data, expected, rtol=1e-12)

    def test_dimension_check(self, schedule):
        with pytest.raises(ValueError):
            reverse_step(Latent(np.zeros(4), 2, 2, 3), 3, np.zeros(3), schedule, np.random.default_rng(0))


class TestSampling:
    def test_same_seed_identical(self, mixture, schedule):
        cond = Condition(("apple",))
        a = sample(schedule, mixture, cond, (16, 16), RngStreams(5))
        b = sample(schedule, mixture, cond, (16, 16), RngStreams(5))
        assert a.data.tobytes() == b.data.tobytes()
        assert a.t == 0

    def test_symmetric_pair_splits(self, tiny_mixture, schedule):
        cond = Condition(("a", "b"))
        votes = [classify(sample(schedule, tiny_mixture, cond, (2, 2), RngStreams(i)), tiny_mixture).predicted
                 for i in range(300)]
        frac = votes.count("a") / len(votes)
        assert 0.35 < frac < 0.65

    def test_split_counts(self, mixture, schedule):
        cond = Condition(("apple", "table"))
        handoff, final = split_sample(schedule, mixture, cond, cond, 5, streams=RngStreams(1))
        assert handoff.t == 6 and final.t == 0

    def test_split_zero_shared_matches_sample(self, mixture, schedule):
        cond = Condition(("lemon",))
        _, final = split_sample(schedule, mixture, Condition(("apple",)), cond, 0, streams=RngStreams(9), local_index=2)
        mono = sample(schedule, mixture, cond, (16, 16), RngStreams(9), 0, local_index=2)
        assert final.data.tobytes() == mono.data.tobytes()

    def test_concept_targeting(self, mixture, schedule):
        for concept in ("apple", "bird", "car"):
            out = sample(schedule, mixture, Condition((concept, "table")), (16, 16), RngStreams(17))
            assert classify(out, mixture).predicted == concept

    def test_dims_checked(self, mixture, schedule):
        with pytest.raises(ValueError):
            sample(schedule, mixture, Condition(("apple",)), (8, 8), RngStreams(0))


def test_rng_streams_are_stable():
    a = RngStreams(42, (1, 2)).stream("local", 3).standard_normal(8)
    b = RngStreams(42, (1, 2)).stream("local", 3).standard_normal(8)
    c = RngStreams(42, (1, 2)).stream("local", 4).standard_normal(8)
    d = RngStreams(42, (1, 2)).stream("channel", 3).standard_normal(8)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c) and not np.array_equal(a, d)
    with pytest.raises(ValueError):
        RngStreams(-1)
    with pytest.raises(ValueError):
        RngStreams(1).stream("bogus")
