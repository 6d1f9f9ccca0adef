import math

import numpy as np
import pytest

from codiff.diffusion import Latent, MixtureModel
from codiff.metrics import SsimParams, classify, mse, psnr, ssim

import oracles


def fixtures(n=5, seed=0):
    rng = np.random.default_rng(seed)
    return [(rng.random((16, 16)), rng.random((16, 16))) for _ in range(n)]


def test_mse_basics():
    x = np.random.default_rng(0).random((16, 16))
    assert mse(x, x) == 0.0
    assert mse(np.zeros((4, 4)), np.full((4, 4), 0.5)) == 0.25


def test_psnr_closed_form_and_cap():
    a = np.zeros((10, 10))
    b = np.full((10, 10), 0.1)  # mse 0.01
    assert psnr(a, b) == pytest.approx(20.0)
    assert psnr(a, a) == 120.0


def test_accepts_latents():
    x = np.random.default_rng(1).random(256)
    lat = Latent(x, 16, 16, 0)
    assert mse(lat, x.reshape(16, 16)) == 0.0


def test_shape_mismatch():
    with pytest.raises(ValueError):
        mse(np.zeros((4, 4)), np.zeros((4, 5)))


@pytest.mark.parametrize("a,b", fixtures())
def test_against_naive_oracles(a, b):
    assert mse(a, b) == pytest.approx(oracles.mse(a, b), abs=1e-12)
    assert psnr(a, b) == pytest.approx(oracles.psnr(a, b), abs=1e-9)
    assert ssim(a, b) == pytest.approx(oracles.ssim(a, b), abs=1e-9)


def test_ssim_identity_and_inverse():
    x = np.random.default_rng(3).random((16, 16))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)
    inv = ssim(x, 1 - x)
    assert inv < 1
    assert inv == pytest.approx(oracles.ssim(x, 1 - x), abs=1e-9)


def test_ssim_window_positions():
    # 16x16 with a 7x7 window gives 100 interior positions; a corner pixel
    # falls inside only the first one, the other 99 compare constant patches
    a = np.zeros((16, 16))
    b = a.copy()
    b[0, 0] = 1.0
    p = SsimParams()
    w = p.kernel()[0, 0]
    first = p.c1 * p.c2 / ((w * w + p.c1) * (w - w * w + p.c2))
    assert ssim(a, b) == pytest.approx((99 + first) / 100, abs=1e-12)


def test_ssim_errors():
    with pytest.raises(ValueError):
        ssim(np.zeros((5, 5)), np.zeros((5, 5)))
    with pytest.raises(ValueError):
        SsimParams(window=4)
    with pytest.raises(ValueError):
        SsimParams(L=0)


class TestClassify:
    def test_exact_prototype(self, mixture):
        for cid in mixture.concept_ids:
            v = classify(mixture.prototype(cid), mixture)
            assert v.predicted == cid and v.distance == 0.0 and v.margin > 0

    def test_midpoint_ties_to_lower_id(self):
        m = MixtureModel.build({"zeta": np.ones(4), "alpha": -np.ones(4)}, 2, 2)
        v = classify(np.zeros(4), m)
        assert v.predicted == "alpha" and v.margin == 0.0

    def test_single_prototype_margin(self):
        m = MixtureModel.build({"a": np.ones(4)}, 2, 2)
        assert math.isinf(classify(np.zeros(4), m).margin)

    def test_noisy_prototypes(self, mixture):
        rng = np.random.default_rng(2024)
        for cid in mixture.concept_ids:
            mu = mixture.prototype(cid)
            hits = sum(classify(mu + 0.05 * rng.standard_normal(mu.size), mixture).predicted == cid
                       for _ in range(1000))
            assert hits >= 990, cid
