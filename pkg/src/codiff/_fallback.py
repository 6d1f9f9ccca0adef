"""Pure numpy implementations of the hot kernels.

Signatures mirror ``_kernels.pyx`` exactly; ``codiff.kernels`` picks one at
import time.
"""
import numpy as np


def mixture_score(x, means, log_w, var):
    """Score of an isotropic Gaussian mixture at a single point.

    ``means`` are the already time-scaled component centres (K, d), ``var``
    the per-component isotropic variance, ``log_w`` the log mixing weights.
    """
    x = np.asarray(x, dtype=np.float64)
    diff = x[None, :] - means
    sq = np.einsum("kd,kd->k", diff, diff)
    d = x.shape[0]
    log_r = log_w - 0.5 * sq / var - 0.5 * d * np.log(var)
    log_r -= log_r.max()
    r = np.exp(log_r)
    r /= r.sum()
    return -((r / var)[:, None] * diff).sum(axis=0)


def ddpm_update(x, eps, c_x, c_eps, sigma, z):
    out = c_x * (np.asarray(x, dtype=np.float64) - c_eps * np.asarray(eps, dtype=np.float64))
    if z is not None and sigma != 0.0:
        out = out + sigma * np.asarray(z, dtype=np.float64)
    return out


def ssim_mean(a, b, window, c1, c2):
    """Mean SSIM over fully interior window positions (no padding)."""
    from numpy.lib.stride_tricks import sliding_window_view

    k = window.shape[0]
    pa = sliding_window_view(np.asarray(a, dtype=np.float64), (k, k))
    pb = sliding_window_view(np.asarray(b, dtype=np.float64), (k, k))
    mu_a = np.einsum("ijkl,kl->ij", pa, window)
    mu_b = np.einsum("ijkl,kl->ij", pb, window)
    var_a = np.einsum("ijkl,kl->ij", pa * pa, window) - mu_a**2
    var_b = np.einsum("ijkl,kl->ij", pb * pb, window) - mu_b**2
    cov = np.einsum("ijkl,kl->ij", pa * pb, window) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float((num / den).mean())


def quantize_codes(x, lo, hi, bits):
    levels = (1 << bits) - 1
    v = np.clip(np.asarray(x, dtype=np.float64), lo, hi)
    codes = np.floor((v - lo) / (hi - lo) * levels + 0.5)
    return np.clip(codes, 0, levels).astype(np.uint16)


def pack_codes(codes, bits):
    codes = np.asarray(codes, dtype=np.uint16)
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint16)
    bitmat = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    return np.packbits(bitmat.ravel())


def unpack_codes(payload, count, bits):
    flat = np.unpackbits(np.asarray(payload, dtype=np.uint8), count=count * bits)
    weights = (1 << np.arange(bits - 1, -1, -1)).astype(np.uint32)
    return (flat.reshape(count, bits).astype(np.uint32) @ weights).astype(np.uint16)
