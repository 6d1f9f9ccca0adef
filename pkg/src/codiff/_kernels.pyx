# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Same signatures as ``codiff._fallback``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, floor

cnp.import_array()


def mixture_score(x, means, log_w, var):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] mv = np.ascontiguousarray(means, dtype=np.float64)
    cdef const double[::1] lw = np.ascontiguousarray(log_w, dtype=np.float64)
    cdef const double[::1] vv = np.ascontiguousarray(var, dtype=np.float64)
    cdef Py_ssize_t K = mv.shape[0], d = mv.shape[1], i, j
    if xv.shape[0] != d:
        raise ValueError("dimension mismatch between point and means")
    out = np.zeros(d, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double[::1] lr = np.empty(K, dtype=np.float64)
    cdef double acc, diff, best, total, coef
    with nogil:
        best = -1e308
        for i in range(K):
            acc = 0.0
            for j in range(d):
                diff = xv[j] - mv[i, j]
                acc = acc + diff * diff
            lr[i] = lw[i] - 0.5 * acc / vv[i] - 0.5 * d * log(vv[i])
            if lr[i] > best:
                best = lr[i]
        total = 0.0
        for i in range(K):
            lr[i] = exp(lr[i] - best)
            total = total + lr[i]
        for i in range(K):
            coef = lr[i] / total / vv[i]
            if coef == 0.0:
                continue
            for j in range(d):
                ov[j] = ov[j] - coef * (xv[j] - mv[i, j])
    return out


def ddpm_update(x, eps, double c_x, double c_eps, double sigma, z):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] ev = np.ascontiguousarray(eps, dtype=np.float64)
    cdef const double[::1] zv
    cdef Py_ssize_t d = xv.shape[0], j
    out = np.empty(d, dtype=np.float64)
    cdef double[::1] ov = out
    cdef bint noisy = z is not None and sigma != 0.0
    if noisy:
        zv = np.ascontiguousarray(z, dtype=np.float64)
    with nogil:
        for j in range(d):
            ov[j] = c_x * (xv[j] - c_eps * ev[j])
        if noisy:
            for j in range(d):
                ov[j] = ov[j] + sigma * zv[j]
    return out


def ssim_mean(a, b, window, double c1, double c2):
    cdef const double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[:, ::1] wv = np.ascontiguousarray(window, dtype=np.float64)
    cdef Py_ssize_t H = av.shape[0], W = av.shape[1], k = wv.shape[0]
    cdef Py_ssize_t i, j, u, v, n = 0
    cdef double ma, mb, saa, sbb, sab, w, pa, pb, va, vb, cab, total = 0.0
    with nogil:
        for i in range(H - k + 1):
            for j in range(W - k + 1):
                ma = 0.0; mb = 0.0; saa = 0.0; sbb = 0.0; sab = 0.0
                for u in range(k):
                    for v in range(k):
                        w = wv[u, v]
                        pa = av[i + u, j + v]
                        pb = bv[i + u, j + v]
                        ma = ma + w * pa
                        mb = mb + w * pb
                        saa = saa + w * (pa * pa)
                        sbb = sbb + w * (pb * pb)
                        sab = sab + w * (pa * pb)
                va = saa - ma * ma
                vb = sbb - mb * mb
                cab = sab - ma * mb
                total = total + ((2 * ma * mb + c1) * (2 * cab + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
                n = n + 1
    return total / n


def quantize_codes(x, double lo, double hi, int bits):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], j
    cdef double levels = <double>((1 << bits) - 1), v, c
    out = np.empty(n, dtype=np.uint16)
    cdef cnp.uint16_t[::1] ov = out
    with nogil:
        for j in range(n):
            v = xv[j]
            if v < lo:
                v = lo
            elif v > hi:
                v = hi
            c = floor((v - lo) / (hi - lo) * levels + 0.5)
            if c < 0:
                c = 0
            elif c > levels:
                c = levels
            ov[j] = <cnp.uint16_t>c
    return out


def pack_codes(codes, int bits):
    cdef const cnp.uint16_t[::1] cv = np.ascontiguousarray(codes, dtype=np.uint16)
    cdef Py_ssize_t n = cv.shape[0], j, pos = 0
    cdef int b
    out = np.zeros((n * bits + 7) // 8, dtype=np.uint8)
    cdef cnp.uint8_t[::1] ov = out
    with nogil:
        for j in range(n):
            for b in range(bits - 1, -1, -1):
                if (cv[j] >> b) & 1:
                    ov[pos >> 3] |= <cnp.uint8_t>(0x80 >> (pos & 7))
                pos = pos + 1
    return out


def unpack_codes(payload, Py_ssize_t count, int bits):
    cdef const cnp.uint8_t[::1] pv = np.ascontiguousarray(payload, dtype=np.uint8)
    if pv.shape[0] * 8 < count * bits:
        raise ValueError("payload too short")
    out = np.empty(count, dtype=np.uint16)
    cdef cnp.uint16_t[::1] ov = out
    cdef Py_ssize_t j, pos = 0
    cdef int b
    cdef unsigned int c
    with nogil:
        for j in range(count):
            c = 0
            for b in range(bits):
                c = (c << 1) | ((pv[pos >> 3] >> (7 - (pos & 7))) & 1)
                pos = pos + 1
            ov[j] = <cnp.uint16_t>c
    return out
