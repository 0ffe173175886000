"""Compiled log density and gradient.

A loop-level twin of :meth:`relikit.model.Model.log_density_and_grad`
(the numpy version stays as the reference implementation). Blocks are
described by packed integer rows so a single compiled function serves
every model kind and covariance structure.

``binfo`` rows: ``z_start, nblocks, d, sigma_start, n_sigma, rho_pos,
rho_is_R, sign``. ``fprior``: ``gamma_a, gamma_b, ig_const, beta_mean,
beta_sigma, beta_const, eta_R, eta_T, beta_a, beta_b, beta_const_rho,
use_beta_prior``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_LOG_2PI = math.log(2 * math.pi)
_SQRT2 = math.sqrt(2.0)


@njit(cache=True)
def _log1pexp(x):
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(cache=True)
def _expit(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def log_ndtr(x):
    if x > 5.0:
        return math.log1p(-0.5 * math.erfc(x / _SQRT2))
    if x > -37.0:
        return math.log(0.5 * math.erfc(-x / _SQRT2))
    # asymptotic series of the Mills ratio
    x2 = x * x
    s = 1.0 - 1.0 / x2 + 3.0 / x2**2 - 15.0 / x2**3 + 105.0 / x2**4 - 945.0 / x2**5
    return -0.5 * x2 - math.log(-x) - 0.5 * _LOG_2PI + math.log(s)


@njit(cache=True)
def log_density_and_grad(z, X, beta_sign, y, probit, binfo, sig_idx, obs_idx, fprior):
    n, p = X.shape
    dim = z.shape[0]
    grad = np.zeros(dim)
    nb = binfo.shape[0]
    maxsize = sig_idx.shape[1]

    eta = np.zeros(n)
    for c in range(p):
        bc = beta_sign[c] * z[c]
        if bc != 0.0:
            for i in range(n):
                eta[i] += X[i, c] * bc

    coef = np.zeros((nb, 5))  # a, b, da, db, rho
    Sz = np.zeros((nb, maxsize))
    sslot = np.zeros((nb, maxsize))
    zsum = np.zeros((nb, maxsize))
    for bi in range(nb):
        zst, nbk, d, sst, ns, rpos = binfo[bi, 0], binfo[bi, 1], binfo[bi, 2], binfo[bi, 3], binfo[bi, 4], binfo[bi, 5]
        sign = binfo[bi, 7]
        rho = 0.0
        if rpos >= 0:
            lo = -1.0 / (d - 1)
            rho = lo + (1.0 - lo) * _expit(z[rpos])
            if not (lo < rho < 1.0):
                return -np.inf, grad
        for m in range(ns):
            s = math.exp(z[sst + m])
            if not (s > 0.0 and s < np.inf):
                return -np.inf, grad
        a = math.sqrt(1.0 - rho)
        r = math.sqrt(1.0 + (d - 1) * rho)
        b = (r - a) / d
        da = -0.5 / a
        db = (0.5 * (d - 1) / r - da) / d
        coef[bi, 0], coef[bi, 1], coef[bi, 2], coef[bi, 3], coef[bi, 4] = a, b, da, db, rho
        for g in range(nbk):
            zs = 0.0
            for k in range(d):
                zs += z[zst + g * d + k]
            for k in range(d):
                idx = g * d + k
                zsum[bi, idx] = zs
                Sz[bi, idx] = a * z[zst + idx] + b * zs
                sslot[bi, idx] = math.exp(z[sst + sig_idx[bi, idx]])
        for i in range(n):
            idx = obs_idx[bi, i]
            eta[i] += sign * sslot[bi, idx] * Sz[bi, idx]

    lp = 0.0
    gl = np.empty(n)
    if probit:
        for i in range(n):
            s = 2.0 * y[i] - 1.0
            lc = log_ndtr(s * eta[i])
            lp += lc
            gl[i] = s * math.exp(-0.5 * eta[i] * eta[i] - 0.5 * _LOG_2PI - lc)
    else:
        for i in range(n):
            e = eta[i]
            lp += y[i] * e - _log1pexp(e)
            gl[i] = y[i] - _expit(e)

    bmean, bsig = fprior[3], fprior[4]
    for c in range(p):
        acc = 0.0
        for i in range(n):
            acc += X[i, c] * gl[i]
        rr = (z[c] - bmean) / bsig
        lp += -0.5 * rr * rr
        grad[c] = acc * beta_sign[c] - rr / bsig
    lp += p * fprior[5]

    ga, gb, ig_const = fprior[0], fprior[1], fprior[2]
    for bi in range(nb):
        zst, nbk, d, sst, ns, rpos = binfo[bi, 0], binfo[bi, 1], binfo[bi, 2], binfo[bi, 3], binfo[bi, 4], binfo[bi, 5]
        sign = binfo[bi, 7]
        size = nbk * d
        a, b, da, db, rho = coef[bi, 0], coef[bi, 1], coef[bi, 2], coef[bi, 3], coef[bi, 4]
        h = np.zeros(size)
        for i in range(n):
            h[obs_idx[bi, i]] += gl[i]
        for idx in range(size):
            h[idx] *= sign * sslot[bi, idx]
        glik = 0.0
        for g in range(nbk):
            hs = 0.0
            for k in range(d):
                hs += h[g * d + k]
            for k in range(d):
                idx = g * d + k
                zv = z[zst + idx]
                lp += -0.5 * zv * zv
                grad[zst + idx] = a * h[idx] + b * hs - zv
                grad[sst + sig_idx[bi, idx]] += h[idx] * Sz[bi, idx]
                glik += h[idx] * (da * zv + db * zsum[bi, idx])
        lp += -0.5 * size * _LOG_2PI
        for m in range(ns):
            t = z[sst + m]
            e2t = math.exp(-2.0 * t)
            lp += ig_const - 2.0 * ga * t - gb * e2t
            grad[sst + m] += -2.0 * ga + 2.0 * gb * e2t
        if rpos >= 0:
            zr = z[rpos]
            lo = -1.0 / (d - 1)
            s = _expit(zr)
            drho = (1.0 - lo) * s * (1.0 - s)
            if fprior[11] > 0:
                ba, bb = fprior[8], fprior[9]
                rlp = (ba - 1) * math.log((1 + rho) / 2) + (bb - 1) * math.log((1 - rho) / 2) + fprior[10]
                rdlp = (ba - 1) / (1 + rho) - (bb - 1) / (1 - rho)
            else:
                eta_lkj = fprior[6] if binfo[bi, 6] == 1 else fprior[7]
                rlp = (eta_lkj - 1) * ((d - 1) * math.log1p(-rho) + math.log1p((d - 1) * rho))
                rdlp = (eta_lkj - 1) * (-(d - 1) / (1 - rho) + (d - 1) / (1 + (d - 1) * rho))
            lp += rlp + math.log(1 - lo) - _log1pexp(-zr) - _log1pexp(zr)
            grad[rpos] = (glik + rdlp) * drho + (1.0 - 2.0 * s)
    if not math.isfinite(lp):
        return -np.inf, grad
    return lp, grad
