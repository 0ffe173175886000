"""Pointwise log-likelihood and PSIS leave-one-out model comparison.

Importance ratios for leaving out observation ``n`` are
``1 / p(y_n | theta_s)``. Their largest ``min(0.2 S, 3 sqrt(S))`` values are
replaced by expected order statistics of a generalized Pareto
distribution fitted to the tail; the fitted shape ``k`` is the reliability
diagnostic (values above 0.7 are flagged).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_ndtr, logsumexp

from .errors import DimensionMismatch, TooFewDraws
from .model import KINDS, Model

log = logging.getLogger(__name__)

K_THRESHOLD = 0.7
MIN_DRAWS = 100


@dataclass
class LooResult:
    """PSIS-LOO estimates.

    ``looic`` is ``-2 * elpd_loo``; ``p_loo`` is the log pointwise
    predictive density minus ``elpd_loo``.
    """

    elpd_loo: float
    p_loo: float
    looic: float
    pareto_k: np.ndarray
    n_bad_k: int
    se_elpd_loo: float = math.nan
    elpd_pointwise: np.ndarray | None = None

    def to_dict(self, pointwise=False):
        out = {
            "elpd_loo": self.elpd_loo,
            "p_loo": self.p_loo,
            "looic": self.looic,
            "se_elpd_loo": self.se_elpd_loo,
            "n_bad_k": self.n_bad_k,
            "max_pareto_k": float(np.max(self.pareto_k)) if len(self.pareto_k) else None,
            "k_threshold": K_THRESHOLD,
        }
        if pointwise:
            out["pareto_k"] = [float(k) for k in self.pareto_k]
            out["elpd_pointwise"] = [float(v) for v in self.elpd_pointwise]
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(**kw), sort_keys=True, indent=2)


def pointwise_loglik(spec, draws, table):
    """``(ndraws, n_obs)`` matrix of conditional Bernoulli log-likelihoods."""
    model = Model(spec, table)
    values = draws.flat() if hasattr(draws, "flat") else np.atleast_2d(np.asarray(draws, dtype=float))
    if values.shape[1] != model.dim:
        raise DimensionMismatch(f"draws have {values.shape[1]} columns, model needs {model.dim}")
    beta = values[:, model.beta_slice] * model.beta_sign
    eta = beta @ model.X.T
    for blk in model.blocks:
        eta += blk.sign * values[:, blk.z_slice][:, blk.obs_index]
    y = model.y
    if spec.link == "logit":
        return y * eta - np.logaddexp(0.0, eta)
    return log_ndtr((2 * y - 1) * eta)


def _gpdfit(x):
    """Generalized Pareto fit to sorted positive exceedances (empirical Bayes estimate).

    Returns ``(k, sigma)``; ``k`` is shrunk slightly toward 0.5.
    """
    n = len(x)
    prior_bs, prior_k = 3.0, 10.0
    m = 30 + int(math.sqrt(n))
    b = 1 - np.sqrt(m / (np.arange(1, m + 1) - 0.5))
    b /= prior_bs * x[int(n / 4 + 0.5) - 1]
    b += 1 / x[-1]
    k = np.log1p(-b[:, None] * x).mean(axis=1)
    len_scale = n * (np.log(-(b / k)) - k - 1)
    weights = 1 / np.exp(len_scale - len_scale[:, None]).sum(axis=1)
    keep = weights >= 10 * np.finfo(float).eps
    weights = weights[keep] / weights[keep].sum()
    b_post = np.sum(b[keep] * weights)
    k_post = np.log1p(-b_post * x).mean()
    sigma = -k_post / b_post
    k_post = (n * k_post + prior_k * 0.5) / (n + prior_k)
    return float(k_post), float(sigma)


def _gpinv(p, k, sigma):
    if not sigma > 0:
        return np.full_like(p, np.nan)
    if abs(k) < np.finfo(float).eps:
        return -sigma * np.log1p(-p)
    return sigma * np.expm1(-k * np.log1p(-p)) / k


def psis_smooth(log_ratios):
    """Pareto-smoothed, normalized log weights and the shape estimate ``k``.

    A column whose ratios are all equal has uniform weights and ``k = 0``.
    """
    lw = np.asarray(log_ratios, dtype=float).copy()
    S = len(lw)
    lw -= lw.max()
    if np.ptp(lw) == 0:
        return np.full(S, -math.log(S)), 0.0
    tail_len = int(math.ceil(min(0.2 * S, 3 * math.sqrt(S))))
    order = np.argsort(lw, kind="stable")
    cutoff = max(lw[order[-tail_len - 1]], math.log(np.finfo(float).tiny))
    tail_idx = np.flatnonzero(lw > cutoff)
    k = math.inf
    if len(tail_idx) > 4:
        tail = lw[tail_idx]
        tail_order = np.argsort(tail, kind="stable")
        exc = np.exp(tail[tail_order]) - math.exp(cutoff)
        k, sigma = _gpdfit(exc)
        if math.isfinite(k):
            probs = (np.arange(len(tail)) + 0.5) / len(tail)
            smoothed = np.log(_gpinv(probs, k, sigma) + math.exp(cutoff))
            lw[tail_idx[tail_order]] = smoothed
            lw[lw > 0] = 0.0
    lw -= logsumexp(lw)
    return lw, k


def psis_loo(loglik) -> LooResult:
    """PSIS-LOO from an ``(ndraws, n_obs)`` pointwise log-likelihood matrix."""
    ll = np.asarray(loglik, dtype=float)
    if ll.ndim != 2:
        raise DimensionMismatch("loglik must be a 2-d (ndraws, n_obs) matrix")
    S, n = ll.shape
    if S < MIN_DRAWS:
        raise TooFewDraws(f"PSIS-LOO needs at least {MIN_DRAWS} draws, got {S}")
    elpd = np.empty(n)
    ks = np.empty(n)
    lpd = logsumexp(ll, axis=0) - math.log(S)
    for i in range(n):
        lw, ks[i] = psis_smooth(-ll[:, i])
        elpd[i] = logsumexp(ll[:, i] + lw)
    n_bad = int(np.sum(ks > K_THRESHOLD))
    if n_bad:
        log.warning("%d of %d observations have Pareto k > %.1f", n_bad, n, K_THRESHOLD)
    total = float(np.sum(elpd))
    return LooResult(
        elpd_loo=total,
        p_loo=float(np.sum(lpd) - total),
        looic=-2.0 * total,
        pareto_k=ks,
        n_bad_k=n_bad,
        se_elpd_loo=float(math.sqrt(n * np.var(elpd))) if n > 1 else math.nan,
        elpd_pointwise=elpd,
    )


def select_model(fits):
    """Kind with the smallest LOOIC; exact ties go to the simpler model (IN < PN < FN).

    ``fits`` is a sequence of ``(kind, LooResult or looic)`` pairs.
    """
    fits = list(fits)
    if len(fits) < 2:
        raise ValueError("model selection needs at least two fits")

    def key(item):
        kind, res = item
        looic = res.looic if isinstance(res, LooResult) else float(res)
        return (looic, KINDS.index(kind.upper()))

    return min(fits, key=key)[0].upper()
