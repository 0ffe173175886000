"""Rank-normalized split-R-hat and bulk effective sample size."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata


@dataclass
class Diagnostics:
    rhat: dict
    ess_bulk: dict
    divergence_rate: float
    n_divergent: int = 0

    def to_dict(self):
        def clean(v):
            return None if v is None or not math.isfinite(v) else float(v)

        return {
            "rhat": {k: clean(v) for k, v in self.rhat.items()},
            "ess_bulk": {k: clean(v) for k, v in self.ess_bulk.items()},
            "divergence_rate": self.divergence_rate,
            "n_divergent": self.n_divergent,
            "max_rhat": clean(max((v for v in self.rhat.values() if math.isfinite(v)), default=float("nan"))),
            "min_ess_bulk": clean(min((v for v in self.ess_bulk.values() if math.isfinite(v)), default=float("nan"))),
        }


def split_chains(x):
    """``(chains, draws)`` -> ``(2 * chains, draws // 2)``; a middle odd draw is dropped."""
    x = np.asarray(x, dtype=float)
    n = x.shape[1] // 2
    return np.concatenate([x[:, :n], x[:, x.shape[1] - n:]], axis=0)


def _is_constant(x):
    return np.ptp(x) == 0 or not np.all(np.isfinite(x))


def rank_normalize(x):
    shape = x.shape
    r = rankdata(x.ravel(), method="average")
    return ndtri((r - 0.375) / (x.size + 0.25)).reshape(shape)


def _rhat(x):
    m, n = x.shape
    chain_mean = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean()
    B = n * chain_mean.var(ddof=1)
    var_plus = (n - 1) / n * W + B / n
    return math.sqrt(var_plus / W)


def rhat(x, method="rank"):
    """Split-R-hat of a ``(chains, draws)`` array.

    ``method="rank"`` (default) is the rank-normalized version: the maximum
    of the bulk and folded (tail) statistics. It saturates near 1.83 for two
    completely separated chains. ``method="split"`` is the classic split-R-hat
    on the raw values. Returns NaN for constant input or fewer than two chains.
    """
    if method not in ("rank", "split"):
        raise ValueError(f"unknown R-hat method {method!r}")
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 4 or _is_constant(x):
        return float("nan")
    s = split_chains(x)
    if method == "split":
        return _rhat(s)
    bulk = _rhat(rank_normalize(s))
    folded = np.abs(s - np.median(s))
    tail = _rhat(rank_normalize(folded)) if not _is_constant(folded) else bulk
    return max(bulk, tail)


def _autocov(x):
    n = x.shape[-1]
    nfft = 1 << (2 * n - 1).bit_length()
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, n=nfft, axis=-1)
    return np.fft.irfft(f * np.conj(f), n=nfft, axis=-1)[..., :n] / n


def ess(x):
    """Effective sample size with Geyer's initial monotone sequence."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    m, n = x.shape
    if n < 4 or _is_constant(x):
        return 0.0
    acov = _autocov(x)
    chain_mean = x.mean(axis=1)
    mean_var = acov[:, 0].mean() * n / (n - 1)
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += chain_mean.var(ddof=1)
    rho = np.zeros(n)
    rho[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho[1] = rho_odd
    t = 1
    while t < n - 3 and rho_even + rho_odd > 0:
        rho_even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        rho_odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2
    max_t = t - 2
    if rho_even > 0:
        rho[max_t + 1] = rho_even
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = rho[t + 2] = (rho[t - 1] + rho[t]) / 2
        t += 2
    total = m * n
    tau = -1 + 2 * rho[: max_t + 1].sum() + rho[max_t + 1]
    tau = max(tau, 1 / math.log10(total))
    return float(total / tau)


def ess_bulk(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] < 4 or _is_constant(x):
        return 0.0
    return ess(rank_normalize(split_chains(x)))


def diagnostics(draws, columns=None) -> Diagnostics:
    """R-hat and bulk-ESS for each named column of a :class:`PosteriorDraws`."""
    names = list(columns) if columns is not None else list(draws.column_names)
    r, e = {}, {}
    for name in names:
        x = draws.column(name)
        r[name] = rhat(x) if draws.nchains >= 2 else float("nan")
        e[name] = ess_bulk(x)
    ndiv = int(draws.divergent.sum()) if draws.divergent is not None else 0
    return Diagnostics(rhat=r, ess_bulk=e, divergence_rate=ndiv / draws.ndraws, n_divergent=ndiv)


def hyper_columns(names):
    return [n for n in names if n.startswith(("sigma", "rho", "beta"))]
