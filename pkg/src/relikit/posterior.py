"""Posterior summaries, marginal correlations and posterior-predictive kappa.

Marginal correlations are correlations of the random part of the linear
predictor for one subject, between two raters at the same time point
(``corr_R``) or between two time points for the same rater (``corr_T``).
They come from the model-implied covariance of the predictor, averaged
over the relevant pairs when standard deviations differ across slots.

For FN models a second ``as_printed`` variant is available whose time
correlation omits the shared subject-by-rater variance::

    corr_R = (s_u^2 + rho_R s_v^2) / (s_u^2 + s_v^2 + s_w^2)
    corr_T = (s_u^2 + rho_T s_w^2) / (s_u^2 + s_v^2 + s_w^2)

The ``derived`` variant (the default) adds ``s_v^2`` to the numerator of
``corr_T``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .agreement import conger_kappa, inter_slots, intra_slots
from .errors import DegenerateAgreement, DimensionMismatch, InputError
from .generate import block_covariance, draw_random_effects, inverse_link, w_sigmas
from .model import Hyperparameters, Model, ParamVector

VARIANTS = ("derived", "as_printed")


@dataclass(frozen=True)
class CorrelationSummary:
    """Marginal and random-effect correlations at one parameter value.

    ``corr_R`` is NaN with fewer than two raters and ``corr_T`` with fewer
    than two time points. ``pairs_R[(j, j2)]`` and ``pairs_T[(k, k2)]``
    hold the 0-based pairwise values behind the averages.
    """

    corr_R: float
    corr_T: float
    rho_R: float
    rho_T: float
    formula_variant: str = "derived"
    pairs_R: dict = field(default_factory=dict, compare=False)
    pairs_T: dict = field(default_factory=dict, compare=False)


def _as_hyper(draw):
    if isinstance(draw, ParamVector):
        return draw.hyper
    if isinstance(draw, Hyperparameters):
        return draw
    raise TypeError("expected ParamVector or Hyperparameters")


def _infer_dims(kind, hyper, J, K):
    nv = len(hyper.sigma_v)
    nw = 1 if hyper.sigma_w is None else len(hyper.sigma_w)
    if kind == "PN" and K is None and nv > 1:
        K = nv
    if kind == "FN":
        if J is None and nv > 1:
            J = nv
        if K is None and nw > 1:
            K = nw // J if J and nw % J == 0 and nw > J else nw
    return J or 2, K or 2


def predictor_covariance(kind, draw, J=None, K=None):
    """Covariance of the random part of the predictor for one subject.

    Rows and columns are ordered ``j * K + k``.
    """
    kind = kind.upper()
    h = _as_hyper(draw)
    J, K = _infer_dims(kind, h, J, K)
    jj = np.repeat(np.arange(J), K)
    kk = np.tile(np.arange(K), J)
    same_j = jj[:, None] == jj[None, :]
    same_k = kk[:, None] == kk[None, :]
    cov = np.full((J * K, J * K), h.sigma_u**2)
    if kind == "IN":
        cov += h.sigma_v[0] ** 2 * same_j + h.sigma_w[0] ** 2 * same_k
    elif kind == "PN":
        ST = block_covariance(h.sigma_v, h.rho_T, K)
        cov += same_j * ST[np.ix_(kk, kk)]
    elif kind == "FN":
        SR = block_covariance(h.sigma_v, h.rho_R, J)
        cov += SR[np.ix_(jj, jj)]
        sw = w_sigmas(h, J, K)
        for j in range(J):
            blk = slice(j * K, (j + 1) * K)
            cov[blk, blk] += block_covariance(sw[j], h.rho_T, K)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return cov


def marginal_correlations(kind, draw, variant="derived", J=None, K=None) -> CorrelationSummary:
    """Marginal rater and time correlations of the linear predictor.

    Parameters
    ----------
    kind : {"IN", "PN", "FN"}
    draw : ParamVector or Hyperparameters
    variant : {"derived", "as_printed"}
        Only changes FN results.
    J, K : int, optional
        Numbers of raters and time points. Inferred from per-slot standard
        deviations when possible, otherwise 2; with common structures the
        result does not depend on them.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    kind = kind.upper()
    h = _as_hyper(draw)
    J, K = _infer_dims(kind, h, J, K)
    rho_R = float(h.rho_R) if h.rho_R is not None else 0.0
    rho_T = float(h.rho_T) if h.rho_T is not None else 0.0
    if kind == "FN" and variant == "as_printed":
        su2 = h.sigma_u**2
        sv2 = float(np.mean(h.sigma_v**2))
        sw2 = float(np.mean(h.sigma_w**2))
        tot = su2 + sv2 + sw2
        return CorrelationSummary((su2 + rho_R * sv2) / tot, (su2 + rho_T * sw2) / tot, rho_R, rho_T, variant)

    cov = predictor_covariance(kind, h, J, K)
    sd = np.sqrt(np.diag(cov))
    with np.errstate(invalid="ignore", divide="ignore"):
        C = (cov / np.outer(sd, sd)).reshape(J, K, J, K)
    pairs_R = {(a, b): float(np.mean(C[a, :, b, :].diagonal())) for a in range(J) for b in range(a + 1, J)}
    pairs_T = {(a, b): float(np.mean(C[:, a, :, b].diagonal())) for a in range(K) for b in range(a + 1, K)}
    corr_R = float(np.mean(list(pairs_R.values()))) if pairs_R else math.nan
    corr_T = float(np.mean(list(pairs_T.values()))) if pairs_T else math.nan
    return CorrelationSummary(corr_R, corr_T, rho_R, rho_T, variant, pairs_R, pairs_T)


# -- posterior-predictive kappa ----------------------------------------------


@dataclass
class KappaPosterior:
    """Per-draw Conger kappas of replicated datasets.

    Replicates whose kappa is undefined are dropped and counted in
    ``n_degenerate_inter`` / ``n_degenerate_intra``.
    """

    inter: np.ndarray
    intra: np.ndarray
    n_degenerate_inter: int
    n_degenerate_intra: int
    n_draws: int
    seed: int

    @staticmethod
    def _describe(x):
        if len(x) == 0:
            return {"mean": None, "lower": None, "upper": None, "n": 0}
        lo, hi = np.quantile(x, [0.025, 0.975])
        return {"mean": float(np.mean(x)), "lower": float(lo), "upper": float(hi), "n": int(len(x))}

    @property
    def mean_inter(self):
        return float(np.mean(self.inter)) if len(self.inter) else math.nan

    @property
    def mean_intra(self):
        return float(np.mean(self.intra)) if len(self.intra) else math.nan

    def to_dict(self, keep_draws=False):
        out = {
            "interrater": self._describe(self.inter),
            "intrarater": self._describe(self.intra),
            "n_degenerate_inter": self.n_degenerate_inter,
            "n_degenerate_intra": self.n_degenerate_intra,
            "n_draws": self.n_draws,
            "seed": self.seed,
            "method": "conger",
        }
        if keep_draws:
            out["draws_inter"] = [float(v) for v in self.inter]
            out["draws_intra"] = [float(v) for v in self.intra]
        return out


def _thin(n, max_draws):
    if max_draws is None or n <= max_draws:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, max_draws).round().astype(int))


def posterior_predictive_kappa(spec, draws, table=None, seed=None, max_draws=None) -> KappaPosterior:
    """Conger kappa of datasets replicated from the posterior predictive.

    For each retained draw, new random effects are drawn from their
    distribution given the draw's hyperparameters, outcomes are simulated
    on the observed cells of ``table`` (fixed effects from the draw), and
    interrater and intrarater kappas are computed. Draw ``s`` uses the
    random stream seeded by ``(seed, s)``.

    Parameters
    ----------
    spec : ModelSpec
    draws : PosteriorDraws
    table : RatingsTable, optional
        Observed design; defaults to the table bound to ``draws``.
    seed : int, optional
        Drawn from entropy when omitted (recorded on the result).
    max_draws : int, optional
        Evenly thin the draws to at most this many.
    """
    from .sampler import resolve_seed

    model = draws._model if table is None else Model(spec, table)
    if model is None:
        raise InputError("draws are not bound to a table; pass table=")
    table = model.table
    rows = draws.flat()
    if len(rows) == 0:
        raise InputError("no posterior draws")
    if rows.shape[1] != model.dim:
        raise DimensionMismatch("draw columns do not match the model for this table")
    seed = resolve_seed(seed)
    dims = (table.I, table.J, table.K)
    s_idx, r_idx, t_idx = table.subject, table.rater, table.time
    inter, intra = [], []
    deg_inter = deg_intra = 0
    idx = _thin(len(rows), max_draws)
    for s in idx:
        pv = model.unflatten(rows[s])
        rng = np.random.default_rng([seed, int(s)])
        fixed = model.X @ (model.beta_sign * pv.beta)
        re = draw_random_effects(spec.kind, pv.hyper, dims, rng)
        p = inverse_link(fixed + re[s_idx, r_idx, t_idx], spec.link)
        Y = np.full(dims, np.nan)
        Y[s_idx, r_idx, t_idx] = rng.random(len(p)) < p
        if table.J >= 2:
            try:
                inter.append(conger_kappa(inter_slots(Y)).kappa)
            except DegenerateAgreement:
                deg_inter += 1
        if table.K >= 2:
            try:
                intra.append(conger_kappa(intra_slots(Y)).kappa)
            except DegenerateAgreement:
                deg_intra += 1
    return KappaPosterior(np.asarray(inter), np.asarray(intra), deg_inter, deg_intra, len(idx), seed)


# -- summaries ---------------------------------------------------------------


@dataclass(frozen=True)
class SummaryRow:
    name: str
    mean: float
    sd: float
    lower: float
    upper: float


@dataclass
class PosteriorSummary:
    kind: str
    rows: list

    def __getitem__(self, name):
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    def __contains__(self, name):
        return any(row.name == name for row in self.rows)

    def to_dict(self):
        return {"kind": self.kind, "rows": [asdict(r) for r in self.rows]}

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["name", "mean", "sd", "lower", "upper"])
            for r in self.rows:
                w.writerow([r.name, repr(r.mean), repr(r.sd), repr(r.lower), repr(r.upper)])

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(_finite(self.to_dict()), fh, indent=2, sort_keys=True)


def _finite(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _describe(name, x):
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if len(x) == 0:
        return SummaryRow(name, math.nan, math.nan, math.nan, math.nan)
    lo, hi = np.quantile(x, [0.025, 0.975])
    sd = float(np.std(x, ddof=1)) if len(x) > 1 else 0.0
    return SummaryRow(name, float(np.mean(x)), sd, float(lo), float(hi))


def derived_quantities(kind, params_iter, J, K):
    """Per-draw aggregate standard deviations and marginal correlations.

    ``sigma_R``/``sigma_T`` average the component standard deviations when a
    structure has more than one.
    """
    kind = kind.upper()
    out = {k: [] for k in ("sigma_S", "sigma_R", "sigma_T", "corr_R", "corr_T")}
    if kind == "FN":
        out["corr_R_as_printed"] = []
        out["corr_T_as_printed"] = []
    for pv in params_iter:
        h = pv.hyper
        out["sigma_S"].append(h.sigma_u)
        if kind == "PN":
            out["sigma_R"].append(math.nan)
            out["sigma_T"].append(float(np.mean(h.sigma_v)))
        else:
            out["sigma_R"].append(float(np.mean(h.sigma_v)))
            out["sigma_T"].append(float(np.mean(h.sigma_w)))
        c = marginal_correlations(kind, h, "derived", J, K)
        out["corr_R"].append(c.corr_R)
        out["corr_T"].append(c.corr_T)
        if kind == "FN":
            c = marginal_correlations(kind, h, "as_printed", J, K)
            out["corr_R_as_printed"].append(c.corr_R)
            out["corr_T_as_printed"].append(c.corr_T)
    return {k: np.asarray(v) for k, v in out.items()}


def summarize(draws, columns=None, correlations=True) -> PosteriorSummary:
    """Mean, sd and central 95% interval per named parameter.

    Marginal correlations are computed draw by draw and then summarized,
    which is not the same as the formula evaluated at posterior means.
    """
    names = draws.column_names if columns is None else columns
    rows = [_describe(n, draws.column(n)) for n in names]
    kind = draws.spec.kind if draws.spec is not None else ""
    if correlations and draws._model is not None:
        t = draws._model.table
        extra = derived_quantities(kind, draws.iter_params(), t.J, t.K)
        rows += [_describe(k, v) for k, v in extra.items()]
    return PosteriorSummary(kind, rows)


TABLE1_ROWS = {
    "IN": ["sigma_S", "sigma_R", "sigma_T", "Corr^R", "Corr^T", "p_LOO", "LOOIC"],
    "PN": ["sigma_S", "sigma_T", "Corr^T", "rho^T", "p_LOO", "LOOIC"],
    "FN": ["sigma_S", "sigma_R", "sigma_T", "Corr^R", "Corr^T", "rho^R", "rho^T", "p_LOO", "LOOIC"],
}
_TABLE1_SOURCE = {"Corr^R": "corr_R", "Corr^T": "corr_T", "rho^R": "rho_R", "rho^T": "rho_T"}


def table1_layout(summary: PosteriorSummary, loo=None):
    """``[(label, value), ...]`` with the rows reported for the model kind."""
    out = []
    for label in TABLE1_ROWS[summary.kind]:
        if label == "p_LOO":
            value = loo.p_loo if loo is not None else math.nan
        elif label == "LOOIC":
            value = loo.looic if loo is not None else math.nan
        else:
            name = _TABLE1_SOURCE.get(label, label)
            value = summary[name].mean if name in summary else math.nan
        out.append((label, float(value)))
    return out
