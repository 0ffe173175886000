"""Simulation from the three generative models and the model-comparison study.

A study scenario fixes a dataset shape (``gait``: 32 subjects, 3 raters,
2 time points; ``radiograph``: 35 x 7 x 2; or custom), a generating model
kind and its hyperparameters. Each replicate simulates a complete dataset,
fits the IN, PN and FN models, picks the one with the smallest LOOIC, and
records five kappa estimates (frequentist Conger, the three posterior
predictive means and the LOOIC-selected one) against the scenario's true
kappa, itself the mean Conger kappa over many simulated datasets.

Results stream to a JSON-lines checkpoint, one line per replicate, so an
interrupted study resumes where it stopped. Every replicate draws its own
seed from ``(seed, reference, kind, replicate)`` so results do not depend on
run order or parallelism.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .agreement import conger_inter_intra
from .data import RatingsTable
from .errors import DegenerateAgreement, InputError, RelikitError
from .generate import draw_random_effects, inverse_link
from .model import KINDS, Hyperparameters, ModelSpec

log = logging.getLogger(__name__)

REFERENCES = {"gait": (32, 3, 2), "radiograph": (35, 7, 2)}

# posterior means reported for fits to the two reference datasets
TABLE1 = {
    ("gait", "IN"): dict(sigma_u=0.91, sigma_v=0.79, sigma_w=0.79),
    ("gait", "PN"): dict(sigma_u=0.89, sigma_v=0.75, rho_T=0.50),
    ("gait", "FN"): dict(sigma_u=0.70, sigma_v=0.65, sigma_w=0.64, rho_R=0.54, rho_T=0.47),
    ("radiograph", "IN"): dict(sigma_u=1.31, sigma_v=0.77, sigma_w=0.78),
    ("radiograph", "PN"): dict(sigma_u=1.31, sigma_v=0.70, rho_T=0.51),
    ("radiograph", "FN"): dict(sigma_u=0.63, sigma_v=0.88, sigma_w=1.47, rho_R=0.42, rho_T=0.51),
}

ESTIMATORS = ("freq", "IN", "PN", "FN", "LOO")
MODES = ("inter", "intra")
PAPER_SCALE = {"n_replicates": 148, "true_kappa_reps": 10000}


def table1_hyper(reference, kind) -> Hyperparameters:
    return Hyperparameters(**TABLE1[(reference, kind.upper())])


def _hyper_to_dict(h: Hyperparameters):
    out = {"sigma_u": h.sigma_u, "sigma_v": [float(v) for v in h.sigma_v]}
    if h.sigma_w is not None:
        out["sigma_w"] = [float(v) for v in h.sigma_w]
    if h.rho_R is not None:
        out["rho_R"] = float(h.rho_R)
    if h.rho_T is not None:
        out["rho_T"] = float(h.rho_T)
    return out


def total_random_sd(kind, hyper: Hyperparameters, dims):
    """Standard deviation of the summed random effects at one cell (averaged over cells)."""
    from .posterior import predictor_covariance

    _, J, K = dims
    return float(np.sqrt(np.mean(np.diag(predictor_covariance(kind, hyper, J, K)))))


def marginal_success(intercept, sd, link="logit", nodes=80):
    """``E[g^-1(intercept + Z)]`` for ``Z ~ N(0, sd^2)`` by Gauss-Hermite quadrature."""
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    return float(np.sum(w * inverse_link(intercept + sd * x, link)) / np.sqrt(2 * np.pi))


def calibrate_intercept(kind, hyper, dims, target=0.5, link="logit"):
    """Intercept giving marginal success probability ``target``.

    Every random-effect distribution here is symmetric about zero, so the
    answer for ``target = 0.5`` is exactly 0.
    """
    if not 0 < target < 1:
        raise ValueError("target must lie in (0, 1)")
    if target == 0.5:
        return 0.0
    sd = total_random_sd(kind, hyper, dims)
    return brentq(lambda b: marginal_success(b, sd, link) - target, -50, 50, xtol=1e-12)


def simulate_array(kind, hyper, dims, rng, intercept=0.0, link="logit"):
    """Complete ``(I, J, K)`` 0/1 array from the generative model."""
    eta = intercept + draw_random_effects(kind, hyper, dims, rng)
    return (rng.random(dims) < inverse_link(eta, link)).astype(np.int8)


def simulate_dataset(kind, hyperparams, dims, fixed_effects=None, seed=None, link="logit") -> RatingsTable:
    """Simulate a complete-block ratings table.

    Parameters
    ----------
    kind : {"IN", "PN", "FN"}
    hyperparams : Hyperparameters
    dims : tuple of int
        ``(I, J, K)``.
    fixed_effects : float, optional
        Intercept of the linear predictor; defaults to the value giving a
        marginal success probability of 0.5.
    seed : int, optional
    link : {"logit", "probit"}
    """
    dims = tuple(int(d) for d in dims)
    if min(dims) < 1:
        raise ValueError("dimensions must be positive")
    if fixed_effects is None:
        fixed_effects = calibrate_intercept(kind, hyperparams, dims, 0.5, link)
    rng = np.random.default_rng(seed)
    return RatingsTable.from_array(simulate_array(kind, hyperparams, dims, rng, fixed_effects, link))


def true_kappa_draws(kind, hyperparams, dims, nreps, seed=None, intercept=0.0, link="logit"):
    """Conger kappas of ``nreps`` simulated datasets; undefined ones are NaN."""
    if nreps < 1:
        raise ValueError("nreps must be at least 1")
    rng = np.random.default_rng(seed)
    out = np.full((nreps, 2), np.nan)
    for r in range(nreps):
        Y = simulate_array(kind, hyperparams, dims, rng, intercept, link)
        try:
            out[r] = conger_inter_intra(Y)
        except DegenerateAgreement:
            pass
    return out


def true_kappa(kind, hyperparams, dims, nreps=2000, seed=None, intercept=0.0, link="logit"):
    """Mean interrater and intrarater Conger kappa over ``nreps`` simulated datasets."""
    k = true_kappa_draws(kind, hyperparams, dims, nreps, seed, intercept, link)
    return float(np.nanmean(k[:, 0])), float(np.nanmean(k[:, 1]))


# -- study harness -----------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario.

    ``hyper`` defaults to the reference fit for ``(reference, sim_kind)``;
    ``dims`` to the reference shape. ``intercept=None`` calibrates to a
    marginal success probability of 0.5. ``ppk_draws`` caps the posterior
    draws used for posterior-predictive kappa (``None`` uses all).
    """

    reference: str = "gait"
    sim_kind: str = "IN"
    hyper: Hyperparameters | None = None
    dims: tuple | None = None
    n_replicates: int = 30
    true_kappa_reps: int = 2000
    seed: int = 0
    link: str = "logit"
    intercept: float | None = None
    ppk_draws: int | None = 1000

    def __post_init__(self):
        object.__setattr__(self, "sim_kind", self.sim_kind.upper())
        if self.sim_kind not in KINDS:
            raise ValueError(f"unknown model kind {self.sim_kind!r}")
        if self.reference not in (*REFERENCES, "custom"):
            raise ValueError(f"unknown dataset reference {self.reference!r}")
        if self.dims is None:
            if self.reference == "custom":
                raise ValueError("a custom scenario needs dims")
            object.__setattr__(self, "dims", REFERENCES[self.reference])
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if min(self.dims) < 1:
            raise ValueError("dimensions must be positive")
        if self.hyper is None:
            if self.reference == "custom":
                raise ValueError("a custom scenario needs hyperparameters")
            object.__setattr__(self, "hyper", table1_hyper(self.reference, self.sim_kind))
        h = self.hyper
        sig = [h.sigma_u, *h.sigma_v, *([] if h.sigma_w is None else h.sigma_w)]
        if not all(s > 0 for s in sig):
            raise ValueError("generating standard deviations must be positive")
        if self.n_replicates < 1 or self.true_kappa_reps < 1:
            raise ValueError("replicate counts must be positive")

    @property
    def key(self):
        return f"{self.reference}/{self.sim_kind}"

    @property
    def resolved_intercept(self):
        if self.intercept is not None:
            return float(self.intercept)
        return calibrate_intercept(self.sim_kind, self.hyper, self.dims, 0.5, self.link)

    def paper_scale(self):
        return replace(self, **PAPER_SCALE)

    def replicate_seed(self, replicate):
        ref = (*REFERENCES, "custom").index(self.reference)
        ss = np.random.SeedSequence([self.seed, ref, KINDS.index(self.sim_kind), replicate])
        return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))

    def true_kappa_seed(self):
        return self.replicate_seed(2**31)

    def to_dict(self):
        d = asdict(self)
        d["hyper"] = _hyper_to_dict(self.hyper)
        d["dims"] = list(self.dims)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("hyper") is not None:
            d["hyper"] = Hyperparameters(**d["hyper"])
        if d.get("dims") is not None:
            d["dims"] = tuple(d["dims"])
        return cls(**d)


def _nan_to_none(v):
    return None if v is None or (isinstance(v, float) and not math.isfinite(v)) else v


def run_replicate(config: ScenarioConfig, replicate: int, sampler_config):
    """Simulate, fit all three models and compute every kappa estimate for one replicate.

    Returns a JSON-ready record. Fit failures are caught and recorded with
    ``status = "failed"``.
    """
    from .diagnostics import rhat
    from .loo import pointwise_loglik, psis_loo, select_model
    from .posterior import posterior_predictive_kappa
    from .sampler import sample

    seed = config.replicate_seed(replicate)
    ss = np.random.SeedSequence(seed)
    data_seed, *fit_seeds = (int(s.generate_state(1)[0]) for s in ss.spawn(1 + 2 * len(KINDS)))
    rng = np.random.default_rng(data_seed)
    Y = simulate_array(config.sim_kind, config.hyper, config.dims, rng, config.resolved_intercept, config.link)
    table = RatingsTable.from_array(Y)
    rec = {"scenario": config.key, "replicate": replicate, "seed": seed, "status": "ok"}
    try:
        freq = list(conger_inter_intra(Y))
    except DegenerateAgreement:
        freq = [None, None]
    kappa = {"freq": freq}
    looic, p_loo, diag = {}, {}, {}
    try:
        for n, kind in enumerate(KINDS):
            spec = ModelSpec(kind=kind)
            draws = sample(spec, table, replace(sampler_config, seed=fit_seeds[2 * n], threads=1))
            loo = psis_loo(pointwise_loglik(spec, draws, table))
            looic[kind], p_loo[kind] = loo.looic, loo.p_loo
            pp = posterior_predictive_kappa(spec, draws, seed=fit_seeds[2 * n + 1], max_draws=config.ppk_draws)
            kappa[kind] = [_nan_to_none(pp.mean_inter), _nan_to_none(pp.mean_intra)]
            hyper_cols = [c for c in draws.column_names if c.startswith(("sigma", "rho"))]
            diag[kind] = {
                "divergent": int(draws.divergent.sum()),
                "max_rhat": _nan_to_none(max((rhat(draws.column(c)) for c in hyper_cols), default=math.nan)),
                "n_bad_k": loo.n_bad_k,
            }
    except RelikitError as exc:
        rec.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        return rec
    selected = select_model(looic.items())
    kappa["LOO"] = kappa[selected]
    rec.update(looic=looic, p_loo=p_loo, selected=selected, kappa=kappa, diagnostics=diag)
    return rec


def _job(args):
    return run_replicate(*args)


def read_checkpoint(path):
    done = {}
    p = Path(path)
    if not p.exists():
        return done
    with open(p, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                # a line cut short by an interrupted write
                continue
            done[(rec["scenario"], rec["replicate"])] = rec
    return done


@dataclass
class ScenarioResult:
    key: str
    reference: str
    sim_kind: str
    true_kappa: tuple
    selection_counts: dict
    kappa: dict
    n_ok: int
    n_failed: int
    failures: list = field(default_factory=list)

    @property
    def selection_proportions(self):
        total = sum(self.selection_counts.values())
        return {k: (v / total if total else math.nan) for k, v in self.selection_counts.items()}


@dataclass
class StudyResult:
    """Aggregated study output.

    ``scenarios`` maps ``"reference/kind"`` to a :class:`ScenarioResult`.
    ``kappa`` entries are ``{estimator: {mode: {"mean", "rmse", "n"}}}``.
    """

    scenarios: dict
    records: list

    def selection_table(self):
        """Rows ``(reference, sim_kind, p_IN, p_PN, p_FN)``."""
        return [(s.reference, s.sim_kind, *(s.selection_proportions[k] for k in KINDS)) for s in self.scenarios.values()]

    def kappa_rows(self):
        """Rows ``(reference, sim_kind, mode, true, estimator, mean, rmse, n)``."""
        rows = []
        for s in self.scenarios.values():
            for m, mode in enumerate(MODES):
                for est in ESTIMATORS:
                    e = s.kappa[est][mode]
                    rows.append((s.reference, s.sim_kind, mode, s.true_kappa[m], est, e["mean"], e["rmse"], e["n"]))
        return rows

    def to_dict(self):
        out = {}
        for key, s in self.scenarios.items():
            out[key] = {
                "reference": s.reference,
                "sim_kind": s.sim_kind,
                "true_kappa": {"inter": s.true_kappa[0], "intra": s.true_kappa[1]},
                "selection_counts": s.selection_counts,
                "selection_proportions": s.selection_proportions,
                "kappa": s.kappa,
                "n_ok": s.n_ok,
                "n_failed": s.n_failed,
                "failures": s.failures,
            }
        return out


def aggregate(config: ScenarioConfig, records, true_k) -> ScenarioResult:
    records = sorted(records, key=lambda r: r["replicate"])
    ok = [r for r in records if r["status"] == "ok"]
    failed = [r for r in records if r["status"] != "ok"]
    counts = {k: sum(r["selected"] == k for r in ok) for k in KINDS}
    kappa = {}
    for est in ESTIMATORS:
        kappa[est] = {}
        for m, mode in enumerate(MODES):
            vals = np.array([r["kappa"][est][m] for r in ok if r["kappa"][est][m] is not None], dtype=float)
            if len(vals):
                kappa[est][mode] = {
                    "mean": float(vals.mean()),
                    "rmse": float(np.sqrt(np.mean((vals - true_k[m]) ** 2))),
                    "n": int(len(vals)),
                }
            else:
                kappa[est][mode] = {"mean": None, "rmse": None, "n": 0}
    return ScenarioResult(
        key=config.key,
        reference=config.reference,
        sim_kind=config.sim_kind,
        true_kappa=tuple(true_k),
        selection_counts=counts,
        kappa=kappa,
        n_ok=len(ok),
        n_failed=len(failed),
        failures=[{"replicate": r["replicate"], "error": r.get("error")} for r in failed],
    )


def run_study(configs, sampler_config=None, checkpoint=None, threads=1, progress=None) -> StudyResult:
    """Run one or more scenarios.

    Parameters
    ----------
    configs : ScenarioConfig or list of ScenarioConfig
    sampler_config : SamplerConfig, optional
        Applied to every fit; each fit gets its own derived seed.
    checkpoint : path-like, optional
        JSON-lines file. Completed replicates found there are reused and
        new ones are appended as they finish.
    threads : int
        Worker processes for replicates.
    progress : callable, optional
        Called with each finished record.
    """
    from .sampler import SamplerConfig

    if isinstance(configs, ScenarioConfig):
        configs = [configs]
    sampler_config = sampler_config or SamplerConfig()
    done = read_checkpoint(checkpoint) if checkpoint else {}
    for c in configs:
        for r in range(c.n_replicates):
            rec = done.get((c.key, r))
            if rec is not None and rec["seed"] != c.replicate_seed(r):
                raise InputError(f"checkpoint {checkpoint} was written with a different seed for {c.key} replicate {r}")
    todo = [(c, r, sampler_config) for c in configs for r in range(c.n_replicates) if (c.key, r) not in done]
    fh = open(checkpoint, "a", encoding="utf-8") if checkpoint else None

    def record(rec):
        done[(rec["scenario"], rec["replicate"])] = rec
        if fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.flush()
        if progress:
            progress(rec)

    try:
        if threads > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                for rec in pool.map(_job, todo):
                    record(rec)
        else:
            for job in todo:
                record(_job(job))
    finally:
        if fh:
            fh.close()

    scenarios = {}
    records = []
    for c in configs:
        recs = [done[(c.key, r)] for r in range(c.n_replicates)]
        tk = true_kappa(c.sim_kind, c.hyper, c.dims, c.true_kappa_reps, c.true_kappa_seed(), c.resolved_intercept, c.link)
        scenarios[c.key] = aggregate(c, recs, tk)
        records += recs
    return StudyResult(scenarios, records)
