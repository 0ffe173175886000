"""No-U-turn Hamiltonian Monte Carlo with warmup adaptation.

The transition is the multinomial variant of NUTS: the trajectory is doubled
in a random direction until the generalized no-U-turn criterion fails (checked
on the whole tree and on every merged pair of subtrees), a state is drawn
from the trajectory with probability proportional to ``exp(-H)``, and new
subtrees are accepted with biased progressive sampling.

Warmup follows the usual three-phase schedule: a fast initial buffer where
only the step size adapts, a series of doubling slow windows that each end by
re-estimating a diagonal inverse metric from the window's draws, and a fast
terminal buffer. Step size adapts by dual averaging toward
``target_accept``.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AllDivergent, NonFiniteDensity
from .model import Model, ModelSpec

log = logging.getLogger(__name__)

MAX_DELTA_H = 1000.0


@dataclass(frozen=True)
class SamplerConfig:
    niters: int = 2000
    nwarmup: int = 200
    nchains: int = 2
    seed: int | None = None
    target_accept: float = 0.8
    max_tree_depth: int = 10
    threads: int = 1

    def __post_init__(self):
        if self.niters < 1 or self.nchains < 1:
            raise ValueError("niters and nchains must be at least 1")
        if self.nwarmup < 0:
            raise ValueError("nwarmup must be non-negative")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")


@dataclass
class ChainResult:
    z: np.ndarray
    logp: np.ndarray
    divergent: np.ndarray
    accept_stat: np.ndarray
    n_leapfrog: np.ndarray
    tree_depth: np.ndarray
    stepsize: float
    inv_metric: np.ndarray
    warmup_divergences: int


@dataclass
class PosteriorDraws:
    """Draws from all chains.

    ``values`` has shape ``(nchains, niters, ncols)`` in constrained space,
    with columns named by ``column_names``. ``z`` holds the same draws in
    unconstrained coordinates.
    """

    values: np.ndarray
    column_names: list
    z: np.ndarray | None = None
    divergent: np.ndarray | None = None
    accept_stat: np.ndarray | None = None
    n_leapfrog: np.ndarray | None = None
    tree_depth: np.ndarray | None = None
    stepsize: np.ndarray | None = None
    inv_metric: np.ndarray | None = None
    seed: int | None = None
    spec: ModelSpec | None = None
    config: SamplerConfig | None = None
    elapsed: float = 0.0
    _model: Model | None = field(default=None, repr=False)

    @property
    def nchains(self):
        return self.values.shape[0]

    @property
    def niters(self):
        return self.values.shape[1]

    @property
    def ndraws(self):
        return self.nchains * self.niters

    def flat(self):
        """All draws as an ``(ndraws, ncols)`` matrix, chain-major."""
        return self.values.reshape(-1, self.values.shape[2])

    def column(self, name):
        return self.values[:, :, self.column_names.index(name)]

    def params(self, chain, it):
        return self._model.unflatten(self.values[chain, it])

    def iter_params(self):
        for row in self.flat():
            yield self._model.unflatten(row)

    @property
    def divergence_count(self):
        if self.divergent is None:
            return np.zeros(self.nchains, dtype=int)
        return self.divergent.sum(axis=1)


class _Tree:
    __slots__ = (
        "q_minus", "p_minus", "g_minus", "q_plus", "p_plus", "g_plus",
        "rho", "log_w", "q_prop", "logp_prop", "g_prop",
        "valid", "divergent", "n_leapfrog", "sum_accept",
    )


class _Integrator:
    def __init__(self, logp_grad, inv_metric):
        self.logp_grad = logp_grad
        self.inv_metric = inv_metric

    def leapfrog(self, q, p, g, eps):
        p = p + 0.5 * eps * g
        q = q + eps * self.inv_metric * p
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            logp, g = self.logp_grad(q)
        p = p + 0.5 * eps * g
        return q, p, g, logp

    def kinetic(self, p):
        return 0.5 * float(np.dot(p, self.inv_metric * p))


def _no_uturn(p_sharp_minus, p_sharp_plus, rho):
    return float(np.dot(p_sharp_minus, rho)) > 0 and float(np.dot(p_sharp_plus, rho)) > 0


def _build_tree(integ, rng, q, p, g, eps, depth, H0):
    tree = _Tree()
    if depth == 0:
        q1, p1, g1, logp = integ.leapfrog(q, p, g, eps)
        H = -logp + integ.kinetic(p1)
        if not math.isfinite(H):
            H = math.inf
        tree.q_minus = tree.q_plus = tree.q_prop = q1
        tree.p_minus = tree.p_plus = tree.rho = p1
        tree.g_minus = tree.g_plus = tree.g_prop = g1
        tree.logp_prop = logp
        tree.log_w = H0 - H
        tree.divergent = H - H0 > MAX_DELTA_H
        tree.valid = not tree.divergent
        tree.n_leapfrog = 1
        tree.sum_accept = math.exp(min(0.0, H0 - H)) if H < math.inf else 0.0
        return tree

    inner = _build_tree(integ, rng, q, p, g, eps, depth - 1, H0)
    if not inner.valid:
        return inner
    if eps > 0:
        outer = _build_tree(integ, rng, inner.q_plus, inner.p_plus, inner.g_plus, eps, depth - 1, H0)
    else:
        outer = _build_tree(integ, rng, inner.q_minus, inner.p_minus, inner.g_minus, eps, depth - 1, H0)
    inner.n_leapfrog += outer.n_leapfrog
    inner.sum_accept += outer.sum_accept
    if not outer.valid:
        inner.valid = False
        inner.divergent = outer.divergent
        return inner

    log_w = np.logaddexp(inner.log_w, outer.log_w)
    if math.log(rng.uniform()) < outer.log_w - log_w:
        inner.q_prop, inner.logp_prop, inner.g_prop = outer.q_prop, outer.logp_prop, outer.g_prop
    inner.log_w = log_w

    left, right = (inner, outer) if eps > 0 else (outer, inner)
    rho = left.rho + right.rho
    im = integ.inv_metric
    ok = _no_uturn(im * left.p_minus, im * right.p_plus, rho)
    # extra checks across the seam between the two subtrees
    ok = ok and _no_uturn(im * left.p_minus, im * right.p_minus, left.rho + right.p_minus)
    ok = ok and _no_uturn(im * left.p_plus, im * right.p_plus, left.p_plus + right.rho)
    inner.valid = ok
    inner.q_minus, inner.p_minus, inner.g_minus = left.q_minus, left.p_minus, left.g_minus
    inner.q_plus, inner.p_plus, inner.g_plus = right.q_plus, right.p_plus, right.g_plus
    inner.rho = rho
    return inner


def nuts_transition(integ, rng, q, logp, g, eps, max_depth):
    """One NUTS transition; returns ``(q, logp, g, info)``."""
    mass_sqrt = 1.0 / np.sqrt(integ.inv_metric)
    p0 = rng.standard_normal(q.shape) * mass_sqrt
    H0 = -logp + integ.kinetic(p0)

    q_minus = q_plus = q
    p_minus = p_plus = p0
    g_minus = g_plus = g
    rho = p0
    log_w = 0.0
    q_new, logp_new, g_new = q, logp, g
    n_leapfrog = 0
    sum_accept = 0.0
    divergent = False
    depth = 0
    im = integ.inv_metric
    while depth < max_depth:
        forward = rng.uniform() < 0.5
        if forward:
            sub = _build_tree(integ, rng, q_plus, p_plus, g_plus, eps, depth, H0)
        else:
            sub = _build_tree(integ, rng, q_minus, p_minus, g_minus, -eps, depth, H0)
        n_leapfrog += sub.n_leapfrog
        sum_accept += sub.sum_accept
        depth += 1
        if not sub.valid:
            divergent = sub.divergent
            break
        if math.log(rng.uniform()) < sub.log_w - log_w:
            q_new, logp_new, g_new = sub.q_prop, sub.logp_prop, sub.g_prop
        log_w = np.logaddexp(log_w, sub.log_w)
        if forward:
            # old tree on the left, new subtree on the right
            seam_l = _no_uturn(im * p_minus, im * sub.p_minus, rho + sub.p_minus)
            seam_r = _no_uturn(im * p_plus, im * sub.p_plus, p_plus + sub.rho)
            q_plus, p_plus, g_plus = sub.q_plus, sub.p_plus, sub.g_plus
        else:
            seam_l = _no_uturn(im * sub.p_minus, im * p_minus, sub.rho + p_minus)
            seam_r = _no_uturn(im * sub.p_plus, im * p_plus, sub.p_plus + rho)
            q_minus, p_minus, g_minus = sub.q_minus, sub.p_minus, sub.g_minus
        rho = rho + sub.rho
        if not (_no_uturn(im * p_minus, im * p_plus, rho) and seam_l and seam_r):
            break
    info = {
        "accept_stat": sum_accept / max(n_leapfrog, 1),
        "n_leapfrog": n_leapfrog,
        "depth": depth,
        "divergent": divergent,
    }
    return q_new, logp_new, g_new, info


class _DualAveraging:
    def __init__(self, eps, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.restart(eps)

    def restart(self, eps):
        self.mu = math.log(10 * eps)
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def update(self, accept):
        self.counter += 1
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1 - eta) * self.s_bar + eta * (self.target - accept)
        x = self.mu - self.s_bar * math.sqrt(self.counter) / self.gamma
        w = self.counter ** (-self.kappa)
        self.x_bar = w * x + (1 - w) * self.x_bar
        return math.exp(x)

    @property
    def final(self):
        return math.exp(self.x_bar)


def _find_reasonable_stepsize(integ, rng, q, logp, g, eps=1.0):
    mass_sqrt = 1.0 / np.sqrt(integ.inv_metric)
    p = rng.standard_normal(q.shape) * mass_sqrt
    H0 = -logp + integ.kinetic(p)
    _, p1, _, logp1 = integ.leapfrog(q, p, g, eps)
    delta = H0 - (-logp1 + integ.kinetic(p1))
    direction = 1 if (math.isfinite(delta) and delta > math.log(0.8)) else -1
    for _ in range(60):
        p = rng.standard_normal(q.shape) * mass_sqrt
        H0 = -logp + integ.kinetic(p)
        _, p1, _, logp1 = integ.leapfrog(q, p, g, eps)
        delta = H0 - (-logp1 + integ.kinetic(p1))
        if not math.isfinite(delta):
            delta = -math.inf
        if direction == 1 and not delta > math.log(0.8):
            break
        if direction == -1 and not delta < math.log(0.8):
            break
        eps = eps * 2.0 if direction == 1 else eps / 2.0
    return eps


def warmup_windows(nwarmup, init_buffer=75, term_buffer=50, base_window=25):
    """End indices (exclusive) of the slow adaptation windows, plus buffer sizes."""
    if nwarmup < 20:
        return [], nwarmup, 0
    if init_buffer + base_window + term_buffer > nwarmup:
        init_buffer = int(0.15 * nwarmup)
        term_buffer = int(0.1 * nwarmup)
        base_window = nwarmup - init_buffer - term_buffer
    ends = []
    start, size = init_buffer, base_window
    last = nwarmup - term_buffer
    while start < last:
        end = start + size
        if end + 2 * size > last:
            end = last
        ends.append(end)
        start, size = end, 2 * size
    return ends, init_buffer, term_buffer


def _initial_point(logp_grad, dim, rng, init=None, retries=100):
    if init is not None:
        q = np.array(init, dtype=float)
        logp, g = logp_grad(q)
        if math.isfinite(logp) and np.all(np.isfinite(g)):
            return q, logp, g
        raise NonFiniteDensity("log density is not finite at the supplied initial point")
    for _ in range(retries):
        q = rng.uniform(-2.0, 2.0, size=dim)
        logp, g = logp_grad(q)
        if math.isfinite(logp) and np.all(np.isfinite(g)):
            return q, logp, g
    raise NonFiniteDensity(f"no finite initial point after {retries} attempts")


def run_chain(logp_grad, dim, niters, nwarmup, rng, target_accept=0.8, max_tree_depth=10, init=None):
    """Run one adaptive NUTS chain and return a :class:`ChainResult`."""
    q, logp, g = _initial_point(logp_grad, dim, rng, init)
    integ = _Integrator(logp_grad, np.ones(dim))
    eps = _find_reasonable_stepsize(integ, rng, q, logp, g)
    da = _DualAveraging(eps, target_accept)
    ends, init_buffer, term_buffer = warmup_windows(nwarmup)
    window_start = init_buffer
    window_draws = []
    warm_div = 0

    for it in range(nwarmup):
        q, logp, g, info = nuts_transition(integ, rng, q, logp, g, eps, max_tree_depth)
        warm_div += info["divergent"]
        eps = da.update(info["accept_stat"])
        if ends and window_start <= it < ends[-1]:
            window_draws.append(q)
        if ends and it + 1 == ends[0]:
            ends.pop(0)
            draws = np.asarray(window_draws)
            n = len(draws)
            var = draws.var(axis=0, ddof=1) if n > 1 else np.ones(dim)
            integ.inv_metric = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            window_draws = []
            window_start = it + 1
            eps = _find_reasonable_stepsize(integ, rng, q, logp, g, eps)
            da.restart(eps)
    if nwarmup > 0:
        if warm_div == nwarmup:
            raise AllDivergent("every warmup transition diverged")
        eps = da.final

    zs = np.empty((niters, dim))
    out = {k: np.empty(niters) for k in ("logp", "accept_stat")}
    divergent = np.zeros(niters, dtype=bool)
    n_leapfrog = np.zeros(niters, dtype=int)
    depth = np.zeros(niters, dtype=int)
    for it in range(niters):
        q, logp, g, info = nuts_transition(integ, rng, q, logp, g, eps, max_tree_depth)
        zs[it] = q
        out["logp"][it] = logp
        out["accept_stat"][it] = info["accept_stat"]
        divergent[it] = info["divergent"]
        n_leapfrog[it] = info["n_leapfrog"]
        depth[it] = info["depth"]
    return ChainResult(
        z=zs,
        logp=out["logp"],
        divergent=divergent,
        accept_stat=out["accept_stat"],
        n_leapfrog=n_leapfrog,
        tree_depth=depth,
        stepsize=eps,
        inv_metric=integ.inv_metric.copy(),
        warmup_divergences=warm_div,
    )


def chain_rngs(seed, nchains):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(nchains)]


def resolve_seed(seed):
    if seed is None:
        return int(np.random.SeedSequence().entropy % (2**63))
    return int(seed)


def sample_target(logp_grad, dim, config: SamplerConfig, init=None):
    """Run ``config.nchains`` chains on an arbitrary differentiable target.

    ``logp_grad(z)`` must return ``(log density, gradient)``. Chains run
    sequentially; use :func:`sample` for process-parallel model fits.
    """
    seed = resolve_seed(config.seed)
    return [
        run_chain(logp_grad, dim, config.niters, config.nwarmup, rng, config.target_accept, config.max_tree_depth, init)
        for rng in chain_rngs(seed, config.nchains)
    ]


def _model_chain(args):
    model, config, rng = args
    return run_chain(model.log_density_and_grad, model.dim, config.niters, config.nwarmup, rng,
                     config.target_accept, config.max_tree_depth)


def sample(spec: ModelSpec, table, config: SamplerConfig | None = None) -> PosteriorDraws:
    """Fit ``spec`` to ``table`` and return constrained posterior draws."""
    config = config or SamplerConfig()
    seed = resolve_seed(config.seed)
    model = Model(spec, table)
    start = time.perf_counter()
    jobs = [(model, config, rng) for rng in chain_rngs(seed, config.nchains)]
    if config.threads > 1 and config.nchains > 1:
        with ProcessPoolExecutor(max_workers=min(config.threads, config.nchains)) as pool:
            chains = list(pool.map(_model_chain, jobs))
    else:
        chains = [_model_chain(job) for job in jobs]
    values = np.stack([np.array([model.flatten(model.constrain(z)) for z in ch.z]) for ch in chains])
    draws = PosteriorDraws(
        values=values,
        column_names=model.column_names(),
        z=np.stack([ch.z for ch in chains]),
        divergent=np.stack([ch.divergent for ch in chains]),
        accept_stat=np.stack([ch.accept_stat for ch in chains]),
        n_leapfrog=np.stack([ch.n_leapfrog for ch in chains]),
        tree_depth=np.stack([ch.tree_depth for ch in chains]),
        stepsize=np.array([ch.stepsize for ch in chains]),
        inv_metric=np.stack([ch.inv_metric for ch in chains]),
        seed=seed,
        spec=spec,
        config=config,
        elapsed=time.perf_counter() - start,
        _model=model,
    )
    ndiv = int(draws.divergent.sum())
    if ndiv:
        log.warning("%d divergent transitions after warmup (%s model)", ndiv, spec.kind)
    return draws


def attach_model(draws: PosteriorDraws, spec: ModelSpec, table) -> PosteriorDraws:
    """Bind draws loaded from disk to a model so named views work."""
    model = Model(spec, table)
    if list(draws.column_names) != model.column_names():
        from .errors import DimensionMismatch

        raise DimensionMismatch("draw columns do not match the model layout for this table")
    draws.spec = spec
    draws._model = model
    return draws


def write_draws_csv(draws: PosteriorDraws, path):
    """One row per draw: ``chain``, ``iteration`` (1-based), then named columns."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chain", "iteration", *draws.column_names])
        for c in range(draws.nchains):
            for it in range(draws.niters):
                w.writerow([c + 1, it + 1, *(repr(float(v)) for v in draws.values[c, it])])
    return path


def read_draws_csv(path) -> PosteriorDraws:
    """Inverse of :func:`write_draws_csv`; chains must have equal lengths."""
    import csv

    from .errors import InputError

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["chain", "iteration"]:
            raise InputError(f"{path}: expected 'chain,iteration,...' header")
        rows = [r for r in reader if r]
    if not rows:
        raise InputError(f"{path}: no draws")
    data = np.array(rows, dtype=float)
    chains = data[:, 0].astype(int)
    ids = np.unique(chains)
    per = [data[chains == c, 2:] for c in ids]
    if len({len(p) for p in per}) != 1:
        raise InputError(f"{path}: chains have different lengths")
    return PosteriorDraws(values=np.stack(per), column_names=header[2:])
