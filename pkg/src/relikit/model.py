"""Bayesian hierarchical models for binary subject x rater x time ratings.

Three random-effect structures are supported, all with a Bernoulli outcome
and a logit or probit link ``g``:

``IN`` (independent)
    ``g(p_ijk) = X b + u_i + v_j + w_k`` with independent normal effects.
``PN`` (partially nested)
    ``g(p_ijk) = b_0 - (X_t b_t + u_i + v_jk)`` where ``X_t`` holds the
    non-intercept columns (time indicators by default) and each rater's
    ``v_j.`` is K-variate normal with exchangeable correlation ``rho_T``.
``FN`` (fully nested)
    ``g(p_ijk) = X b + u_i + v_ij + w_ijk``; each subject's ``v_i.`` is
    J-variate normal with exchangeable correlation ``rho_R``, and each
    ``w_ij.`` is K-variate normal with exchangeable correlation ``rho_T``
    (independent across raters).

Variances get inverse-gamma priors, fixed effects independent normal
priors, correlations an LKJ prior (restricted to the exchangeable family,
i.e. a density proportional to ``det(Omega) ** (eta - 1)``) or a Beta prior
on ``(rho + 1) / 2``.

The sampler works on an unconstrained vector ``z``. Random effects are
non-centered: a block ``x = D S z_raw`` where ``D`` holds the block's
standard deviations and ``S`` is the symmetric square root of the
exchangeable correlation matrix, which has the closed form
``S = sqrt(1 - rho) I + c 11'``. Standard deviations are ``exp`` of their
coordinate and a correlation on a d-block is a scaled sigmoid onto
``(-1/(d-1), 1)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy.special import betaln, expit, gammaln, log_ndtr

from . import _kernel
from .data import RatingsTable, design_column_names, design_matrix
from .errors import DimensionMismatch, NonFiniteDensity, NotPositiveDefinite

KINDS = ("IN", "PN", "FN")
LINKS = ("logit", "probit")
STRUCTURES = ("common", "separate", "unstructured")
_LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class PriorConfig:
    """Hyperprior settings.

    ``gamma_a``/``gamma_b`` are the inverse-gamma shape and scale for every
    variance component. ``beta_sigma`` is the prior standard deviation of
    each fixed-effect coefficient. ``rho_prior`` selects ``"lkj"`` (shapes
    ``rho_R_eta``/``rho_T_eta``) or ``"beta"`` (``beta_a``/``beta_b``).
    """

    gamma_a: float = 3.0
    gamma_b: float = 1.5
    beta_mean: float = 0.0
    beta_sigma: float = 1 / 0.3
    rho_R_eta: float = 1.0
    rho_T_eta: float = 1.0
    beta_a: float = 5.0
    beta_b: float = 5.0
    rho_prior: str = "lkj"

    def __post_init__(self):
        for name in ("gamma_a", "gamma_b", "beta_sigma", "rho_R_eta", "rho_T_eta", "beta_a", "beta_b"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.rho_prior not in ("lkj", "beta"):
            raise ValueError("rho_prior must be 'lkj' or 'beta'")


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "IN"
    link: str = "logit"
    cov_R_structure: str = "common"
    cov_T_structure: str = "common"
    intercept: bool = True
    priors: PriorConfig = field(default_factory=PriorConfig)
    time_coding: str | None = None

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.link not in LINKS:
            raise ValueError(f"unknown link {self.link!r}")
        for s in (self.cov_R_structure, self.cov_T_structure):
            if s not in STRUCTURES:
                raise ValueError(f"unknown covariance structure {s!r}")
        if self.time_coding not in (None, "none", "reference"):
            raise ValueError(f"unknown time_coding {self.time_coding!r}")

    @property
    def resolved_time_coding(self):
        if self.time_coding is not None:
            return self.time_coding
        return "reference" if self.kind == "PN" else "none"

    def to_config(self):
        """JSON-ready dict using the R-style argument names."""
        out = {
            "model": self.kind,
            "link": self.link,
            "cov_R_str": self.cov_R_structure,
            "cov_T_str": self.cov_T_structure,
            "fixed_eff_intercept": self.intercept,
            "time_coding": self.resolved_time_coding,
        }
        out.update(asdict(self.priors))
        return out

    @classmethod
    def from_config(cls, cfg):
        prior_names = {f.name for f in fields(PriorConfig)}
        priors = PriorConfig(**{k: v for k, v in cfg.items() if k in prior_names})
        return cls(
            kind=cfg.get("model", "IN"),
            link=cfg.get("link", "logit"),
            cov_R_structure=cfg.get("cov_R_str", "common"),
            cov_T_structure=cfg.get("cov_T_str", "common"),
            intercept=bool(cfg.get("fixed_eff_intercept", True)),
            priors=priors,
            time_coding=cfg.get("time_coding"),
        )

    def to_json(self):
        return json.dumps(self.to_config(), sort_keys=True)


@dataclass
class Hyperparameters:
    """Variance and correlation parameters of a model's random effects.

    ``sigma_v`` and ``sigma_w`` are arrays whose length depends on the
    covariance structure; for ``FN`` with unstructured ``Sigma_w`` the
    array is indexed ``j * K + k``. ``rho_R``/``rho_T`` are ``None`` where
    the model has no such correlation.
    """

    sigma_u: float
    sigma_v: np.ndarray
    sigma_w: np.ndarray | None = None
    rho_R: float | None = None
    rho_T: float | None = None

    def __post_init__(self):
        self.sigma_u = float(self.sigma_u)
        self.sigma_v = np.atleast_1d(np.asarray(self.sigma_v, dtype=float))
        if self.sigma_w is not None:
            self.sigma_w = np.atleast_1d(np.asarray(self.sigma_w, dtype=float))


@dataclass
class ParamVector:
    """Constrained parameters of one model.

    Shapes by kind: ``IN`` has ``v`` (J,), ``w`` (K,); ``PN`` has ``v``
    (J, K) and no ``w``; ``FN`` has ``v`` (I, J) and ``w`` (I, J, K).
    ``beta[0]`` is the intercept when the design has one.
    """

    beta: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray | None
    sigma_u: float
    sigma_v: np.ndarray
    sigma_w: np.ndarray | None = None
    rho_R: float | None = None
    rho_T: float | None = None

    @property
    def hyper(self):
        return Hyperparameters(self.sigma_u, self.sigma_v, self.sigma_w, self.rho_R, self.rho_T)


def rho_lower(d):
    return -1.0 / (d - 1)


def exchangeable_logdet(rho, d):
    return (d - 1) * math.log1p(-rho) + math.log1p((d - 1) * rho)


def build_covariance(structure, sigmas, rho, d):
    """Covariance ``D Omega D`` of an exchangeable block.

    ``sigmas`` has length 1 for ``common`` and ``d`` otherwise. Raises
    :class:`NotPositiveDefinite` unless ``-1/(d-1) < rho < 1``.
    """
    sigmas = np.atleast_1d(np.asarray(sigmas, dtype=float))
    if structure == "common":
        if len(sigmas) != 1:
            raise DimensionMismatch("common structure takes a single sigma")
        sigmas = np.repeat(sigmas, d)
    elif len(sigmas) != d:
        raise DimensionMismatch(f"{structure} structure takes {d} sigmas, got {len(sigmas)}")
    if d > 1 and not (rho_lower(d) < rho < 1):
        raise NotPositiveDefinite(f"rho={rho} outside ({rho_lower(d)}, 1) for d={d}")
    omega = np.full((d, d), float(rho))
    np.fill_diagonal(omega, 1.0)
    return sigmas[:, None] * omega * sigmas[None, :]


def _sqrt_coeffs(rho, d):
    """``a, b, da, db`` with ``S = a I + b 11'`` and derivatives in rho."""
    a = math.sqrt(1 - rho)
    r = math.sqrt(1 + (d - 1) * rho)
    b = (r - a) / d
    da = -0.5 / a
    dr = 0.5 * (d - 1) / r
    return a, b, da, (dr - da) / d


@dataclass
class _Block:
    name: str
    shape: tuple
    nblocks: int
    d: int
    sigma_name: str
    n_sigma: int
    sig_idx: np.ndarray
    rho_name: str | None
    obs_index: np.ndarray
    sign: float
    z_slice: slice = None
    sigma_slice: slice = None
    rho_slice: slice = None

    @property
    def size(self):
        return self.nblocks * self.d


def _n_sigma(structure, d, per_rater=1):
    if structure == "common":
        return 1
    if structure == "separate":
        return d
    return d * per_rater


class Model:
    """A model specification bound to a ratings table.

    Holds the design matrix, observation-to-effect index maps and the
    layout of the unconstrained parameter vector.
    """

    def __init__(self, spec: ModelSpec, table: RatingsTable):
        self.spec = spec
        self.table = table
        I, J, K = table.I, table.J, table.K
        coding = spec.resolved_time_coding
        self.X = design_matrix(table, spec.intercept, coding)
        self.beta_names = design_column_names(table, spec.intercept, coding)
        self.p = self.X.shape[1]
        self.y = table.y.astype(float)
        sign = -1.0 if spec.kind == "PN" else 1.0
        self.beta_sign = np.full(self.p, sign)
        if spec.intercept and self.p:
            self.beta_sign[0] = 1.0
        s, r, t = table.subject, table.rater, table.time

        def common(nb, d):
            return np.zeros((nb, d), dtype=np.intp)

        blocks = [_Block("u", (I,), I, 1, "sigma_u", 1, common(I, 1), None, s, sign)]
        if spec.kind == "IN":
            blocks.append(_Block("v", (J,), J, 1, "sigma_v", 1, common(J, 1), None, r, 1.0))
            blocks.append(_Block("w", (K,), K, 1, "sigma_w", 1, common(K, 1), None, t, 1.0))
        elif spec.kind == "PN":
            ns = _n_sigma(spec.cov_T_structure, K)
            idx = np.broadcast_to(np.arange(K) if ns > 1 else 0, (J, K)).astype(np.intp)
            rho = "rho_T" if K > 1 else None
            blocks.append(_Block("v", (J, K), J, K, "sigma_v", ns, idx, rho, r * K + t, sign))
        else:
            ns = _n_sigma(spec.cov_R_structure, J)
            idx = np.broadcast_to(np.arange(J) if ns > 1 else 0, (I, J)).astype(np.intp)
            rho = "rho_R" if J > 1 else None
            blocks.append(_Block("v", (I, J), I, J, "sigma_v", ns, idx, rho, s * J + r, 1.0))
            nw = _n_sigma(spec.cov_T_structure, K, per_rater=J)
            if nw == 1:
                jk = np.zeros((J, K), dtype=np.intp)
            elif spec.cov_T_structure == "separate":
                jk = np.broadcast_to(np.arange(K), (J, K)).astype(np.intp)
            else:
                jk = np.arange(J * K).reshape(J, K)
            idx = np.tile(jk, (I, 1))
            rho = "rho_T" if K > 1 else None
            blocks.append(_Block("w", (I, J, K), I * J, K, "sigma_w", nw, idx, rho, (s * J + r) * K + t, 1.0))
        self.blocks = blocks

        pos = 0
        self.beta_slice = slice(pos, pos + self.p)
        pos += self.p
        for blk in blocks:
            blk.z_slice = slice(pos, pos + blk.size)
            pos += blk.size
        for blk in blocks:
            blk.sigma_slice = slice(pos, pos + blk.n_sigma)
            pos += blk.n_sigma
        for blk in blocks:
            if blk.rho_name:
                blk.rho_slice = slice(pos, pos + 1)
                pos += 1
        self.dim = pos
        self._packed = None

    # -- coordinate maps ---------------------------------------------------

    def _rho(self, blk, zr):
        lo = rho_lower(blk.d)
        s = expit(zr)
        return lo + (1 - lo) * s

    def constrain(self, z) -> ParamVector:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise DimensionMismatch(f"expected vector of length {self.dim}, got {z.shape}")
        out = {"beta": z[self.beta_slice].copy(), "w": None, "sigma_w": None, "rho_R": None, "rho_T": None}
        for blk in self.blocks:
            sig = np.exp(z[blk.sigma_slice])
            rho = self._rho(blk, z[blk.rho_slice][0]) if blk.rho_name else 0.0
            a, b, _, _ = _sqrt_coeffs(rho, blk.d)
            zb = z[blk.z_slice].reshape(blk.nblocks, blk.d)
            x = sig[blk.sig_idx] * (a * zb + b * zb.sum(axis=1, keepdims=True))
            out[blk.name] = x.reshape(blk.shape)
            out[blk.sigma_name] = float(sig[0]) if blk.name == "u" else sig
            if blk.rho_name:
                out[blk.rho_name] = float(rho)
        return ParamVector(**out)

    def unconstrain(self, params: ParamVector):
        z = np.empty(self.dim)
        z[self.beta_slice] = params.beta
        for blk in self.blocks:
            sig = np.atleast_1d(np.asarray(getattr(params, blk.sigma_name), dtype=float))
            if sig.shape != (blk.n_sigma,):
                raise DimensionMismatch(f"{blk.sigma_name} has shape {sig.shape}, expected ({blk.n_sigma},)")
            z[blk.sigma_slice] = np.log(sig)
            rho = 0.0
            if blk.rho_name:
                rho = getattr(params, blk.rho_name)
                lo = rho_lower(blk.d)
                q = (rho - lo) / (1 - lo)
                z[blk.rho_slice] = math.log(q) - math.log1p(-q)
            a = math.sqrt(1 - rho)
            r = math.sqrt(1 + (blk.d - 1) * rho)
            binv = (1 / r - 1 / a) / blk.d
            x = np.asarray(getattr(params, blk.name), dtype=float).reshape(blk.nblocks, blk.d)
            y = x / sig[blk.sig_idx]
            z[blk.z_slice] = (y / a + binv * y.sum(axis=1, keepdims=True)).ravel()
        return z

    def check_params(self, params: ParamVector):
        if len(params.beta) != self.p:
            raise DimensionMismatch(f"beta has length {len(params.beta)}, expected {self.p}")
        for blk in self.blocks:
            x = getattr(params, blk.name)
            if x is None or np.shape(x) != blk.shape:
                raise DimensionMismatch(f"{blk.name} has shape {np.shape(x)}, expected {blk.shape}")

    # -- densities ---------------------------------------------------------

    def linear_predictor(self, params: ParamVector):
        self.check_params(params)
        eta = self.X @ (self.beta_sign * params.beta)
        for blk in self.blocks:
            eta = eta + blk.sign * np.asarray(getattr(params, blk.name)).ravel()[blk.obs_index]
        return eta

    def _loglik(self, eta):
        y = self.y
        if self.spec.link == "logit":
            ll = y * eta - np.logaddexp(0.0, eta)
            g = y - expit(eta)
        else:
            s = 2 * y - 1
            lc = log_ndtr(s * eta)
            ll = lc
            g = s * np.exp(-0.5 * eta**2 - 0.5 * _LOG_2PI - lc)
        return ll, g

    def pointwise_loglik(self, params: ParamVector):
        return self._loglik(self.linear_predictor(params))[0]

    def _ig_logpdf_sigma2(self, s2):
        a, b = self.spec.priors.gamma_a, self.spec.priors.gamma_b
        return a * math.log(b) - gammaln(a) - (a + 1) * np.log(s2) - b / s2

    def _rho_logprior(self, blk, rho):
        pr = self.spec.priors
        d = blk.d
        if pr.rho_prior == "lkj":
            eta = pr.rho_R_eta if blk.rho_name == "rho_R" else pr.rho_T_eta
            lp = (eta - 1) * exchangeable_logdet(rho, d)
            dlp = (eta - 1) * (-(d - 1) / (1 - rho) + (d - 1) / (1 + (d - 1) * rho))
        else:
            a, b = pr.beta_a, pr.beta_b
            lp = (a - 1) * math.log((1 + rho) / 2) + (b - 1) * math.log((1 - rho) / 2) - betaln(a, b) - math.log(2)
            dlp = (a - 1) / (1 + rho) - (b - 1) / (1 - rho)
        return lp, dlp

    def _beta_logprior(self, beta):
        pr = self.spec.priors
        r = (beta - pr.beta_mean) / pr.beta_sigma
        lp = -0.5 * np.sum(r**2) - len(beta) * (math.log(pr.beta_sigma) + 0.5 * _LOG_2PI)
        return lp, -r / pr.beta_sigma

    def log_posterior(self, params: ParamVector):
        """Log joint density of data and constrained parameters.

        The density is taken with respect to Lebesgue measure on
        ``(beta, random effects, sigma**2, rho)``. All normalizing constants
        are included except that of the LKJ term.
        """
        self.check_params(params)
        lp = float(np.sum(self.pointwise_loglik(params)))
        lp += self._beta_logprior(np.asarray(params.beta, dtype=float))[0]
        for blk in self.blocks:
            sig = np.atleast_1d(np.asarray(getattr(params, blk.sigma_name), dtype=float))
            rho = getattr(params, blk.rho_name) if blk.rho_name else 0.0
            d = blk.d
            if d > 1 and not (rho_lower(d) < rho < 1):
                raise NonFiniteDensity(f"{blk.rho_name}={rho} gives a non positive definite block")
            if np.any(sig <= 0):
                raise NonFiniteDensity(f"{blk.sigma_name} must be positive")
            x = np.asarray(getattr(params, blk.name), dtype=float).reshape(blk.nblocks, d)
            yb = x / sig[blk.sig_idx]
            lam = 1 + (d - 1) * rho
            quad = (np.sum(yb**2) - rho / lam * np.sum(yb.sum(axis=1) ** 2)) / (1 - rho)
            logdet = exchangeable_logdet(rho, d) if d > 1 else 0.0
            lp += -0.5 * quad - 0.5 * blk.size * _LOG_2PI - np.sum(np.log(sig[blk.sig_idx])) - 0.5 * blk.nblocks * logdet
            lp += float(np.sum(self._ig_logpdf_sigma2(sig**2)))
            if blk.rho_name:
                lp += self._rho_logprior(blk, rho)[0]
        if not np.isfinite(lp):
            raise NonFiniteDensity("log posterior is not finite")
        return lp

    def log_abs_det_jacobian(self, z):
        """``log |d constrain / d z|`` with variances measured as ``sigma**2``."""
        z = np.asarray(z, dtype=float)
        total = 0.0
        for blk in self.blocks:
            t = z[blk.sigma_slice]
            total += np.sum(math.log(2) + 2 * t)
            rho = 0.0
            if blk.rho_name:
                zr = z[blk.rho_slice][0]
                rho = self._rho(blk, zr)
                total += math.log(1 - rho_lower(blk.d)) - np.logaddexp(0, -zr) - np.logaddexp(0, zr)
            total += np.sum(t[blk.sig_idx])
            if blk.d > 1:
                total += 0.5 * blk.nblocks * exchangeable_logdet(rho, blk.d)
        return float(total)

    def _kernel_args(self):
        if self._packed is None:
            pr = self.spec.priors
            nb = len(self.blocks)
            maxsize = max(blk.size for blk in self.blocks)
            binfo = np.zeros((nb, 8), dtype=np.int64)
            sig_idx = np.zeros((nb, maxsize), dtype=np.int64)
            obs_idx = np.zeros((nb, len(self.y)), dtype=np.int64)
            for bi, blk in enumerate(self.blocks):
                binfo[bi] = (
                    blk.z_slice.start, blk.nblocks, blk.d, blk.sigma_slice.start, blk.n_sigma,
                    blk.rho_slice.start if blk.rho_name else -1, blk.rho_name == "rho_R", int(blk.sign),
                )
                sig_idx[bi, : blk.size] = blk.sig_idx.ravel()
                obs_idx[bi] = blk.obs_index
            fprior = np.array([
                pr.gamma_a, pr.gamma_b, pr.gamma_a * math.log(pr.gamma_b) - gammaln(pr.gamma_a) + math.log(2),
                pr.beta_mean, pr.beta_sigma, -(math.log(pr.beta_sigma) + 0.5 * _LOG_2PI),
                pr.rho_R_eta, pr.rho_T_eta, pr.beta_a, pr.beta_b, -betaln(pr.beta_a, pr.beta_b) - math.log(2),
                1.0 if pr.rho_prior == "beta" else 0.0,
            ])
            self._packed = (
                np.ascontiguousarray(self.X), self.beta_sign.copy(), self.y.copy(),
                self.spec.link == "probit", binfo, sig_idx, obs_idx, fprior,
            )
        return self._packed

    def log_density_and_grad(self, z):
        """Unconstrained log density (Jacobian included) and its gradient.

        Uses the compiled kernel; :meth:`log_density_and_grad_reference`
        is the vectorized equivalent.
        """
        z = np.ascontiguousarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise DimensionMismatch(f"expected vector of length {self.dim}, got {z.shape}")
        return _kernel.log_density_and_grad(z, *self._kernel_args())

    def log_density_and_grad_reference(self, z):
        """Vectorized numpy version of :meth:`log_density_and_grad`."""
        pr = self.spec.priors
        grad = np.zeros(self.dim)
        beta = z[self.beta_slice]
        eta = self.X @ (self.beta_sign * beta)
        cache = []
        for blk in self.blocks:
            t = z[blk.sigma_slice]
            sig = np.exp(t)
            if blk.rho_name:
                rho = self._rho(blk, z[blk.rho_slice][0])
                if not (rho_lower(blk.d) < rho < 1):
                    return -np.inf, grad
            else:
                rho = 0.0
            if not np.all(np.isfinite(sig)) or np.any(sig == 0):
                return -np.inf, grad
            a, b, da, db = _sqrt_coeffs(rho, blk.d)
            zb = z[blk.z_slice].reshape(blk.nblocks, blk.d)
            zs = zb.sum(axis=1, keepdims=True)
            Sz = a * zb + b * zs
            sig_slot = sig[blk.sig_idx]
            x = sig_slot * Sz
            eta = eta + blk.sign * x.ravel()[blk.obs_index]
            cache.append((t, sig, rho, a, b, da, db, zb, zs, Sz, sig_slot))

        ll, g = self._loglik(eta)
        lp = float(np.sum(ll))
        blp, bgrad = self._beta_logprior(beta)
        lp += blp
        grad[self.beta_slice] = self.X.T @ g * self.beta_sign + bgrad

        ga, gb = pr.gamma_a, pr.gamma_b
        ig_const = ga * math.log(gb) - gammaln(ga) + math.log(2)
        for blk, (t, sig, rho, a, b, da, db, zb, zs, Sz, sig_slot) in zip(self.blocks, cache):
            gx = np.bincount(blk.obs_index, weights=g, minlength=blk.size).reshape(blk.nblocks, blk.d)
            if blk.sign < 0:
                gx = -gx
            h = gx * sig_slot
            lp += -0.5 * float(np.sum(zb**2)) - 0.5 * blk.size * _LOG_2PI
            grad[blk.z_slice] = (a * h + b * h.sum(axis=1, keepdims=True) - zb).ravel()
            gsig = np.bincount(blk.sig_idx.ravel(), weights=(h * Sz).ravel(), minlength=blk.n_sigma)
            e2t = np.exp(-2 * t)
            lp += float(np.sum(ig_const - 2 * ga * t - gb * e2t))
            grad[blk.sigma_slice] = gsig - 2 * ga + 2 * gb * e2t
            if blk.rho_name:
                zr = z[blk.rho_slice][0]
                lo = rho_lower(blk.d)
                s = expit(zr)
                drho = (1 - lo) * s * (1 - s)
                rlp, rdlp = self._rho_logprior(blk, rho)
                lp += rlp + math.log(1 - lo) - np.logaddexp(0, -zr) - np.logaddexp(0, zr)
                glik = float(np.sum(h * (da * zb + db * zs)))
                grad[blk.rho_slice] = (glik + rdlp) * drho + (1 - 2 * s)
        if not np.isfinite(lp):
            return -np.inf, grad
        return lp, grad

    def log_density(self, z):
        return self.log_density_and_grad(z)[0]

    # -- named flat views ----------------------------------------------------

    def column_names(self):
        names = [f"beta[{n + 1}]" for n in range(self.p)]
        for blk in self.blocks:
            for idx in np.ndindex(*blk.shape):
                names.append(f"{blk.name}[{','.join(str(v + 1) for v in idx)}]")
        for blk in self.blocks:
            if blk.name == "u":
                names.append("sigma_u")
            else:
                names += [f"{blk.sigma_name}[{m + 1}]" for m in range(blk.n_sigma)]
        for blk in self.blocks:
            if blk.rho_name:
                names.append(blk.rho_name)
        return names

    def flatten(self, params: ParamVector):
        """Constrained parameters as a flat vector ordered like :meth:`column_names`."""
        parts = [np.asarray(params.beta, float)]
        parts += [np.asarray(getattr(params, blk.name), float).ravel() for blk in self.blocks]
        parts += [np.atleast_1d(np.asarray(getattr(params, blk.sigma_name), float)) for blk in self.blocks]
        parts += [np.array([getattr(params, blk.rho_name)]) for blk in self.blocks if blk.rho_name]
        return np.concatenate(parts)

    def unflatten(self, values) -> ParamVector:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.dim,):
            raise DimensionMismatch(f"expected {self.dim} values, got {values.shape}")
        out = {"beta": values[self.beta_slice].copy(), "w": None, "sigma_w": None, "rho_R": None, "rho_T": None}
        for blk in self.blocks:
            out[blk.name] = values[blk.z_slice].reshape(blk.shape).copy()
            sig = values[blk.sigma_slice].copy()
            out[blk.sigma_name] = float(sig[0]) if blk.name == "u" else sig
            if blk.rho_name:
                out[blk.rho_name] = float(values[blk.rho_slice][0])
        return ParamVector(**out)


def linear_predictor(spec, params, table):
    return Model(spec, table).linear_predictor(params)


def log_posterior(spec, params, table):
    return Model(spec, table).log_posterior(params)


def grad_log_posterior(spec, params, table):
    """Gradient of the unconstrained log density at ``unconstrain(params)``."""
    model = Model(spec, table)
    return model.log_density_and_grad(model.unconstrain(params))[1]


def constrain(spec, table, z):
    return Model(spec, table).constrain(z)


def unconstrain(spec, table, params):
    return Model(spec, table).unconstrain(params)


def with_priors(spec: ModelSpec, **changes) -> ModelSpec:
    return replace(spec, priors=replace(spec.priors, **changes))
