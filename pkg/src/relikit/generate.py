"""Forward simulation of random effects and binary outcomes.

Random-effect blocks are drawn through a Cholesky factor of the full block
covariance. This route is deliberately independent of the symmetric
square-root parameterization the model uses for inference.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, ndtr

from .errors import DimensionMismatch, NotPositiveDefinite
from .model import Hyperparameters, build_covariance, rho_lower


def inverse_link(eta, link="logit"):
    if link == "logit":
        return expit(eta)
    if link == "probit":
        return ndtr(eta)
    raise ValueError(f"unknown link {link!r}")


def _structure(n_sigma, d):
    if n_sigma == 1:
        return "common"
    if n_sigma == d:
        return "separate"
    raise DimensionMismatch(f"got {n_sigma} standard deviations for a block of size {d}")


def block_covariance(sigmas, rho, d):
    """Covariance of one exchangeable ``d``-block, structure inferred from ``len(sigmas)``.

    Boundary values (``rho = 1``, zero standard deviations) are allowed and
    give a singular covariance.
    """
    sigmas = np.atleast_1d(np.asarray(sigmas, dtype=float))
    rho = 0.0 if rho is None else float(rho)
    structure = _structure(len(sigmas), d)
    if d > 1 and (rho == 1.0 or np.any(sigmas == 0)):
        if not rho_lower(d) <= rho <= 1:
            raise NotPositiveDefinite(f"rho={rho} outside [{rho_lower(d)}, 1]")
        s = np.repeat(sigmas, d) if structure == "common" else sigmas
        omega = np.full((d, d), rho)
        np.fill_diagonal(omega, 1.0)
        return s[:, None] * omega * s[None, :]
    return build_covariance(structure, sigmas, rho, d)


def w_sigmas(hyper: Hyperparameters, J, K):
    """``(J, K)`` standard deviations of the FN ``w`` effects."""
    s = hyper.sigma_w
    if len(s) == 1:
        return np.full((J, K), s[0])
    if len(s) == K and len(s) != J * K:
        return np.broadcast_to(s, (J, K)).copy()
    if len(s) == J * K:
        return s.reshape(J, K)
    raise DimensionMismatch(f"sigma_w has {len(s)} entries; expected 1, {K} or {J * K}")


def _factor(cov):
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        lam, vec = np.linalg.eigh(cov)
        return vec * np.sqrt(np.clip(lam, 0, None))


def _mvn(rng, cov, n):
    return rng.standard_normal((n, cov.shape[0])) @ _factor(cov).T


def draw_random_effects(kind, hyper: Hyperparameters, dims, rng):
    """Summed random-effect contribution to the linear predictor, shape ``(I, J, K)``.

    For ``PN`` the contribution enters with a negative sign, as in the
    model's predictor ``b_0 - (u_i + v_jk)``.
    """
    I, J, K = dims
    kind = kind.upper()
    u = hyper.sigma_u * rng.standard_normal(I)
    if kind == "IN":
        v = hyper.sigma_v[0] * rng.standard_normal(J)
        w = hyper.sigma_w[0] * rng.standard_normal(K)
        return u[:, None, None] + v[None, :, None] + w[None, None, :]
    if kind == "PN":
        v = _mvn(rng, block_covariance(hyper.sigma_v, hyper.rho_T, K), J)
        return -(u[:, None, None] + v[None, :, :])
    if kind == "FN":
        v = _mvn(rng, block_covariance(hyper.sigma_v, hyper.rho_R, J), I)
        sw = w_sigmas(hyper, J, K)
        w = np.empty((I, J, K))
        for j in range(J):
            w[:, j, :] = _mvn(rng, block_covariance(sw[j], hyper.rho_T, K), I)
        return u[:, None, None] + v[:, :, None] + w
    raise ValueError(f"unknown model kind {kind!r}")


def simulate_outcomes(kind, hyper, dims, rng, fixed=0.0, link="logit"):
    """Draw a complete ``(I, J, K)`` 0/1 array.

    ``fixed`` is the fixed-effect part of the predictor: a scalar intercept
    or an array broadcastable to ``(I, J, K)``.
    """
    eta = fixed + draw_random_effects(kind, hyper, dims, rng)
    return (rng.random(dims) < inverse_link(eta, link)).astype(np.int8)
