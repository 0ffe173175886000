"""Probability-based agreement coefficients for binary ratings.

All estimators share the chance-corrected form
``kappa = (p_o - p_c) / (1 - p_c)`` and differ only in how the chance
agreement ``p_c`` is estimated:

- Cohen: product of each rater's own marginal proportions.
- Scott: square of the pooled marginal proportion.
- Fleiss: squared pooled category proportions over all M ratings per item.
- Conger: Fleiss' term minus the between-slot variance of slot marginals,
  i.e. the mean chance agreement over distinct pairs of slots.

For three-level data the interrater coefficient treats each
(subject, time) pair as an item rated by the raters, and the intrarater
coefficient treats each (subject, rater) pair as an item rated at the time
points.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import RatingsTable
from .errors import DegenerateAgreement, InputError, UnequalRatingsPerItem

METHODS = ("cohen", "scott", "fleiss", "conger")
MODES = ("interrater", "intrarater")


@dataclass(frozen=True)
class KappaEstimate:
    kappa: float
    p_o: float
    p_c: float
    n_items: int
    mode: str | None
    method: str

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ItemRatingMatrix:
    """Per-item category counts.

    ``n1[i]`` and ``n0[i]`` count the ratings of item ``i`` in categories 1
    and 0; ``M[i] = n0[i] + n1[i]``.
    """

    n1: np.ndarray
    n0: np.ndarray

    def __post_init__(self):
        if self.n1.shape != self.n0.shape or self.n1.ndim != 1:
            raise InputError("n1 and n0 must be 1-d arrays of equal length")
        if np.any(self.n1 < 0) or np.any(self.n0 < 0):
            raise InputError("category counts must be non-negative")

    @classmethod
    def from_counts(cls, counts):
        """From an ``(N, 2)`` array of ``(n_i1, n_i0)`` rows."""
        counts = np.asarray(counts, dtype=np.int64).reshape(-1, 2)
        return cls(n1=counts[:, 0].copy(), n0=counts[:, 1].copy())

    @classmethod
    def from_slots(cls, slots):
        """From an ``(N, M)`` 0/1 matrix; NaN entries are treated as missing."""
        slots = np.asarray(slots, dtype=float)
        avail = ~np.isnan(slots)
        n1 = np.where(avail, slots, 0).sum(axis=1).astype(np.int64)
        return cls(n1=n1, n0=avail.sum(axis=1) - n1)

    @property
    def M(self):
        return self.n0 + self.n1

    @property
    def N(self):
        return len(self.n1)


def _kappa(p_o, p_c, n_items, method, mode=None):
    if p_c >= 1.0 - 1e-15:
        raise DegenerateAgreement(f"{method}: chance agreement is 1, kappa undefined")
    return KappaEstimate(
        kappa=float((p_o - p_c) / (1.0 - p_c)),
        p_o=float(p_o),
        p_c=float(p_c),
        n_items=int(n_items),
        mode=mode,
        method=method,
    )


def _pair(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise InputError("rating vectors differ in length")
    keep = ~(np.isnan(a) | np.isnan(b))
    a, b = a[keep], b[keep]
    if len(a) < 2:
        raise InputError("at least two jointly rated items are required")
    if np.any((a != 0) & (a != 1)) or np.any((b != 0) & (b != 1)):
        raise InputError("ratings must be 0/1")
    return a, b


def cohen_kappa(a, b, mode=None) -> KappaEstimate:
    """Cohen's kappa for two binary rating vectors (NaN pairs are dropped)."""
    a, b = _pair(a, b)
    pa, pb = a.mean(), b.mean()
    p_c = pa * pb + (1 - pa) * (1 - pb)
    return _kappa(np.mean(a == b), p_c, len(a), "cohen", mode)


def scotts_pi(a, b, mode=None) -> KappaEstimate:
    """Scott's pi: chance agreement from the pooled proportion of ones."""
    a, b = _pair(a, b)
    q = (a.sum() + b.sum()) / (2 * len(a))
    p_c = q**2 + (1 - q) ** 2
    return _kappa(np.mean(a == b), p_c, len(a), "scott", mode)


def _observed_agreement(n1, n0):
    M = n1 + n0
    return np.mean((n1 * (n1 - 1) + n0 * (n0 - 1)) / (M * (M - 1)))


def fleiss_kappa(m: ItemRatingMatrix, mode=None) -> KappaEstimate:
    """Fleiss' kappa from per-item category counts with constant M >= 2."""
    if m.N < 1:
        raise InputError("no items")
    M = m.M
    if np.any(M != M[0]):
        raise UnequalRatingsPerItem("Fleiss' kappa needs the same number of ratings per item")
    if M[0] < 2:
        raise InputError("at least two ratings per item are required")
    p1 = m.n1.sum() / M.sum()
    p_c = p1**2 + (1 - p1) ** 2
    return _kappa(_observed_agreement(m.n1, m.n0), p_c, m.N, "fleiss", mode)


def conger_kappa(slots, mode=None) -> KappaEstimate:
    """Conger's kappa for an ``(N, M)`` 0/1 slot matrix; NaN marks a missing rating.

    Items with fewer than two available ratings are ignored. Slot marginals
    are computed over each slot's available entries. ``s2`` is the sample
    variance (denominator ``M - 1``) of the slot-wise proportions.
    """
    slots = np.asarray(slots, dtype=float)
    if slots.ndim != 2 or slots.shape[1] < 2:
        raise InputError("Conger's kappa needs an (N, M) matrix with M >= 2")
    avail = ~np.isnan(slots)
    if np.any(slots[avail] * (1 - slots[avail]) != 0):
        raise InputError("ratings must be 0/1")
    items = avail.sum(axis=1) >= 2
    if not np.any(items):
        raise InputError("no item has two or more ratings")
    slots, avail = slots[items], avail[items]
    ones = np.where(avail, slots, 0)
    n1 = ones.sum(axis=1)
    n0 = avail.sum(axis=1) - n1
    with np.errstate(invalid="ignore", divide="ignore"):
        p1 = ones.sum(axis=0) / avail.sum(axis=0)
    p1 = p1[~np.isnan(p1)]
    if len(p1) < 2:
        raise InputError("fewer than two slots carry ratings")
    M = len(p1)
    p_c = 0.0
    for p in (p1, 1 - p1):
        p_c += p.mean() ** 2 - p.var(ddof=1) / M
    return _kappa(_observed_agreement(n1, n0), p_c, len(n1), "conger", mode)


def kappa_from_slots(slots, method="conger", mode=None) -> KappaEstimate:
    """Dispatch an ``(N, M)`` slot matrix to the requested estimator."""
    slots = np.asarray(slots, dtype=float)
    if method == "conger":
        return conger_kappa(slots, mode)
    if method == "fleiss":
        keep = (~np.isnan(slots)).sum(axis=1) >= 2
        return fleiss_kappa(ItemRatingMatrix.from_slots(slots[keep]), mode)
    if method in ("cohen", "scott"):
        if slots.shape[1] != 2:
            raise InputError(f"{method} needs exactly two slots, got {slots.shape[1]}")
        fn = cohen_kappa if method == "cohen" else scotts_pi
        return fn(slots[:, 0], slots[:, 1], mode)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def inter_slots(Y):
    """``(I, J, K)`` array -> ``(I*K, J)`` slots: items (i, k), raters as slots."""
    I, J, K = Y.shape
    return np.moveaxis(Y, 1, 2).reshape(I * K, J)


def intra_slots(Y):
    """``(I, J, K)`` array -> ``(I*J, K)`` slots: items (i, j), times as slots."""
    I, J, K = Y.shape
    return Y.reshape(I * J, K)


def interrater_kappa(table: RatingsTable, method="conger") -> KappaEstimate:
    if table.J < 2:
        raise InputError("interrater agreement needs at least two raters")
    return kappa_from_slots(inter_slots(table.to_array()), method, "interrater")


def intrarater_kappa(table: RatingsTable, method="conger") -> KappaEstimate:
    if table.K < 2:
        raise InputError("intrarater agreement needs at least two time points")
    return kappa_from_slots(intra_slots(table.to_array()), method, "intrarater")


def conger_inter_intra(Y):
    """Conger interrater and intrarater kappa of a complete ``(I, J, K)`` 0/1 array.

    Fast path used by simulation code; raises :class:`DegenerateAgreement`
    exactly as :func:`conger_kappa` does.
    """
    return conger_kappa(inter_slots(Y)).kappa, conger_kappa(intra_slots(Y)).kappa
