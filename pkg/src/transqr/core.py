"""Domain types, the check loss and the pooled loss/score shared by every module."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


@dataclass(frozen=True)
class QuantileLevel:
    tau: float

    def __post_init__(self):
        t = float(self.tau)
        if not (np.isfinite(t) and 0.0 < t < 1.0):
            raise InvalidInputError(f"quantile level must lie in (0, 1), got {self.tau!r}")
        object.__setattr__(self, "tau", t)

    def __float__(self):
        return self.tau


def as_tau(tau) -> float:
    """Accept a float or a QuantileLevel and return a validated float."""
    if isinstance(tau, QuantileLevel):
        return tau.tau
    return QuantileLevel(tau).tau


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DomainDataset:
    """Responses ``y`` (length n) and design ``Z`` (n x p) of one domain.

    ``domain_id`` 0 is the target; sources are numbered 1..K.
    """

    y: np.ndarray
    Z: np.ndarray
    domain_id: int = 0

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        Z = np.asarray(self.Z, dtype=float)
        if y.ndim != 1:
            raise InvalidInputError("y must be one-dimensional")
        if Z.ndim != 2:
            raise InvalidInputError("Z must be a two-dimensional matrix")
        if y.shape[0] < 1:
            raise InvalidInputError("a dataset needs at least one observation")
        if Z.shape[0] != y.shape[0]:
            raise InvalidInputError(
                f"Z has {Z.shape[0]} rows but y has {y.shape[0]} entries")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(Z))):
            raise InvalidInputError("dataset contains non-finite entries")
        if int(self.domain_id) < 0:
            raise InvalidInputError("domain_id must be non-negative")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "Z", _frozen(Z))
        object.__setattr__(self, "domain_id", int(self.domain_id))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    def subset(self, rows) -> "DomainDataset":
        rows = np.asarray(rows, dtype=int)
        return DomainDataset(self.y[rows], self.Z[rows], self.domain_id)

    def standardized(self) -> "DomainDataset":
        """Copy with every column of Z scaled to unit sample standard deviation."""
        sd = self.Z.std(axis=0, ddof=1) if self.n > 1 else np.ones(self.p)
        sd = np.where(sd > 0, sd, 1.0)
        return DomainDataset(self.y, self.Z / sd, self.domain_id)


@dataclass(frozen=True)
class MultiSourceData:
    target: DomainDataset
    sources: tuple = field(default_factory=tuple)

    def __post_init__(self):
        sources = tuple(self.sources)
        object.__setattr__(self, "sources", sources)
        if self.target.domain_id != 0:
            raise InvalidInputError("the target must carry domain_id 0")
        ids = [s.domain_id for s in sources]
        if ids != list(range(1, len(sources) + 1)):
            raise InvalidInputError(f"source domain ids must be 1..K in order, got {ids}")
        for s in sources:
            if s.p != self.target.p:
                raise InvalidInputError(
                    f"source {s.domain_id} has p={s.p}, target has p={self.target.p}")

    @property
    def K(self) -> int:
        return len(self.sources)

    @property
    def p(self) -> int:
        return self.target.p

    def domain(self, k: int) -> DomainDataset:
        if k == 0:
            return self.target
        if 1 <= k <= self.K:
            return self.sources[k - 1]
        raise InvalidInputError(f"domain {k} out of range 0..{self.K}")

    def with_target(self, target: DomainDataset) -> "MultiSourceData":
        return MultiSourceData(target, self.sources)

    def stacked(self, which: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """Concatenate (Z, y) over the selected domains, in the given order."""
        which = domain_set(which, self.K)
        Zs = [self.domain(k).Z for k in which]
        ys = [self.domain(k).y for k in which]
        return np.vstack(Zs), np.concatenate(ys)


def index_set(indices: Iterable[int], lo: int, hi: int) -> tuple:
    """Sorted, duplicate-free tuple of integers in ``[lo, hi]``."""
    out = sorted({int(i) for i in indices})
    if out and (out[0] < lo or out[-1] > hi):
        raise InvalidInputError(f"indices {out} fall outside [{lo}, {hi}]")
    return tuple(out)


def domain_set(which: Iterable[int], K: int) -> tuple:
    out = index_set(which, 0, K)
    if not out:
        raise InvalidInputError("the selected domain set is empty")
    return out


def check_loss(t, tau):
    """Quantile check loss rho_tau(t) = t * (tau - I(t <= 0)); vectorised over ``t``."""
    tau = as_tau(tau)
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t_arr)):
        raise InvalidInputError("check_loss needs finite arguments")
    out = t_arr * (tau - (t_arr <= 0))
    return float(out) if out.ndim == 0 else out


def _validate_beta(beta, p: int) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (p,):
        raise InvalidInputError(f"coefficient vector has shape {beta.shape}, expected ({p},)")
    if not np.all(np.isfinite(beta)):
        raise InvalidInputError("coefficient vector has non-finite entries")
    return beta


def pooled_loss(beta, data: MultiSourceData, which, tau) -> float:
    """Average check loss over the union of the selected domains."""
    tau = as_tau(tau)
    beta = _validate_beta(beta, data.p)
    Z, y = data.stacked(which)
    return float(np.mean(check_loss(y - Z @ beta, tau)))


def score(beta, data: MultiSourceData, which, tau) -> np.ndarray:
    """Gradient of the pooled loss, with the indicator I(residual <= 0)."""
    tau = as_tau(tau)
    beta = _validate_beta(beta, data.p)
    Z, y = data.stacked(which)
    return score_arrays(Z, y - Z @ beta, tau)


def score_arrays(Z: np.ndarray, resid: np.ndarray, tau: float) -> np.ndarray:
    w = tau - (resid <= 0)
    return -(Z.T @ w) / Z.shape[0]


def insert_at(v, m: int, theta: float) -> np.ndarray:
    """Insert ``theta`` so that it lands at 1-based position ``m``."""
    v = np.asarray(v, dtype=float).ravel()
    p = v.shape[0] + 1
    if not 1 <= m <= p:
        raise InvalidInputError(f"position {m} outside 1..{p}")
    return np.insert(v, m - 1, theta)
