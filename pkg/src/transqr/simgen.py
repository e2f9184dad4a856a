"""Synthetic multi-source quantile regression scenarios.

Covariates are AR(1) Gaussian with correlation 0.5, the target model is
sparse with ``s0`` unit coefficients, transferable sources sit at l1 distance
exactly ``h`` from the target and non-transferable sources carry an extra
block of unit coefficients on a random support.

Every domain draws from its own substream of ``numpy.random.SeedSequence``,
so adding sources never changes the draws of existing ones.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy.signal import lfilter

from .core import DomainDataset, InvalidInputError, MultiSourceData, as_tau
from .inference import norm_cdf, norm_ppf

ERROR_FAMILIES = ("normal", "cauchy", "gumbel")

# substream purposes
_COVARIATES, _ERRORS, _COEFS = 0, 1, 2


@dataclass(frozen=True)
class SimDesign:
    p: int = 1000
    n0: int = 100
    nk: int = 150
    K: int = 20
    h: float = 6.0
    s0: int = 15
    num_transferable: int = 10
    tau: float = 0.5
    error_family: str = "normal"
    heterogeneous: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("p", "n0", "nk", "s0"):
            if int(getattr(self, name)) < 1:
                raise InvalidInputError(f"{name} must be positive")
        if self.K < 0:
            raise InvalidInputError("K must be non-negative")
        if not 0 <= self.num_transferable <= self.K:
            raise InvalidInputError("num_transferable must lie in 0..K")
        if self.h < 0:
            raise InvalidInputError("h must be non-negative")
        if self.error_family not in ERROR_FAMILIES:
            raise InvalidInputError(f"unknown error family {self.error_family!r}")
        if self.s0 > self.p:
            raise InvalidInputError("s0 exceeds p")
        if self.num_transferable < self.K and self.p < 3 * self.s0:
            raise InvalidInputError("non-transferable sources need p >= 3 s0")
        if self.seed < 0:
            raise InvalidInputError("seed must be non-negative")
        as_tau(self.tau)

    def replace(self, **changes) -> "SimDesign":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return SimDesign(**values)


@dataclass(frozen=True)
class Scenario:
    data: MultiSourceData
    beta0: np.ndarray
    transferable: tuple
    source_betas: tuple


def substream(seed: int, domain: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(domain), int(purpose)]))


def gen_covariates(n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Rows with covariance 0.5^|l-j|, via z_j = 0.5 z_{j-1} + sqrt(0.75) e_j."""
    if n < 1 or p < 1:
        raise InvalidInputError("n and p must be positive")
    e = rng.standard_normal((n, p))
    e[:, 1:] *= np.sqrt(0.75)
    return lfilter([1.0], [1.0, -0.5], e, axis=1)


def error_shift(family: str, tau) -> float:
    """tau-quantile of the unshifted standard family."""
    tau = as_tau(tau)
    if family == "normal":
        return float(norm_ppf(tau))
    if family == "cauchy":
        return float(np.tan(np.pi * (tau - 0.5)))
    if family == "gumbel":
        return float(-np.log(-np.log(tau)))
    raise InvalidInputError(f"unknown error family {family!r}")


def gen_errors(n: int, family: str, tau, rng: np.random.Generator) -> np.ndarray:
    """Draws whose tau-quantile is zero."""
    shift = error_shift(family, tau)
    if family == "normal":
        eta = rng.standard_normal(n)
    else:
        u = rng.random(n)
        while np.any(u == 0.0):
            bad = u == 0.0
            u[bad] = rng.random(int(bad.sum()))
        eta = np.tan(np.pi * (u - 0.5)) if family == "cauchy" else -np.log(-np.log(u))
    return eta - shift


def gen_target_coefs(p: int, s0: int) -> np.ndarray:
    if not 0 <= s0 <= p:
        raise InvalidInputError("need 0 <= s0 <= p")
    beta = np.zeros(p)
    beta[:s0] = 1.0
    return beta


def gen_rademacher(p: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(np.array([-1.0, 1.0]), size=p)


def gen_transferable_coefs(beta0, h: float, p: int, rng: np.random.Generator) -> np.ndarray:
    """beta0 + (h/p) d with d Rademacher, so the l1 distance to beta0 is h."""
    if h < 0:
        raise InvalidInputError("h must be non-negative")
    beta0 = np.asarray(beta0, dtype=float)
    return beta0 + (h / p) * gen_rademacher(p, rng)


def nontransferable_bound(h: float, p: int, s0: int) -> float:
    return 2.0 * h + 3.0 * s0 - 12.0 * s0 * h / p


def gen_nontransferable_coefs(beta0, h: float, p: int, s0: int,
                              rng: np.random.Generator) -> np.ndarray:
    """Source that shares none of the target's sparsity pattern.

    Entries on positions ``s0+1..2s0`` and on a random set of ``s0`` positions
    drawn from ``2s0+1..p`` equal ``1 + (2h/p) d_j``; every other entry is
    ``(2h/p) d_j``, with ``d`` a Rademacher sign vector.
    """
    if p < 3 * s0:
        raise InvalidInputError("non-transferable coefficients need p >= 3 s0")
    beta0 = np.asarray(beta0, dtype=float)
    d = gen_rademacher(p, rng)
    picked = rng.choice(np.arange(2 * s0, p), size=s0, replace=False)
    beta = (2.0 * h / p) * d
    beta[s0:2 * s0] += 1.0
    beta[picked] += 1.0
    dist = np.abs(beta - beta0).sum()
    bound = nontransferable_bound(h, p, s0)
    if dist < bound - 1e-9 * max(1.0, bound):
        raise AssertionError(f"l1 distance {dist} below the guaranteed {bound}")
    return beta


def gen_response(Z, beta, errors, heterogeneous: bool = True) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if Z.shape[0] != errors.shape[0] or Z.shape[1] != np.shape(beta)[0]:
        raise InvalidInputError("dimensions of Z, beta and errors do not match")
    w = norm_cdf(Z[:, 0]) if heterogeneous else 1.0
    return Z @ np.asarray(beta, dtype=float) + w * errors


def _domain(design: SimDesign, k: int, n: int, beta) -> DomainDataset:
    Z = gen_covariates(n, design.p, substream(design.seed, k, _COVARIATES))
    eta = gen_errors(n, design.error_family, design.tau, substream(design.seed, k, _ERRORS))
    return DomainDataset(gen_response(Z, beta, eta, design.heterogeneous), Z, k)


def gen_scenario(design: SimDesign) -> Scenario:
    """Target plus ``K`` sources; sources ``1..num_transferable`` are transferable."""
    beta0 = gen_target_coefs(design.p, design.s0)
    betas = []
    for k in range(1, design.K + 1):
        rng = substream(design.seed, k, _COEFS)
        if k <= design.num_transferable:
            betas.append(gen_transferable_coefs(beta0, design.h, design.p, rng))
        else:
            betas.append(gen_nontransferable_coefs(beta0, design.h, design.p, design.s0, rng))
    target = _domain(design, 0, design.n0, beta0)
    sources = tuple(_domain(design, k, design.nk, b) for k, b in enumerate(betas, start=1))
    return Scenario(MultiSourceData(target, sources), beta0,
                    tuple(range(1, design.num_transferable + 1)), tuple(betas))
