"""Confidence intervals for one coefficient of the target model.

Hessians of the quantile loss are estimated with a Powell-bandwidth kernel
window, the projection direction for coordinate ``m`` is learned by a
transfer-then-correct pair of penalized quadratic programs, and a one-step
update of the transfer estimate along the orthogonalised score gives an
asymptotically normal estimator.

Coordinate indices ``m`` are 1-based throughout this module.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .core import (DomainDataset, InvalidInputError, MultiSourceData, as_tau, index_set,
                   insert_at, score_arrays)
from .solver import fit_penalized_quadratic, fold_ids, lambda_grid

log = logging.getLogger(__name__)

DEGENERATE_TOL = 1e-8


class DegenerateHessianError(ArithmeticError):
    """The conditional Hessian of coordinate m is numerically zero."""


def norm_cdf(x):
    return ndtr(x)


def norm_ppf(q):
    return ndtri(q)


def norm_pdf(x):
    return np.exp(-0.5 * np.square(x)) / np.sqrt(2.0 * np.pi)


def lower_quantile(x, q: float) -> float:
    """Left-continuous empirical inverse CDF: the ceil(n q)-th order statistic."""
    return float(np.quantile(np.asarray(x, dtype=float), q, method="inverted_cdf"))


@dataclass(frozen=True)
class BandwidthPolicy:
    mode: str = "paper_formula"
    fixed_value: float | None = None
    floor: float = 1e-6

    def __post_init__(self):
        if self.mode not in ("paper_formula", "fixed"):
            raise InvalidInputError(f"unknown bandwidth mode {self.mode!r}")
        if self.mode == "fixed" and not (self.fixed_value and self.fixed_value > 0):
            raise InvalidInputError("a fixed bandwidth needs a positive fixed_value")
        if not self.floor > 0:
            raise InvalidInputError("bandwidth floor must be positive")


@dataclass(frozen=True)
class ProjectionDirection:
    m: int
    gamma: np.ndarray
    gamma_pooled: np.ndarray
    zeta: np.ndarray
    phi: np.ndarray
    lambda_m: float = float("nan")
    lambda_m_prime: float = float("nan")


@dataclass(frozen=True)
class InferenceResult:
    m: int
    beta_tilde: float
    h_cond: float
    sigma: float
    ci_low: float
    ci_high: float
    alpha: float
    beta_hat: float = float("nan")


def powell_half_width(tau, n_k: int) -> float:
    """The quantile-scale half width n^(-1/3) z_{0.975}^(2/3) (1.5 phi(z_tau)^2 / (2 z_tau^2 + 1))^(1/3)."""
    tau = as_tau(tau)
    zt = norm_ppf(tau)
    return float(n_k ** (-1.0 / 3.0) * norm_ppf(0.975) ** (2.0 / 3.0)
                 * (1.5 * norm_pdf(zt) ** 2 / (2.0 * zt ** 2 + 1.0)) ** (1.0 / 3.0))


def powell_bandwidth(residuals, tau, n_k: int | None = None,
                     policy: BandwidthPolicy | None = None) -> float:
    """Powell kernel bandwidth for the residuals of one domain."""
    tau = as_tau(tau)
    policy = policy or BandwidthPolicy()
    e = np.asarray(residuals, dtype=float)
    if e.size == 0:
        raise InvalidInputError("bandwidth needs at least one residual")
    if policy.mode == "fixed":
        return max(float(policy.fixed_value), policy.floor)
    n_k = e.size if n_k is None else int(n_k)
    bt = powell_half_width(tau, n_k)
    if tau + bt >= 1.0 or tau - bt <= 0.0:
        raise InvalidInputError(
            f"tau={tau} with half width {bt:.4g} leaves (0, 1); need more observations")
    sd = float(np.std(e, ddof=1)) if e.size > 1 else 0.0
    iqr = (lower_quantile(e, 0.75) - lower_quantile(e, 0.25)) / 1.34
    spread = min(sd, iqr)
    b = float((norm_ppf(tau + bt) - norm_ppf(tau - bt)) * spread)
    if b < policy.floor:
        log.warning("residual spread is zero; bandwidth floored at %g", policy.floor)
        return policy.floor
    return b


def hessian_estimate(dataset: DomainDataset, beta, b: float, tau=None) -> np.ndarray:
    """(1/n) sum_i I(|resid_i| <= b) / (2b) z_i z_i'."""
    if not b > 0:
        raise InvalidInputError("bandwidth must be positive")
    r = dataset.y - dataset.Z @ np.asarray(beta, dtype=float)
    return _window_gram(dataset.Z, r, b)


def _window_gram(Z, r, b):
    inside = np.abs(r) <= b
    Zw = Z[inside]
    H = Zw.T @ Zw / (2.0 * b * Z.shape[0])
    return 0.5 * (H + H.T)


def pooled_hessian(per_domain) -> np.ndarray:
    """Sample-size weighted average of ``[(H_k, n_k), ...]``."""
    per_domain = list(per_domain)
    if not per_domain:
        raise InvalidInputError("need at least one Hessian")
    shape = np.shape(per_domain[0][0])
    total = float(sum(n for _, n in per_domain))
    out = np.zeros(shape)
    for H, n in per_domain:
        if np.shape(H) != shape:
            raise InvalidInputError("Hessian dimensions differ across domains")
        out += (n / total) * np.asarray(H, dtype=float)
    return out


def covariance_estimate(dataset: DomainDataset, tau) -> np.ndarray:
    tau = as_tau(tau)
    Z = dataset.Z
    return tau * (1.0 - tau) * (Z.T @ Z) / Z.shape[0]


def _split(H, m):
    idx = np.delete(np.arange(H.shape[0]), m - 1)
    return H[np.ix_(idx, idx)], H[idx, m - 1]


def _check_m(m, p):
    if not 1 <= m <= p:
        raise InvalidInputError(f"coordinate {m} outside 1..{p}")


def estimate_gamma(H_pooled, H_target, m: int, lambda_m: float, lambda_m_prime: float,
                   tol: float = 1e-10) -> ProjectionDirection:
    """Projection direction of coordinate ``m`` on the others.

    The pooled Hessian gives a first estimate; a second penalized quadratic
    on the target Hessian corrects it.
    """
    H_pooled = np.asarray(H_pooled, dtype=float)
    H_target = np.asarray(H_target, dtype=float)
    p = H_target.shape[0]
    if H_pooled.shape != (p, p) or H_target.shape != (p, p):
        raise InvalidInputError("Hessians must both be p x p")
    _check_m(m, p)
    A_p, c_p = _split(H_pooled, m)
    gamma_pooled = fit_penalized_quadratic(A_p, c_p, lambda_m, tol=tol)
    A_0, c_0 = _split(H_target, m)
    # shifted problem in zeta: 0.5 z'A z - (c - A gamma_pooled)'z + const
    zeta = fit_penalized_quadratic(A_0, c_0 - A_0 @ gamma_pooled, lambda_m_prime, tol=tol)
    gamma = gamma_pooled + zeta
    phi = insert_at(-gamma, m, 1.0)
    return ProjectionDirection(m, gamma, gamma_pooled, zeta, phi, float(lambda_m),
                               float(lambda_m_prime))


def conditional_hessian(H_target, gamma: ProjectionDirection) -> float:
    A, c = _split(np.asarray(H_target, dtype=float), gamma.m)
    return float(H_target[gamma.m - 1, gamma.m - 1] - gamma.gamma @ c)


def one_step_estimate(beta_hat, gamma: ProjectionDirection, target: DomainDataset,
                      H_target, tau) -> tuple:
    """One Newton step on coordinate m along the orthogonalised target score.

    Returns ``(beta_tilde, h_cond)``.
    """
    tau = as_tau(tau)
    beta_hat = np.asarray(beta_hat, dtype=float)
    m = gamma.m
    h_cond = conditional_hessian(H_target, gamma)
    if abs(h_cond) <= DEGENERATE_TOL:
        raise DegenerateHessianError(
            f"conditional Hessian of coordinate {m} is {h_cond:.3g}")
    S = score_arrays(target.Z, target.y - target.Z @ beta_hat, tau)
    s_orth = S[m - 1] - np.delete(S, m - 1) @ gamma.gamma
    return float(beta_hat[m - 1] - s_orth / h_cond), h_cond


def sigma_and_ci(gamma: ProjectionDirection, data: MultiSourceData, transfer_set,
                 beta_tilde: float, h_cond: float, alpha: float, tau) -> InferenceResult:
    """Interval beta_tilde +/- sigma * z_{1-alpha} / (h_cond sqrt(n0)).

    ``alpha`` is used exactly as in z_{1-alpha}; a two-sided 95% interval
    therefore needs ``alpha=0.025``.
    """
    tau = as_tau(tau)
    if not 0 < alpha < 1:
        raise InvalidInputError("alpha must lie in (0, 1)")
    if abs(h_cond) <= DEGENERATE_TOL:
        raise DegenerateHessianError(f"conditional Hessian is {h_cond:.3g}")
    tset = index_set(transfer_set, 1, data.K)
    Sigma = pooled_hessian([(covariance_estimate(data.domain(k), tau), data.domain(k).n)
                            for k in (0,) + tset])
    phi = gamma.phi
    sigma = float(np.sqrt(max(phi @ Sigma @ phi, 0.0)))
    half = abs(sigma * norm_ppf(1.0 - alpha) / (h_cond * np.sqrt(data.target.n)))
    return InferenceResult(gamma.m, beta_tilde, h_cond, sigma, beta_tilde - half,
                           beta_tilde + half, alpha)


# ---------------------------------------------------------------------------
# tuning and the full procedure
# ---------------------------------------------------------------------------

def _held_out_quadratic(H, m, shift, vec):
    A, c = _split(H, m)
    v = shift + vec
    return 0.5 * v @ A @ v - c @ v


def cv_projection_lambda(pieces, m, shift=None, folds=5, seed=0, num=50):
    """Pick the projection penalty by K-fold CV of the held-out quadratic objective.

    ``pieces`` lists ``(Z_k, resid_k, b_k)`` per domain; fold Hessians are built
    from row subsets with the bandwidths fixed. ``shift`` holds the pooled
    direction when tuning the correction step.
    """
    p = pieces[0][0].shape[1]
    full = pooled_hessian([(_window_gram(Z, r, b), Z.shape[0]) for Z, r, b in pieces])
    A, c = _split(full, m)
    shift = np.zeros(p - 1) if shift is None else shift
    lam_max = float(np.abs(c - A @ shift).max())
    if lam_max <= 0:
        return 0.0
    grid = lambda_grid(lam_max, num)
    ids = [fold_ids(Z.shape[0], folds, seed + 7919 * k) for k, (Z, _, _) in enumerate(pieces)]
    loss = np.zeros(grid.size)
    for f in range(folds):
        tr = pooled_hessian([(_window_gram(Z[i != f], r[i != f], b), int((i != f).sum()))
                             for (Z, r, b), i in zip(pieces, ids)])
        va = pooled_hessian([(_window_gram(Z[i == f], r[i == f], b), int((i == f).sum()))
                             for (Z, r, b), i in zip(pieces, ids)])
        A_tr, c_tr = _split(tr, m)
        g = None
        for j, lam in enumerate(grid):
            g = fit_penalized_quadratic(A_tr, c_tr - A_tr @ shift, lam, init=g, tol=1e-8)
            loss[j] += _held_out_quadratic(va, m, shift, g)
    return float(grid[int(np.argmin(loss))])


def confidence_interval(data: MultiSourceData, transfer_set, tau, m: int, beta_hat,
                        alpha: float = 0.025, lambda_m=None, lambda_m_prime=None,
                        policy: BandwidthPolicy | None = None, folds=5,
                        cv_seed=0) -> InferenceResult:
    """Interval for coefficient ``m`` given the transfer estimate ``beta_hat``.

    Penalties left as ``None`` are chosen by cross-validation.
    """
    tau = as_tau(tau)
    tset = index_set(transfer_set, 1, data.K)
    beta_hat = np.asarray(beta_hat, dtype=float)
    _check_m(m, data.p)
    pieces = []
    for k in (0,) + tset:
        d = data.domain(k)
        r = d.y - d.Z @ beta_hat
        pieces.append((d.Z, r, powell_bandwidth(r, tau, d.n, policy)))
    H = [(_window_gram(Z, r, b), Z.shape[0]) for Z, r, b in pieces]
    H_target = H[0][0]
    H_pool = pooled_hessian(H)
    if lambda_m is None:
        lambda_m = cv_projection_lambda(pieces, m, folds=folds, seed=cv_seed)
    A_p, c_p = _split(H_pool, m)
    if lambda_m_prime is None:
        g_pool = fit_penalized_quadratic(A_p, c_p, lambda_m)
        lambda_m_prime = cv_projection_lambda(pieces[:1], m, shift=g_pool, folds=folds,
                                              seed=cv_seed)
    direction = estimate_gamma(H_pool, H_target, m, lambda_m, lambda_m_prime)
    beta_tilde, h_cond = one_step_estimate(beta_hat, direction, data.target, H_target, tau)
    res = sigma_and_ci(direction, data, tset, beta_tilde, h_cond, alpha, tau)
    return InferenceResult(res.m, res.beta_tilde, res.h_cond, res.sigma, res.ci_low,
                           res.ci_high, res.alpha, float(beta_hat[m - 1]))
