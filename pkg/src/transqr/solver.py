"""l1-penalized quantile regression and l1-penalized quadratic programs.

The quantile fit minimises a convolution-smoothed check loss (uniform kernel)
by proximal gradient with backtracking and Barzilai-Borwein steps, shrinking
the smoothing half-width geometrically. After each stage a vertex "polish"
tries to recover the exact nonsmooth minimiser: it solves for the coefficients
that interpolate as many observations as there are active coordinates and
keeps the candidate when the exact subgradient conditions certify it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .core import (InvalidInputError, MultiSourceData, as_tau, check_loss,
                   domain_set, score_arrays)
from ._kernels import prox_stage, quad_cd, quad_kkt
from .simplex import penalized_qr_lp

log = logging.getLogger(__name__)

_CERTIFY_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 5000
    kkt_tol: float = 1e-4
    smoothing_init: float = 0.1
    smoothing_final: float = 1e-4
    smoothing_decay: float = 0.5
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    seed: int = 0
    polish: bool = True

    def __post_init__(self):
        if self.max_iter < 1:
            raise InvalidInputError("max_iter must be at least 1")
        if not (self.kkt_tol > 0 and self.smoothing_init > 0 and self.smoothing_final > 0):
            raise InvalidInputError("tolerances and smoothing widths must be positive")
        if self.smoothing_final > self.smoothing_init:
            raise InvalidInputError("smoothing_final must not exceed smoothing_init")
        for name in ("smoothing_decay", "shrink"):
            if not 0 < getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must lie in (0, 1)")
        if not 0 < self.sufficient_decrease < 1:
            raise InvalidInputError("sufficient_decrease must lie in (0, 1)")

    def schedule(self) -> list:
        hs, h = [], self.smoothing_init
        while h > self.smoothing_final * (1 + 1e-12):
            hs.append(h)
            h *= self.smoothing_decay
        hs.append(self.smoothing_final)
        return hs


@dataclass(frozen=True)
class PenalizedFit:
    """Result of an l1-penalized quantile fit.

    ``beta`` is the penalized variable; when ``offset`` is set the fitted
    coefficient vector is ``offset + beta`` and only ``beta`` is penalized.
    """

    beta: np.ndarray
    lam: float
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool
    offset: np.ndarray | None = None
    status: str = "ok"
    stage_objectives: tuple = field(default_factory=tuple)

    @property
    def coef(self) -> np.ndarray:
        return self.beta if self.offset is None else self.offset + self.beta


def soft_threshold(x, t):
    """sign(x) * max(|x| - t, 0), vectorised over ``x``."""
    if np.any(np.asarray(t) < 0):
        raise InvalidInputError("threshold must be non-negative")
    out = np.sign(x) * np.maximum(np.abs(x) - t, 0.0)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# exact optimality check
# ---------------------------------------------------------------------------

def _zero_tol(y) -> float:
    return 1e-9 * max(1.0, float(np.max(np.abs(y))) if len(y) else 1.0)


def kkt_residual_arrays(Z, y, beta, tau, lam, zero_tol=None) -> float:
    """Largest violation of the subgradient conditions at ``beta``.

    Observations with a (numerically) zero residual may take any check-loss
    subgradient in [tau - 1, tau]; the most favourable choice is found by a
    small linear program. Without such observations this reduces to the
    plain convention I(residual <= 0).
    """
    n, p = Z.shape
    r = y - Z @ beta
    zt = _zero_tol(y) if zero_tol is None else zero_tol
    on_zero = np.abs(r) <= zt
    active = beta != 0
    sgn = np.sign(beta)

    w = tau - (r < 0).astype(float)
    w[on_zero] = tau - 1.0
    base = _violation(-(Z.T @ w) / n, active, sgn, lam)
    if not on_zero.any() or base <= 0.0:
        return base

    keep = ~on_zero
    g = -(Z[keep].T @ w[keep]) / n
    ZE = Z[on_zero] / n  # q x p
    q = ZE.shape[0]
    rows, rhs = [], []
    a = np.where(active, g + lam * sgn, g)
    slack = np.where(active, 0.0, lam)
    # S_j(w) = g_j - (ZE^T w)_j ; need |S_j + lam s_j| <= t (active), |S_j| <= lam + t (inactive)
    rows.append(np.hstack([-ZE.T, -np.ones((p, 1))]))
    rhs.append(slack - a)
    rows.append(np.hstack([ZE.T, -np.ones((p, 1))]))
    rhs.append(slack + a)
    cost = np.zeros(q + 1)
    cost[-1] = 1.0
    bounds = [(tau - 1.0, tau)] * q + [(0, None)]
    res = linprog(cost, A_ub=np.vstack(rows), b_ub=np.concatenate(rhs), bounds=bounds,
                  method="highs")
    if res.status != 0:
        return base
    w_best = np.clip(res.x[:q], tau - 1.0, tau)
    w[on_zero] = w_best
    return min(base, _violation(-(Z.T @ w) / n, active, sgn, lam))


def _violation(S, active, sgn, lam) -> float:
    v_act = np.abs(S + lam * sgn)[active]
    v_in = np.maximum(np.abs(S)[~active] - lam, 0.0)
    out = 0.0
    if v_act.size:
        out = max(out, float(v_act.max()))
    if v_in.size:
        out = max(out, float(v_in.max()))
    return out


def kkt_residual(fit: PenalizedFit, data: MultiSourceData, which, tau, lam) -> float:
    tau = as_tau(tau)
    Z, y = data.stacked(which)
    if fit.beta.shape != (Z.shape[1],):
        raise InvalidInputError("fit dimension does not match the data")
    if fit.offset is not None:
        y = y - Z @ fit.offset
    return kkt_residual_arrays(Z, y, fit.beta, tau, float(lam))


# ---------------------------------------------------------------------------
# smoothed proximal gradient
# ---------------------------------------------------------------------------

def _exact_objective(r, x, tau, lam) -> float:
    return float(np.mean(r * (tau - (r <= 0)))) + lam * float(np.abs(x).sum())


def _independent_rows(M, order, k, tol=1e-9):
    """First ``k`` rows of ``M`` (visited in ``order``) that are linearly independent."""
    basis = np.zeros((k, M.shape[1]))
    picked = []
    for i in order:
        v = M[i].copy()
        nrm = np.linalg.norm(v)
        if nrm == 0:
            continue
        if picked:
            B = basis[:len(picked)]
            v -= B.T @ (B @ v)
            v -= B.T @ (B @ v)
        res = np.linalg.norm(v)
        if res > tol * nrm:
            basis[len(picked)] = v / res
            picked.append(i)
            if len(picked) == k:
                return np.array(picked)
    return None


def _polish(Z, y, x, r, tau, lam):
    act = np.flatnonzero(x)
    k = act.size
    if k == 0:
        return None
    if k > Z.shape[0]:
        # more active columns than rows: try the minimum-norm interpolant
        A = Z[:, act]
        sol, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
        if rank < Z.shape[0] or not np.all(np.isfinite(sol)):
            return None
        cand = np.zeros_like(x)
        cand[act] = sol
        return cand
    order = np.argsort(np.abs(r), kind="stable")
    for attempt in range(2):
        if attempt == 0:
            E = order[:k]
        else:
            # duplicated or collinear rows: skip those that add nothing new
            E = _independent_rows(Z[:, act], order, k)
            if E is None:
                return None
        M = Z[np.ix_(E, act)]
        try:
            sol = np.linalg.solve(M, y[E])
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(sol)) and np.linalg.cond(M) <= 1e12:
            cand = np.zeros_like(x)
            cand[act] = sol
            return cand
    return None


def _univariate_exact(z, y, tau, lam):
    """Exact minimiser for a single covariate, smallest one under ties.

    The objective is convex and piecewise linear with breakpoints at y_i / z_i
    and at 0, so it is minimised at one of them.
    """
    nzm = z != 0
    cands = np.unique(np.concatenate([[0.0], y[nzm] / z[nzm]]))
    vals = np.empty(cands.size)
    chunk = max(1, 2_000_000 // max(1, y.size))
    for s in range(0, cands.size, chunk):
        c = cands[s:s + chunk]
        r = y[:, None] - z[:, None] * c[None, :]
        vals[s:s + chunk] = (r * (tau - (r <= 0))).mean(axis=0) + lam * np.abs(c)
    fmin = vals.min()
    ok = vals <= fmin + 1e-12 * max(1.0, abs(fmin))
    return float(cands[ok][0])


def initial_step(Z, h) -> float:
    """Reciprocal of the smoothed-loss Lipschitz bound |Z|_2^2 / (2 n h)."""
    n = Z.shape[0]
    if n * Z.shape[1] > 40_000:
        # a few power iterations; the Barzilai-Borwein steps take over afterwards
        v = np.ones(Z.shape[1]) / np.sqrt(Z.shape[1])
        for _ in range(8):
            w = Z.T @ (Z @ v)
            nrm = np.linalg.norm(w)
            if nrm == 0:
                return 1.0
            v = w / nrm
        sq = float(np.linalg.norm(Z @ v) ** 2)
    else:
        sq = float(np.linalg.norm(Z, 2) ** 2)
    return 2.0 * n * h / max(sq, 1e-12)


def solve_l1_qr(Z, y, tau, lam, config=None, init=None, step0=None, certify=True):
    """Minimise (1/n) sum rho_tau(y - Z v) + lam |v|_1 on raw arrays.

    Returns ``(v, objective, kkt, iterations, converged, status, stage_objectives)``.
    With ``certify=False`` the exact KKT check is skipped (kkt is NaN and
    converged False); cross-validation paths use this.
    """
    cfg = config or SolverConfig()
    n, p = Z.shape
    if p == 1:
        b = np.array([_univariate_exact(np.asarray(Z, dtype=float)[:, 0], y, tau, lam)])
        obj = _exact_objective(y - Z[:, 0] * b[0], b, tau, lam)
        kkt = kkt_residual_arrays(Z, y, b, tau, lam) if certify else float("nan")
        return b, obj, kkt, 0, bool(certify and kkt <= cfg.kkt_tol), "univariate", (obj,)
    Z = np.ascontiguousarray(Z, dtype=float)
    x = np.zeros(p) if init is None else np.array(init, dtype=float)
    r = np.ascontiguousarray(y - Z @ x)
    best_x, best_obj = x.copy(), _exact_objective(r, x, tau, lam)
    schedule = cfg.schedule()
    t = initial_step(Z, schedule[0]) if step0 is None else step0
    used = 0
    stage_obj = []
    status = "max_iter"
    certified = False
    stage_tol = 0.1 * cfg.kkt_tol
    for h in schedule:
        if used >= cfg.max_iter:
            break
        t, it = prox_stage(Z, tau, lam, h, x, r, t, stage_tol, cfg.max_iter - used,
                           cfg.sufficient_decrease, cfg.shrink)
        used += it
        obj = _exact_objective(r, x, tau, lam)
        if obj < best_obj:
            best_x, best_obj = x.copy(), obj
        if cfg.polish:
            cand = _polish(Z, y, x, r, tau, lam)
            if cand is not None:
                rc = y - Z @ cand
                cobj = _exact_objective(rc, cand, tau, lam)
                if cobj <= best_obj + 1e-12 * max(1.0, abs(best_obj)):
                    kc = kkt_residual_arrays(Z, y, cand, tau, lam)
                    if cobj < best_obj or kc <= _CERTIFY_TOL:
                        best_x, best_obj = cand, cobj
                    if kc <= _CERTIFY_TOL:
                        certified = True
        stage_obj.append(best_obj)
        if certified:
            status = "certified"
            break
    else:
        status = "schedule_done"
    if not certify:
        return best_x, best_obj, float("nan"), used, False, status, tuple(stage_obj)
    kkt = kkt_residual_arrays(Z, y, best_x, tau, lam)
    converged = kkt <= cfg.kkt_tol
    if not converged:
        status = f"{status}:kkt_not_met"
        log.debug("penalized QR fit did not meet kkt_tol (kkt=%.3g, status=%s)", kkt, status)
    return best_x, best_obj, kkt, used, converged, status, tuple(stage_obj)


def fit_penalized_qr(data: MultiSourceData, which, tau, lam, offset=None, config=None,
                     init=None) -> PenalizedFit:
    """l1-penalized quantile regression pooled over the domains in ``which``.

    With ``offset`` the variable ``v`` minimises L(offset + v) + lam |v|_1.
    """
    tau = as_tau(tau)
    lam = float(lam)
    if not (np.isfinite(lam) and lam >= 0):
        raise InvalidInputError(f"penalty level must be finite and non-negative, got {lam}")
    Z, y = data.stacked(which)
    return _fit_arrays(Z, y, tau, lam, offset, config, init)


def _fit_arrays(Z, y, tau, lam, offset=None, config=None, init=None) -> PenalizedFit:
    if offset is not None:
        offset = np.asarray(offset, dtype=float)
        if offset.shape != (Z.shape[1],):
            raise InvalidInputError("offset length does not match the dimension")
        y = y - Z @ offset
    v, obj, kkt, it, conv, status, stages = solve_l1_qr(Z, y, tau, lam, config, init)
    return PenalizedFit(beta=v, lam=lam, objective=obj, kkt_residual=kkt, iterations=it,
                        converged=conv, offset=offset, status=status,
                        stage_objectives=stages)


def lp_oracle_fit(data: MultiSourceData, which, tau, lam) -> PenalizedFit:
    """Exact solution by the dense simplex; limited to n_T <= 200, p <= 20."""
    tau = as_tau(tau)
    lam = float(lam)
    if lam < 0:
        raise InvalidInputError("penalty level must be non-negative")
    Z, y = data.stacked(which)
    n, p = Z.shape
    if n > 200 or p > 20:
        raise InvalidInputError(f"instance n={n}, p={p} exceeds the oracle limit (200, 20)")
    beta, obj, pivots = penalized_qr_lp(Z, y, tau, lam)
    kkt = kkt_residual_arrays(Z, y, beta, tau, lam)
    objective = float(np.mean(check_loss(y - Z @ beta, tau))) + lam * float(np.abs(beta).sum())
    return PenalizedFit(beta=beta, lam=lam, objective=objective, kkt_residual=kkt,
                        iterations=pivots, converged=True, status="simplex")


# ---------------------------------------------------------------------------
# penalized quadratic
# ---------------------------------------------------------------------------

def fit_penalized_quadratic(H, b, lam, init=None, tol=1e-10, max_sweeps=20_000):
    """Minimise 0.5 g'Hg - b'g + lam |g|_1 by cyclic coordinate descent.

    A Newton step on the active set (kept only when it keeps the signs and
    lowers the KKT residual) finishes off slow linear convergence.
    """
    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float)
    q = b.shape[0]
    if H.shape != (q, q):
        raise InvalidInputError("H and b dimensions disagree")
    if lam < 0:
        raise InvalidInputError("penalty level must be non-negative")
    if q == 0:
        return np.zeros(0)
    scale = max(1.0, float(np.abs(H).max()))
    if np.abs(H - H.T).max() > 1e-10 * scale:
        raise InvalidInputError("H must be symmetric")
    H = np.ascontiguousarray(0.5 * (H + H.T))
    if np.linalg.eigvalsh(H).min() < -1e-8 * scale:
        raise InvalidInputError("H must be positive semidefinite")
    for j in np.flatnonzero(np.diag(H) <= 0):
        if abs(b[j]) > lam:
            raise InvalidInputError(f"objective unbounded along coordinate {j}")
    g = np.zeros(q) if init is None else np.array(init, dtype=float)
    lam = float(lam)
    used = 0
    while used < max_sweeps:
        sweeps, kkt = quad_cd(H, b, lam, g, tol, min(200, max_sweeps - used))
        used += sweeps
        if kkt <= tol:
            break
        g = _quadratic_refine(H, b, g, lam, kkt)
        if quad_kkt(g, H @ g - b, lam) <= tol:
            break
    return g


def _quadratic_refine(H, b, g, lam, kkt):
    act = np.flatnonzero(g)
    if act.size == 0:
        return g
    s = np.sign(g[act])
    try:
        sol = np.linalg.solve(H[np.ix_(act, act)], b[act] - lam * s)
    except np.linalg.LinAlgError:
        return g
    if not np.all(np.sign(sol) == s):
        return g
    cand = np.zeros_like(g)
    cand[act] = sol
    if quad_kkt(cand, H @ cand - b, lam) <= kkt:
        return cand
    return g


# ---------------------------------------------------------------------------
# tuning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CVResult:
    lam: float
    lambdas: np.ndarray
    cv_losses: np.ndarray


def lambda_max_arrays(Z, y, tau) -> float:
    return float(np.abs(score_arrays(Z, y, tau)).max())


def lambda_grid(lam_max: float, num: int = 50, ratio: float = 0.01) -> np.ndarray:
    """Log-spaced grid from ``lam_max`` down to ``ratio * lam_max``."""
    if lam_max <= 0:
        lam_max = 1e-8
    return np.geomspace(lam_max, ratio * lam_max, num)


def theory_lambda(Z, n_eff: int, c: float = 1.0) -> float:
    """c * L * sqrt(log p / n_eff), L the largest absolute covariate entry."""
    L = float(np.abs(Z).max())
    p = Z.shape[1]
    return c * L * np.sqrt(np.log(p) / n_eff)


def fold_ids(n: int, folds: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    ids = np.empty(n, dtype=int)
    ids[rng.permutation(n)] = np.arange(n) % folds
    return ids


# Path fits inside cross-validation only rank penalty levels, so they run the
# smoothed proximal gradient at one fixed width, with a looser stopping rule
# and without the exact polish/certification.
CV_CONFIG = SolverConfig(max_iter=300, kkt_tol=1e-2, smoothing_init=0.1, smoothing_final=0.1,
                         polish=False)


def cv_arrays(Z, y, tau, lambdas, folds, seed, config=None) -> CVResult:
    """K-fold CV of the validation check loss over a descending ``lambdas`` grid.

    Each fold walks the grid with warm starts, carrying the coefficients,
    residuals and step size from one penalty level to the next. A fold's path
    stops once the active set reaches 90% of min(n_train, p): past that point
    the fit interpolates its training rows. Only penalty levels reached by
    every fold are compared.
    """
    n, p = Z.shape
    if folds < 2:
        raise InvalidInputError("need at least two folds")
    if n < folds:
        raise InvalidInputError(f"{n} observations cannot be split into {folds} folds")
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.size == 0 or np.any(lambdas <= 0) or np.any(np.diff(lambdas) >= 0):
        raise InvalidInputError("lambda grid must be non-empty, positive and strictly descending")
    if lambdas.size == 1:
        return CVResult(float(lambdas[0]), lambdas, np.zeros(1))
    cfg = config or CV_CONFIG
    h = cfg.smoothing_final
    tol = 0.1 * cfg.kkt_tol
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    ids = fold_ids(n, folds, seed)
    total = np.zeros(lambdas.size)
    reached = lambdas.size
    for f in range(folds):
        tr, va = ids != f, ids == f
        Ztr = np.ascontiguousarray(Z[tr])
        Zva, yva = Z[va], y[va]
        cap = 0.9 * min(Ztr.shape[0], p)
        t = initial_step(Ztr, h)
        x = np.zeros(p)
        r = np.array(y[tr])
        for i in range(reached):
            t, _ = prox_stage(Ztr, tau, lambdas[i], h, x, r, t, tol, cfg.max_iter,
                              cfg.sufficient_decrease, cfg.shrink)
            total[i] += float(np.sum(check_loss(yva - Zva @ x, tau)))
            if np.count_nonzero(x) >= cap:
                reached = i + 1
                break
    losses = np.full(lambdas.size, np.inf)
    losses[:reached] = total[:reached] / n
    best = int(np.argmin(losses))  # first minimiser = largest lambda
    return CVResult(float(lambdas[best]), lambdas, losses)


def cross_validate_lambda(data: MultiSourceData, which, tau, lambda_grid_=None, folds=5,
                          seed=0, config=None, offset=None) -> CVResult:
    """Choose lambda by ``folds``-fold CV on the pooled sample of ``which``."""
    tau = as_tau(tau)
    Z, y = data.stacked(domain_set(which, data.K))
    if offset is not None:
        y = y - Z @ np.asarray(offset, dtype=float)
    if lambda_grid_ is None:
        lambda_grid_ = lambda_grid(lambda_max_arrays(Z, y, tau))
    return cv_arrays(Z, y, tau, lambda_grid_, folds, seed, config)
