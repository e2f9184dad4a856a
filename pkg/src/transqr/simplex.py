"""Dense tableau simplex with Bland's rule, used to solve small penalized
quantile regressions exactly (verification only)."""

import numpy as np


class SimplexError(RuntimeError):
    pass


def simplex_min(c, A, b, basis, tol=1e-11, max_pivots=200_000):
    """Minimise ``c @ x`` subject to ``A x = b, x >= 0``.

    ``basis`` lists one column per row such that ``A[:, basis]`` is the
    identity and ``b >= 0``, so the starting point is feasible.

    Returns ``(x, objective, pivots)``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, N = A.shape
    basis = list(basis)
    if len(basis) != m:
        raise SimplexError("starting basis must have one column per row")
    if np.any(b < 0):
        raise SimplexError("right-hand side must be non-negative")
    if not np.allclose(A[:, basis], np.eye(m)):
        raise SimplexError("starting basis columns are not the identity")

    T = np.empty((m, N + 1))
    T[:, :N] = A
    T[:, N] = b
    rc = c - c[basis] @ T[:, :N]

    pivots = 0
    while True:
        candidates = np.flatnonzero(rc < -tol)
        if candidates.size == 0:
            break
        j = candidates[0]  # Bland: lowest index entering
        col = T[:, j]
        pos = np.flatnonzero(col > tol)
        if pos.size == 0:
            raise SimplexError("linear program is unbounded")
        ratios = T[pos, N] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + tol * max(1.0, abs(best))]
        # Bland: among tied rows leave the basic variable with lowest index
        r = min(ties, key=lambda i: basis[i])

        T[r] /= T[r, j]
        others = np.arange(m) != r
        T[others] -= np.outer(T[others, j], T[r])
        rc = rc - rc[j] * T[r, :N]
        basis[r] = j
        pivots += 1
        if pivots >= max_pivots:
            raise SimplexError("pivot limit reached")

    x = np.zeros(N)
    x[basis] = T[:, N]
    return x, float(c @ x), pivots


def penalized_qr_lp(Z, y, tau, lam):
    """Solve min (1/n) sum rho_tau(y - Z b) + lam |b|_1 as a linear program.

    Variables are [b+, b-, u, v] with Z b+ - Z b- + u - v = y, all >= 0.
    Returns ``(beta, objective, pivots)``.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = Z.shape
    A = np.hstack([Z, -Z, np.eye(n), -np.eye(n)])
    c = np.concatenate([np.full(2 * p, lam), np.full(n, tau / n), np.full(n, (1 - tau) / n)])
    rhs = y.copy()
    basis = []
    for i in range(n):
        if rhs[i] < 0:
            A[i] = -A[i]
            rhs[i] = -rhs[i]
            basis.append(2 * p + n + i)
        else:
            basis.append(2 * p + i)
    x, obj, pivots = simplex_min(c, A, rhs, basis)
    beta = x[:p] - x[p:2 * p]
    return beta, obj, pivots
