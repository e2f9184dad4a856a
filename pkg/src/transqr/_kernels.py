"""Compiled inner loop of the smoothed proximal-gradient solver."""

import numpy as np
from numba import njit


@njit(cache=True)
def _smoothed_nb(r, tau, h, dl):
    n = r.shape[0]
    tot = 0.0
    for i in range(n):
        ri = r[i]
        if abs(ri) < h:
            dl[i] = tau - 0.5 + ri / (2.0 * h)
            tot += (tau - 0.5) * ri + ri * ri / (4.0 * h) + h / 4.0
        elif ri < 0:
            dl[i] = tau - 1.0
            tot += ri * (tau - 1.0)
        else:
            dl[i] = tau
            tot += ri * tau
    return tot / n


@njit(cache=True)
def _grad_nb(Z, dl, g):
    n, p = Z.shape
    for j in range(p):
        g[j] = 0.0
    for i in range(n):
        w = dl[i]
        if w != 0.0:
            for j in range(p):
                g[j] -= Z[i, j] * w
    for j in range(p):
        g[j] /= n


@njit(cache=True)
def prox_stage(Z, tau, lam, h, x, r, t, tol, budget, sigma, shrink):
    """Proximal gradient on the uniform-kernel smoothed check loss.

    ``x`` and ``r`` (= y - Z x) are updated in place. Returns ``(t, iterations)``.
    """
    n, p = Z.shape
    dl = np.empty(n)
    dl_new = np.empty(n)
    g = np.empty(p)
    g_new = np.empty(p)
    x_new = np.empty(p)
    d = np.empty(p)
    r_new = np.empty(n)
    nz = np.empty(p, dtype=np.int64)
    f = _smoothed_nb(r, tau, h, dl)
    _grad_nb(Z, dl, g)
    pen = 0.0
    for j in range(p):
        pen += abs(x[j])
    F = f + lam * pen
    it = 0
    t_max = 1e6
    while it < budget:
        it += 1
        k = 0
        dd = 0.0
        F_new = 0.0
        while True:
            k = 0
            dd = 0.0
            pen = 0.0
            for j in range(p):
                z = x[j] - t * g[j]
                a = abs(z) - t * lam
                if a > 0.0:
                    v = a if z > 0 else -a
                else:
                    v = 0.0
                x_new[j] = v
                pen += abs(v)
                dj = v - x[j]
                d[j] = dj
                if dj != 0.0:
                    nz[k] = j
                    k += 1
                    dd += dj * dj
            if k == 0:
                break
            for i in range(n):
                s = 0.0
                for q in range(k):
                    j = nz[q]
                    s += Z[i, j] * d[j]
                r_new[i] = r[i] - s
            F_new = _smoothed_nb(r_new, tau, h, dl_new) + lam * pen
            if F_new <= F - sigma / (2.0 * t) * dd:
                break
            t *= shrink
            if t < 1e-14:
                k = 0
                break
        if k == 0:
            break
        step_norm = 0.0
        for q in range(k):
            a = abs(d[nz[q]])
            if a > step_norm:
                step_norm = a
        step_norm /= t
        _grad_nb(Z, dl_new, g_new)
        sy = 0.0
        for q in range(k):
            j = nz[q]
            sy += d[j] * (g_new[j] - g[j])
        for j in range(p):
            x[j] = x_new[j]
            g[j] = g_new[j]
        for i in range(n):
            r[i] = r_new[i]
            dl[i] = dl_new[i]
        F = F_new
        if sy > 0.0:
            t = min(dd / sy, t_max)
        else:
            t = min(2.0 * t, t_max)
        if step_norm <= tol:
            break
    return t, it


@njit(cache=True)
def quad_kkt(g, grad, lam):
    out = 0.0
    for j in range(g.shape[0]):
        if g[j] > 0:
            v = abs(grad[j] + lam)
        elif g[j] < 0:
            v = abs(grad[j] - lam)
        else:
            v = abs(grad[j]) - lam
        if v > out:
            out = v
    return out


@njit(cache=True)
def quad_cd(H, b, lam, g, tol, max_sweeps):
    """Cyclic coordinate descent for 0.5 g'Hg - b'g + lam |g|_1, in place.

    At least one full sweep always runs. Every fifth sweep visits all
    coordinates and recomputes the gradient; the others cycle over the
    active set. Returns ``(sweeps, kkt)``.
    """
    q = b.shape[0]
    grad = H @ g - b
    kkt = quad_kkt(g, grad, lam)
    sweeps = 0
    while sweeps < max_sweeps and (sweeps == 0 or kkt > tol):
        full = sweeps % 5 == 0
        for j in range(q):
            if not full and g[j] == 0.0:
                continue
            hj = H[j, j]
            if hj <= 0.0:
                continue
            z = hj * g[j] - grad[j]
            a = abs(z) - lam
            if a > 0.0:
                new = (a if z > 0 else -a) / hj
            else:
                new = 0.0
            delta = new - g[j]
            if delta != 0.0:
                for k in range(q):
                    grad[k] += H[k, j] * delta
                g[j] = new
        sweeps += 1
        if sweeps % 5 == 0:
            grad = H @ g - b
            kkt = quad_kkt(g, grad, lam)
    grad = H @ g - b
    return sweeps, quad_kkt(g, grad, lam)
