"""Compiled inner loops for the sparse solvers.

All kernels work on the Gram form of the least-squares loss:
``G = theta.T @ theta``, ``c = theta.T @ ut``, ``yy = ut @ ut``, so
``||ut - theta x||^2 = yy - 2 c.x + x.G.x`` and the gradient is ``G x - c``.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def power_iteration(G, tol, maxit):
    p = G.shape[0]
    x = np.empty(p)
    for i in range(p):
        x[i] = 1.0 + 0.01 * i
    x /= np.sqrt(np.dot(x, x))
    lam = 0.0
    for _ in range(maxit):
        y = G @ x
        nrm = np.sqrt(np.dot(y, y))
        if nrm == 0.0:
            return 0.0
        lam_new = np.dot(x, y)
        x = y / nrm
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new
        lam = lam_new
    return lam


@njit(cache=True, nogil=True)
def _rss(G, c, yy, x):
    return yy - 2.0 * np.dot(c, x) + np.dot(x, G @ x)


@njit(cache=True, nogil=True)
def lasso_cd(G, c, pen, x, maxit, kkt_tol):
    """Cyclic coordinate descent for 0.5||y - theta x||^2 + sum_k pen_k |x_k|."""
    p = c.shape[0]
    q = c - G @ x
    for it in range(1, maxit + 1):
        for k in range(p):
            gkk = G[k, k]
            if gkk == 0.0:
                continue
            old = x[k]
            rho = q[k] + gkk * old
            if rho > pen[k]:
                new = (rho - pen[k]) / gkk
            elif rho < -pen[k]:
                new = (rho + pen[k]) / gkk
            else:
                new = 0.0
            d = new - old
            if d != 0.0:
                for j in range(p):
                    q[j] -= G[j, k] * d
                x[k] = new
        q = c - G @ x
        viol = 0.0
        for k in range(p):
            if x[k] > 0.0:
                v = abs(q[k] - pen[k])
            elif x[k] < 0.0:
                v = abs(q[k] + pen[k])
            else:
                v = max(abs(q[k]) - pen[k], 0.0)
            if v > viol:
                viol = v
        if viol <= kkt_tol:
            return x, it, True, viol
    return x, maxit, False, viol


@njit(cache=True, nogil=True)
def iht(G, c, yy, L, lam, maxit, tol):
    """Plain IHT from zero. Returns (x, iterations, converged, monotone)."""
    p = c.shape[0]
    thr = np.sqrt(lam)
    x = np.zeros(p)
    # surrogate-consistent objective for threshold sqrt(lam) at step 1/L
    f_old = 0.5 * yy
    for it in range(1, maxit + 1):
        g = G @ x - c
        xn = np.zeros(p)
        nnz = 0
        for k in range(p):
            z = x[k] - g[k] / L
            if abs(z) > thr:
                xn[k] = z
                nnz += 1
        f_new = 0.5 * _rss(G, c, yy, xn) + 0.5 * L * lam * nnz
        if f_new > f_old + 1e-10 * max(abs(f_old), 1e-300):
            return xn, it, False, False
        d = xn - x
        delta = np.sqrt(np.dot(d, d))
        x = xn
        f_old = f_new
        if delta <= tol * np.sqrt(np.dot(x, x)):
            return x, it, True, True
    return x, maxit, False, True


@njit(cache=True, nogil=True)
def _matvec(A, v, out):
    n = v.shape[0]
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += A[i, j] * v[j]
        out[i] = acc


@njit(cache=True, nogil=True)
def iht_debiased(G, c, yy, L, lam, exit_lam, maxit, subit, tol):
    """IHT with gradient-descent debiasing on the current support.

    Returns (x, iterations, converged, descent_ok). Exits early as soon as
    the refit residual satisfies ||ut - theta u||^2 <= exit_lam * |S|.
    """
    p = c.shape[0]
    thr = np.sqrt(lam)
    x = np.zeros(p)
    u = np.zeros(p)
    mask = np.zeros(p, dtype=np.bool_)
    prev = np.zeros(p, dtype=np.bool_)
    S = np.empty(0, dtype=np.int64)
    GS = np.empty((0, 0))
    cS = np.empty(0)
    LS = 0.0
    for it in range(1, maxit + 1):
        g = G @ x - c
        nnz = 0
        for k in range(p):
            z = x[k] - g[k] / L
            if abs(z) > thr:
                u[k] = z
                mask[k] = True
                nnz += 1
            else:
                u[k] = 0.0
                mask[k] = False
        if nnz > 0:
            same = it > 1 and nnz == S.shape[0]
            if same:
                for k in range(p):
                    if mask[k] != prev[k]:
                        same = False
                        break
            if not same:
                S = np.flatnonzero(mask)
                GS = np.empty((nnz, nnz))
                cS = np.empty(nnz)
                for a in range(nnz):
                    cS[a] = c[S[a]]
                    for b in range(nnz):
                        GS[a, b] = G[S[a], S[b]]
                LS = np.linalg.eigvalsh(GS)[-1]
            uS = np.empty(nnz)
            un = np.empty(nnz)
            h = np.empty(nnz)
            hn = np.empty(nnz)
            for a in range(nnz):
                uS[a] = u[S[a]]
            _matvec(GS, uS, h)
            rss = yy - 2.0 * np.dot(cS, uS) + np.dot(uS, h)
            for _ in range(subit):
                du = 0.0
                for a in range(nnz):
                    st = (h[a] - cS[a]) / LS
                    un[a] = uS[a] - st
                    du += st * st
                _matvec(GS, un, hn)
                rss_new = yy - 2.0 * np.dot(cS, un) + np.dot(un, hn)
                if rss_new > rss + 1e-10 * max(abs(rss), 1e-12 * yy):
                    for a in range(nnz):
                        u[S[a]] = un[a]
                    return u, it, False, False
                uS, un = un, uS
                h, hn = hn, h
                rss = rss_new
                if rss <= exit_lam * nnz:
                    for a in range(nnz):
                        u[S[a]] = uS[a]
                    return u, it, True, True
                if np.sqrt(du) <= tol * np.sqrt(np.dot(uS, uS)):
                    break
            for a in range(nnz):
                u[S[a]] = uS[a]
        else:
            S = np.empty(0, dtype=np.int64)
        for k in range(p):
            prev[k] = mask[k]
        delta = 0.0
        norm = 0.0
        for k in range(p):
            delta += (u[k] - x[k]) ** 2
            norm += u[k] ** 2
            x[k] = u[k]
        if np.sqrt(delta) <= tol * np.sqrt(norm):
            return x.copy(), it, True, True
    return x.copy(), maxit, False, True
