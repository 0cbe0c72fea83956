"""Compiled lattice kernels for the vector Ginzburg-Landau energy.

Fields have shape ``(K, M, c)``: K components, M active nodes, c = n - 1
values per node.  Coupling across components goes through the l^p norm of
the K per-node densities, ``p = inf`` being handled by the caller through a
large finite exponent.  ``mode`` selects: 0 = sum (p = 1), 1 = l^p.
"""

import warnings

import numba
import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _lp(e, p, mode):
    K = e.shape[0]
    if K == 1:
        return e[0]
    if mode == 0:
        s = 0.0
        for k in range(K):
            s += e[k]
        return s
    m = 0.0
    for k in range(K):
        if e[k] > m:
            m = e[k]
    if m <= 0.0:
        return 0.0
    s = 0.0
    for k in range(K):
        s += (e[k] / m) ** p
    return m * s ** (1.0 / p)


@njit(cache=True)
def densities(u, plus, minus, eps, h, wscale, out):
    """Per-node densities ``(1/(n-1))|Du|^{n-1} + W(u)/eps^2`` into ``out`` (K, M)."""
    K, M, c = u.shape
    n = plus.shape[0]
    inv_h2 = 1.0 / (h * h)
    inv_e2 = wscale / (eps * eps)
    half_pow = 0.5 * (n - 1)
    for m in range(M):
        for k in range(K):
            g2 = 0.0
            for a in range(n):
                p = plus[a, m]
                q = minus[a, m]
                if p == q:
                    continue
                for j in range(c):
                    d = u[k, p, j] - u[k, q, j]
                    g2 += d * d
            g2 *= inv_h2
            s = 0.0
            for j in range(c):
                s += u[k, m, j] * u[k, m, j]
            w = (1.0 - s) * (1.0 - s)
            if n == 3:
                grad_term = 0.5 * g2
            else:
                grad_term = g2 ** half_pow / (n - 1)
            out[k, m] = grad_term + w * inv_e2


@njit(cache=True)
def energy(u, plus, minus, eps, h, wscale, p, mode):
    """Returns (Psi-energy, sup-energy), both multiplied by h^n."""
    K, M, c = u.shape
    n = plus.shape[0]
    inv_h2 = 1.0 / (h * h)
    inv_e2 = wscale / (eps * eps)
    half_pow = 0.5 * (n - 1)
    e = np.empty(K)
    E = 0.0
    Esup = 0.0
    for m in range(M):
        mx = 0.0
        for k in range(K):
            g2 = 0.0
            for a in range(n):
                pp = plus[a, m]
                q = minus[a, m]
                if pp == q:
                    continue
                for j in range(c):
                    d = u[k, pp, j] - u[k, q, j]
                    g2 += d * d
            g2 *= inv_h2
            s = 0.0
            for j in range(c):
                s += u[k, m, j] * u[k, m, j]
            if n == 3:
                gt = 0.5 * g2
            else:
                gt = g2 ** half_pow / (n - 1)
            e[k] = gt + (1.0 - s) * (1.0 - s) * inv_e2
            if e[k] > mx:
                mx = e[k]
        E += _lp(e, p, mode)
        Esup += mx
    vol = h ** n
    return E * vol, Esup * vol


@njit(cache=True)
def energy_grad(u, plus, minus, free, eps, h, wscale, p, mode, grad):
    """Energy as in ``energy``; exact gradient of the Psi-energy into ``grad``.

    The gradient is zeroed on nodes with ``free == 0``.
    """
    K, M, c = u.shape
    n = plus.shape[0]
    inv_h = 1.0 / h
    inv_h2 = inv_h * inv_h
    inv_e2 = wscale / (eps * eps)
    half_pow = 0.5 * (n - 1)
    vol = h ** n
    e = np.empty(K)
    g2s = np.empty(K)
    grad[:] = 0.0
    E = 0.0
    Esup = 0.0
    for m in range(M):
        mx = 0.0
        for k in range(K):
            g2 = 0.0
            for a in range(n):
                pp = plus[a, m]
                q = minus[a, m]
                if pp == q:
                    continue
                for j in range(c):
                    d = u[k, pp, j] - u[k, q, j]
                    g2 += d * d
            g2 *= inv_h2
            g2s[k] = g2
            s = 0.0
            for j in range(c):
                s += u[k, m, j] * u[k, m, j]
            if n == 3:
                gt = 0.5 * g2
            else:
                gt = g2 ** half_pow / (n - 1)
            e[k] = gt + (1.0 - s) * (1.0 - s) * inv_e2
            if e[k] > mx:
                mx = e[k]
        psi = _lp(e, p, mode)
        E += psi
        Esup += mx
        if psi <= 0.0:
            continue
        for k in range(K):
            if mode == 0 or K == 1:
                w = 1.0
            else:
                w = (e[k] / psi) ** (p - 1.0)
            if w == 0.0:
                continue
            w *= vol
            # d(grad term)/d(difference) = |Du|^{n-3} * difference / h^2
            if n == 3:
                cg = w * inv_h2
            else:
                cg = w * inv_h2 * (g2s[k] ** (0.5 * (n - 3)) if g2s[k] > 0.0 else 0.0)
            if cg != 0.0:
                for a in range(n):
                    pp = plus[a, m]
                    q = minus[a, m]
                    if pp == q:
                        continue
                    for j in range(c):
                        d = u[k, pp, j] - u[k, q, j]
                        grad[k, pp, j] += cg * d
                        grad[k, q, j] -= cg * d
            s = 0.0
            for j in range(c):
                s += u[k, m, j] * u[k, m, j]
            cw = -4.0 * (1.0 - s) * inv_e2 * w
            for j in range(c):
                grad[k, m, j] += cw * u[k, m, j]
    for m in range(M):
        if free[m] == 0:
            for k in range(K):
                for j in range(c):
                    grad[k, m, j] = 0.0
    return E * vol, Esup * vol


@njit(cache=True)
def axpy_masked(out, u, t, d, free):
    """``out = u + t*d`` on free nodes, ``out = u`` elsewhere."""
    K, M, c = u.shape
    for k in range(K):
        for m in range(M):
            if free[m]:
                for j in range(c):
                    out[k, m, j] = u[k, m, j] + t * d[k, m, j]
            else:
                for j in range(c):
                    out[k, m, j] = u[k, m, j]


@njit(cache=True)
def laplace_apply(x, plus, minus, free, out):
    """Graph Laplacian over active axis neighbours; rows of non-free nodes are zeroed."""
    n, M = plus.shape
    out[:] = 0.0
    for m in range(M):
        for a in range(n):
            p = plus[a, m]
            q = minus[a, m]
            if p == q or q != m:
                continue
            # each forward pair (m, p) is visited once
            d = x[p] - x[m]
            if free[m]:
                out[m] -= d
            if free[p]:
                out[p] += d
    for m in range(M):
        if not free[m]:
            out[m] = 0.0


def set_threads(k: int | None) -> int:
    """Bound numba's worker pool; returns the effective thread count."""
    if k is None or k <= 0:
        return numba.config.NUMBA_NUM_THREADS
    k = min(int(k), numba.config.NUMBA_NUM_THREADS)
    with warnings.catch_warnings():
        # picking a threading layer may warn about an old TBB; the workqueue fallback is fine
        warnings.simplefilter("ignore", numba.NumbaWarning)
        numba.set_num_threads(k)
    return k
