"""Discrete vector Ginzburg-Landau functional on a masked grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..currents import PsiNorm
from . import kernels
from .grid import GridSpec

P_MAX = 16.0


@dataclass(frozen=True)
class Potential:
    """``W(y) = scale * (1 - |y|^2)^2``."""

    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("potential scale must be positive")

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.scale * (1.0 - np.sum(y * y, axis=-1)) ** 2

    def grad(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return -4.0 * self.scale * (1.0 - np.sum(y * y, axis=-1))[..., None] * y


DEFAULT_POTENTIAL = Potential()


@dataclass(eq=False)
class FieldState:
    grid: GridSpec
    u: np.ndarray  # (K, M, n-1)
    eps: float

    def __post_init__(self):
        K, M = self.grid.n_components, self.grid.n_nodes
        if self.u.shape != (K, M, self.grid.n - 1):
            raise ValueError(f"field shape {self.u.shape} does not match grid {(K, M, self.grid.n - 1)}")

    @classmethod
    def constant(cls, grid: GridSpec, eps: float) -> "FieldState":
        u = np.zeros((grid.n_components, grid.n_nodes, grid.n - 1))
        u[..., -1] = 1.0
        fs = cls(grid, u, eps)
        fs.apply_pinned()
        return fs

    @property
    def K(self) -> int:
        return self.u.shape[0]

    def copy(self) -> "FieldState":
        return FieldState(self.grid, self.u.copy(), self.eps)

    def apply_pinned(self) -> None:
        self.u[:, self.grid.pinned] = self.grid.datum

    def pinned_ok(self) -> bool:
        return bool(np.array_equal(self.u[:, self.grid.pinned], self.grid.datum))

    def finite(self) -> bool:
        return bool(np.isfinite(self.u).all())


def _mode(psi: PsiNorm, p_max: float):
    if psi.alpha == 1:
        return 1.0, 0
    if psi.alpha == 0:
        return float(p_max), 1
    return 1.0 / psi.alpha, 1


def node_densities(fs: FieldState, potential: Potential = DEFAULT_POTENTIAL) -> np.ndarray:
    """Densities ``e_eps(u_k)`` at every active node, shape (K, M)."""
    g = fs.grid
    out = np.empty((fs.K, g.n_nodes))
    kernels.densities(fs.u, g.plus, g.minus, fs.eps, g.h, potential.scale, out)
    return out


def node_densities_reference(fs: FieldState, potential: Potential = DEFAULT_POTENTIAL) -> np.ndarray:
    """Plain numpy evaluation of ``node_densities`` (slow, for cross-checks)."""
    g = fs.grid
    n = g.n
    du2 = np.zeros((fs.K, g.n_nodes))
    for a in range(n):
        d = (fs.u[:, g.plus[a]] - fs.u[:, g.minus[a]]) / g.h
        du2 += np.sum(d * d, axis=-1)
    grad_term = du2 ** ((n - 1) / 2) / (n - 1)
    return grad_term + potential(fs.u) / fs.eps**2


def energy_density(fs: FieldState, i: int, node: int, potential: Potential = DEFAULT_POTENTIAL) -> float:
    g = fs.grid
    du2 = 0.0
    for a in range(g.n):
        d = (fs.u[i, g.plus[a, node]] - fs.u[i, g.minus[a, node]]) / g.h
        du2 += float(d @ d)
    return du2 ** ((g.n - 1) / 2) / (g.n - 1) + float(potential(fs.u[i, node])) / fs.eps**2


@dataclass
class EnergyValue:
    value: float  # Psi-integrand (smoothed for alpha = 0)
    sup: float  # l^inf integrand

    def __float__(self):
        return self.value


def total_energy(fs: FieldState, psi: PsiNorm, p_max: float = P_MAX,
                 potential: Potential = DEFAULT_POTENTIAL) -> EnergyValue:
    """``h^n sum_nodes Psi(e_1, ..., e_K)`` and its sup variant.

    Summed over every active node (free and pinned).  For alpha = 0 ``value``
    uses the l^{p_max} norm; ``sup`` is the true l^inf integrand.
    """
    g = fs.grid
    p, mode = _mode(psi, p_max)
    E, Es = kernels.energy(fs.u, g.plus, g.minus, fs.eps, g.h, potential.scale, p, mode)
    return EnergyValue(E, Es)


def energy_gradient(fs: FieldState, psi: PsiNorm, p_max: float = P_MAX,
                    potential: Potential = DEFAULT_POTENTIAL, out: np.ndarray | None = None):
    """Exact gradient of ``total_energy(...).value``; zero on pinned nodes."""
    g = fs.grid
    p, mode = _mode(psi, p_max)
    out = np.empty_like(fs.u) if out is None else out
    free = g.free.astype(np.int8)
    E, Es = kernels.energy_grad(fs.u, g.plus, g.minus, free, fs.eps, g.h, potential.scale, p, mode, out)
    return EnergyValue(E, Es), out


def dual_objective(fs: FieldState, phi: np.ndarray, potential: Potential = DEFAULT_POTENTIAL) -> float:
    """``h^n sum_nodes <phi(x), e(x)>`` for a test field ``phi`` of shape (K, M)."""
    e = node_densities(fs, potential)
    return float(fs.grid.h ** fs.grid.n * np.sum(phi * e))


def aligned_dual_field(fs: FieldState, psi: PsiNorm, potential: Potential = DEFAULT_POTENTIAL) -> np.ndarray:
    """Per-node maximiser of ``<phi, e>`` under ``Psi*(phi) <= 1``."""
    e = node_densities(fs, potential)
    out = np.zeros_like(e)
    if psi.alpha == 0:
        k = np.argmax(e, axis=0)
        out[k, np.arange(e.shape[1])] = 1.0
    elif psi.alpha == 1:
        out[:] = 1.0
    else:
        p = 1.0 / psi.alpha
        nrm = np.asarray(psi(e.T))
        safe = np.where(nrm > 0, nrm, 1.0)
        out = (e / safe) ** (p - 1.0)
        out[:, nrm == 0] = 0.0
    return out


def dual_admissible(psi: PsiNorm, phi: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.all(np.asarray(psi.dual(phi.T)) <= 1.0 + tol))


def log_ratio(E: float, eps: float) -> float:
    return E / abs(math.log(eps))
