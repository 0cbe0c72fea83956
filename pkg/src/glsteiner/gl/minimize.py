"""Gradient descent with Barzilai-Borwein trial steps and Armijo backtracking."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..currents import PsiNorm
from . import kernels
from .energy import DEFAULT_POTENTIAL, P_MAX, FieldState, Potential, _mode

log = logging.getLogger(__name__)

ARMIJO_C = 1e-4


class EnergyIncreaseError(RuntimeError):
    """An accepted step raised the energy, or pinned values moved."""


@dataclass
class EpsRecord:
    eps: float
    energy: float
    energy_sup: float
    ratio: float  # energy / |log eps|
    iterations: int
    converged: bool
    seconds: float
    initial_energy: float
    trace: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in ("eps", "energy", "energy_sup", "ratio", "iterations",
                                              "converged", "seconds", "initial_energy")}


@dataclass
class MinimizeReport:
    records: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def ratios(self) -> list:
        return [r.ratio for r in self.records]

    def to_json(self) -> list:
        return [r.to_json() for r in self.records]


def _descend(fs: FieldState, psi: PsiNorm, max_iter: int, tol: float, p_max: float,
             potential: Potential, trace_every: int, variant: str = "abb") -> EpsRecord:
    g = fs.grid
    p, mode = _mode(psi, p_max)
    free = g.free.astype(np.int8)
    args = (g.plus, g.minus, free, fs.eps, g.h, potential.scale, p, mode)
    u = fs.u
    grad = np.empty_like(u)
    trial = np.empty_like(u)
    trial_grad = np.empty_like(u)
    t0 = time.perf_counter()
    E, Es = kernels.energy_grad(u, *args, grad)
    E_init = E
    t = 0.1 * min(g.h, fs.eps) ** 2 / g.h ** g.n
    trace = [E]
    converged = False
    it = 0
    evals = 1
    for it in range(1, max_iter + 1):
        gg = float(np.vdot(grad, grad))
        if gg == 0.0:
            converged = True
            break
        gmax = float(np.max(np.abs(grad)))
        while True:
            kernels.axpy_masked(trial, u, -t, grad, free)
            Et, Est = kernels.energy_grad(trial, *args, trial_grad)
            evals += 1
            if Et <= E - ARMIJO_C * t * gg:
                break
            t *= 0.5
            if t * gmax < 1e-16:
                break
        if not Et <= E - ARMIJO_C * t * gg:
            # no acceptable step left: stationary to machine precision
            converged = True
            break
        if Et > E + 1e-12:
            raise EnergyIncreaseError(f"energy rose from {E!r} to {Et!r}")
        step_inf = t * gmax
        # Barzilai-Borwein steps from s = -t*grad, y = grad_new - grad
        gy = float(np.vdot(grad, trial_grad))
        sy = -t * (gy - gg)
        ss = t * t * gg
        yy = float(np.vdot(trial_grad, trial_grad)) - 2 * gy + gg
        u, trial = trial, u
        grad, trial_grad = trial_grad, grad
        E, Es = Et, Est
        if trace_every and it % trace_every == 0:
            trace.append(E)
            log.info("eps=%g it=%d evals=%d E=%.10g step=%.3g", fs.eps, it, evals, E, step_inf)
        if step_inf < tol and it > 1:
            converged = True
            break
        if sy > 0:
            bb1, bb2 = ss / sy, sy / yy
            if variant == "bb1":
                t = bb1
            elif variant == "bb2":
                t = bb2
            else:
                # adaptive: short step while the two estimates disagree strongly
                t = bb2 if bb2 / bb1 < 0.5 else bb1
        else:
            t = 2.0 * t
    if u is not fs.u:
        fs.u[...] = u
    if not fs.pinned_ok() or not fs.finite():
        raise EnergyIncreaseError("pinned values changed or field became non-finite")
    trace.append(E)
    secs = time.perf_counter() - t0
    return EpsRecord(fs.eps, E, Es, E / abs(math.log(fs.eps)), it, converged, secs, E_init, trace)


def minimize(fs: FieldState, psi: PsiNorm, schedule, max_iter: int = 5000, tol: float = 1e-6,
             p_max: float = P_MAX, potential: Potential = DEFAULT_POTENTIAL,
             trace_every: int = 50) -> tuple[FieldState, MinimizeReport]:
    """Minimise at every eps of a strictly decreasing schedule, warm-starting each from the last."""
    schedule = [float(e) for e in schedule]
    if not schedule or any(e <= 0 for e in schedule):
        raise ValueError("eps values must be positive")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("eps schedule must be strictly decreasing")
    state = fs.copy()
    state.apply_pinned()
    report = MinimizeReport()
    for eps in schedule:
        state.eps = eps
        rec = _descend(state, psi, max_iter, tol, p_max, potential, trace_every)
        if not rec.converged:
            log.warning("eps=%g: iteration cap %d reached (E=%.8g)", eps, max_iter, rec.energy)
        report.records.append(rec)
    return state, report


def prolongate(fs: FieldState, grid) -> FieldState:
    """Multilinear transfer of ``fs`` onto another grid of the same problem (usually finer).

    Excluded coarse nodes take the value of their nearest active node first, so
    that interpolation near the cut-outs stays finite.  Pinned values of the
    target grid are then imposed exactly.
    """
    from scipy.interpolate import RegularGridInterpolator
    from scipy.ndimage import distance_transform_edt

    src = fs.grid
    if grid.n != src.n or grid.n_components != src.n_components:
        raise ValueError("grids describe different problems")
    hole = src.dense(np.ones(src.n_nodes, dtype=bool), fill=False)
    near = distance_transform_edt(~hole, return_distances=False, return_indices=True)
    axes = [src.origin[a] + src.h * np.arange(src.dims[a]) for a in range(src.n)]
    X = np.clip(grid.coords(), [a[0] for a in axes], [a[-1] for a in axes])
    u = np.empty((grid.n_components, grid.n_nodes, grid.n - 1))
    for i in range(src.n_components):
        vals = src.dense(fs.u[i])[tuple(near)]
        u[i] = RegularGridInterpolator(axes, vals)(X)
    out = FieldState(grid, u, fs.eps)
    out.apply_pinned()
    return out
