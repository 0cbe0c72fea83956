"""Initial fields winding once around every path of a candidate network.

``phase`` (n = 3): component i gets the phase of half the solid angle
subtended by the closed loop made of its network path lambda_i and its
reference curve gamma_i.  That phase winds once around lambda_i and once
around the tube of gamma_i, like the boundary datum.  A harmonic gauge
correction (Dirichlet data = lifted phase mismatch on the pinned layer)
makes the field agree with the datum on the pinned nodes without
introducing a jump.  The modulus is the cutoff ``min(1, dist(x, lambda_i)/eps)``.

``literal`` (any n): ``x''/|x''|`` inside thin inner tubes around the
network edges of lambda_i and ``e_{n-1}`` outside, blended over one cell,
times the same cutoff.
"""

from __future__ import annotations

import logging
import math
from collections import deque

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from ..currents import MultiplicityCurrent, paths_of, sample_support
from ..geometry import Segment, Tube, _angle, _segment_distance, transverse_coords
from . import kernels
from .energy import FieldState
from .grid import GridSpec

log = logging.getLogger(__name__)


TIP_CELLS = 4


class RecoveryError(ValueError):
    pass


def _tri_solid_angle(x, a, b, c):
    """Signed solid angle of triangle abc seen from points x (Van Oosterom-Strackee)."""
    A, B, C = a - x, b - x, c - x
    la, lb, lc = (np.linalg.norm(v, axis=-1) for v in (A, B, C))
    num = np.einsum("...i,...i", A, np.cross(B, C))
    den = (la * lb * lc + np.einsum("...i,...i", A, B) * lc + np.einsum("...i,...i", A, C) * lb
           + np.einsum("...i,...i", B, C) * la)
    return 2.0 * np.arctan2(num, den)


def loop_solid_angle(x: np.ndarray, loop: np.ndarray, chunk: int = 500_000) -> np.ndarray:
    """Solid angle (mod 4 pi) of a closed polygon, by a fan from its first vertex."""
    out = np.empty(len(x))
    a = loop[0]
    for s in range(0, len(x), chunk):
        xs = x[s:s + chunk]
        acc = np.zeros(len(xs))
        for k in range(1, len(loop) - 1):
            acc += _tri_solid_angle(xs, a, loop[k], loop[k + 1])
        out[s:s + chunk] = acc
    return out


def polyline_distance(x: np.ndarray, path: np.ndarray, chunk: int = 500_000) -> np.ndarray:
    out = np.full(len(x), np.inf)
    segs = [Segment(path[k], path[k + 1]) for k in range(len(path) - 1)]
    for s in range(0, len(x), chunk):
        xs = x[s:s + chunk]
        d = out[s:s + chunk]
        for sg in segs:
            np.minimum(d, sg.distance(xs), out=d)
    return out


def _loop(path: np.ndarray, curve: np.ndarray) -> np.ndarray:
    """lambda_i (P_i -> P_N) followed by gamma_i (P_N -> P_i), first vertex not repeated."""
    return np.vstack([path, curve[1:-1]])


def _winding_around(phase_fn, seg: Segment, r: float, samples: int = 64) -> int:
    th = 2 * np.pi * np.arange(samples + 1) / samples
    mid = 0.5 * (seg.a + seg.b)
    f = seg.frame
    pts = mid + r * (np.cos(th)[:, None] * f[0] + np.sin(th)[:, None] * f[1])
    ph = phase_fn(pts)
    d = np.angle(np.exp(1j * np.diff(ph)))
    return int(round(d.sum() / (2 * np.pi)))


def _pinned_graph(grid: GridSpec, reach: int = 2):
    """Adjacency (CSR-like lists) among pinned nodes at most ``reach`` cells apart per axis.

    The pinned layer around a tube is not face-connected in general; linking
    nodes a couple of cells apart keeps every sleeve in a single lift tree.
    """
    n = grid.n
    loc = np.full(int(np.prod(grid.dims)), -1, dtype=np.int64)
    loc[grid.grid_index[grid.pinned]] = np.arange(len(grid.pinned))
    loc = loc.reshape(grid.dims)
    mi = grid.multi_index(grid.pinned)
    dims = np.array(grid.dims)
    rows, cols = [], []
    for off in np.ndindex(*(2 * reach + 1,) * n):
        off = np.array(off) - reach
        if not off.any():
            continue
        q = mi + off
        ok = np.all((q >= 0) & (q < dims), axis=1)
        w = np.full(len(mi), -1, dtype=np.int64)
        w[ok] = loc[tuple(q[ok].T)]
        sel = w >= 0
        rows.append(np.flatnonzero(sel))
        cols.append(w[sel])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    # nearest links first so the BFS prefers short steps
    dist = np.abs(mi[r] - mi[c]).sum(axis=1)
    order = np.lexsort((dist, r))
    r, c = r[order], c[order]
    start = np.searchsorted(r, np.arange(len(grid.pinned) + 1))
    return start, c


def _lift(delta: np.ndarray, start: np.ndarray, nbr: np.ndarray, first: np.ndarray | None = None) -> np.ndarray:
    """Continuous lift of wrapped angles along a BFS forest; each tree re-centred near 0.

    Nodes in ``first`` are lifted among themselves before the rest are
    reached from them.
    """
    P = len(delta)
    out = np.full(P, np.nan)
    allowed = np.ones(P, dtype=bool) if first is None else first.copy()

    def grow(roots, members):
        dq = deque(roots)
        while dq:
            v = dq.popleft()
            for w in nbr[start[v]:start[v + 1]]:
                if np.isnan(out[w]) and allowed[w]:
                    out[w] = out[v] + math.remainder(delta[w] - out[v], 2 * math.pi)
                    members.append(w)
                    dq.append(w)

    for root in range(P):
        if not np.isnan(out[root]) or not allowed[root]:
            continue
        out[root] = delta[root]
        members = [root]
        grow([root], members)
        members = np.array(members)
        k = round(float(np.median(out[members])) / (2 * math.pi))
        out[members] -= 2 * math.pi * k
    if first is not None:
        allowed[:] = True
        grow(list(np.flatnonzero(~np.isnan(out))), [])
        rest = np.isnan(out)
        if rest.any():
            out[rest] = _lift(delta[rest], *_restrict(start, nbr, rest))
    return out


def _restrict(start, nbr, keep):
    """Sub-graph on the nodes in ``keep`` (renumbered)."""
    loc = np.full(len(keep), -1, dtype=np.int64)
    loc[keep] = np.arange(int(keep.sum()))
    new_start = [0]
    cols = []
    for v in np.flatnonzero(keep):
        w = nbr[start[v]:start[v + 1]]
        w = loc[w[keep[w]]]
        cols.append(w)
        new_start.append(new_start[-1] + len(w))
    return np.array(new_start), np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)


def harmonic_extension(grid: GridSpec, values: np.ndarray, rtol: float = 1e-5, maxiter: int = 800) -> np.ndarray:
    """Discrete harmonic function on free nodes with ``values`` on the pinned ones."""
    free = grid.free
    free8 = free.astype(np.int8)
    fidx = np.flatnonzero(free)
    x = np.zeros(grid.n_nodes)
    x[grid.pinned] = values
    buf = np.empty(grid.n_nodes)
    kernels.laplace_apply(x, grid.plus, grid.minus, free8, buf)
    rhs = -buf[fidx]
    if not len(fidx) or not np.any(rhs):
        return x
    work = np.zeros(grid.n_nodes)

    def mv(v):
        work[:] = 0.0
        work[fidx] = v
        kernels.laplace_apply(work, grid.plus, grid.minus, free8, buf)
        return buf[fidx]

    A = LinearOperator((len(fidx), len(fidx)), matvec=mv, dtype=float)
    sol, info = cg(A, rhs, rtol=rtol, maxiter=maxiter)
    if info != 0:
        log.info("harmonic extension stopped after %d iterations", maxiter)
    x[fidx] = sol
    return x


def _phase_component(grid: GridSpec, ds, i: int, path: np.ndarray, X: np.ndarray) -> np.ndarray:
    curve = np.asarray(ds.curves[i])
    loop = _loop(path, curve)

    def phase(x, sign=1.0):
        return sign * 0.5 * loop_solid_angle(x, loop) + 0.5 * np.pi

    seg0 = ds.tubes[i][0].segment
    w = _winding_around(phase, seg0, 0.5 * ds.delta)
    if w == 0:
        raise RecoveryError(f"loop of component {i} does not wind around its reference curve")
    sign = 1.0 if w > 0 else -1.0
    theta = phase(X, sign)
    datum = grid.datum[i]
    theta_d = np.arctan2(datum[:, 1], datum[:, 0])
    mismatch = np.angle(np.exp(1j * (theta_d - theta[grid.pinned])))
    start, nbr = _pinned_graph(grid)
    # the mismatch winds around the points where lambda_i and the tube axes
    # meet the pinned layer, all next to terminals: lift away from them first
    # so the unavoidable 2*pi seams stay inside the tip regions
    tip = np.min(np.linalg.norm(X[grid.pinned][:, None] - ds.terminals.points[None], axis=-1), axis=1)
    lifted = _lift(mismatch, start, nbr, first=tip > TIP_CELLS * grid.h)
    return theta + harmonic_extension(grid, lifted)


def _literal_component(grid: GridSpec, ds, i: int, path: np.ndarray, X: np.ndarray, delta_in: float) -> np.ndarray:
    n = grid.n
    segs = [Segment(path[k], path[k + 1]) for k in range(len(path) - 1)]
    vals = np.zeros((len(X), n - 1))
    vals[:, -1] = 1.0
    best = np.full(len(X), np.inf)
    for sg in segs:
        tb = Tube(sg, delta_in, ds.gamma)
        d = sg.distance(X)
        bound = tb.radius_bound(X)
        # weight 1 inside the inner tube, 0 one cell outside
        s = np.clip((bound + grid.h - d) / grid.h, 0.0, 1.0)
        sel = (s > 0) & (d < best)
        if not sel.any():
            continue
        _, perp = transverse_coords(sg, X[sel])
        r = np.linalg.norm(perp, axis=1)
        unit = np.divide(perp, r[:, None], out=np.zeros_like(perp), where=r[:, None] > 0)
        e = np.zeros(n - 1)
        e[-1] = 1.0
        v = s[sel, None] * unit + (1 - s[sel, None]) * e
        nv = np.linalg.norm(v, axis=1)
        v = np.where(nv[:, None] > 1e-12, v / np.maximum(nv, 1e-300)[:, None], e)
        vals[sel] = v
        best[sel] = d[sel]
    return vals


def _axis_radii(a, b, delta, cone, step):
    k = max(2, int(math.ceil(np.linalg.norm(b - a) / step)) + 1)
    t = np.linspace(0.0, 1.0, k)[:, None]
    pts = a + t * (b - a)
    ends = np.minimum(np.linalg.norm(pts - a, axis=1), np.linalg.norm(pts - b, axis=1))
    return pts, np.minimum(delta, cone * ends)


def _inner_overlaps(net: MultiplicityCurrent, delta: float, gamma: float) -> bool:
    """Whether the cone-tapered inner tubes of two network edges can meet.

    Edges sharing a vertex overlap when they leave it at an angle of at most
    twice the cone half-angle; other pairs are compared through axis samples
    carrying the local tube radius.
    """
    half = math.atan(gamma)
    cone = gamma / math.sqrt(1.0 + gamma**2)
    E = list(net.edges())
    samples = [_axis_radii(a, b, delta, cone, 0.25 * delta) for a, b, _ in E]
    for x in range(len(E)):
        for y in range(x + 1, len(E)):
            a0, a1, _ = E[x]
            b0, b1, _ = E[y]
            shared = [(p, q, r, s) for p, q in ((a0, a1), (a1, a0)) for r, s in ((b0, b1), (b1, b0))
                      if np.linalg.norm(p - r) < 1e-9]
            if shared:
                p, q, r, s = shared[0]
                if _angle(q - p, s - r) <= 2 * half:
                    return True
                continue
            if _segment_distance(a0, a1, b0, b1) > 2 * delta:
                continue
            (P, rp), (Q, rq) = samples[x], samples[y]
            d = np.linalg.norm(P[:, None] - Q[None], axis=-1)
            if np.any(d < rp[:, None] + rq[None]):
                return True
    return False


def recovery_init(ds, grid: GridSpec, net: MultiplicityCurrent, eps: float, mode: str | None = None,
                  delta_inner: float | None = None) -> FieldState:
    """Field whose vortex lines follow the paths of ``net`` (see module docstring)."""
    ts = ds.terminals
    n = grid.n
    mode = mode or ("phase" if n == 3 else "literal")
    if mode == "phase" and n != 3:
        raise RecoveryError("phase construction is only available for n = 3")
    pts = sample_support(net, 0.25 * grid.h)
    near_t = np.min(np.linalg.norm(pts[:, None, :] - ts.points[None], axis=-1), axis=1) <= 2 * grid.h
    bad = ds.in_tubes(pts) & ~near_t
    if bad.any():
        raise RecoveryError(f"network meets the excised tubes at {int(bad.sum())} sample points")
    paths = paths_of(net, ts)
    X = grid.coords()
    K = ds.n_components
    u = np.empty((K, grid.n_nodes, n - 1))
    if mode == "literal":
        delta_in = delta_inner or min(0.5 * ds.delta, 4 * grid.h)
        if delta_in < 2 * grid.h:
            raise RecoveryError("inner tubes are thinner than two cells")
        if eps >= delta_in:
            raise RecoveryError(f"eps={eps} must be smaller than the inner tube radius {delta_in}")
        if _inner_overlaps(net, delta_in, ds.gamma):
            raise RecoveryError("inner tubes around distinct network edges overlap")
    for i in range(K):
        cut = np.minimum(1.0, polyline_distance(X, paths[i]) / eps)
        if mode == "phase":
            theta = _phase_component(grid, ds, i, paths[i], X)
            u[i, :, 0] = cut * np.cos(theta)
            u[i, :, 1] = cut * np.sin(theta)
        elif mode == "literal":
            u[i] = cut[:, None] * _literal_component(grid, ds, i, paths[i], X, delta_in)
        else:
            raise ValueError(f"unknown recovery mode {mode!r}")
    fs = FieldState(grid, u, eps)
    fs.apply_pinned()
    return fs


def random_init(grid: GridSpec, eps: float, seed: int = 0) -> FieldState:
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((grid.n_components, grid.n_nodes, grid.n - 1))
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    fs = FieldState(grid, u, eps)
    fs.apply_pinned()
    return fs
