"""Vortex-line networks from lattice fields (n = 3).

The winding number of ``u/|u|`` around a grid plaquette is the discrete flux
of the Jacobian through it.  Pierced plaquettes link the centres of the two
cubes they separate; following these links gives one polyline per component,
which are then glued into a network with multiplicity vectors.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .currents import (AcyclicGraph, CurrentError, MultiplicityCurrent, PsiNorm, boundaries_equal,
                       boundary_of, current_from_graph, hausdorff, prescribed_boundary, psi_mass,
                       sample_support)

SINGULAR_TOL = 1e-6
SMOOTH_PASSES = 20
TWO_PI = 2.0 * math.pi


class ExtractionError(RuntimeError):
    pass


def _wrap(d):
    """Angle differences wrapped to [-pi, pi].

    Rounding half to even keeps the map odd, so an edge gets opposite values
    in the two faces sharing it even at an exact half turn.
    """
    return d - TWO_PI * np.rint(d / TWO_PI)


# --------------------------------------------------------------------------
# Plaquette windings
# --------------------------------------------------------------------------


def _dense_component(fs, i: int):
    g = fs.grid
    if g.n != 3:
        raise ValueError("vortex extraction is implemented for n = 3 only")
    U = g.dense(fs.u[i])
    active = ~np.isnan(U[..., 0])
    U = np.where(active[..., None], U, 0.0)
    return U, active


def _cyc(a):
    return (a + 1) % 3, (a + 2) % 3


def _shift(A, axis, k=1):
    """``A[x + k e_axis]`` on the common range (leading slice)."""
    sl = [slice(None)] * A.ndim
    sl[axis] = slice(k, None)
    return A[tuple(sl)]


def _trim(A, axes):
    sl = [slice(None)] * A.ndim
    for ax in axes:
        sl[ax] = slice(0, A.shape[ax] - 1)
    return A[tuple(sl)]


def _face_windings(theta, ok, a):
    """Windings of faces with normal ``+e_a``; indexed by their lowest corner."""
    b, c = _cyc(a)
    t00 = _trim(theta, (b, c))
    t10 = _trim(_shift(theta, b), (c,))
    t11 = _shift(_shift(theta, b), c)
    t01 = _trim(_shift(theta, c), (b,))
    s = _wrap(t10 - t00) + _wrap(t11 - t10) + _wrap(t01 - t11) + _wrap(t00 - t01)
    o00 = _trim(ok, (b, c))
    o10 = _trim(_shift(ok, b), (c,))
    o11 = _shift(_shift(ok, b), c)
    o01 = _trim(_shift(ok, c), (b,))
    return np.rint(s / TWO_PI).astype(np.int16), o00 & o10 & o11 & o01


@dataclass
class WindingField:
    """Per component and axis: integer windings, validity and singular flags of faces."""

    h: float
    origin: np.ndarray
    dims: tuple
    windings: list  # windings[i][a]: int16 array
    valid: list  # all four corners active
    singular: list  # valid but some corner has |u| < SINGULAR_TOL
    active: np.ndarray

    @property
    def n_components(self) -> int:
        return len(self.windings)

    def pierced(self, i: int):
        """(axis, lowest-corner index, winding) of every nonzero face of component ``i``."""
        out = []
        for a in range(3):
            w = np.where(self.valid[i][a], self.windings[i][a], 0)
            for idx in np.argwhere(w != 0):
                out.append((a, tuple(int(v) for v in idx), int(w[tuple(idx)])))
        return out

    def cube_divergence(self, i: int):
        """Outward winding sums of cubes whose 8 corners are active; flags cubes touching singular faces."""
        A = self.active
        full = A.copy()
        for (dx, dy, dz) in np.ndindex(2, 2, 2):
            full_shift = A[dx:A.shape[0] - 1 + dx, dy:A.shape[1] - 1 + dy, dz:A.shape[2] - 1 + dz]
            if (dx, dy, dz) == (0, 0, 0):
                full = full_shift.copy()
            else:
                full &= full_shift
        div = np.zeros(full.shape, dtype=np.int32)
        flagged = np.zeros(full.shape, dtype=bool)
        for a in range(3):
            b, c = _cyc(a)
            W = self.windings[i][a].astype(np.int32)
            S = self.singular[i][a]
            lo = _trim(W, (a,))
            hi = _shift(W, a)
            lo, hi = _crop(lo, full.shape), _crop(hi, full.shape)
            div += hi - lo
            flagged |= _crop(_trim(S, (a,)), full.shape) | _crop(_shift(S, a), full.shape)
        return div, full, flagged

    def divergence_free_fraction(self, i: int) -> float:
        div, full, flagged = self.cube_divergence(i)
        sel = full & ~flagged
        if not sel.any():
            return 1.0
        return float(np.mean(div[sel] == 0))

    def plane_flux(self, i: int, axis: int, index: int) -> int:
        """Total winding through the grid plane ``x_axis = index`` (valid faces only)."""
        W = np.where(self.valid[i][axis], self.windings[i][axis], 0)
        sl = [slice(None)] * 3
        sl[axis] = index
        return int(W[tuple(sl)].sum())


def _crop(A, shape):
    return A[tuple(slice(0, s) for s in shape)]


def _angles(U, active):
    """Angles of ``u`` per node; nodes with ``|u| < SINGULAR_TOL`` take the angle of their neighbour mean.

    Any node-wise angle assignment gives divergence-free windings, so the
    substitute only decides which neighbouring cell receives the core.
    """
    r = np.hypot(U[..., 0], U[..., 1])
    sing = active & (r < SINGULAR_TOL)
    V = U
    if sing.any():
        nb = np.zeros_like(U)
        for a in range(U.ndim - 1):
            for k in (1, -1):
                sh = np.roll(U * active[..., None], k, axis=a)
                edge = [slice(None)] * (U.ndim - 1)
                edge[a] = 0 if k == 1 else -1
                sh[tuple(edge)] = 0.0
                nb += sh
        V = np.where(sing[..., None], nb, U)
    return np.arctan2(V[..., 1], V[..., 0]), sing


def winding_field(fs) -> WindingField:
    g = fs.grid
    ws, vs, ss = [], [], []
    active = None
    for i in range(fs.K):
        U, active = _dense_component(fs, i)
        theta, sing = _angles(U, active)
        wi, vi, si = [], [], []
        for a in range(3):
            w, valid = _face_windings(theta, active, a)
            _, regular = _face_windings(theta, active & ~sing, a)
            wi.append(np.where(valid, w, 0).astype(np.int16))
            vi.append(valid)
            si.append(valid & ~regular)
        ws.append(wi)
        vs.append(vi)
        ss.append(si)
    return WindingField(g.h, g.origin.copy(), tuple(g.dims), ws, vs, ss, active)


def plaquette_winding(fs, i: int, face) -> int:
    """Winding of component ``i`` around ``face = (axis, (ix, iy, iz))`` (lowest corner).

    Corners are visited counter-clockwise seen from the positive normal.
    Raises ``ExtractionError`` if a corner is excluded.  Corners with
    ``|u| < 1e-6`` use the angle of the mean of their active neighbours.
    """
    a, x0 = face
    b, c = _cyc(a)
    g = fs.grid
    idx = g.index_map()
    th = []
    for db, dc in ((0, 0), (1, 0), (1, 1), (0, 1)):
        x = list(x0)
        x[b] += db
        x[c] += dc
        if not all(0 <= x[k] < g.dims[k] for k in range(3)):
            raise ExtractionError("face outside the grid")
        m = idx[tuple(x)]
        if m < 0:
            raise ExtractionError("face has an excluded corner")
        v = fs.u[i, m]
        if np.hypot(v[0], v[1]) < SINGULAR_TOL:
            v = np.zeros(2)
            for ax in range(3):
                for k in (1, -1):
                    y = list(x)
                    y[ax] += k
                    if 0 <= y[ax] < g.dims[ax] and idx[tuple(y)] >= 0:
                        v = v + fs.u[i, idx[tuple(y)]]
        th.append(math.atan2(v[1], v[0]))
    th = np.array(th)
    return int(round(_wrap(np.roll(th, -1) - th).sum() / TWO_PI))


# --------------------------------------------------------------------------
# Threading vortex lines
# --------------------------------------------------------------------------


def _face_center(a, idx, h, origin):
    c = np.asarray(idx, dtype=float) + 0.5
    c[a] -= 0.5
    return origin + h * c


def _cube_center(cube, h, origin):
    return origin + h * (np.asarray(cube, dtype=float) + 0.5)


def thread_lines(wf: WindingField, i: int):
    """Chains of cube centres for component ``i``.

    Returns ``(chains, closed)`` where every chain is a list of cube indices in
    flow order and ``closed`` tells whether it is a loop.
    """
    out_faces: dict[tuple, list] = {}
    indeg: dict[tuple, int] = {}
    fid = 0
    faces = []
    for a, idx, w in wf.pierced(i):
        lo = list(idx)
        lo[a] -= 1
        lo = tuple(lo)
        hi = tuple(idx)
        src, dst = (lo, hi) if w > 0 else (hi, lo)
        for _ in range(abs(w)):
            faces.append((src, dst, a, idx, fid))
            out_faces.setdefault(src, []).append(len(faces) - 1)
            indeg[dst] = indeg.get(dst, 0) + 1
            fid += 1
    used = np.zeros(len(faces), dtype=bool)
    h, origin = wf.h, wf.origin

    def next_face(cube, came_from):
        cand = [k for k in out_faces.get(cube, []) if not used[k]]
        if not cand:
            return None
        if came_from is None or len(cand) == 1:
            return cand[0]
        fc = _face_center(faces[came_from][2], faces[came_from][3], h, origin)
        dist = [np.linalg.norm(_face_center(faces[k][2], faces[k][3], h, origin) - fc) for k in cand]
        return cand[int(np.argmin(dist))]

    def walk(start):
        chain = [start]
        came = None
        cube = start
        while True:
            k = next_face(cube, came)
            if k is None:
                break
            used[k] = True
            cube = faces[k][1]
            came = k
            chain.append(cube)
            if cube == start:
                break
        return chain

    chains = []
    cubes = sorted(set(out_faces) | set(indeg))
    for cube in cubes:
        surplus = len(out_faces.get(cube, [])) - indeg.get(cube, 0)
        for _ in range(max(0, surplus)):
            chains.append((walk(cube), False))
    for k in range(len(faces)):
        if not used[k]:
            chains.append((walk(faces[k][0]), True))
    return chains


# --------------------------------------------------------------------------
# Network assembly
# --------------------------------------------------------------------------


@dataclass
class ExtractedNetwork:
    network: MultiplicityCurrent
    polylines: list  # per component: list of point arrays (source -> sink)
    endpoint_tags: list  # per component: list of (start_tag, end_tag)
    h: float
    divergence_free: list = field(default_factory=list)
    singular_faces: int = 0
    unresolved: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    closed_loops: int = 0
    dropped_loops: int = 0

    @property
    def boundary_match(self) -> bool:
        return "boundary mismatch" not in self.errors

    def to_json(self) -> dict:
        doc = self.network.to_json()
        doc["diagnostics"] = {
            "h": self.h,
            "divergence_free_fraction": self.divergence_free,
            "singular_faces": self.singular_faces,
            "unresolved": [list(map(float, p)) for p in self.unresolved],
            "errors": self.errors,
            "closed_loops": self.closed_loops,
            "dropped_loops": self.dropped_loops,
            "endpoint_tags": self.endpoint_tags,
        }
        return doc


def _terminal_tag(p, terminals, tol):
    d = np.linalg.norm(terminals - p, axis=1)
    k = int(np.argmin(d))
    return k if d[k] <= tol else None


def _on_wall(cube, active) -> bool:
    """Whether some corner of ``cube`` is excluded (or lies outside the grid)."""
    sl = tuple(slice(c, c + 2) for c in cube)
    block = active[sl]
    return bool(min(cube) < 0 or block.size < 8 or not block.all())


def _simple(ids):
    """Drop consecutive repeats and excise loops so every node appears once."""
    out = []
    pos = {}
    for v in ids:
        if out and out[-1] == v:
            continue
        if v in pos:
            cut = pos[v]
            for w in out[cut + 1:]:
                pos.pop(w, None)
            out = out[:cut + 1]
            continue
        pos[v] = len(out)
        out.append(v)
    return out


class _Glue:
    """Growing point graph onto which later component paths are snapped."""

    def __init__(self, terminals, tol):
        self.pts = [p.copy() for p in terminals]
        self.adj: list[set] = [set() for _ in terminals]
        self.tol = tol
        self.n_term = len(terminals)

    def add(self, p) -> int:
        self.pts.append(np.array(p, dtype=float))
        self.adj.append(set())
        return len(self.pts) - 1

    def link(self, a, b):
        if a != b:
            self.adj[a].add(b)
            self.adj[b].add(a)

    def bfs(self, a, b, limit):
        prev = {a: None}
        dq = deque([a])
        while dq:
            v = dq.popleft()
            if v == b:
                break
            for w in self.adj[v]:
                if w not in prev:
                    prev[w] = v
                    dq.append(w)
        if b not in prev:
            return None
        path = [b]
        while prev[path[-1]] is not None:
            path.append(prev[path[-1]])
        path.reverse()
        return path if len(path) <= limit else None

    def snap_path(self, points, own_terminal_ids):
        """Map a polyline onto the graph; returns node ids."""
        existing = np.array(self.pts)
        tree = cKDTree(existing)
        n_old = len(existing)
        ids = []
        for k, p in enumerate(points):
            if k in own_terminal_ids:
                ids.append(own_terminal_ids[k])
                continue
            d, j = tree.query(p)
            if d <= self.tol and j >= self.n_term:
                ids.append(int(j))
            else:
                ids.append(self.add(p))
        out = [ids[0]]
        for b in ids[1:]:
            a = out[-1]
            if a < n_old and b < n_old and a != b and b not in self.adj[a]:
                path = self.bfs(a, b, limit=8)
                if path is not None:
                    out.extend(path[1:])
                    continue
            out.append(b)
        out = _simple(out)
        for a, b in zip(out[:-1], out[1:]):
            self.link(a, b)
        return out


def _douglas_peucker(P: np.ndarray, tol: float) -> np.ndarray:
    """Indices of the vertices kept by Ramer-Douglas-Peucker simplification."""
    keep = np.zeros(len(P), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(P) - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        a, b = P[i], P[j]
        d = b - a
        L2 = float(d @ d)
        Q = P[i + 1:j] - a
        if L2 > 0:
            t = np.clip(Q @ d / L2, 0.0, 1.0)
            dist = np.linalg.norm(Q - t[:, None] * d, axis=1)
        else:
            dist = np.linalg.norm(Q, axis=1)
        k = int(np.argmax(dist))
        if dist[k] > tol:
            m = i + 1 + k
            keep[m] = True
            stack.append((i, m))
            stack.append((m, j))
    return np.flatnonzero(keep)


def _smooth(P: np.ndarray, passes: int) -> np.ndarray:
    """(1, 2, 1)/4 averaging of interior vertices; removes lattice staircases."""
    P = P.copy()
    if len(P) < 3:
        return P
    for _ in range(passes):
        P[1:-1] = 0.25 * (P[:-2] + 2.0 * P[1:-1] + P[2:])
    return P


def _simplified_edges(labels: dict, glue: "_Glue", n_term: int, tol: float, passes: int = SMOOTH_PASSES):
    """Smooth and straighten runs of equally labelled edges; returns (edges, kept node ids)."""
    inc: dict[int, list] = {}
    for key in labels:
        inc.setdefault(key[0], []).append(key)
        inc.setdefault(key[1], []).append(key)
    junction = set(range(n_term))
    for v, ks in inc.items():
        if len(ks) != 2:
            junction.add(v)
            continue
        r0, r1 = labels[ks[0]], labels[ks[1]]
        into = r0["g"] if r0["head"] == v else -r0["g"]
        out = r1["g"] if r1["tail"] == v else -r1["g"]
        if not np.array_equal(into, out):
            junction.add(v)
    kept = set(junction)
    edges = []
    seen = set()

    def run_from(v, key):
        nodes = [v]
        while True:
            seen.add(key)
            w = key[1] if key[0] == nodes[-1] else key[0]
            nodes.append(w)
            if w in junction or w == nodes[0]:
                return nodes
            nxt = [k for k in inc[w] if k != key]
            key = nxt[0]

    def emit(nodes, first_key):
        rec = labels[first_key]
        gvec = rec["g"] if rec["tail"] == nodes[0] else -rec["g"]
        P = _smooth(np.array([glue.pts[v] for v in nodes]), passes)
        idx = _douglas_peucker(P, tol)
        if nodes[0] == nodes[-1] and len(idx) < 4:
            idx = np.unique(np.r_[idx, len(nodes) // 3, (2 * len(nodes)) // 3])
        for k in idx:
            kept.add(nodes[k])
            glue.pts[nodes[k]] = P[k]
        for k0, k1 in zip(idx[:-1], idx[1:]):
            edges.append((P[k0], P[k1], gvec.copy()))

    for v in sorted(junction):
        for key in sorted(inc.get(v, [])):
            if key not in seen:
                emit_nodes = run_from(v, key)
                emit(emit_nodes, key)
    for key in sorted(labels):
        if key not in seen:
            # cycle without junctions
            v = key[0]
            junction.add(v)
            emit(run_from(v, key), key)
    return edges, kept


def extract_network(fs, merge_tol: float | None = None, snap_tol: float | None = None,
                    simplify_tol: float | None = None, strict: bool = False,
                    max_unresolved: float = 0.01) -> ExtractedNetwork:
    """Vortex-line network of a minimised (or recovery) field on a tube-excised grid."""
    g = fs.grid
    ds = g.domain
    if ds is None:
        raise ExtractionError("field grid carries no domain (terminals unknown)")
    ts = ds.terminals
    h = g.h
    merge_tol = 2 * h if merge_tol is None else merge_tol
    snap_tol = 3 * h if snap_tol is None else snap_tol
    simplify_tol = 0.5 * h if simplify_tol is None else simplify_tol
    tip_tol = 2 * snap_tol
    wf = winding_field(fs)
    K = fs.K
    div_ok = [wf.divergence_free_fraction(i) for i in range(K)]
    singular = int(sum(s.sum() for si in wf.singular for s in si))
    unresolved = []
    for i in range(K):
        div, full, flagged = wf.cube_divergence(i)
        bad = np.argwhere(full & ~flagged & (div != 0))
        unresolved.extend(_cube_center(c, h, wf.origin) for c in bad)
        n_cubes = max(1, int((full & ~flagged).sum()))
        if len(bad) > max_unresolved * n_cubes:
            raise ExtractionError(f"{len(bad)} unresolved cubes in component {i}")

    polylines, tags, errors = [], [], []
    closed = dropped = 0
    sink = ts.N - 1
    for i in range(K):
        lines, ltags = [], []
        for chain, is_closed in thread_lines(wf, i):
            pts = np.array([_cube_center(c, h, wf.origin) for c in chain])
            # ends resting on a tube wall may sit further out, where the tubes
            # meeting at a terminal are packed closer than the lattice resolves
            s_tol = tip_tol if not is_closed and _on_wall(chain[0], wf.active) else snap_tol
            e_tol = tip_tol if not is_closed and _on_wall(chain[-1], wf.active) else snap_tol
            s_tag = _terminal_tag(pts[0], ts.points, s_tol)
            e_tag = _terminal_tag(pts[-1], ts.points, e_tol)
            if (is_closed or (s_tag is not None and s_tag == e_tag)) \
                    and np.max(np.linalg.norm(pts - pts[0], axis=1)) <= 2 * snap_tol:
                # core smear at a tube tip or a tiny ring: no net flux, no mass worth keeping
                dropped += 1
                continue
            if is_closed:
                closed += 1
                lines.append(pts)
                ltags.append(("loop", "loop"))
                continue
            # orient every line from its source towards the sink
            if s_tag == sink and e_tag != sink:
                pts, s_tag, e_tag = pts[::-1], e_tag, s_tag
            if s_tag is not None:
                pts = np.vstack([ts.points[s_tag], pts])
            if e_tag is not None:
                pts = np.vstack([pts, ts.points[e_tag]])
            lines.append(pts)
            ltags.append((s_tag if s_tag is not None else "dangling", e_tag if e_tag is not None else "dangling"))
        polylines.append(lines)
        tags.append(ltags)

    glue = _Glue(ts.points, merge_tol)
    comp_lines = []
    main_path = {}
    for i in range(K):
        best = None
        for pts, tg in zip(polylines[i], tags[i]):
            if tg == (i, sink):
                best = pts if best is None or len(pts) < len(best) else best
        for pts, tg in zip(polylines[i], tags[i]):
            own = {}
            if isinstance(tg[0], int):
                own[0] = tg[0]
            if isinstance(tg[1], int):
                own[len(pts) - 1] = tg[1]
            ids = glue.snap_path(pts, own)
            if pts is best:
                main_path[i] = ids
            comp_lines.append((i, ids, tg == ("loop", "loop")))
        if best is None:
            errors.append(f"component {i + 1}: no line from its source to the sink")

    labels: dict[tuple, dict] = {}
    for i, ids, closed_line in comp_lines:
        seq = ids + [ids[0]] if closed_line else ids
        for a, b in zip(seq[:-1], seq[1:]):
            if a == b:
                continue
            key = (min(a, b), max(a, b))
            rec = labels.setdefault(key, {"tail": a, "head": b, "g": np.zeros(K, dtype=np.int64)})
            rec["g"][i] += 1 if rec["tail"] == a else -1
    labels = {k: r for k, r in labels.items() if r["g"].any()}
    edges, kept = _simplified_edges(labels, glue, ts.N, simplify_tol)
    net = MultiplicityCurrent.from_edges(ts.N, edges) if edges else MultiplicityCurrent.empty(ts.N, 3)

    # canonical form when every component is a clean source -> sink path
    if len(main_path) == K and closed == 0 and all(len(polylines[i]) == 1 for i in range(K)):
        try:
            paths = [np.array([glue.pts[v] for v in main_path[i] if v in kept]) for i in range(K)]
            net = current_from_graph(AcyclicGraph(ts, paths))
        except CurrentError as exc:
            errors.append(f"not an acyclic graph: {exc}")
    else:
        net = net.sorted()
    if not boundaries_equal(boundary_of(net), prescribed_boundary(ts)):
        errors.append("boundary mismatch")
    out = ExtractedNetwork(net, polylines, tags, h, div_ok, singular, unresolved, errors, closed, dropped)
    if strict and errors:
        raise ExtractionError("; ".join(errors))
    return out


# --------------------------------------------------------------------------
# Comparison and export
# --------------------------------------------------------------------------


@dataclass
class Comparison:
    mass_gap: float
    hausdorff: float
    boundary_match: bool
    topology_match: bool | None = None

    def to_json(self) -> dict:
        return {"mass_gap": self.mass_gap, "hausdorff": self.hausdorff,
                "boundary_match": self.boundary_match, "topology_match": self.topology_match}


def label_signature(net: MultiplicityCurrent, tol: float = 1e-9):
    """Sorted ``(label, pieces)``: how many connected runs carry each multiplicity vector."""
    out = {}
    for lab in sorted({tuple(int(v) for v in g) for g in net.g}):
        sel = np.array([tuple(g) == lab for g in net.g])
        A, B = net.a[sel], net.b[sel]
        P = np.vstack([A, B])
        parent = list(range(len(P)))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        m = len(A)
        for k in range(m):
            parent[find(k)] = find(k + m)
        tree = cKDTree(P)
        for x, y in tree.query_pairs(max(tol, 1e-12)):
            parent[find(x)] = find(y)
        out[lab] = len({find(k) for k in range(len(P))})
    return sorted(out.items())


def compare_networks(a, b: MultiplicityCurrent, psi: PsiNorm, step: float | None = None) -> Comparison:
    """(relative Psi-mass gap, Hausdorff distance of supports, boundary match, label match)."""
    net = a.network if isinstance(a, ExtractedNetwork) else a
    if net.N != b.N:
        raise ValueError("networks have different N")
    mb = psi_mass(b, psi)
    ma = psi_mass(net, psi)
    gap = abs(ma - mb) / mb if mb > 0 else (0.0 if ma == 0 else math.inf)
    if step is None:
        step = 0.25 * (a.h if isinstance(a, ExtractedNetwork) else 0.01)
    dh = hausdorff(sample_support(net, step), sample_support(b, step))
    bm = boundaries_equal(boundary_of(net, 1e-6), boundary_of(b, 1e-6), tol=1e-6)
    topo = label_signature(net, 1e-6) == label_signature(b, 1e-6)
    return Comparison(float(gap), float(dh), bool(bm), bool(topo))


def export_obj(net: MultiplicityCurrent, path) -> None:
    """Wavefront OBJ with one ``l`` record per edge (edges in sorted order)."""
    net = net.sorted()
    with open(path, "w") as fh:
        fh.write(f"# N {net.N}\n")
        for a, b, g in net.edges():
            fh.write("v " + " ".join(f"{v:.17g}" for v in a) + "\n")
            fh.write("v " + " ".join(f"{v:.17g}" for v in b) + "\n")
        for k, (_, _, g) in enumerate(net.edges()):
            fh.write(f"# g {' '.join(str(int(x)) for x in g)}\n")
            fh.write(f"l {2 * k + 1} {2 * k + 2}\n")


def export_network(net: MultiplicityCurrent, path, format: str = "json") -> None:
    """Write ``net`` as currents JSON or Wavefront OBJ."""
    if format == "obj":
        export_obj(net, path)
    elif format == "json":
        with open(path, "w") as fh:
            json.dump(net.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")
    else:
        raise ValueError(f"unsupported format {format!r}")


def export_winding_voxels(path, wf: WindingField, i: int) -> None:
    """ASCII voxels: per node, the summed |winding| of the three faces at that corner."""
    nx, ny, nz = wf.dims
    vol = np.zeros((nx, ny, nz), dtype=np.int64)
    for a in range(3):
        W = np.abs(wf.windings[i][a]).astype(np.int64)
        vol[:W.shape[0], :W.shape[1], :W.shape[2]] += W
    with open(path, "w") as fh:
        fh.write(f"{nx} {ny} {nz} {wf.h!r}\n")
        fh.write("\n".join(map(str, vol.transpose(2, 1, 0).ravel().tolist())))
        fh.write("\n")


def supercurrent(fs, i: int) -> np.ndarray:
    """``j(u) = u^1 D u^2 - u^2 D u^1`` per active node (forward differences), shape (M, 3)."""
    g = fs.grid
    u = fs.u[i]
    out = np.empty((g.n_nodes, g.n))
    for a in range(g.n):
        d = (u[g.plus[a]] - u[g.minus[a]]) / g.h
        out[:, a] = u[:, 0] * d[:, 1] - u[:, 1] * d[:, 0]
    return out
