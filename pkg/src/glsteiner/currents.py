"""Polyhedral 1-currents with vector multiplicities and their Psi-masses.

A network is stored as oriented segments, each carrying an integer vector
``g`` in Z^{N-1}: component ``i`` of the current runs along every edge with
``g_i != 0`` with multiplicity ``g_i``.  For Gilbert-Steiner networks the
entries are 0/1 and ``g_i = 1`` marks the edges on the path from source
``P_i`` to the sink.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

COINCIDENCE_TOL = 1e-9


class CurrentError(ValueError):
    """Raised for inputs that do not describe an admissible network."""


@dataclass(frozen=True)
class PsiNorm:
    """The l^{1/alpha} norm on multiplicity vectors (l^inf at alpha = 0)."""

    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    @property
    def p(self) -> float:
        return math.inf if self.alpha == 0 else 1.0 / self.alpha

    @property
    def q(self) -> float:
        """Conjugate exponent of ``p``."""
        if self.alpha == 0:
            return 1.0
        if self.alpha == 1:
            return math.inf
        return 1.0 / (1.0 - self.alpha)

    def __call__(self, g) -> float | np.ndarray:
        return _lp(np.asarray(g, dtype=float), self.p)

    def dual(self, y) -> float | np.ndarray:
        return _lp(np.asarray(y, dtype=float), self.q)

    def dual_aligned(self, g) -> np.ndarray:
        """A vector ``y`` with ``dual(y) = 1`` and ``<g, y> = Psi(g)`` (g != 0)."""
        g = np.asarray(g, dtype=float)
        a = np.abs(g)
        if not np.any(a > 0):
            return np.zeros_like(g)
        if self.alpha == 0:
            y = np.zeros_like(g)
            k = int(np.argmax(a))
            y[k] = np.sign(g[k])
            return y
        if self.alpha == 1:
            return np.sign(g)
        p = self.p
        y = np.sign(g) * a ** (p - 1)
        return y / _lp(y, self.q)


def _lp(x: np.ndarray, p: float):
    a = np.abs(x)
    if p == math.inf:
        return a.max(axis=-1) if a.shape[-1] else 0.0
    if p == 1:
        return a.sum(axis=-1)
    m = a.max(axis=-1, keepdims=True) if a.shape[-1] else np.zeros(a.shape[:-1] + (1,))
    safe = np.where(m > 0, m, 1.0)
    out = safe[..., 0] * ((a / safe) ** p).sum(axis=-1) ** (1.0 / p)
    return np.where(m[..., 0] > 0, out, 0.0)


def psi_norm(psi: PsiNorm, g) -> float:
    return float(psi(g))


def psi_dual(psi: PsiNorm, y) -> float:
    return float(psi.dual(y))


# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MultiplicityCurrent:
    """Edges ``a[k] -> b[k]`` with integer multiplicity vectors ``g[k]``."""

    N: int
    a: np.ndarray
    b: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        if self.N < 2:
            raise CurrentError("N must be at least 2")
        a = np.atleast_2d(np.array(self.a, dtype=float))
        b = np.atleast_2d(np.array(self.b, dtype=float))
        g = np.array(self.g, dtype=np.int64).reshape(-1, self.N - 1)
        if len(a) == 0 or a.size == 0:
            n = a.shape[1] if a.ndim == 2 and a.shape[1] else 0
            a = np.zeros((0, n))
            b = np.zeros((0, n))
            g = np.zeros((0, self.N - 1), dtype=np.int64)
        if not (len(a) == len(b) == len(g)):
            raise CurrentError("edge arrays have inconsistent lengths")
        keep = np.any(g != 0, axis=1) & (np.linalg.norm(b - a, axis=1) > COINCIDENCE_TOL)
        for name, arr in (("a", a[keep]), ("b", b[keep]), ("g", g[keep])):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def empty(cls, N: int, n: int = 3) -> "MultiplicityCurrent":
        return cls(N, np.zeros((0, n)), np.zeros((0, n)), np.zeros((0, N - 1), dtype=int))

    @classmethod
    def from_edges(cls, N: int, edges: Iterable) -> "MultiplicityCurrent":
        edges = list(edges)
        if not edges:
            return cls.empty(N)
        a, b, g = zip(*edges)
        return cls(N, np.array(a), np.array(b), np.array(g))

    @property
    def n(self) -> int:
        return self.a.shape[1]

    def __len__(self) -> int:
        return len(self.a)

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.b - self.a, axis=1)

    @property
    def directions(self) -> np.ndarray:
        return (self.b - self.a) / self.lengths[:, None]

    def edges(self):
        for k in range(len(self)):
            yield self.a[k], self.b[k], self.g[k]

    def __add__(self, other: "MultiplicityCurrent") -> "MultiplicityCurrent":
        if other.N != self.N:
            raise CurrentError("cannot add currents with different N")
        if not len(self):
            return other
        if not len(other):
            return self
        return MultiplicityCurrent(self.N, np.vstack([self.a, other.a]), np.vstack([self.b, other.b]),
                                   np.vstack([self.g, other.g]))

    def component(self, i: int) -> "MultiplicityCurrent":
        sel = self.g[:, i] != 0
        return MultiplicityCurrent(self.N, self.a[sel], self.b[sel], self.g[sel])

    def transformed(self, rotation=None, scale: float = 1.0, shift=None) -> "MultiplicityCurrent":
        def f(x):
            if rotation is not None:
                x = x @ np.asarray(rotation).T
            x = x * scale
            if shift is not None:
                x = x + np.asarray(shift)
            return x

        return MultiplicityCurrent(self.N, f(self.a), f(self.b), self.g)

    def subdivided(self, pieces: int) -> "MultiplicityCurrent":
        """Split every edge into ``pieces`` equal collinear edges."""
        if pieces < 1:
            raise ValueError("pieces must be >= 1")
        t = np.linspace(0.0, 1.0, pieces + 1)
        a = (self.a[:, None, :] + t[None, :-1, None] * (self.b - self.a)[:, None, :]).reshape(-1, self.n)
        b = (self.a[:, None, :] + t[None, 1:, None] * (self.b - self.a)[:, None, :]).reshape(-1, self.n)
        return MultiplicityCurrent(self.N, a, b, np.repeat(self.g, pieces, axis=0))

    def sorted(self) -> "MultiplicityCurrent":
        """Edges in lexicographic order of their midpoints (then of ``g``)."""
        if not len(self):
            return self
        mid = 0.5 * (self.a + self.b)
        keys = [tuple(g) for g in self.g[:, ::-1].T] + [m for m in mid[:, ::-1].T]
        order = np.lexsort(keys)
        return MultiplicityCurrent(self.N, self.a[order], self.b[order], self.g[order])

    def vertices(self, tol: float = COINCIDENCE_TOL) -> np.ndarray:
        return _unique_points(np.vstack([self.a, self.b]) if len(self) else np.zeros((0, self.n)), tol)

    # ---- serialisation ----

    def to_json(self) -> dict:
        net = self.sorted()
        return {
            "N": int(self.N),
            "edges": [
                {"a": [_f17(v) for v in a], "b": [_f17(v) for v in b], "g": [int(v) for v in g]}
                for a, b, g in net.edges()
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MultiplicityCurrent":
        try:
            N = int(doc["N"])
            edges = [(e["a"], e["b"], e["g"]) for e in doc["edges"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise CurrentError(f"malformed network document: {exc}") from exc
        if not edges:
            return cls.empty(N)
        return cls.from_edges(N, edges)


def _f17(v: float) -> float:
    return float(f"{v:.17g}")


def dumps_network(net: MultiplicityCurrent, extra: dict | None = None) -> str:
    doc = net.to_json()
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=1, sort_keys=True)


def _unique_points(pts: np.ndarray, tol: float) -> np.ndarray:
    out: list[np.ndarray] = []
    for p in pts:
        if not any(np.linalg.norm(p - q) <= tol for q in out):
            out.append(p)
    return np.array(out) if out else np.zeros((0, pts.shape[1]))


def psi_mass(c: MultiplicityCurrent, psi: PsiNorm) -> float:
    """Sum over edges of length times ``Psi(g)``."""
    if not len(c):
        return 0.0
    return float(np.sum(c.lengths * psi(c.g)))


def boundary_of(c: MultiplicityCurrent, tol: float = COINCIDENCE_TOL) -> list[list[tuple[np.ndarray, int]]]:
    """Per component, the nonzero point masses ``(point, weight)`` of the boundary.

    Each edge contributes ``+g_i`` at its head and ``-g_i`` at its tail; points
    closer than ``tol`` are merged.  Points are listed in lexicographic order.
    """
    out = []
    for i in range(c.N - 1):
        pts: list[np.ndarray] = []
        wts: list[int] = []
        for a, b, g in c.edges():
            w = int(g[i])
            if w == 0:
                continue
            for p, s in ((b, w), (a, -w)):
                for k, q in enumerate(pts):
                    if np.linalg.norm(p - q) <= tol:
                        wts[k] += s
                        break
                else:
                    pts.append(p.copy())
                    wts.append(s)
        comp = [(p, w) for p, w in zip(pts, wts) if w != 0]
        comp.sort(key=lambda pw: tuple(pw[0]))
        out.append(comp)
    return out


def prescribed_boundary(terminals) -> list[list[tuple[np.ndarray, int]]]:
    """``delta_{P_N} - delta_{P_i}`` per component, in the format of ``boundary_of``."""
    pts = terminals.points
    out = []
    for i in range(len(pts) - 1):
        comp = [(pts[i].copy(), -1), (pts[-1].copy(), 1)]
        comp.sort(key=lambda pw: tuple(pw[0]))
        out.append(comp)
    return out


def boundaries_equal(b1, b2, tol: float = COINCIDENCE_TOL) -> bool:
    if len(b1) != len(b2):
        return False
    for c1, c2 in zip(b1, b2):
        if len(c1) != len(c2):
            return False
        for p, w in c1:
            if not any(np.linalg.norm(p - q) <= tol and w == v for q, v in c2):
                return False
    return True


# --------------------------------------------------------------------------
# Acyclic graphs -> canonical currents
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AcyclicGraph:
    """Union of N-1 polylines, ``paths[i]`` running from source ``P_i`` to the sink."""

    terminals: object
    paths: tuple

    def __post_init__(self):
        paths = tuple(np.array(p, dtype=float) for p in self.paths)
        if len(paths) != self.terminals.N - 1:
            raise CurrentError("need one path per source")
        for i, p in enumerate(paths):
            if p.ndim != 2 or len(p) < 2:
                raise CurrentError(f"path {i} must have at least two vertices")
            if np.linalg.norm(p[0] - self.terminals.points[i]) > COINCIDENCE_TOL:
                raise CurrentError(f"path {i} does not start at P_{i + 1}")
            if np.linalg.norm(p[-1] - self.terminals.sink) > COINCIDENCE_TOL:
                raise CurrentError(f"path {i} does not end at the sink")
        object.__setattr__(self, "paths", paths)


class _PointIndex:
    def __init__(self, tol):
        self.tol = tol
        self.pts: list[np.ndarray] = []

    def __call__(self, p) -> int:
        for k, q in enumerate(self.pts):
            if np.linalg.norm(p - q) <= self.tol:
                return k
        self.pts.append(np.array(p, dtype=float))
        return len(self.pts) - 1


def _on_segment(p, a, b, tol) -> bool:
    ab = b - a
    L2 = ab @ ab
    s = (p - a) @ ab / L2
    if s <= 0 or s >= 1:
        return False
    return np.linalg.norm(a + s * ab - p) <= tol and min(s, 1 - s) * math.sqrt(L2) > tol


def _closest_params(p0, p1, q0, q1):
    d1, d2, r = p1 - p0, q1 - q0, p0 - q0
    a, e, b = d1 @ d1, d2 @ d2, d1 @ d2
    c, f = d1 @ r, d2 @ r
    den = a * e - b * b
    if den <= 1e-14 * a * e:
        return None
    s = (b * f - c * e) / den
    t = (a * f - b * c) / den
    return s, t


def current_from_graph(graph: AcyclicGraph, tol: float = COINCIDENCE_TOL) -> MultiplicityCurrent:
    """Canonical current of a union of source-to-sink paths.

    The union is split into elementary pieces at every vertex and crossing,
    each piece labelled by the set of paths through it; collinear chains of
    pieces with the same label through degree-2 vertices are merged again.
    Raises ``CurrentError`` for cycles or opposite orientations on an overlap.
    """
    ts = graph.terminals
    N = ts.N
    index = _PointIndex(tol)
    for t in ts.points:
        index(t)
    for p in graph.paths:
        for v in p:
            index(v)
    segs = [(i, p[k], p[k + 1]) for i, p in enumerate(graph.paths) for k in range(len(p) - 1)]
    # crossings between different paths
    for x in range(len(segs)):
        for y in range(x + 1, len(segs)):
            i, a0, a1 = segs[x]
            j, b0, b1 = segs[y]
            if i == j:
                continue
            st = _closest_params(a0, a1, b0, b1)
            if st is None:
                continue
            s, t = st
            if tol < s < 1 - tol and tol < t < 1 - tol:
                pa, pb = a0 + s * (a1 - a0), b0 + t * (b1 - b0)
                if np.linalg.norm(pa - pb) <= tol:
                    index(0.5 * (pa + pb))
    verts = np.array(index.pts)

    pieces: dict[tuple[int, int], dict] = {}
    for i, a, b in segs:
        ab = b - a
        L2 = ab @ ab
        cuts = [(0.0, index(a)), (1.0, index(b))]
        for k, v in enumerate(verts):
            if _on_segment(v, a, b, tol):
                cuts.append(((v - a) @ ab / L2, k))
        cuts.sort()
        for (s0, u), (s1, w) in zip(cuts[:-1], cuts[1:]):
            if u == w:
                continue
            key = (min(u, w), max(u, w))
            rec = pieces.setdefault(key, {"tail": u, "head": w, "members": set()})
            if rec["tail"] != u:
                raise CurrentError("paths overlap with opposite orientations")
            if i in rec["members"]:
                raise CurrentError(f"path {i} is not simple")
            rec["members"].add(i)

    # acyclicity of the undirected union
    parent = list(range(len(verts)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, w in pieces:
        ru, rw = find(u), find(w)
        if ru == rw:
            raise CurrentError("the union of the paths contains a cycle")
        parent[ru] = rw

    # merge collinear same-label chains through degree-2 vertices
    degree = np.zeros(len(verts), dtype=int)
    for u, w in pieces:
        degree[u] += 1
        degree[w] += 1
    terminal_ids = {index(t) for t in ts.points}
    out_edges = {rec["tail"]: [] for rec in pieces.values()}
    for rec in pieces.values():
        out_edges.setdefault(rec["tail"], []).append(rec)
    in_count = {}
    for rec in pieces.values():
        in_count[rec["head"]] = in_count.get(rec["head"], 0) + 1

    def mergeable(v, rec_in, rec_out):
        if v in terminal_ids or degree[v] != 2:
            return False
        if rec_in["members"] != rec_out["members"]:
            return False
        d1 = verts[v] - verts[rec_in["tail"]]
        d2 = verts[rec_out["head"]] - verts[v]
        c = d1 @ d2 / (np.linalg.norm(d1) * np.linalg.norm(d2))
        return c > 1 - 1e-12

    used = set()
    edges = []
    recs = sorted(pieces.values(), key=lambda r: (tuple(verts[r["tail"]]), tuple(verts[r["head"]])))
    by_head = {}
    for r in recs:
        by_head.setdefault(r["head"], []).append(r)
    for r in recs:
        if id(r) in used:
            continue
        # walk back to the chain start
        start = r
        while True:
            v = start["tail"]
            prev = by_head.get(v, [])
            if len(prev) == 1 and len(out_edges.get(v, [])) == 1 and mergeable(v, prev[0], start) \
                    and id(prev[0]) not in used and prev[0] is not r:
                start = prev[0]
            else:
                break
        cur = start
        used.add(id(cur))
        tail, head = cur["tail"], cur["head"]
        while True:
            nxt = out_edges.get(head, [])
            if len(nxt) == 1 and len(by_head.get(head, [])) == 1 and mergeable(head, cur, nxt[0]) \
                    and id(nxt[0]) not in used:
                cur = nxt[0]
                used.add(id(cur))
                head = cur["head"]
            else:
                break
        g = np.zeros(N - 1, dtype=np.int64)
        g[list(start["members"])] = 1
        edges.append((verts[tail], verts[head], g))
    return MultiplicityCurrent.from_edges(N, edges).sorted()


def star_network(terminals) -> MultiplicityCurrent:
    """Straight segments from every source to the sink."""
    N = terminals.N
    return MultiplicityCurrent(N, terminals.sources, np.repeat(terminals.sink[None], N - 1, axis=0),
                               np.eye(N - 1, dtype=np.int64))


def paths_of(c: MultiplicityCurrent, terminals, tol: float = 1e-6) -> list[np.ndarray]:
    """Recover the source-to-sink polyline of every component of a 0/1 network."""
    out = []
    for i in range(c.N - 1):
        comp = c.component(i)
        cur = terminals.points[i]
        path = [cur]
        remaining = list(range(len(comp)))
        while np.linalg.norm(cur - terminals.sink) > tol:
            for k in remaining:
                if np.linalg.norm(comp.a[k] - cur) <= tol:
                    cur = comp.b[k]
                    path.append(cur)
                    remaining.remove(k)
                    break
            else:
                raise CurrentError(f"component {i} is not a path from P_{i + 1} to the sink")
        out.append(np.array(path))
    return out


# --------------------------------------------------------------------------
# Pushing networks into the open domain
# --------------------------------------------------------------------------


def hausdorff(A: np.ndarray, B: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two point samples."""
    from scipy.spatial import cKDTree

    if len(A) == 0 or len(B) == 0:
        return math.inf if len(A) or len(B) else 0.0
    dA, _ = cKDTree(B).query(A)
    dB, _ = cKDTree(A).query(B)
    return float(max(dA.max(), dB.max()))


def sample_support(c: MultiplicityCurrent, step: float) -> np.ndarray:
    """Points along every edge with spacing at most ``step`` (endpoints included)."""
    if not len(c):
        return np.zeros((0, c.n))
    out = []
    for a, b, _ in c.edges():
        m = max(1, int(math.ceil(np.linalg.norm(b - a) / step)))
        t = np.linspace(0, 1, m + 1)[:, None]
        out.append(a + t * (b - a))
    return np.vstack(out)


def _push_point(x, ds, margin):
    """Move ``x`` radially until it is at least ``margin`` outside every closed tube."""
    for _ in range(8):
        moved = False
        for tubes in ds.tubes:
            for tb in tubes:
                seg = tb.segment
                s = (x - seg.a) @ seg.direction
                if s <= 0 or s >= seg.length:
                    continue
                foot = seg.a + s * seg.direction
                perp = x - foot
                r = np.linalg.norm(perp)
                if r > tb.radius_bound(x) + margin:
                    continue
                dirn = _unit(perp, seg)
                # the bound grows with r near the ends, so iterate to a fixed point
                need = tb.radius_bound(x) + margin
                for _ in range(60):
                    y = foot + need * dirn
                    target = tb.radius_bound(y) + margin
                    if need >= target:
                        break
                    need = target * 1.0001
                x = y
                moved = True
        if not moved:
            break
    return x


def _unit(perp, seg):
    r = np.linalg.norm(perp)
    if r > 1e-12:
        return perp / r
    return seg.frame[0]


def polyhedral_approximate(c: MultiplicityCurrent, ds, eta: float, max_piece: float | None = None,
                           margin: float | None = None) -> MultiplicityCurrent:
    """Move a network off the excised tubes while staying ``eta``-close to it.

    Every edge is subdivided so that pieces are short compared to the tube
    radius, and every non-terminal vertex lying in (or within ``margin`` of) a
    closed tube is pushed radially outward.  Raises ``CurrentError`` if the
    result is more than ``eta`` away in Hausdorff distance, costs more than
    ``eta`` extra mass (for every alpha in {0, 1/2, 1}), or still meets a tube.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    margin = min(0.25 * eta, 0.5 * ds.delta) if margin is None else margin
    if not len(c):
        return c
    terminals = ds.terminals.points
    probe = sample_support(c, 0.25 * ds.delta * ds.gamma / (1 + ds.gamma))
    # terminals lie on the tube boundary and are allowed
    at_term = np.min(np.linalg.norm(probe[:, None, :] - terminals[None], axis=-1), axis=1) <= COINCIDENCE_TOL
    if not (ds.in_tubes(probe) & ~at_term).any():
        return c
    max_piece = max_piece or 0.5 * ds.delta
    pieces = max(1, int(math.ceil(c.lengths.max() / max_piece)))
    fine = c.subdivided(pieces)
    cache: dict[tuple, np.ndarray] = {}

    def moved(p):
        key = tuple(np.round(p / COINCIDENCE_TOL).astype(np.int64))
        if key in cache:
            return cache[key]
        if np.min(np.linalg.norm(terminals - p, axis=1)) <= COINCIDENCE_TOL:
            out = p
        else:
            out = _push_point(p.copy(), ds, margin)
        cache[key] = out
        return out

    a = np.array([moved(p) for p in fine.a])
    b = np.array([moved(p) for p in fine.b])
    out = MultiplicityCurrent(c.N, a, b, fine.g)

    step = 0.1 * min(ds.delta, max_piece)
    P, Q = sample_support(c, step), sample_support(out, step)
    dh = hausdorff(P, Q)
    extra = max(psi_mass(out, PsiNorm(al)) - psi_mass(c, PsiNorm(al)) for al in (0.0, 0.5, 1.0))
    pts = sample_support(out, step)
    near_term = np.min(np.linalg.norm(pts[:, None, :] - terminals[None], axis=-1), axis=1) <= 1e-6
    hits = ds.in_tubes(pts) & ~near_term
    if dh >= eta or extra > eta:
        raise CurrentError(f"displacement not achievable within eta={eta}: Hausdorff {dh:.4g}, "
                           f"extra mass {extra:.4g}")
    if hits.any():
        raise CurrentError(f"{int(hits.sum())} sample points of the displaced network remain in a tube")
    return out
