"""Exact small-N Gilbert-Steiner solver by full-topology enumeration.

For a fixed tree topology the cost ``sum_e Psi(g_e) |x_u - x_v|`` is convex in
the Steiner positions.  Every full topology (one degree-3 Steiner node per
inner vertex) is optimized; degenerate trees are reached by letting Steiner
nodes collapse onto neighbours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .currents import (AcyclicGraph, MultiplicityCurrent, PsiNorm, current_from_graph, psi_mass,
                       star_network)
from .geometry import TerminalSet

MU_SCHEDULE = (1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9)
COLLAPSE_TOL = 1e-7
TIE_TOL = 1e-9
MAX_N = 6


@dataclass(frozen=True)
class SteinerTopology:
    """Tree on terminals ``0..N-1`` (sink ``N-1``) and Steiner nodes ``N..2N-3``."""

    N: int
    edges: tuple

    @property
    def n_steiner(self) -> int:
        return max(0, self.N - 2)

    @property
    def n_nodes(self) -> int:
        return self.N + self.n_steiner

    def degree(self) -> np.ndarray:
        d = np.zeros(self.n_nodes, dtype=int)
        for u, v in self.edges:
            d[u] += 1
            d[v] += 1
        return d

    def oriented(self) -> tuple[list[tuple[int, int]], np.ndarray]:
        """Edges directed towards the sink with their 0/1 labels.

        The label of an edge has a 1 in slot ``i`` iff the edge is on the tree
        path from terminal ``i`` to the sink.
        """
        adj = {k: [] for k in range(self.n_nodes)}
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        sink = self.N - 1
        parent = {sink: None}
        order = [sink]
        for x in order:
            for y in adj[x]:
                if y not in parent:
                    parent[y] = x
                    order.append(y)
        if len(order) != self.n_nodes:
            raise ValueError("topology is not connected")
        below = {k: np.zeros(self.N - 1, dtype=np.int64) for k in range(self.n_nodes)}
        for i in range(self.N - 1):
            below[i][i] = 1
        for x in reversed(order[1:]):
            below[parent[x]] = below[parent[x]] | below[x]
        out, labels = [], []
        for x in order[1:]:
            out.append((x, parent[x]))
            labels.append(below[x])
        return out, np.array(labels)


def _double_factorial(k: int) -> int:
    return math.prod(range(k, 0, -2)) if k > 0 else 1


def enumerate_topologies(N: int) -> list[SteinerTopology]:
    """All (2N-5)!! full Steiner topologies on N labelled terminals."""
    if not 3 <= N <= MAX_N:
        raise ValueError(f"topology enumeration supports 3 <= N <= {MAX_N}, got {N}")
    # grow by inserting terminal k on every edge of each tree on terminals 0..k-1
    trees = [[(0, N), (1, N), (2, N)]]
    for k in range(3, N):
        s_new = N + k - 2
        grown = []
        for t in trees:
            for j, (u, v) in enumerate(t):
                grown.append(t[:j] + t[j + 1:] + [(u, s_new), (s_new, v), (k, s_new)])
        trees = grown
    tops = [SteinerTopology(N, tuple(sorted(tuple(sorted(e)) for e in t))) for t in trees]
    assert len(tops) == _double_factorial(2 * N - 5)
    return tops


# --------------------------------------------------------------------------
# Fixed-topology optimisation
# --------------------------------------------------------------------------


@dataclass
class SolveResult:
    topology: SteinerTopology
    steiner_positions: np.ndarray
    cost: float
    network: MultiplicityCurrent
    angles: list = field(default_factory=list)
    alpha: float = 0.0
    stationarity: float = 0.0
    collapsed: list = field(default_factory=list)
    ties: list = field(default_factory=list)

    def to_json(self) -> dict:
        doc = self.network.to_json()
        doc["cost"] = float(f"{self.cost:.17g}")
        doc["alpha"] = self.alpha
        doc["angles"] = [[float(f"{a:.17g}") for a in tr] for tr in self.angles]
        doc["steiner_points"] = [[float(f"{v:.17g}") for v in p] for p in self.steiner_positions]
        doc["topology"] = [list(e) for e in self.topology.edges]
        doc["ties"] = self.ties
        return doc


class _Problem:
    def __init__(self, topo: SteinerTopology, ts: TerminalSet, psi: PsiNorm):
        self.topo, self.ts, self.psi = topo, ts, psi
        self.edges, self.labels = topo.oriented()
        self.w = np.asarray(psi(self.labels), dtype=float)
        self.u = np.array([e[0] for e in self.edges])
        self.v = np.array([e[1] for e in self.edges])
        self.N, self.n = ts.N, ts.n
        self.m = topo.n_steiner

    def positions(self, s: np.ndarray) -> np.ndarray:
        return np.vstack([self.ts.points, s.reshape(self.m, self.n)])

    def cost(self, s, mu=0.0) -> float:
        X = self.positions(s)
        d = X[self.u] - X[self.v]
        return float(np.sum(self.w * np.sqrt(np.einsum("ij,ij->i", d, d) + mu * mu)))

    def grad_hess(self, s, mu):
        X = self.positions(s)
        d = X[self.u] - X[self.v]
        r = np.sqrt(np.einsum("ij,ij->i", d, d) + mu * mu)
        f = float(np.sum(self.w * r))
        n, m, N = self.n, self.m, self.N
        G = np.zeros((N + m, n))
        q = (self.w / r)[:, None] * d
        np.add.at(G, self.u, q)
        np.add.at(G, self.v, -q)
        blk = self.w[:, None, None] * (np.eye(n) - d[:, :, None] * d[:, None, :] / (r**2)[:, None, None]) \
            / r[:, None, None]
        H = np.zeros((N + m, N + m, n, n))
        np.add.at(H, (self.u, self.u), blk)
        np.add.at(H, (self.v, self.v), blk)
        np.add.at(H, (self.u, self.v), -blk)
        np.add.at(H, (self.v, self.u), -blk)
        H = H.transpose(0, 2, 1, 3)
        H = H[N:, :, N:, :].reshape(m * n, m * n)
        return f, G[N:].ravel(), H


def _newton(prob: _Problem, s: np.ndarray, mu: float, max_iter: int = 200) -> np.ndarray:
    f, g, H = prob.grad_hess(s, mu)
    for _ in range(max_iter):
        lam = 1e-14 * max(1.0, np.abs(np.diag(H)).max())
        try:
            step = -np.linalg.solve(H + lam * np.eye(len(s)), g)
        except np.linalg.LinAlgError:
            step = -g
        if g @ step >= 0:
            step = -g
        t = 1.0
        while True:
            cand = s + t * step
            fc = prob.cost(cand, mu)
            if fc <= f + 1e-4 * t * (g @ step) or t < 1e-12:
                break
            t *= 0.5
        if fc > f:
            break
        s = cand
        f_old = f
        f, g, H = prob.grad_hess(s, mu)
        if np.max(np.abs(t * step)) < 1e-14 or f_old - f <= 1e-16 * max(1.0, abs(f)):
            break
    return s


def _starts(prob: _Problem, seed: int) -> list[np.ndarray]:
    P = prob.ts.points
    c = P.mean(axis=0)
    span = float(np.max(np.linalg.norm(P - c, axis=1)))
    rng = np.random.default_rng(seed)
    m, n = prob.m, prob.n
    return [
        np.tile(0.5 * (c + prob.ts.sink), m),
        np.tile(c, m) + 1e-3 * span * np.arange(1, m * n + 1) / (m * n),
        np.tile(c, m) + 0.3 * span * rng.standard_normal(m * n),
    ]


def _collapse(prob: _Problem, s: np.ndarray):
    """Snap Steiner nodes within ``COLLAPSE_TOL`` of a neighbour onto it."""
    X = prob.positions(s)
    nn = len(X)
    parent = list(range(nn))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in zip(prob.u, prob.v):
        if np.linalg.norm(X[a] - X[b]) < COLLAPSE_TOL and (a >= prob.N or b >= prob.N):
            ra, rb = find(a), find(b)
            if ra != rb:
                # keep terminals as cluster representatives
                if ra < prob.N:
                    parent[rb] = ra
                else:
                    parent[ra] = rb
    clusters: dict[int, list[int]] = {}
    for k in range(nn):
        clusters.setdefault(find(k), []).append(k)
    Y = X.copy()
    collapsed = []
    for root, members in clusters.items():
        if len(members) == 1:
            continue
        terms = [k for k in members if k < prob.N]
        p = X[terms[0]] if terms else X[members].mean(axis=0)
        Y[members] = p
        collapsed.extend(k - prob.N for k in members if k >= prob.N)
    return Y, sorted(collapsed), clusters


def _stationarity(prob: _Problem, X: np.ndarray, clusters) -> float:
    """Largest translation residual over clusters that contain no terminal."""
    worst = 0.0
    for members in clusters.values():
        if any(k < prob.N for k in members):
            continue
        ms = set(members)
        r = np.zeros(prob.n)
        for k, (a, b) in enumerate(zip(prob.u, prob.v)):
            if (a in ms) == (b in ms):
                continue
            d = X[a] - X[b] if a in ms else X[b] - X[a]
            L = np.linalg.norm(d)
            if L > 0:
                r += prob.w[k] * d / L
        worst = max(worst, float(np.linalg.norm(r)))
    return worst


def _network(prob: _Problem, X: np.ndarray) -> MultiplicityCurrent:
    ts = prob.ts
    adj_up = {a: b for a, b in zip(prob.u, prob.v)}
    paths = []
    for i in range(ts.N - 1):
        node, pts = i, [X[i]]
        while node != ts.N - 1:
            node = adj_up[node]
            if np.linalg.norm(X[node] - pts[-1]) > 1e-12:
                pts.append(X[node])
        paths.append(np.array(pts))
    return current_from_graph(AcyclicGraph(ts, paths))


def angle_report(result: SolveResult) -> list[list[float]]:
    """Pairwise angles (degrees) at every Steiner node; empty for collapsed ones."""
    out = []
    for j in range(result.topology.n_steiner):
        if j in result.collapsed:
            out.append([])
            continue
        x = result.steiner_positions[j]
        dirs = []
        for a, b, _ in result.network.edges():
            if np.linalg.norm(a - x) <= 1e-9:
                dirs.append((b - a) / np.linalg.norm(b - a))
            elif np.linalg.norm(b - x) <= 1e-9:
                dirs.append((a - b) / np.linalg.norm(b - a))
        if len(dirs) != 3:
            out.append([])
            continue
        tr = []
        for p, q in ((0, 1), (0, 2), (1, 2)):
            c = float(np.clip(dirs[p] @ dirs[q], -1.0, 1.0))
            tr.append(math.degrees(math.acos(c)))
        out.append(tr)
    return out


def optimize_positions(topo: SteinerTopology, ts: TerminalSet, psi: PsiNorm, seed: int = 0) -> SolveResult:
    if topo.N != ts.N:
        raise ValueError("topology and terminal set disagree on N")
    prob = _Problem(topo, ts, psi)
    if prob.m == 0:
        X = ts.points
        net = _network(prob, X)
        return SolveResult(topo, np.zeros((0, ts.n)), psi_mass(net, psi), net, [], psi.alpha)
    best, best_cost = None, math.inf
    for s0 in _starts(prob, seed):
        s = s0.copy()
        for mu in MU_SCHEDULE:
            s = _newton(prob, s, mu)
        c = prob.cost(s)
        if c < best_cost - 1e-15:
            best, best_cost = s, c
    X, collapsed, clusters = _collapse(prob, best)
    net = _network(prob, X)
    res = SolveResult(topo, X[ts.N:].copy(), psi_mass(net, psi), net, [], psi.alpha,
                      _stationarity(prob, X, clusters), collapsed)
    res.angles = angle_report(res)
    return res


def _midpoint_key(net: MultiplicityCurrent):
    mid = 0.5 * (net.a + net.b)
    return tuple(np.round(mid, 9).ravel().tolist())


def solve_exact(ts: TerminalSet, psi: PsiNorm, seed: int = 0) -> SolveResult:
    """Cheapest network over all full topologies (with collapses) for ``ts``."""
    N = ts.N
    if N == 2:
        return optimize_positions(SteinerTopology(2, ((0, 1),)), ts, psi)
    if not 3 <= N <= MAX_N:
        raise ValueError(f"exact solver supports 2 <= N <= {MAX_N}, got {N}")
    results = [optimize_positions(t, ts, psi, seed=seed + k) for k, t in enumerate(enumerate_topologies(N))]
    best_cost = min(r.cost for r in results)
    near = [k for k, r in enumerate(results) if r.cost <= best_cost + TIE_TOL * max(1.0, best_cost)]
    k_best = min(near, key=lambda k: (_midpoint_key(results[k].network), k))
    out = results[k_best]
    out.ties = near
    return out


def star_cost(ts: TerminalSet, psi: PsiNorm) -> float:
    """Psi-mass of the network of straight source-to-sink segments."""
    return psi_mass(star_network(ts), psi)
