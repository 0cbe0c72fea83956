import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize as sp_minimize

from conftest import SQ3, four_points, random_rotation
from glsteiner.currents import PsiNorm, boundaries_equal, boundary_of, prescribed_boundary, psi_mass
from glsteiner.exact_solver import (SteinerTopology, angle_report, enumerate_topologies, optimize_positions,
                                    solve_exact, star_cost)
from glsteiner.geometry import TerminalSet


def triangle():
    return TerminalSet(np.array([[0.0, 0, 0], [1.0, 0, 0], [0.5, SQ3 / 2, 0]]))


@pytest.mark.parametrize("N,count", [(3, 1), (4, 3), (5, 15), (6, 105)])
def test_topology_counts(N, count):
    tops = enumerate_topologies(N)
    assert len(tops) == count
    assert len({t.edges for t in tops}) == count
    for t in tops:
        d = t.degree()
        assert np.all(d[:N] == 1) and np.all(d[N:] == 3)
        assert len(t.edges) == t.n_nodes - 1


def test_topology_range():
    with pytest.raises(ValueError):
        enumerate_topologies(7)
    with pytest.raises(ValueError):
        enumerate_topologies(2)


def test_labels_are_or_of_children():
    for t in enumerate_topologies(5):
        edges, labels = t.oriented()
        head_of = {u: v for u, v in edges}
        lab = {u: g for (u, _), g in zip(edges, labels)}
        for u, g in lab.items():
            children = [c for c, p in head_of.items() if p == u]
            if children:
                acc = np.zeros_like(g)
                for c in children:
                    acc |= lab[c]
                np.testing.assert_array_equal(acc, g)


def test_triangle_fermat_point():
    r = solve_exact(triangle(), PsiNorm(0))
    assert r.cost == pytest.approx(SQ3, abs=1e-9)
    np.testing.assert_allclose(r.steiner_positions[0], [0.5, SQ3 / 6, 0], atol=1e-6)
    np.testing.assert_allclose(sorted(r.angles[0]), [120, 120, 120], atol=1e-3)


def test_obtuse_vertex_collapse():
    ang = math.radians(130)
    ts = TerminalSet(np.array([[1.0, 0, 0], [math.cos(ang), math.sin(ang), 0], [0.0, 0, 0]]))
    r = solve_exact(ts, PsiNorm(0))
    assert r.cost == pytest.approx(2.0, abs=1e-9)
    np.testing.assert_allclose(r.steiner_positions[0], [0, 0, 0], atol=1e-6)
    assert angle_report(r) == [[]]
    # an interior point costs more than the collapsed one
    interior = sum(np.linalg.norm(ts.points - np.array([0.05, 0.05, 0]), axis=1))
    assert interior > r.cost


def test_two_points():
    ts = TerminalSet(np.array([[0.0, 0, 0], [0.3, 0.4, 0]]))
    r = solve_exact(ts, PsiNorm(0.5))
    assert r.cost == pytest.approx(0.5)
    assert len(r.network) == 1


def test_four_point_solution():
    t0 = time.perf_counter()
    r = solve_exact(four_points(), PsiNorm(0))
    assert time.perf_counter() - t0 < 10
    assert r.cost == pytest.approx(6.0, abs=1e-6)
    S = sorted(r.steiner_positions.tolist())
    np.testing.assert_allclose(S, [[-1, 0, 0], [1, 0, 0]], atol=1e-4)
    for tr in r.angles:
        np.testing.assert_allclose(tr, [120, 120, 120], atol=math.degrees(1e-3))
    labels = sorted(tuple(int(v) for v in g) for g in r.network.g)
    assert labels == [(0, 0, 1), (0, 1, 0), (1, 0, 0), (1, 1, 0), (1, 1, 1)]


def test_four_points_alpha_one_is_star():
    ts = four_points()
    r = solve_exact(ts, PsiNorm(1))
    expected = float(np.sum(np.linalg.norm(ts.sources - ts.sink, axis=1)))
    assert r.cost == pytest.approx(expected, rel=1e-9)
    assert r.cost <= star_cost(ts, PsiNorm(1)) + 1e-12


def weighted_fermat(ts, psi):
    """Independent oracle for N = 3: min over S of |P1-S| + |P2-S| + Psi(1,1)|S-P3|."""
    P = ts.points
    w = np.array([1.0, 1.0, psi([1, 1])])
    f = lambda s: float(np.sum(w * np.linalg.norm(P - s, axis=1)))
    best = min(f(p) for p in P)
    for s0 in (P.mean(axis=0), P[0], P[1], P[2]):
        res = sp_minimize(f, s0 + 1e-3, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14,
                                                                          "maxiter": 20000})
        best = min(best, res.fun)
    return best


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 0.5, 1.0]))
@settings(max_examples=25)
def test_three_terminals_against_fermat_oracle(seed, alpha):
    rng = np.random.default_rng(seed)
    ts = TerminalSet(rng.uniform(-1, 1, (3, 3)))
    psi = PsiNorm(alpha)
    r = solve_exact(ts, psi)
    assert r.cost == pytest.approx(weighted_fermat(ts, psi), rel=1e-7)


@given(st.integers(0, 2**32 - 1), st.integers(3, 5))
@settings(max_examples=12)
def test_feasibility_bound_and_cost_consistency(seed, N):
    rng = np.random.default_rng(seed)
    ts = TerminalSet(rng.uniform(-1, 1, (N, 3)))
    for alpha in (0.0, 0.5, 1.0):
        psi = PsiNorm(alpha)
        r = solve_exact(ts, psi, seed=seed % 1000)
        assert boundaries_equal(boundary_of(r.network), prescribed_boundary(ts))
        assert r.cost <= star_cost(ts, psi) + 1e-9
        assert r.cost == pytest.approx(psi_mass(r.network, psi), rel=1e-9)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=10)
def test_equivariance(seed):
    rng = np.random.default_rng(seed)
    ts = TerminalSet(rng.uniform(-1, 1, (4, 3)))
    psi = PsiNorm(float(rng.choice([0.0, 0.5, 1.0])))
    c = solve_exact(ts, psi).cost
    t = float(rng.uniform(0.3, 3))
    R = random_rotation(rng)
    assert solve_exact(ts.transformed(scale=t), psi).cost == pytest.approx(t * c, rel=1e-9)
    assert solve_exact(ts.transformed(rotation=R), psi).cost == pytest.approx(c, rel=1e-9)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=10)
def test_monotone_in_alpha(seed):
    rng = np.random.default_rng(seed)
    ts = TerminalSet(rng.uniform(-1, 1, (int(rng.integers(3, 6)), 3)))
    costs = [solve_exact(ts, PsiNorm(a)).cost for a in (0.0, 0.5, 1.0)]
    assert costs[0] <= costs[1] + 1e-9 <= costs[2] + 2e-9


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20)
def test_fixed_topology_cost_midpoint_convex(seed):
    rng = np.random.default_rng(seed)
    ts = TerminalSet(rng.uniform(-1, 1, (5, 3)))
    topo = enumerate_topologies(5)[int(rng.integers(15))]
    edges, labels = topo.oriented()
    psi = PsiNorm(float(rng.choice([0.0, 0.5, 1.0])))
    w = np.asarray(psi(labels))

    def cost(S):
        X = np.vstack([ts.points, S])
        return sum(wk * np.linalg.norm(X[u] - X[v]) for wk, (u, v) in zip(w, edges))

    A, B = rng.uniform(-1, 1, (2, 3, 3))
    assert cost(0.5 * (A + B)) <= 0.5 * (cost(A) + cost(B)) + 1e-9


def test_result_json():
    r = solve_exact(triangle(), PsiNorm(0))
    doc = r.to_json()
    assert set(doc) >= {"N", "edges", "cost", "angles"}
    assert doc["cost"] == pytest.approx(SQ3)


def test_optimize_positions_topology_mismatch():
    with pytest.raises(ValueError):
        optimize_positions(enumerate_topologies(4)[0], triangle(), PsiNorm(0))
