import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SQ3, four_points
from glsteiner.currents import PsiNorm, polyhedral_approximate, psi_mass, star_network
from glsteiner.exact_solver import solve_exact
from glsteiner.extraction import (ExtractionError, compare_networks, export_obj, export_winding_voxels,
                                  extract_network, plaquette_winding, supercurrent, winding_field)
from glsteiner.geometry import TerminalSet, build_domain
from glsteiner.gl import FieldState, build_grid, minimize, random_init, recovery_init, uniform_grid

TWO = TerminalSet(np.array([[-0.5, 0, 0], [0.5, 0, 0.0]]))


def axis_field(g, sign=1.0, c=(0.025, 0.025)):
    X = g.coords()
    v = X[:, 1:] - np.asarray(c)
    r = np.linalg.norm(v, axis=1, keepdims=True)
    v = np.divide(v, r, out=np.zeros_like(v), where=r > 0)
    v[:, 1] *= sign
    return FieldState(g, v[None].copy(), 0.05)


@pytest.fixture(scope="module")
def small_uniform():
    return uniform_grid(3, 0.2, 0.05)


@pytest.mark.parametrize("sign,expected", [(1.0, 1), (-1.0, -1)])
def test_plaquette_axis(small_uniform, sign, expected):
    fs = axis_field(small_uniform, sign)
    for ix in (0, 3, 7):
        assert plaquette_winding(fs, 0, (0, (ix, 4, 4))) == expected
        assert plaquette_winding(fs, 0, (0, (ix, 5, 4))) == 0
    # faces parallel to the axis are never pierced
    assert plaquette_winding(fs, 0, (1, (3, 4, 4))) == 0
    wf = winding_field(fs)
    assert wf.pierced(0) == [(0, (ix, 4, 4), expected) for ix in range(9)]


def test_plaquette_constant(small_uniform):
    fs = FieldState.constant(small_uniform, 0.1)
    assert plaquette_winding(fs, 0, (2, (1, 2, 3))) == 0
    assert winding_field(fs).pierced(0) == []


def test_plaquette_errors(small_uniform):
    fs = FieldState.constant(small_uniform, 0.1)
    with pytest.raises(ExtractionError):
        plaquette_winding(fs, 0, (0, (1, 8, 2)))  # corner beyond the grid
    ds = build_domain(TWO, delta=0.12, gamma_ratio=5, L=0.8)
    g = build_grid(ds, 0.04)
    with pytest.raises(ExtractionError):
        plaquette_winding(FieldState.constant(g, 0.1), 0, (0, (20, 20, 20)))  # on the tube axis


def test_singular_corner_uses_neighbours(small_uniform):
    # the axis passes through grid nodes; u = 0 there is resolved by the neighbour mean
    fs = axis_field(small_uniform, c=(0.0, 0.0))
    wf = winding_field(fs)
    assert sum(w for a, _, w in wf.pierced(0) if a == 0) == 9
    div, full, _ = wf.cube_divergence(0)
    assert np.all(div[full] == 0)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25)
def test_random_field_divergence_free(seed):
    g = uniform_grid(3, 0.15, 0.05)
    fs = random_init(g, 0.1, seed)
    fs.u[0, :: 7] = 0.0  # sprinkle zeros
    wf = winding_field(fs)
    div, full, flagged = wf.cube_divergence(0)
    assert np.all(div[full] == 0)
    assert wf.divergence_free_fraction(0) == 1.0


def test_plane_flux_and_supercurrent(small_uniform):
    fs = axis_field(small_uniform)
    wf = winding_field(fs)
    assert all(wf.plane_flux(0, 0, k) == 1 for k in range(9))
    assert wf.plane_flux(0, 1, 2) == 0
    g = uniform_grid(3, 0.2, 0.01)
    fs = axis_field(g, c=(0.005, 0.005))
    j = supercurrent(fs, 0)
    X = g.coords()
    rho = np.linalg.norm(X[:, 1:] - 0.005, axis=1)
    sel = (rho > 0.08) & np.all(np.abs(X) < 0.18, axis=1)
    # j is tangential with magnitude about 1/rho
    assert np.all(np.abs(j[sel, 0]) < 1e-12)
    np.testing.assert_allclose(np.linalg.norm(j[sel], axis=1) * rho[sel], 1.0, rtol=0.1)


def test_constant_field_boundary_mismatch():
    ds = build_domain(TWO, delta=0.12, gamma_ratio=5, L=0.8)
    g = build_grid(ds, 0.04)
    fs = FieldState(g, np.broadcast_to([0.0, 1.0], (1, g.n_nodes, 2)).copy(), 0.08)
    ex = extract_network(fs)
    assert len(ex.network) == 0
    assert "boundary mismatch" in ex.errors and not ex.boundary_match


def test_compare_identity_and_translation():
    net = solve_exact(four_points(), PsiNorm(0)).network
    c = compare_networks(net, net, PsiNorm(0))
    assert (c.mass_gap, c.hausdorff, c.boundary_match, c.topology_match) == (0.0, 0.0, True, True)
    t = np.array([0.03, -0.04, 0.0])
    c = compare_networks(net.transformed(shift=t), net, PsiNorm(0), step=0.01)
    assert c.hausdorff == pytest.approx(0.05, abs=1e-12)
    assert c.mass_gap == pytest.approx(0, abs=1e-12)
    assert not c.boundary_match and c.topology_match


def test_export_obj(tmp_path):
    net = solve_exact(four_points(), PsiNorm(0)).network
    p = tmp_path / "net.obj"
    export_obj(net, p)
    lines = p.read_text().splitlines()
    assert sum(1 for s in lines if s.startswith("l ")) == 5
    assert sum(1 for s in lines if s.startswith("v ")) == 10
    assert sorted(s for s in lines if s.startswith("# g")) == sorted(
        "# g " + " ".join(str(int(v)) for v in g) for g in net.g)


def test_export_winding_voxels(tmp_path, small_uniform):
    wf = winding_field(axis_field(small_uniform))
    p = tmp_path / "w.txt"
    export_winding_voxels(p, wf, 0)
    lines = p.read_text().split()
    assert lines[:3] == ["9", "9", "9"] and float(lines[3]) == 0.05
    vol = np.array(list(map(int, lines[4:]))).reshape(9, 9, 9)  # z, y, x
    assert vol[4, 4].tolist() == [1] * 9 and vol.sum() == 9


@pytest.fixture(scope="module")
def triangle():
    ts = TerminalSet(np.array([[0, 0, 0], [1, 0, 0], [0.5, SQ3 / 2, 0]]) - [0.5, SQ3 / 6, 0])
    r = solve_exact(ts, PsiNorm(0))
    ds = build_domain(ts, delta=0.08, gamma_ratio=3, L=0.7)
    g = build_grid(ds, 0.02)
    return r, ds, g


def test_recovery_field_topology(triangle):
    r, ds, g = triangle
    fs = recovery_init(ds, g, r.network, 0.04)
    ex = extract_network(fs)
    assert ex.errors == []
    assert all(f >= 0.99 for f in ex.divergence_free)
    c = compare_networks(ex, r.network, PsiNorm(0))
    assert c.boundary_match and c.topology_match
    assert c.mass_gap < 0.05
    assert c.hausdorff <= 4 * g.h
    doc = ex.to_json()
    assert doc["diagnostics"]["errors"] == [] and doc["diagnostics"]["h"] == g.h


def test_minimized_two_point_line():
    ds = build_domain(TWO, delta=0.06, gamma_ratio=5, L=0.7)
    g = build_grid(ds, 0.02)
    net = polyhedral_approximate(star_network(TWO), ds, 0.1)
    fs = recovery_init(ds, g, net, 0.04)
    out, _ = minimize(fs, PsiNorm(0), [0.04], max_iter=3000)
    ex = extract_network(out)
    assert ex.errors == []
    assert len(ex.polylines[0]) == 1
    assert ex.endpoint_tags[0] == [(0, 1)]
    assert np.all(ex.network.g == 1)
    assert psi_mass(ex.network, PsiNorm(0)) == pytest.approx(1.0, rel=0.05)
    assert all(f >= 0.99 for f in ex.divergence_free)
