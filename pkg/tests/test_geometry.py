import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import SQ3, four_points, random_rotation
from glsteiner.geometry import (DomainError, Segment, TerminalSet, Tube, boundary_datum, build_domain,
                                export_mask_voxels, from_transverse_coords, read_mask_voxels,
                                transverse_coords, tube_contains)

X_SEG = Segment([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])


def test_transverse_axis_aligned():
    xp, xq = transverse_coords(X_SEG, [0.3, 0.2, 0.0])
    assert xp == pytest.approx(0.3)
    assert np.linalg.norm(xq) == pytest.approx(0.2)


def test_transverse_on_segment():
    xp, xq = transverse_coords(X_SEG, [0.5, 0.0, 0.0])
    assert xp == pytest.approx(0.5)
    np.testing.assert_allclose(xq, 0.0, atol=1e-15)


def test_transverse_diagonal_roundtrip():
    seg = Segment([0.0, 0.0, 0.0], np.array([1.0, 1.0, 0.0]) / np.sqrt(2))
    normal = seg.frame[0]
    x = seg.a + 0.5 * seg.direction + 0.1 * normal
    xp, xq = transverse_coords(seg, x)
    assert xp == pytest.approx(0.5)
    assert np.linalg.norm(xq) == pytest.approx(0.1)
    np.testing.assert_allclose(from_transverse_coords(seg, xp, xq), x, atol=1e-12)


def test_frame_is_deterministic_and_orthonormal():
    seg = Segment([0.1, -0.3, 0.2], [0.7, 0.5, -0.4])
    f = seg.frame
    np.testing.assert_allclose(f @ f.T, np.eye(2), atol=1e-14)
    np.testing.assert_allclose(f @ seg.direction, 0.0, atol=1e-14)
    np.testing.assert_array_equal(f, Segment(seg.a, seg.b).frame)


def test_tube_contains_examples():
    t = Tube(X_SEG, 0.1, 0.5)
    assert tube_contains(t, [0.5, 0.05, 0.0])
    assert not tube_contains(t, [0.0, 0.05, 0.0])
    assert tube_contains(t, [0.5, 0.0, 0.0])


def test_tube_parameters_positive():
    with pytest.raises(ValueError):
        Tube(X_SEG, 0.0, 0.5)


@given(st.integers(0, 2**32 - 1))
def test_tube_rigid_invariance(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
    if np.linalg.norm(b - a) < 0.1:
        return
    t = Tube(Segment(a, b), 0.2, 0.7)
    x = rng.uniform(-1.2, 1.2, (200, 3))
    R = random_rotation(rng)
    s = rng.uniform(-1, 1, 3)
    t2 = Tube(Segment(R @ a + s, R @ b + s), 0.2, 0.7)
    x2 = x @ R.T + s
    d1 = t.segment.distance(x) - t.radius_bound(x)
    d2 = t2.segment.distance(x2) - t2.radius_bound(x2)
    np.testing.assert_allclose(d1, d2, atol=1e-12)
    clear = np.abs(d1) > 1e-12
    np.testing.assert_array_equal(t.contains(x)[clear], t2.contains(x2)[clear])


@given(st.integers(0, 2**32 - 1))
def test_transverse_roundtrip_property(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
    if np.linalg.norm(b - a) < 1e-3:
        return
    seg = Segment(a, b)
    x = rng.uniform(-2, 2, (50, 3))
    xp, xq = transverse_coords(seg, x)
    np.testing.assert_allclose(from_transverse_coords(seg, xp, xq), x, atol=1e-12)
    foot = a + xp[:, None] * seg.direction
    np.testing.assert_allclose(np.linalg.norm(xq, axis=1), np.linalg.norm(x - foot, axis=1), atol=1e-12)


def test_build_domain_four_points_straight():
    ds = build_domain(four_points(), delta=0.05, gamma_ratio=0.5, L=2)
    assert len(ds.curves) == 3
    assert all(len(c) == 2 for c in ds.curves)
    assert ds.delta == 0.05


def test_build_domain_two_points():
    ts = TerminalSet(np.array([[-1.0, 0, 0], [1.0, 0, 0]]))
    ds = build_domain(ts, delta=0.1, L=2)
    assert len(ds.tubes) == 1 and len(ds.tubes[0]) == 1


def _disjoint_away_from_sink(ds, h=0.01):
    g = np.arange(-ds.box, ds.box + h / 2, h)
    X = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    sink = ds.terminals.sink
    X = X[np.linalg.norm(X - sink, axis=1) > 1e-9]
    member = np.stack([np.any([tb.contains_closed(X) for tb in tubes], axis=0) for tubes in ds.tubes])
    return not np.any(member.sum(axis=0) > 1)


def test_collinear_sink_between_is_straight_and_disjoint():
    # opposite directions from the sink never conflict
    ts = TerminalSet(np.array([[-1.0, 0, 0], [1.0, 0, 0], [0.0, 0, 0]]))
    ds = build_domain(ts, delta=0.1, gamma_ratio=0.5, L=1.5)
    assert all(len(c) == 2 for c in ds.curves)
    assert _disjoint_away_from_sink(ds, h=0.02)


def test_collinear_sink_at_end_detours():
    ts = TerminalSet(np.array([[-1.0, 0, 0], [0.0, 0, 0], [1.0, 0, 0]]))
    ds = build_domain(ts, delta=0.1, gamma_ratio=0.5, L=1.5)
    assert any(len(c) > 2 for c in ds.curves)
    assert _disjoint_away_from_sink(ds, h=0.02)


def test_four_point_tubes_disjoint():
    ds = build_domain(four_points().normalized()[0], delta=0.05, gamma_ratio=5, L=1.2)
    assert _disjoint_away_from_sink(ds, h=0.02)


def test_box_too_small():
    with pytest.raises(DomainError):
        build_domain(four_points(), delta=0.05, L=1.0)


def test_terminals_on_tube_boundary():
    ds = build_domain(four_points(), delta=0.05, gamma_ratio=0.5, L=2)
    for i, p in enumerate(ds.terminals.sources):
        assert not ds.in_tubes(p[None] + 0.0)[0] or np.any([tb.contains_closed(p[None])[0] for tb in ds.tubes[i]])
        assert not np.any([tb.contains(p[None])[0] for tubes in ds.tubes for tb in tubes])


def test_boundary_datum_examples():
    ts = TerminalSet(np.array([[-1.0, 0, 0], [1.0, 0, 0]]))
    ds = build_domain(ts, delta=0.1, L=2)
    seg = ds.tubes[0][0].segment
    for th in np.linspace(0, 2 * np.pi, 7):
        x = from_transverse_coords(seg, 1.0, 0.1 * np.array([np.cos(th), np.sin(th)]))
        np.testing.assert_allclose(boundary_datum(ds, 0, x), [np.cos(th), np.sin(th)], atol=1e-12)
    np.testing.assert_allclose(boundary_datum(ds, 0, [2.0, 0.3, -0.5]), [0.0, 1.0])


def test_boundary_datum_constant_off_own_tube():
    ts = four_points()
    ds = build_domain(ts, delta=0.05, gamma_ratio=0.5, L=2)
    seg = ds.tubes[1][0].segment
    x = from_transverse_coords(seg, 0.5 * seg.length, np.array([0.05, 0.0]))
    np.testing.assert_allclose(boundary_datum(ds, 0, x), [0.0, 1.0])
    assert np.linalg.norm(boundary_datum(ds, 1, x)) == pytest.approx(1.0, abs=1e-12)


def test_datum_on_axis_fails():
    ts = TerminalSet(np.array([[-1.0, 0, 0], [1.0, 0, 0]]))
    ds = build_domain(ts, delta=0.1, L=2)
    with pytest.raises(DomainError):
        boundary_datum(ds, 0, [0.0, 0.0, 0.0])


@given(st.integers(0, 2**32 - 1))
def test_datum_unit_norm(seed):
    rng = np.random.default_rng(seed)
    ds = build_domain(four_points(), delta=0.05, gamma_ratio=0.5, L=2)
    x = rng.uniform(-2, 2, (300, 3))
    for i in range(3):
        v, sing = ds.datum(i, x, tol=0.05)
        np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-12)


def test_terminal_json_roundtrip():
    ts = four_points()
    assert np.array_equal(TerminalSet.from_json(ts.to_json()).points, ts.points)
    doc = {"n": 3, "points": [[0, 0, 0], [1, 0, 0], [0, 1, 0]], "sink_index": 0}
    t2 = TerminalSet.from_json(doc)
    np.testing.assert_array_equal(t2.sink, [0, 0, 0])


@pytest.mark.parametrize("doc", [{}, {"points": [1, 2]}, {"points": [[0, 0, 0], [1, 0, 0]], "n": 2},
                                 {"points": [[0, 0, 0], [0, 0, 0]]},
                                 {"points": [[0, 0, 0], [1, 0, 0]], "sink_index": 5}])
def test_terminal_json_malformed(doc):
    with pytest.raises(ValueError):
        TerminalSet.from_json(doc)


def test_normalized_into_unit_ball():
    ts, c, s = four_points().normalized()
    assert np.max(np.linalg.norm(ts.points, axis=1)) == pytest.approx(1.0)
    assert s == pytest.approx(1 / SQ3)


def test_mask_voxel_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.random((4, 5, 6)) > 0.5
    export_mask_voxels(tmp_path / "m.txt", m, 0.05)
    m2, h = read_mask_voxels(tmp_path / "m.txt")
    np.testing.assert_array_equal(m2, m)
    assert h == 0.05
    first = (tmp_path / "m.txt").read_text().splitlines()
    assert first[0] == "4 5 6 0.05"
    # x fastest
    assert int(first[2]) == int(m[1, 0, 0])
