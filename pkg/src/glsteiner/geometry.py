"""Terminals, segments, cone-capped tubes and the tube-excised domain.

A tube around a segment ``S = [a, b]`` is the set

    U(S, delta, gamma) = { x : dist(x, S) < min(delta, gamma / sqrt(1 + gamma^2) * dist(x, {a, b})) }

i.e. a cylinder of radius ``delta`` whose two ends are cones of half-angle
``atan(gamma)`` with apexes at the endpoints.  The computational domain is the
box ``[-L, L]^n`` with the closures of all tubes removed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)


class DomainError(ValueError):
    """Raised when a tube-excised domain cannot be built as requested."""


# --------------------------------------------------------------------------
# Terminals
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TerminalSet:
    """N distinct points in R^n; the last point is the sink."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError("points must be an (N, n) array")
        if pts.shape[0] < 2:
            raise ValueError("need at least two terminals")
        if pts.shape[1] < 3:
            raise ValueError("ambient dimension must be >= 3")
        diff = pts[:, None, :] - pts[None, :, :]
        d = np.linalg.norm(diff, axis=-1) + np.eye(len(pts))
        if np.any(d < 1e-12):
            raise ValueError("terminals must be pairwise distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def sink(self) -> np.ndarray:
        return self.points[-1]

    @property
    def sources(self) -> np.ndarray:
        return self.points[:-1]

    def normalized(self) -> tuple["TerminalSet", np.ndarray, float]:
        """Center on the bounding-box center and shrink into the closed unit ball.

        Returns ``(terminals, center, scale)`` with ``new = (old - center) * scale``.
        Sets already inside the unit ball after centering are not enlarged.
        """
        center = 0.5 * (self.points.min(axis=0) + self.points.max(axis=0))
        shifted = self.points - center
        r = np.linalg.norm(shifted, axis=1).max()
        scale = 1.0 / r if r > 1.0 else 1.0
        return TerminalSet(shifted * scale), center, scale

    def transformed(self, rotation=None, scale: float = 1.0, shift=None) -> "TerminalSet":
        pts = self.points
        if rotation is not None:
            pts = pts @ np.asarray(rotation).T
        pts = pts * scale
        if shift is not None:
            pts = pts + np.asarray(shift)
        return TerminalSet(pts)

    def to_json(self) -> dict:
        return {"n": self.n, "points": self.points.tolist(), "sink_index": self.N - 1}

    @classmethod
    def from_json(cls, doc: dict) -> "TerminalSet":
        try:
            pts = np.array(doc["points"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed terminal document: {exc}") from exc
        if pts.ndim != 2:
            raise ValueError("'points' must be a list of coordinate lists")
        n = int(doc.get("n", pts.shape[1]))
        if pts.shape[1] != n:
            raise ValueError(f"points have dimension {pts.shape[1]}, document says n={n}")
        sink = int(doc.get("sink_index", len(pts) - 1))
        if not -len(pts) <= sink < len(pts):
            raise ValueError(f"sink_index {sink} out of range")
        sink %= len(pts)
        order = [k for k in range(len(pts)) if k != sink] + [sink]
        return cls(pts[order])

    @classmethod
    def load(cls, path) -> "TerminalSet":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# --------------------------------------------------------------------------
# Segments and tubes
# --------------------------------------------------------------------------


def _gram_schmidt_frame(t: np.ndarray) -> np.ndarray:
    """Orthonormal basis (rows) of the hyperplane normal to unit vector ``t``.

    Starts from the standard basis vector least aligned with ``t`` and fixes the
    orientation so that ``(t, f_1, ..., f_{n-1})`` is positively oriented.
    """
    n = t.size
    order = np.argsort(np.abs(t), kind="stable")
    basis = [t]
    for k in order:
        v = np.zeros(n)
        v[k] = 1.0
        for b in basis:
            v = v - (v @ b) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            basis.append(v / nv)
        if len(basis) == n:
            break
    frame = np.array(basis[1:])
    if np.linalg.det(np.vstack([t, frame])) < 0:
        frame[-1] = -frame[-1]
    return frame


def _transport_frame(frame: np.ndarray, t_old: np.ndarray, t_new: np.ndarray) -> np.ndarray:
    """Carry ``frame`` from direction ``t_old`` to ``t_new`` by the minimal rotation."""
    c = float(t_old @ t_new)
    w = t_new - c * t_old
    s = np.linalg.norm(w)
    if s < 1e-12:
        if c > 0:
            return frame.copy()
        return _gram_schmidt_frame(t_new)
    w = w / s
    # rotation in the plane span(t_old, w) by the angle between t_old and t_new
    out = []
    for f in frame:
        a, b = f @ t_old, f @ w
        rest = f - a * t_old - b * w
        out.append(rest + (a * c - b * s) * t_old + (a * s + b * c) * w)
    out = np.array(out)
    for k in range(len(out)):
        for j in range(k):
            out[k] -= (out[k] @ out[j]) * out[j]
        out[k] -= (out[k] @ t_new) * t_new
        out[k] /= np.linalg.norm(out[k])
    if np.linalg.det(np.vstack([t_new, out])) < 0:
        out[-1] = -out[-1]
    return out


@dataclass(frozen=True, eq=False)
class Segment:
    """Oriented segment from ``a`` to ``b``."""

    a: np.ndarray
    b: np.ndarray
    frame_override: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        b = np.array(self.b, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("segment endpoints must be points of equal dimension")
        if np.linalg.norm(b - a) <= 1e-14:
            raise ValueError("degenerate segment")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.size

    @cached_property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))

    @cached_property
    def direction(self) -> np.ndarray:
        return (self.b - self.a) / self.length

    @cached_property
    def frame(self) -> np.ndarray:
        """(n-1, n) orthonormal rows spanning the normal hyperplane."""
        if self.frame_override is not None:
            return np.asarray(self.frame_override, dtype=float)
        return _gram_schmidt_frame(self.direction)

    def distance(self, x) -> np.ndarray:
        """Euclidean distance from points ``x`` (..., n) to the closed segment."""
        x = np.asarray(x, dtype=float)
        s = np.clip((x - self.a) @ self.direction, 0.0, self.length)
        foot = self.a + s[..., None] * self.direction
        return np.linalg.norm(x - foot, axis=-1)

    def endpoint_distance(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.minimum(np.linalg.norm(x - self.a, axis=-1), np.linalg.norm(x - self.b, axis=-1))


def transverse_coords(seg: Segment, x):
    """Split ``x`` into the signed coordinate along ``seg`` and the transverse part.

    ``x_par`` is 0 at ``seg.a`` and ``seg.length`` at ``seg.b``; ``x_perp`` is
    expressed in ``seg.frame``.  Works on a single point or an (..., n) array.
    """
    rel = np.asarray(x, dtype=float) - seg.a
    x_par = rel @ seg.direction
    x_perp = rel @ seg.frame.T
    return x_par, x_perp


def from_transverse_coords(seg: Segment, x_par, x_perp) -> np.ndarray:
    return seg.a + np.asarray(x_par)[..., None] * seg.direction + np.asarray(x_perp) @ seg.frame


@dataclass(frozen=True, eq=False)
class Tube:
    segment: Segment
    delta: float
    gamma: float

    def __post_init__(self):
        if not (self.delta > 0 and self.gamma > 0):
            raise ValueError("tube parameters delta and gamma must be positive")

    @property
    def cone_factor(self) -> float:
        return self.gamma / np.sqrt(1.0 + self.gamma**2)

    def radius_bound(self, x) -> np.ndarray:
        """Right-hand side ``min(delta, gamma' dist(x, ends))`` of the membership test."""
        return np.minimum(self.delta, self.cone_factor * self.segment.endpoint_distance(x))

    def contains(self, x) -> np.ndarray:
        return self.segment.distance(x) < self.radius_bound(x)

    def contains_closed(self, x) -> np.ndarray:
        return self.segment.distance(x) <= self.radius_bound(x)


def tube_contains(t: Tube, x):
    """Open tube membership; scalar bool for one point, array for many."""
    out = t.contains(x)
    return bool(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# Domain
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """Box ``[-L, L]^n`` minus the closed tube unions ``V_i`` around the curves ``gamma_i``.

    ``curves[i]`` is the polyline (as a point array) from the sink to source ``i``.
    """

    box: float
    terminals: TerminalSet
    curves: tuple
    tubes: tuple
    delta: float
    gamma: float

    @property
    def n(self) -> int:
        return self.terminals.n

    @property
    def n_components(self) -> int:
        return self.terminals.N - 1

    @cached_property
    def _segment_table(self):
        segs, owner = [], []
        for i, tubes in enumerate(self.tubes):
            for tb in tubes:
                segs.append(tb)
                owner.append(i)
        return segs, np.array(owner, dtype=int)

    def in_tubes(self, x) -> np.ndarray:
        """True where ``x`` lies in some closed tube ``V_i`` (vectorised)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1], dtype=bool)
        for tb in self._segment_table[0]:
            out |= tb.contains_closed(x)
        return out

    def in_box(self, x) -> np.ndarray:
        return np.all(np.abs(np.asarray(x)) <= self.box + 1e-12, axis=-1)

    def mask(self, x) -> np.ndarray:
        """Membership in the closed box minus the closed tubes."""
        return self.in_box(x) & ~self.in_tubes(x)

    def nearest_tube(self, x):
        """Owner curve, segment index in the global table, and distance to its axis."""
        x = np.asarray(x, dtype=float)
        segs, owner = self._segment_table
        dists = np.stack([tb.segment.distance(x) for tb in segs], axis=-1)
        k = np.argmin(dists, axis=-1)
        return owner[k], k, np.take_along_axis(dists, k[..., None], axis=-1)[..., 0]

    def datum(self, i: int, x, tol: float = 0.0, singular_tol: float = 1e-12):
        """Vectorised boundary datum for component ``i``; see ``boundary_datum``.

        Returns ``(values, singular)`` where ``singular`` marks points with
        ``|x''| <= singular_tol`` on the own tube (values there are ``e_{n-1}``).
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        k_dim = self.n - 1
        vals = np.zeros(x.shape[:-1] + (k_dim,))
        vals[..., -1] = 1.0
        singular = np.zeros(x.shape[:-1], dtype=bool)
        owner, k, dist = self.nearest_tube(x)
        segs, _ = self._segment_table
        near = dist <= self.delta + tol
        mine = near & (owner == i)
        for kk in np.unique(k[mine]):
            sel = mine & (k == kk)
            _, perp = transverse_coords(segs[kk].segment, x[sel])
            r = np.linalg.norm(perp, axis=-1)
            bad = r <= singular_tol
            good_vals = perp / np.where(bad, 1.0, r)[:, None]
            good_vals[bad] = vals[sel][bad]
            vals[sel] = good_vals
            sg = singular[sel]
            sg[bad] = True
            singular[sel] = sg
        return vals, singular

    def shape_summary(self) -> str:
        return ", ".join(f"gamma_{i + 1}: {len(c) - 1} leg(s)" for i, c in enumerate(self.curves))


def boundary_datum(ds: DomainSpec, i: int, x, tol: float | None = None) -> np.ndarray:
    """Winding datum of component ``i`` at a boundary point ``x``.

    On the boundary of the own tube union ``V_i`` this is ``x''/|x''|`` in the
    frame of the nearest segment of ``gamma_i``; everywhere else (box faces,
    other tubes) it is the last basis vector ``e_{n-1}``.  ``tol`` is the slack
    allowed between ``x`` and the tube surface (default: one tenth of delta).
    """
    tol = 0.1 * ds.delta if tol is None else tol
    vals, singular = ds.datum(i, np.asarray(x, dtype=float)[None, :], tol=tol)
    if singular[0]:
        raise DomainError("datum undefined on a tube axis (|x''| = 0)")
    return vals[0]


def _segment_distance(p0, p1, q0, q1) -> float:
    """Distance between closed segments [p0, p1] and [q0, q1] in R^n."""
    d1, d2, r = p1 - p0, q1 - q0, p0 - q0
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r
    c, b = d1 @ r, d1 @ d2
    denom = a * e - b * b
    best = np.inf
    candidates = []
    if denom > 1e-14 * a * e:
        s = np.clip((b * f - c * e) / denom, 0, 1)
        t = np.clip((b * s + f) / e, 0, 1)
        s = np.clip((b * t - c) / a, 0, 1)
        candidates.append((s, t))
    for s in (0.0, 1.0):
        candidates.append((s, np.clip((b * s + f) / e, 0, 1)))
    for t in (0.0, 1.0):
        candidates.append((np.clip((b * t - c) / a, 0, 1), t))
    for s, t in candidates:
        best = min(best, float(np.linalg.norm(p0 + s * d1 - q0 - t * d2)))
    return best


def _angle(u, v) -> float:
    c = u @ v / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def _conflicts(curves, delta, gamma):
    """Pairs ``(i, j)`` of curves whose tubes may touch away from the sink.

    The test is sufficient for disjointness: legs leaving the sink must be
    separated by more than twice the cone half-angle, every other pair of legs
    by more than ``2 delta``.
    """
    cone = np.arctan(gamma)
    bad = []
    for i in range(len(curves)):
        for j in range(i + 1, len(curves)):
            ok = True
            ci, cj = curves[i], curves[j]
            for a in range(len(ci) - 1):
                for b in range(len(cj) - 1):
                    if a == 0 and b == 0:
                        ang = _angle(ci[1] - ci[0], cj[1] - cj[0])
                        if ang <= 2 * cone * 1.05:
                            ok = False
                        continue
                    if _segment_distance(ci[a], ci[a + 1], cj[b], cj[b + 1]) <= 2 * delta:
                        ok = False
            if not ok:
                bad.append((i, j))
    return bad


def _detour(curve, other, delta, gamma) -> np.ndarray:
    """Two-leg replacement for a straight curve that runs too close to ``other``."""
    p0, p1 = curve[0], curve[-1]
    t = (p1 - p0) / np.linalg.norm(p1 - p0)
    s = other[-1] - other[0]
    s = s / np.linalg.norm(s)
    # first frame vector of t that is also orthogonal to the other direction
    w = None
    for f in _gram_schmidt_frame(t):
        v = f - (f @ s) * s - (f @ t) * t
        if np.linalg.norm(v) > 1e-6:
            w = v / np.linalg.norm(v)
            break
    if w is None:
        w = _gram_schmidt_frame(t)[0]
    half = 0.5 * np.linalg.norm(p1 - p0)
    # the first leg must clear the neighbouring cone at the sink as well
    height = max(3 * delta, half * np.tan(min(3.0 * np.arctan(gamma), 1.2)))
    mid = 0.5 * (p0 + p1) + height * w
    return np.array([p0, mid, p1])


def build_domain(ts: TerminalSet, delta: float = 0.05, gamma_ratio: float = 3.0, L: float = 2.0,
                 max_halvings: int = 10) -> DomainSpec:
    """Reference curves from the sink to each source, tubes around them, and the box.

    Straight curves are used unless two of them conflict, in which case the
    longer one is replaced by a two-leg detour.  ``delta`` is halved (at most
    ``max_halvings`` times) until all tube unions are disjoint away from the sink.
    """
    if delta <= 0 or gamma_ratio <= 0:
        raise ValueError("delta and gamma_ratio must be positive")
    sink = ts.sink
    d = float(delta)
    for attempt in range(max_halvings + 1):
        gamma = gamma_ratio * d
        curves = [np.array([sink, p]) for p in ts.sources]
        for _ in range(3):
            bad = _conflicts(curves, d, gamma)
            if not bad:
                break
            for i, j in bad:
                # the longer straight curve is the one that can run through the other's end
                order = sorted((i, j), key=lambda k: -np.linalg.norm(curves[k][-1] - curves[k][0]))
                for k, other in (order, order[::-1]):
                    if len(curves[k]) == 2:
                        curves[k] = _detour(curves[k], curves[other], d, gamma)
                        break
        if not _conflicts(curves, d, gamma):
            break
        logger.info("tubes not disjoint at delta=%g; halving", d)
        d *= 0.5
    else:
        raise DomainError(f"tube unions not disjoint after {max_halvings} halvings of delta")

    reach = max(np.abs(c).max() for c in curves) + d
    if reach >= L:
        raise DomainError(f"tubes reach |x|_inf = {reach:.3f}, box half-width L = {L} too small")

    tubes = []
    for c in curves:
        legs = []
        frame = None
        prev_t = None
        for a, b in zip(c[:-1], c[1:]):
            seg = Segment(a, b)
            if frame is not None:
                frame = _transport_frame(frame, prev_t, seg.direction)
                seg = Segment(a, b, frame_override=frame)
            else:
                frame = seg.frame
            prev_t = seg.direction
            legs.append(Tube(seg, d, gamma))
        tubes.append(tuple(legs))
    return DomainSpec(box=float(L), terminals=ts, curves=tuple(curves), tubes=tuple(tubes),
                      delta=d, gamma=gamma)


def export_mask_voxels(path, mask: np.ndarray, h: float) -> None:
    """ASCII voxel dump: header ``nx ny nz h`` then one 0/1 per node, x fastest."""
    mask = np.asarray(mask)
    if mask.ndim != 3:
        raise ValueError("voxel export needs a 3-d mask")
    nx, ny, nz = mask.shape
    flat = mask.astype(np.int8).transpose(2, 1, 0).ravel()
    with open(path, "w") as fh:
        fh.write(f"{nx} {ny} {nz} {h!r}\n")
        fh.write("\n".join(map(str, flat.tolist())))
        fh.write("\n")


def read_mask_voxels(path):
    with open(path) as fh:
        head = fh.readline().split()
        nx, ny, nz, h = int(head[0]), int(head[1]), int(head[2]), float(head[3])
        vals = np.array([int(v) for v in fh.read().split()], dtype=np.int64)
    return vals.reshape(nz, ny, nx).transpose(2, 1, 0), h
