"""Masked lattice for the excised domain.

Active nodes (inside the closed box, outside every closed tube) are stored
in flat arrays in grid (C) order.  ``plus[a, m]`` / ``minus[a, m]`` index the
two nodes of the difference stencil along axis ``a``: the forward pair when
the forward neighbour is active, the backward pair otherwise, and ``m`` twice
when neither neighbour exists (zero difference).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import DomainSpec

FREE, PINNED = 0, 1


class GridError(ValueError):
    pass


@dataclass(eq=False)
class GridSpec:
    h: float
    dims: tuple
    origin: np.ndarray
    grid_index: np.ndarray  # flat C-order grid index of every active node
    plus: np.ndarray
    minus: np.ndarray
    state: np.ndarray  # FREE / PINNED per active node
    datum: np.ndarray  # (N-1, n_pinned, n-1) values at pinned nodes
    pinned: np.ndarray  # active indices of pinned nodes
    domain: DomainSpec | None = None
    info: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def n_nodes(self) -> int:
        return len(self.grid_index)

    @property
    def n_components(self) -> int:
        return self.datum.shape[0]

    @property
    def free(self) -> np.ndarray:
        return self.state == FREE

    def multi_index(self, nodes=None) -> np.ndarray:
        gi = self.grid_index if nodes is None else self.grid_index[nodes]
        return np.stack(np.unravel_index(gi, self.dims), axis=-1)

    def coords(self, nodes=None) -> np.ndarray:
        return self.origin + self.h * self.multi_index(nodes)

    def index_map(self) -> np.ndarray:
        """Dense array mapping grid nodes to active indices (-1 if excluded)."""
        out = np.full(int(np.prod(self.dims)), -1, dtype=np.int64)
        out[self.grid_index] = np.arange(self.n_nodes)
        return out.reshape(self.dims)

    def dense(self, values: np.ndarray, fill=np.nan) -> np.ndarray:
        """Scatter per-node values (leading axis M) onto the full grid."""
        out = np.full((int(np.prod(self.dims)),) + values.shape[1:], fill, dtype=values.dtype)
        out[self.grid_index] = values
        return out.reshape(tuple(self.dims) + values.shape[1:])

    def summary(self) -> dict:
        return {
            "h": self.h,
            "dims": list(self.dims),
            "active": int(self.n_nodes),
            "pinned": int(len(self.pinned)),
            **self.info,
        }


def _axes(ds: DomainSpec, h: float):
    L = ds.box
    k = int(round(2 * L / h))
    if abs(k * h - 2 * L) > 1e-9 * max(1.0, L):
        raise GridError(f"box side 2L={2 * L} is not a multiple of h={h}")
    return np.linspace(-L, L, k + 1)


def build_grid(ds: DomainSpec, h: float, check_resolution: bool = True, chunk: int = 400_000) -> GridSpec:
    """Classify the lattice of spacing ``h`` on ``ds`` into free, pinned or excluded nodes."""
    if h <= 0:
        raise GridError("h must be positive")
    if check_resolution and ds.delta < 3 * h * (1 - 1e-12):
        raise GridError(f"tube radius delta={ds.delta:.4g} is under-resolved: need delta >= 3h = {3 * h:.4g}")
    n = ds.n
    ax = _axes(ds, h)
    dims = (len(ax),) * n
    total = int(np.prod(dims))
    origin = np.full(n, ax[0])

    # mask in chunks of flat grid indices
    mask = np.empty(total, dtype=bool)
    for s in range(0, total, chunk):
        gi = np.arange(s, min(total, s + chunk))
        x = origin + h * np.stack(np.unravel_index(gi, dims), axis=-1)
        mask[s:s + len(gi)] = ~ds.in_tubes(x)
    mask = mask.reshape(dims)
    grid_index = np.flatnonzero(mask)
    M = len(grid_index)
    idx = np.full(dims, -1, dtype=np.int64)
    idx.reshape(-1)[grid_index] = np.arange(M)

    plus = np.empty((n, M), dtype=np.int32)
    minus = np.empty((n, M), dtype=np.int32)
    near_excluded = np.zeros(M, dtype=bool)
    me = np.arange(M)
    for a in range(n):
        fw = np.full(dims, -1, dtype=np.int64)
        bw = np.full(dims, -1, dtype=np.int64)
        sl_dst = [slice(None)] * n
        sl_src = [slice(None)] * n
        sl_dst[a], sl_src[a] = slice(0, -1), slice(1, None)
        fw[tuple(sl_dst)] = idx[tuple(sl_src)]
        bw[tuple(sl_src)] = idx[tuple(sl_dst)]
        f = fw.reshape(-1)[grid_index]
        b = bw.reshape(-1)[grid_index]
        # a missing neighbour that is still inside the box is an excluded (tube) node
        coord = np.unravel_index(grid_index, dims)[a]
        near_excluded |= ((f < 0) & (coord < dims[a] - 1)) | ((b < 0) & (coord > 0))
        p = np.where(f >= 0, f, me)
        q = np.where(f >= 0, me, np.where(b >= 0, b, me))
        p = np.where((f < 0) & (b >= 0), me, p)
        plus[a], minus[a] = p, q
        del fw, bw
    mi = np.stack(np.unravel_index(grid_index, dims), axis=-1)
    on_box = np.any((mi == 0) | (mi == dims[0] - 1), axis=1)
    pinned_mask = on_box | near_excluded

    K = ds.n_components
    pinned = np.flatnonzero(pinned_mask)
    x = origin + h * mi[pinned]
    datum = np.zeros((K, len(pinned), n - 1))
    demote = np.zeros(len(pinned), dtype=bool)
    box_p = on_box[pinned]
    for i in range(K):
        vals, singular = ds.datum(i, x, tol=2 * h, singular_tol=0.5 * h)
        vals[box_p] = 0.0
        vals[box_p, -1] = 1.0
        datum[i] = vals
        demote |= singular & ~box_p
    if demote.any():
        pinned_mask[pinned[demote]] = False
        keep = ~demote
        pinned, datum = pinned[keep], datum[:, keep]
    state = np.where(pinned_mask, PINNED, FREE).astype(np.int8)
    info = {"demoted_axis_nodes": int(demote.sum()), "excluded": int(total - M), "L": ds.box}
    return GridSpec(h, dims, origin, grid_index, plus, minus, state, datum, pinned, ds, info)


def uniform_grid(n: int, L: float, h: float, n_components: int = 1) -> GridSpec:
    """Box without tubes: only the box faces are pinned (to ``e_{n-1}``)."""
    k = int(round(2 * L / h))
    dims = (k + 1,) * n
    total = int(np.prod(dims))
    grid_index = np.arange(total)
    mi = np.stack(np.unravel_index(grid_index, dims), axis=-1)
    plus = np.empty((n, total), dtype=np.int32)
    minus = np.empty((n, total), dtype=np.int32)
    strides = np.array([int(np.prod(dims[a + 1:])) for a in range(n)])
    for a in range(n):
        last = mi[:, a] == dims[a] - 1
        plus[a] = np.where(last, grid_index, grid_index + strides[a])
        minus[a] = np.where(last, grid_index - strides[a], grid_index)
    on_box = np.any((mi == 0) | (mi == k), axis=1)
    pinned = np.flatnonzero(on_box)
    datum = np.zeros((n_components, len(pinned), n - 1))
    datum[..., -1] = 1.0
    state = np.where(on_box, PINNED, FREE).astype(np.int8)
    return GridSpec(h, dims, np.full(n, -L), grid_index, plus, minus, state, datum, pinned, None,
                    {"L": L, "excluded": 0, "demoted_axis_nodes": 0})


def recommended_h(eps_min: float) -> float:
    return 0.5 * eps_min


def box_for(ts_points: np.ndarray, delta: float, h: float, pad: float = 0.1) -> float:
    """Smallest half-width, on the lattice of spacing ``h``, keeping tubes ``pad`` inside."""
    reach = float(np.max(np.abs(ts_points))) + delta + pad
    return h * math.ceil(reach / h)
