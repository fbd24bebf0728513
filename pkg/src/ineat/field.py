"""Density-field storage: dense voxel grids and a block octree.

Both layouts store attenuation samples on voxel-center lattices inside a
cube of side extent_edge centered on the world origin, and both expose
trilinear point sampling plus its exact adjoint (gradient scatter). The
octree partitions the cube into leaves on a power-of-two grid; every leaf
carries the same payload resolution, so a coarse leaf simply covers more
world volume per stored sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _kernels

MAX_GRID_LIMIT = 16


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class DenseVolume:
    """Regular nx * ny * nz grid of nonnegative densities.

    data is indexed [x, y, z]; voxel (i, j, k) is centered at
    ((i + 0.5) / nx - 0.5) * extent_edge along x, and likewise per axis.
    """

    data: np.ndarray
    extent_edge: float = 1.0
    require_nonneg: bool = True

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or min(self.data.shape) < 2:
            raise ValueError("volume must be 3-D with at least 2 voxels per axis")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("volume contains non-finite values")
        if self.require_nonneg and self.data.min() < 0:
            raise ValueError("volume contains negative densities")
        if not self.extent_edge > 0:
            raise ValueError("extent_edge must be positive")

    @property
    def shape(self):
        return self.data.shape

    def padded(self) -> np.ndarray:
        """Copy with one zero voxel of padding per face (kernel input)."""
        nx, ny, nz = self.data.shape
        pad = np.zeros((nx + 2, ny + 2, nz + 2))
        pad[1:-1, 1:-1, 1:-1] = self.data
        return pad


@dataclass
class OctreeVolume:
    """Block octree over a max_grid^3 finest partition of the cube.

    block_of maps every finest-grid cell to the index of the leaf covering
    it, or -1 where the region is pruned. Leaf l spans leaf_span[l] finest
    cells per axis starting at finest cell leaf_cell_lo[l] and stores a
    payload_res^3 voxel-center lattice.
    """

    max_grid: int
    payload_res: int
    mode: str
    block_of: np.ndarray
    leaf_cell_lo: np.ndarray
    leaf_span: np.ndarray
    payload: np.ndarray
    extent_edge: float = 1.0
    base_grid: int = 4
    leaf_lo_w: np.ndarray = field(init=False)
    leaf_inv_h: np.ndarray = field(init=False)

    def __post_init__(self):
        self._rebuild_derived()

    def _rebuild_derived(self):
        half = 0.5 * self.extent_edge
        cell = self.extent_edge / self.max_grid
        self.leaf_lo_w = self.leaf_cell_lo * cell - half
        self.leaf_inv_h = self.payload_res / (self.leaf_span * cell)

    @property
    def n_leaves(self) -> int:
        return self.payload.shape[0]

    def leaf_depth(self, l: int) -> int:
        return int(np.log2(self.max_grid // self.leaf_span[l]))

    def _kernel_args(self):
        return (self.payload, self.block_of, self.leaf_lo_w, self.leaf_inv_h,
                self.payload_res, 0.5 * self.extent_edge,
                self.max_grid / self.extent_edge, self.max_grid - 1)


@dataclass
class FieldGradient:
    """Loss-gradient buffer congruent to its field's stored payload."""

    data: np.ndarray

    def zero(self):
        self.data[...] = 0.0


def gradient_for(fld) -> FieldGradient:
    if isinstance(fld, DenseVolume):
        return FieldGradient(np.zeros_like(fld.data))
    return FieldGradient(np.zeros_like(fld.payload))


def init_octree(mode: str, payload_res: int = 8, max_grid: int = MAX_GRID_LIMIT,
                base_grid: int = 4, extent_edge: float = 1.0) -> OctreeVolume:
    """Zeroed octree: 'adaptive' starts at base_grid^3 leaves that refine
    toward max_grid^3; 'global' starts at max_grid^3 leaves outright."""
    if mode not in ("adaptive", "global"):
        raise ValueError(f"mode must be 'adaptive' or 'global', got {mode!r}")
    if not (_is_pow2(base_grid) and _is_pow2(max_grid)) or base_grid > max_grid:
        raise ValueError("base_grid and max_grid must be powers of two with base <= max")
    if max_grid > MAX_GRID_LIMIT:
        raise ValueError(f"max_grid above the {MAX_GRID_LIMIT}^3 block limit")
    if payload_res < 2:
        raise ValueError("payload_res must be at least 2")
    grid = max_grid if mode == "global" else base_grid
    span = max_grid // grid
    n = grid ** 3
    lo = np.stack(np.meshgrid(*(np.arange(grid),) * 3, indexing="ij"),
                  axis=-1).reshape(n, 3).astype(np.int64) * span
    block_of = np.zeros((max_grid,) * 3, dtype=np.int32)
    for l in range(n):
        x, y, z = lo[l]
        block_of[x:x + span, y:y + span, z:z + span] = l
    return OctreeVolume(
        max_grid=max_grid, payload_res=payload_res, mode=mode,
        block_of=block_of, leaf_cell_lo=lo,
        leaf_span=np.full(n, span, dtype=np.int64),
        payload=np.zeros((n, payload_res, payload_res, payload_res)),
        extent_edge=extent_edge, base_grid=base_grid)


def octree_from_dense(vol: DenseVolume, payload_res: int = 8,
                      max_grid: int = MAX_GRID_LIMIT) -> OctreeVolume:
    """Global-mode octree holding the dense volume exactly; requires the
    dense resolution to equal max_grid * payload_res per axis."""
    n = max_grid * payload_res
    if vol.data.shape != (n, n, n):
        raise ValueError(f"volume must be {n}^3 to match max_grid * payload_res")
    oct_ = init_octree("global", payload_res, max_grid, extent_edge=vol.extent_edge)
    for l in range(oct_.n_leaves):
        x, y, z = oct_.leaf_cell_lo[l] * payload_res
        oct_.payload[l] = vol.data[x:x + payload_res, y:y + payload_res, z:z + payload_res]
    return oct_


def _as_points(point):
    pts = np.atleast_2d(np.asarray(point, dtype=np.float64))
    if pts.shape[-1] != 3:
        raise ValueError("points must have 3 components")
    return np.ascontiguousarray(pts)


def sample(fld, point):
    """Trilinear density at world point(s); 0 outside the extent.

    point may be one 3-vector or an array of shape (Q, 3); returns a
    scalar or a length-Q array accordingly.
    """
    pts = _as_points(point)
    vals = np.empty(pts.shape[0])
    if isinstance(fld, DenseVolume):
        nx, ny, nz = fld.data.shape
        _kernels.sample_points_dense(vals, fld.padded(), nx, ny, nz,
                                     0.5 * fld.extent_edge, nx / fld.extent_edge, pts)
    else:
        _kernels.sample_points_oct(vals, *fld._kernel_args(), pts)
    return vals if np.asarray(point).ndim > 1 else float(vals[0])


def scatter_gradient(fld, gradient: FieldGradient, point, weight):
    """Adjoint of sample: adds weight times each trilinear basis coefficient
    into the gradient buffer; no-op outside the extent."""
    pts = _as_points(point)
    w = np.broadcast_to(np.asarray(weight, dtype=np.float64), (pts.shape[0],))
    w = np.ascontiguousarray(w)
    if isinstance(fld, DenseVolume):
        if gradient.data.shape != fld.data.shape:
            raise ValueError("gradient shape does not match field")
        nx, ny, nz = fld.data.shape
        pad = np.zeros((nx + 2, ny + 2, nz + 2))
        _kernels.scatter_points_dense(pad, nx, ny, nz, 0.5 * fld.extent_edge,
                                      nx / fld.extent_edge, pts, w)
        gradient.data += pad[1:-1, 1:-1, 1:-1]
    else:
        if gradient.data.shape != fld.payload.shape:
            raise ValueError("gradient shape does not match field")
        _kernels.scatter_points_oct(gradient.data, *fld._kernel_args(), pts, w)


def block_split_scores(oct_: OctreeVolume) -> np.ndarray:
    """Per-leaf information proxy: total absolute first differences of the
    payload (discrete total variation)."""
    p = oct_.payload
    return (np.abs(np.diff(p, axis=1)).sum(axis=(1, 2, 3))
            + np.abs(np.diff(p, axis=2)).sum(axis=(1, 2, 3))
            + np.abs(np.diff(p, axis=3)).sum(axis=(1, 2, 3)))


def _upsample_child(parent: np.ndarray, octant, vres: int) -> np.ndarray:
    # child sample j sits at parent local coordinate (o*vres + j + 0.5)/2 - 0.5
    ax = (np.arange(vres) + 0.5) / 2.0 - 0.5
    co = [ax + o * vres / 2.0 for o in octant]
    gx, gy, gz = np.meshgrid(co[0], co[1], co[2], indexing="ij")
    coords = np.stack([gx, gy, gz])
    return ndimage.map_coordinates(parent, coords, order=1, mode="nearest")


def refine(oct_: OctreeVolume, split_scores: np.ndarray, tau_split: float,
           tau_prune: float) -> OctreeVolume:
    """One refinement sweep: prune leaves whose max density is below
    tau_prune, split leaves scoring above tau_split (children initialized
    by trilinear upsampling), keep the rest. No-op in global mode.
    Returns the same object, rebuilt in place."""
    if oct_.mode == "global":
        return oct_
    vres = oct_.payload_res
    new_lo, new_span, new_payload = [], [], []
    for l in range(oct_.n_leaves):
        span = int(oct_.leaf_span[l])
        if float(oct_.payload[l].max()) < tau_prune:
            continue
        if split_scores[l] > tau_split and span > 1:
            child = span // 2
            for ox in range(2):
                for oy in range(2):
                    for oz in range(2):
                        new_lo.append(oct_.leaf_cell_lo[l]
                                      + np.array([ox, oy, oz]) * child)
                        new_span.append(child)
                        new_payload.append(_upsample_child(oct_.payload[l],
                                                           (ox, oy, oz), vres))
        else:
            new_lo.append(oct_.leaf_cell_lo[l].copy())
            new_span.append(span)
            new_payload.append(oct_.payload[l].copy())
    oct_.leaf_cell_lo = (np.array(new_lo, dtype=np.int64).reshape(-1, 3)
                         if new_lo else np.zeros((0, 3), dtype=np.int64))
    oct_.leaf_span = np.array(new_span, dtype=np.int64)
    oct_.payload = (np.stack(new_payload) if new_payload
                    else np.zeros((0, vres, vres, vres)))
    oct_.block_of = np.full((oct_.max_grid,) * 3, -1, dtype=np.int32)
    for l in range(oct_.n_leaves):
        x, y, z = oct_.leaf_cell_lo[l]
        s = int(oct_.leaf_span[l])
        oct_.block_of[x:x + s, y:y + s, z:z + s] = l
    oct_._rebuild_derived()
    return oct_


def to_dense(oct_: OctreeVolume, nx: int, ny: int, nz: int) -> DenseVolume:
    """Resample the octree onto a dense voxel-center lattice."""
    if min(nx, ny, nz) < 2:
        raise ValueError("target dims must be at least 2 per axis")
    e = oct_.extent_edge
    cx = ((np.arange(nx) + 0.5) / nx - 0.5) * e
    cy = ((np.arange(ny) + 0.5) / ny - 0.5) * e
    cz = ((np.arange(nz) + 0.5) / nz - 0.5) * e
    gx, gy, gz = np.meshgrid(cx, cy, cz, indexing="ij")
    pts = np.ascontiguousarray(
        np.stack([gx, gy, gz], axis=-1).reshape(-1, 3))
    vals = np.empty(pts.shape[0])
    _kernels.sample_points_oct(vals, *oct_._kernel_args(), pts)
    # trilinear blends of nonnegative payloads; clip fp dust
    return DenseVolume(np.maximum(vals, 0.0).reshape(nx, ny, nz),
                       extent_edge=e)


def cross_block_jump(oct_: OctreeVolume) -> float:
    """Largest one-sided sampling disagreement across interior leaf faces.

    For every face between two distinct leaves the field is evaluated at
    shared face points from both leaves' stencils. Equal-depth faces agree
    exactly; unequal-depth faces may jump, and the maximum jump is the
    continuity defect of the adaptive layout.
    """
    b = oct_.max_grid
    vres = oct_.payload_res
    e = oct_.extent_edge
    half = 0.5 * e
    cell = e / b
    worst = 0.0
    for axis in range(3):
        lo = oct_.block_of
        hi = np.roll(lo, -1, axis=axis)
        sl = [slice(None)] * 3
        sl[axis] = slice(0, b - 1)
        pairs = np.argwhere((lo[tuple(sl)] != hi[tuple(sl)])
                            & (lo[tuple(sl)] >= 0) & (hi[tuple(sl)] >= 0))
        if pairs.size == 0:
            continue
        for cxyz in pairs:
            c = cxyz.copy()
            la = int(lo[tuple(c)])
            cb = c.copy()
            cb[axis] += 1
            lb = int(oct_.block_of[tuple(cb)])
            # probe on the finer side's face lattice within this finest cell
            fine = la if oct_.leaf_span[la] <= oct_.leaf_span[lb] else lb
            ih = oct_.leaf_inv_h[fine]
            h = 1.0 / ih
            n_in = max(1, int(round(cell * ih)))
            face_w = (c[axis] + 1) * cell - half
            off0 = oct_.leaf_lo_w[fine]
            t1, t2 = [a for a in range(3) if a != axis]
            # in-face sample positions aligned with the fine leaf's lattice
            j1 = int(round((c[t1] * cell - half - off0[t1]) * ih))
            base1 = off0[t1] + (np.arange(n_in) + j1 + 0.5) * h
            j2 = int(round((c[t2] * cell - half - off0[t2]) * ih))
            base2 = off0[t2] + (np.arange(n_in) + j2 + 0.5) * h
            g1, g2 = np.meshgrid(base1, base2, indexing="ij")
            pts = np.empty((n_in * n_in, 3))
            pts[:, axis] = face_w
            pts[:, t1] = g1.ravel()
            pts[:, t2] = g2.ravel()
            pts = np.ascontiguousarray(pts)
            va = np.empty(pts.shape[0])
            vb = np.empty(pts.shape[0])
            ids_a = np.full(pts.shape[0], la, dtype=np.int64)
            ids_b = np.full(pts.shape[0], lb, dtype=np.int64)
            _kernels.sample_in_leaf_oct(va, *oct_._kernel_args(), ids_a, pts)
            _kernels.sample_in_leaf_oct(vb, *oct_._kernel_args(), ids_b, pts)
            d = float(np.abs(va - vb).max())
            if d > worst:
                worst = d
    return worst
