"""Line-integral forward projection and its exact adjoint.

Each detector pixel value is the midpoint-rule sum
sum_k sample(field, r(t_k)) * step over t_k = t_near + (k + 0.5) * step,
k < ceil((t_far - t_near) / step). Backprojection scatters residuals along
the same t_k with the same trilinear weights, so forward and backward form
an exact adjoint pair at any step. Stored pixel values are the raw line
integrals of density (log-intensity offset fixed at zero).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels
from .field import DenseVolume, FieldGradient, OctreeVolume
from .geometry import AngleSequence, ConeBeamGeometry, rays_for_view


@dataclass
class ProjectionImage:
    """One detector readout: (det_nv, det_nu) line integrals at one angle."""

    data: np.ndarray
    theta_deg: float

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("projection image must be 2-D")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("projection image contains non-finite values")


@dataclass
class ProjectionSet:
    """Ordered projections sharing one acquisition geometry."""

    images: list
    geometry: ConeBeamGeometry
    source_log_intensity: float = 0.0

    def __post_init__(self):
        shape = (self.geometry.det_nv, self.geometry.det_nu)
        for im in self.images:
            if im.data.shape != shape:
                raise ValueError(f"image shape {im.data.shape} does not match "
                                 f"detector {shape}")

    def __len__(self):
        return len(self.images)

    @property
    def angles_deg(self) -> np.ndarray:
        return np.array([im.theta_deg for im in self.images])

    def as_matrix(self) -> np.ndarray:
        """(N, det_nv * det_nu) stack of flattened images."""
        return np.stack([im.data.ravel() for im in self.images])


@dataclass
class ViewPlan:
    """Precomputed ray bundle of one view at one quadrature step."""

    theta_deg: float
    org: np.ndarray
    dirs: np.ndarray
    t0: np.ndarray
    kcnt: np.ndarray
    step: float


def make_plan(geom: ConeBeamGeometry, theta_deg: float, step: float,
              edge: float = 1.0) -> ViewPlan:
    if not step > 0:
        raise ValueError("step must be positive")
    org, dirs, t_near, t_far, hit = rays_for_view(geom, theta_deg, edge)
    kcnt = np.zeros(t_near.size, dtype=np.int64)
    kcnt[hit] = np.ceil((t_far[hit] - t_near[hit]) / step).astype(np.int64)
    return ViewPlan(theta_deg, org, dirs, np.ascontiguousarray(t_near), kcnt, step)


def _field_kernel_args(fld):
    if isinstance(fld, DenseVolume):
        nx, ny, nz = fld.data.shape
        return ("dense", (fld.padded(), nx, ny, nz, 0.5 * fld.extent_edge,
                          nx / fld.extent_edge))
    if isinstance(fld, OctreeVolume):
        return ("oct", fld._kernel_args())
    raise TypeError(f"unsupported field type {type(fld).__name__}")


def forward_project_planned(kind, args, geom, plan: ViewPlan) -> ProjectionImage:
    out = np.empty(plan.kcnt.size)
    if kind == "dense":
        _kernels.forward_dense(out, *args, plan.org, plan.dirs, plan.t0,
                               plan.kcnt, plan.step)
    else:
        _kernels.forward_oct(out, *args, plan.org, plan.dirs, plan.t0,
                             plan.kcnt, plan.step)
    return ProjectionImage(out.reshape(geom.det_nv, geom.det_nu), plan.theta_deg)


def forward_project(fld, geom: ConeBeamGeometry, theta_deg: float,
                    step: float) -> ProjectionImage:
    """Project the field onto the detector at one gantry angle."""
    kind, args = _field_kernel_args(fld)
    plan = make_plan(geom, theta_deg, step, _extent(fld))
    return forward_project_planned(kind, args, geom, plan)


def forward_project_set(fld, geom: ConeBeamGeometry, angles, step: float) -> ProjectionSet:
    """One projection per angle, order preserved."""
    deg = angles.angles_deg if isinstance(angles, AngleSequence) else np.asarray(angles)
    if deg.size == 0:
        raise ValueError("angles must be non-empty")
    kind, args = _field_kernel_args(fld)
    edge = _extent(fld)
    images = [forward_project_planned(kind, args, geom,
                                      make_plan(geom, float(t), step, edge))
              for t in deg]
    return ProjectionSet(images, geom)


def _extent(fld) -> float:
    return fld.extent_edge


class ScatterWorkspace:
    """Reusable chunk buffers for deterministic gradient scatter.

    scatter() accumulates, so several views can be folded into the same
    buffers and merged once; call reset() to start a new accumulation.
    """

    def __init__(self, fld):
        if isinstance(fld, DenseVolume):
            nx, ny, nz = fld.data.shape
            self.kind = "dense"
            self.chunks = np.zeros((_kernels.NCHUNK, nx + 2, ny + 2, nz + 2))
        else:
            self.kind = "oct"
            self.chunks = np.zeros((_kernels.NCHUNK,) + fld.payload.shape)

    def matches(self, fld) -> bool:
        if isinstance(fld, DenseVolume):
            nx, ny, nz = fld.data.shape
            return self.kind == "dense" and self.chunks.shape[1:] == (nx + 2, ny + 2, nz + 2)
        return self.kind == "oct" and self.chunks.shape[1:] == fld.payload.shape

    def reset(self):
        self.chunks[...] = 0.0

    def scatter(self, fld, args, plan: ViewPlan, residual_flat: np.ndarray):
        if self.kind == "dense":
            # args carries the padded field first, which scatter does not need
            _kernels.scatter_dense(self.chunks, *args[1:], plan.org, plan.dirs,
                                   plan.t0, plan.kcnt, residual_flat, plan.step)
        else:
            _kernels.scatter_oct(self.chunks, *args, plan.org, plan.dirs,
                                 plan.t0, plan.kcnt, residual_flat, plan.step)

    def merged(self) -> np.ndarray:
        # fixed-order chunk merge keeps the reduction worker-independent
        total = self.chunks.sum(axis=0)
        if self.kind == "dense":
            return total[1:-1, 1:-1, 1:-1]
        return total


def backproject_gradient(fld, gradient: FieldGradient, geom: ConeBeamGeometry,
                         theta_deg: float, residual: ProjectionImage,
                         step: float):
    """Accumulate the adjoint of forward_project applied to the residual."""
    if residual.data.shape != (geom.det_nv, geom.det_nu):
        raise ValueError("residual dims do not match geometry")
    kind, args = _field_kernel_args(fld)
    plan = make_plan(geom, theta_deg, step, _extent(fld))
    ws = ScatterWorkspace(fld)
    ws.reset()
    ws.scatter(fld, args, plan, np.ascontiguousarray(residual.data.ravel()))
    gradient.data += ws.merged()
