"""Synthetic ground truth and semi-synthetic dataset construction.

The stock phantom is a helix of small constant-density cubes winding from
the bottom of the volume to the top with linearly growing radius. The
shape has no rotational symmetry about z, which keeps view matching free
of aliasing between quarter- and half-turn lookalikes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import DenseVolume
from .geometry import AngleSequence, ConeBeamGeometry, uniform_angles
from .projector import ProjectionSet, forward_project_set


@dataclass(frozen=True)
class SpiralPhantomConfig:
    """Helix-of-cubes parameters.

    cube_edge is a fraction of the volume edge; r_start/r_end are radii as
    fractions of the half-edge; turns counts full revolutions bottom to top.
    """

    n_cubes: int = 12
    cube_edge: float = 0.08
    r_start: float = 0.15
    r_end: float = 0.40
    turns: float = 1.5
    density: float = 1.0
    resolution: int = 64

    def __post_init__(self):
        if self.n_cubes < 0:
            raise ValueError("n_cubes must be nonnegative")
        if not 0 < self.cube_edge < 1:
            raise ValueError("cube_edge must be in (0, 1)")
        if not 0 <= self.r_start < self.r_end <= 1:
            raise ValueError("need 0 <= r_start < r_end <= 1")
        if not self.density > 0:
            raise ValueError("density must be positive")
        if self.resolution < 8:
            raise ValueError("resolution must be at least 8")


@dataclass
class DatasetManifest:
    """Acquisition record: geometry, the uniform angles handed to
    reconstruction, the true angles kept aside for evaluation, and the
    projection image files."""

    geometry: ConeBeamGeometry
    angles_assumed: AngleSequence
    angles_true: AngleSequence | None = None
    image_paths: list | None = None
    value_convention: str = "line_integral"

    def __post_init__(self):
        if self.angles_true is not None and len(self.angles_true) != len(self.angles_assumed):
            raise ValueError("angles_true and angles_assumed must have equal length")
        if self.value_convention != "line_integral":
            raise ValueError("value_convention must be 'line_integral'")


def _cube_centers(cfg: SpiralPhantomConfig, edge: float = 1.0) -> np.ndarray:
    if cfg.n_cubes == 0:
        return np.zeros((0, 3))
    n = cfg.n_cubes
    t = np.arange(n) / (n - 1) if n > 1 else np.array([0.5])
    phi = 2.0 * np.pi * cfg.turns * t
    r = (cfg.r_start + (cfg.r_end - cfg.r_start) * t) * (edge / 2.0)
    z = (t - 0.5) * 0.8 * edge
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def spiral_cube_phantom(cfg: SpiralPhantomConfig) -> DenseVolume:
    """Rasterize the helix of cubes; a voxel belongs to a cube iff its
    center falls inside (no antialiasing)."""
    edge = 1.0
    res = cfg.resolution
    centers = _cube_centers(cfg, edge)
    half_c = 0.5 * cfg.cube_edge * edge
    if centers.size and np.any(np.abs(centers) + half_c > edge / 2.0):
        raise ValueError("a cube exits the volume; shrink radii or cube_edge")
    data = np.zeros((res, res, res))
    ax = ((np.arange(res) + 0.5) / res - 0.5) * edge
    for c in centers:
        ix = np.nonzero(np.abs(ax - c[0]) <= half_c)[0]
        iy = np.nonzero(np.abs(ax - c[1]) <= half_c)[0]
        iz = np.nonzero(np.abs(ax - c[2]) <= half_c)[0]
        data[np.ix_(ix, iy, iz)] = cfg.density
    return DenseVolume(data, extent_edge=edge)


def make_dataset(volume: DenseVolume, geom: ConeBeamGeometry,
                 angles_true: AngleSequence, step: float):
    """Project the ground truth along the true trajectory and pair the
    images with the uniform angles a blind reconstruction would assume.

    Returns (ProjectionSet, DatasetManifest); the manifest keeps the true
    angles in a field the reconstruction path never reads.
    """
    if len(angles_true) == 0:
        raise ValueError("angles_true must be non-empty")
    projections = forward_project_set(volume, geom, angles_true, step)
    n = len(angles_true)
    assumed = uniform_angles(n, 360.0 / n)
    manifest = DatasetManifest(geometry=geom, angles_assumed=assumed,
                               angles_true=angles_true)
    return projections, manifest
