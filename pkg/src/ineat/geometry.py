"""Acquisition geometry: beam models, per-pixel rays, and scan trajectories.

World units are edges of the reconstruction cube, which is centered on the
origin. The gantry rotates about +z; at angle 0 the source sits on the -x
axis and the beam axis points along +x.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VOLUME_EDGE = 1.0

_SIMULATED = ("uniform", "perturbed", "accelerated", "combined")
_PROVENANCES = _SIMULATED + ("corrected",)


@dataclass(frozen=True)
class ConeBeamGeometry:
    """Source/detector layout shared by every projection of a scan.

    sad is the source-to-rotation-axis distance, sdd the source-to-detector
    distance (both along the beam axis). The detector is a det_nu x det_nv
    grid of square pixels of side det_pitch, centered on and perpendicular
    to the beam axis. In parallel mode sad/sdd do not affect ray directions.
    """

    sad: float = 2.0
    sdd: float = 4.0
    det_nu: int = 64
    det_nv: int = 64
    det_pitch: float = 0.05
    beam_mode: str = "cone"

    def __post_init__(self):
        if self.beam_mode not in ("cone", "parallel"):
            raise ValueError(f"beam_mode must be 'cone' or 'parallel', got {self.beam_mode!r}")
        if not self.sad > 0:
            raise ValueError("sad must be positive")
        if self.beam_mode == "cone" and not self.sdd > self.sad:
            raise ValueError("cone mode needs sdd > sad")
        if self.det_nu < 1 or self.det_nv < 1:
            raise ValueError("detector needs at least one pixel per axis")
        if not self.det_pitch > 0:
            raise ValueError("det_pitch must be positive")

    @property
    def n_pixels(self) -> int:
        return self.det_nu * self.det_nv


@dataclass(frozen=True)
class AngleSequence:
    """Per-view gantry angles in degrees plus a provenance tag.

    Simulated sequences start at 0; uniform/perturbed/accelerated ones are
    strictly increasing. Combined sequences are exempt from monotonicity:
    a jitter bound larger than the first ramp increment legitimately drives
    early increments negative. Corrected sequences come from matching and
    carry no ordering guarantee at all.
    """

    angles_deg: np.ndarray
    provenance: str
    seed: int | None = None

    def __post_init__(self):
        angles = np.asarray(self.angles_deg, dtype=np.float64)
        object.__setattr__(self, "angles_deg", angles)
        if angles.ndim != 1 or angles.size == 0:
            raise ValueError("angles_deg must be a non-empty 1-D array")
        if self.provenance not in _PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.provenance in _SIMULATED:
            if angles[0] != 0.0:
                raise ValueError("simulated sequences start at angle 0")
            if self.provenance != "combined" and angles.size > 1:
                if not np.all(np.diff(angles) > 0):
                    raise ValueError(f"{self.provenance} sequence must be strictly increasing")

    def __len__(self) -> int:
        return self.angles_deg.size

    @property
    def sweep_deg(self) -> float:
        return float(self.angles_deg[-1] - self.angles_deg[0])


@dataclass(frozen=True)
class TrajectoryConfig:
    """Parameters of the disturbance models applied to an ideal scan.

    n_views views at ideal increment d_deg; delta_max bounds the per-step
    random jitter; accel is the motor ramp's angular acceleration per
    step^2, with d_deg/accel required to be a whole number of ramp steps.
    """

    n_views: int = 180
    d_deg: float = 2.0
    delta_max: float = 0.0
    accel: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_views < 1:
            raise ValueError("n_views must be at least 1")
        if not self.d_deg > 0:
            raise ValueError("d_deg must be positive")
        if self.delta_max < 0:
            raise ValueError("delta_max must be nonnegative")
        if self.accel < 0:
            raise ValueError("accel must be nonnegative")
        if self.delta_max > 0 and self.delta_max >= self.d_deg:
            raise ValueError("delta_max must be smaller than d_deg")


@dataclass(frozen=True)
class Ray:
    """One source-to-detector ray with its reconstruction-cube intersection."""

    origin: np.ndarray
    direction: np.ndarray
    t_near: float
    t_far: float
    hit: bool

    def __post_init__(self):
        n = float(np.linalg.norm(self.direction))
        if abs(n - 1.0) > 1e-9:
            raise ValueError("direction must be unit length")
        if self.hit and self.t_near > self.t_far:
            raise ValueError("t_near must not exceed t_far on a hit")


def uniform_angles(n: int, d: float) -> AngleSequence:
    """Ideal scan: angles [0, d, 2d, ..., (n-1)d]."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not d > 0:
        raise ValueError("d must be positive")
    return AngleSequence(np.arange(n, dtype=np.float64) * float(d), "uniform")


def perturbed_angles(cfg: TrajectoryConfig) -> AngleSequence:
    """Scan with per-increment jitter: increments d + U[-delta_max, delta_max].

    Jitter is drawn from a seeded PCG64 stream (numpy default_rng), so the
    sequence is bit-reproducible for a given config. Built as the uniform
    base plus the cumulative jitter, which makes delta_max = 0 degenerate
    to uniform_angles exactly.
    """
    if cfg.accel != 0:
        raise ValueError("perturbed_angles requires accel = 0")
    base = np.arange(cfg.n_views, dtype=np.float64) * cfg.d_deg
    rng = np.random.default_rng(cfg.seed)
    jitter = rng.uniform(-cfg.delta_max, cfg.delta_max, cfg.n_views - 1)
    angles = base.copy()
    angles[1:] += np.cumsum(jitter)
    return AngleSequence(angles, "perturbed", seed=cfg.seed)


def _accel_quanta(n: int, na: int) -> np.ndarray:
    # Increments in units of d/(2*Na): ramp step i contributes 2i+1 quanta
    # (speed a*(i+0.5) with a = d/Na), cruise steps contribute 2*Na.
    i = np.arange(n - 1)
    j = np.minimum(i, n - 2 - i)
    inc = np.where(j < na, 2 * j + 1, 2 * na).astype(np.int64)
    m = np.zeros(n, dtype=np.int64)
    m[1:] = np.cumsum(inc)
    return m


def accel_angles(cfg: TrajectoryConfig) -> AngleSequence:
    """Trapezoidal ramp scan: speed climbs 0 -> d over N_a = d/accel steps,
    cruises at d, and decelerates mirror-symmetrically over the last N_a.

    Angles are built as integer multiples of the quantum d/(2*N_a) and
    divided out in one rounding, so the closed-form sweep
    (n-1)*d - d*N_a is hit exactly in floating point.
    """
    if not cfg.accel > 0:
        raise ValueError("accel_angles requires accel > 0")
    na_real = cfg.d_deg / cfg.accel
    na = int(round(na_real))
    if na < 1 or abs(na_real - na) > 1e-9 * max(1.0, na_real):
        raise ValueError("d_deg / accel must be a positive integer")
    if cfg.n_views <= 2 * na:
        raise ValueError("ramps overlap: need n_views > 2 * d_deg / accel")
    m = _accel_quanta(cfg.n_views, na)
    angles = (m * cfg.d_deg) / (2.0 * na)
    return AngleSequence(angles, "accelerated", seed=cfg.seed)


def combined_angles(cfg: TrajectoryConfig) -> AngleSequence:
    """Trapezoidal ramp plus per-increment jitter (both disturbances at once)."""
    if not cfg.accel > 0:
        raise ValueError("combined_angles requires accel > 0")
    base = accel_angles(cfg).angles_deg
    rng = np.random.default_rng(cfg.seed)
    jitter = rng.uniform(-cfg.delta_max, cfg.delta_max, cfg.n_views - 1)
    angles = base.copy()
    angles[1:] += np.cumsum(jitter)
    return AngleSequence(angles, "combined", seed=cfg.seed)


def make_trajectory(cfg: TrajectoryConfig) -> AngleSequence:
    """Dispatch on (delta_max, accel): uniform, perturbed, accelerated or combined."""
    if cfg.accel > 0 and cfg.delta_max > 0:
        return combined_angles(cfg)
    if cfg.accel > 0:
        return accel_angles(cfg)
    if cfg.delta_max > 0:
        return perturbed_angles(cfg)
    return uniform_angles(cfg.n_views, cfg.d_deg)


def _frame(theta_deg: float):
    t = np.deg2rad(theta_deg)
    axis = np.array([np.cos(t), np.sin(t), 0.0])
    u_hat = np.array([-np.sin(t), np.cos(t), 0.0])
    v_hat = np.array([0.0, 0.0, 1.0])
    return axis, u_hat, v_hat


def _pixel_offsets(geom: ConeBeamGeometry):
    u = (np.arange(geom.det_nu) - (geom.det_nu - 1) / 2.0) * geom.det_pitch
    v = (np.arange(geom.det_nv) - (geom.det_nv - 1) / 2.0) * geom.det_pitch
    return u, v


def _cube_intersect(origins: np.ndarray, dirs: np.ndarray, half: float):
    """Slab test of rays against [-half, half]^3. Returns (t_near, t_far, hit)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    t_lo = (-half - origins) * inv
    t_hi = (half - origins) * inv
    t1 = np.where(np.isfinite(t_lo), np.minimum(t_lo, t_hi), -np.inf)
    t2 = np.where(np.isfinite(t_hi), np.maximum(t_lo, t_hi), np.inf)
    # axis-parallel rays: inside the slab -> unbounded, outside -> miss
    par = dirs == 0.0
    inside = np.abs(origins) <= half
    t1 = np.where(par, np.where(inside, -np.inf, np.inf), t1)
    t2 = np.where(par, np.where(inside, np.inf, -np.inf), t2)
    t_near = t1.max(axis=-1)
    t_far = t2.min(axis=-1)
    hit = t_far > t_near
    return t_near, t_far, hit


def rays_for_view(geom: ConeBeamGeometry, theta_deg: float, edge: float = VOLUME_EDGE):
    """All detector rays of one view, flattened u-fastest.

    Returns (origins, directions, t_near, t_far, hit) with shapes
    (P, 3), (P, 3), (P,), (P,), (P,) for P = det_nu * det_nv.
    """
    axis, u_hat, v_hat = _frame(theta_deg)
    u_off, v_off = _pixel_offsets(geom)
    uu = np.tile(u_off, geom.det_nv)
    vv = np.repeat(v_off, geom.det_nu)
    if geom.beam_mode == "cone":
        src = -geom.sad * axis
        pix = src + geom.sdd * axis + uu[:, None] * u_hat + vv[:, None] * v_hat
        dirs = pix - src
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        origins = np.broadcast_to(src, dirs.shape).copy()
    else:
        dirs = np.broadcast_to(axis, (uu.size, 3)).copy()
        origins = uu[:, None] * u_hat + vv[:, None] * v_hat
    t_near, t_far, hit = _cube_intersect(origins, dirs, edge / 2.0)
    t_near = np.where(hit, t_near, 0.0)
    t_far = np.where(hit, t_far, 0.0)
    return origins, dirs, t_near, t_far, hit


def ray_for_pixel(geom: ConeBeamGeometry, theta_deg: float, u: int, v: int,
                  edge: float = VOLUME_EDGE) -> Ray:
    """The ray through detector pixel (u, v) at gantry angle theta_deg."""
    if not (0 <= u < geom.det_nu and 0 <= v < geom.det_nv):
        raise ValueError(f"pixel ({u}, {v}) outside {geom.det_nu} x {geom.det_nv} detector")
    origins, dirs, t_near, t_far, hit = rays_for_view(geom, theta_deg, edge)
    p = v * geom.det_nu + u
    return Ray(origins[p], dirs[p], float(t_near[p]), float(t_far[p]), bool(hit[p]))
