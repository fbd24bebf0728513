"""Per-view gantry-angle self-calibration.

A coarse reconstruction under the current angle estimates is reprojected
on a dense angular grid; every input projection is then re-assigned the
grid angle whose reprojection it most resembles under whole-image SSIM,
and reconstruction repeats with the corrected angles until the mean angle
change falls below threshold. A final full-budget reconstruction runs at
the converged angles.

Matching compares each view against the entire 0-360 bank by default, so
the corrected sequence may be non-monotonic and is only defined up to a
global rotation.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .geometry import AngleSequence, ConeBeamGeometry, uniform_angles
from .metrics import wrap_degrees
from .projector import (ProjectionImage, ProjectionSet, _field_kernel_args,
                        forward_project_planned, make_plan)
from .recon import ReconConfig, reconstruct


@dataclass(frozen=True)
class PoseCorrectionConfig:
    """Outer-loop parameters.

    grid_step_deg sets the reprojection bank spacing (0.1 covers a 64^2
    detector well; 0.05 doubles the bank for finer detectors).
    eps_theta_deg None means convergence at one grid step. coarse_epochs
    is the epoch budget of the in-loop reconstructions; the final pass
    uses the full budget of the reconstruction config.
    """

    grid_step_deg: float = 0.1
    sweep_deg: float = 360.0
    search_window_deg: float | None = None
    max_outer_iters: int = 5
    eps_theta_deg: float | None = None
    rerun_mode: str = "reinit"
    coarse_epochs: int = 50

    def __post_init__(self):
        if not self.grid_step_deg > 0:
            raise ValueError("grid_step_deg must be positive")
        if not self.sweep_deg > 0:
            raise ValueError("sweep_deg must be positive")
        if self.search_window_deg is not None and not self.search_window_deg > 0:
            raise ValueError("search_window_deg must be positive when set")
        if self.max_outer_iters < 0:
            raise ValueError("max_outer_iters must be nonnegative")
        if self.rerun_mode not in ("reinit", "warm"):
            raise ValueError("rerun_mode must be 'reinit' or 'warm'")
        if self.coarse_epochs < 1:
            raise ValueError("coarse_epochs must be at least 1")

    @property
    def eps_theta(self) -> float:
        return self.grid_step_deg if self.eps_theta_deg is None else self.eps_theta_deg

    @property
    def n_bank(self) -> int:
        return int(round(self.sweep_deg / self.grid_step_deg))


@dataclass(frozen=True)
class SsimConstants:
    """Stabilizers of the similarity ratio: c1 = (0.01 L)^2, c2 = (0.03 L)^2
    for dynamic range L."""

    c1: float
    c2: float
    dynamic_range: float

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("c1 and c2 must be positive")

    @classmethod
    def from_dynamic_range(cls, dynamic_range: float) -> "SsimConstants":
        dr = max(float(dynamic_range), 1e-12)
        return cls(c1=(0.01 * dr) ** 2, c2=(0.03 * dr) ** 2, dynamic_range=dr)


@dataclass
class MatchReport:
    """Per-view matching outcome of one outer iteration: rows of
    (view index, old angle, new angle, best SSIM)."""

    iteration: int
    rows: list = dc_field(default_factory=list)

    @property
    def mean_abs_change_deg(self) -> float:
        if not self.rows:
            return 0.0
        return float(np.mean([abs(wrap_degrees(new - old))
                              for _, old, new, _ in self.rows]))


def bank_angles(cfg: PoseCorrectionConfig) -> np.ndarray:
    return np.arange(cfg.n_bank, dtype=np.float64) * cfg.grid_step_deg


def dense_reproject(fld, geom: ConeBeamGeometry, cfg: PoseCorrectionConfig,
                    step: float) -> ProjectionSet:
    """Render the field on the dense angle grid {0, g, 2g, ...} covering
    the sweep; the candidate bank for matching."""
    from .projector import forward_project_set
    return forward_project_set(fld, geom, bank_angles(cfg), step)


def _image_stats(flat: np.ndarray):
    mu = flat.mean(axis=1)
    var = (flat * flat).mean(axis=1) - mu * mu
    return mu, var


def ssim(a, b, k: SsimConstants) -> float:
    """Whole-image structural similarity from the global means, variances
    and covariance of the two images."""
    # unwrap ProjectionImage only; ndarrays expose a .data memoryview
    da = np.asarray(a.data if isinstance(a, ProjectionImage) else a,
                    dtype=np.float64)
    db = np.asarray(b.data if isinstance(b, ProjectionImage) else b,
                    dtype=np.float64)
    if da.shape != db.shape:
        raise ValueError("ssim requires equal image shapes")
    mua, mub = da.mean(), db.mean()
    va = (da * da).mean() - mua * mua
    vb = (db * db).mean() - mub * mub
    cov = (da * db).mean() - mua * mub
    return float(((2 * mua * mub + k.c1) * (2 * cov + k.c2))
                 / ((mua * mua + mub * mub + k.c1) * (va + vb + k.c2)))


def ssim_matrix(inputs: np.ndarray, bank: np.ndarray, k: SsimConstants) -> np.ndarray:
    """All-pairs whole-image SSIM between row-stacked flats: (N, P) x (M, P)
    -> (N, M). One matrix product carries every covariance."""
    n_pix = inputs.shape[1]
    mu_i, var_i = _image_stats(inputs)
    mu_b, var_b = _image_stats(bank)
    cov = inputs @ bank.T / n_pix - np.outer(mu_i, mu_b)
    num = (2.0 * np.outer(mu_i, mu_b) + k.c1) * (2.0 * cov + k.c2)
    den = ((mu_i * mu_i)[:, None] + (mu_b * mu_b)[None, :] + k.c1) \
        * (var_i[:, None] + var_b[None, :] + k.c2)
    return num / den


def match_angles(inputs: ProjectionSet, bank: ProjectionSet,
                 cfg: PoseCorrectionConfig, current: AngleSequence,
                 iteration: int = 0):
    """Assign every input view the bank angle of its highest-SSIM
    reprojection.

    Candidates are the whole bank, or those within search_window_deg of
    the view's current estimate when a window is set. Exact score ties go
    to the candidate circularly closest to the current estimate, then to
    the smaller angle. Returns (AngleSequence, MatchReport).
    """
    if len(inputs) != len(current):
        raise ValueError("inputs and current angles must have equal length")
    bangles = bank.angles_deg
    if bangles.size == 0 or not np.all(np.diff(bangles) > 0):
        raise ValueError("bank angles must be strictly increasing")
    flat_in = inputs.as_matrix()
    flat_bank = bank.as_matrix()
    k = SsimConstants.from_dynamic_range(float(flat_in.max()) if flat_in.size else 0.0)
    scores = ssim_matrix(flat_in, flat_bank, k)

    report = MatchReport(iteration=iteration)
    new = np.empty(len(inputs))
    for i in range(len(inputs)):
        cur = float(current.angles_deg[i])
        dist = np.abs(wrap_degrees(bangles - cur))
        if cfg.search_window_deg is not None:
            mask = dist <= cfg.search_window_deg
            if not mask.any():
                raise ValueError(f"view {i}: no bank candidates within "
                                 f"{cfg.search_window_deg} deg of {cur} deg")
        else:
            mask = np.ones(bangles.size, dtype=bool)
        s = scores[i]
        best = np.max(s[mask])
        ties = np.nonzero(mask & (s == best))[0]
        j = min(ties, key=lambda t: (dist[t], bangles[t]))
        new[i] = bangles[j]
        report.rows.append((i, cur, float(bangles[j]), float(best)))
    return AngleSequence(new, "corrected"), report


@dataclass
class IneatResult:
    """Everything the outer loop produced."""

    field: object
    angles: AngleSequence
    match_reports: list
    recon_report: object
    n_outer_iters: int
    converged: bool


def ineat(projections: ProjectionSet, geom: ConeBeamGeometry,
          recon_cfg: ReconConfig, pose_cfg: PoseCorrectionConfig,
          angles0: AngleSequence | None = None,
          progress=None) -> IneatResult:
    """Alternate coarse reconstruction, dense reprojection and matching
    until the angles settle, then reconstruct at full budget.

    angles0 defaults to the uniform sampling assumption. progress, if
    given, is called with one status string per phase.
    """
    n = len(projections)
    if pose_cfg.n_bank < n:
        raise ValueError("bank smaller than the number of views; "
                         "decrease grid_step_deg")
    angles = angles0 if angles0 is not None else uniform_angles(n, 360.0 / n)
    say = progress if progress is not None else (lambda msg: None)

    coarse_cfg = replace(recon_cfg, epochs=pose_cfg.coarse_epochs)
    bank_deg = bank_angles(pose_cfg)
    bank_plans = None
    reports = []
    converged = False
    fld = None
    it = 0
    while it < pose_cfg.max_outer_iters:
        it += 1
        say(f"outer {it}: coarse reconstruction ({coarse_cfg.epochs} epochs)")
        if pose_cfg.rerun_mode == "warm" and fld is not None:
            fld, _ = reconstruct(projections, angles, coarse_cfg, field0=fld)
        else:
            fld, _ = reconstruct(projections, angles, coarse_cfg)
        say(f"outer {it}: reprojecting {bank_deg.size} candidates")
        kind, args = _field_kernel_args(fld)
        if bank_plans is None:
            bank_plans = [make_plan(geom, float(t), recon_cfg.step, fld.extent_edge)
                          for t in bank_deg]
        bank_imgs = [forward_project_planned(kind, args, geom, p) for p in bank_plans]
        bank = ProjectionSet(bank_imgs, geom)
        angles_new, rep = match_angles(projections, bank, pose_cfg, angles,
                                       iteration=it)
        reports.append(rep)
        change = rep.mean_abs_change_deg
        say(f"outer {it}: mean angle change {change:.4f} deg")
        angles = angles_new
        if change < pose_cfg.eps_theta:
            converged = True
            break

    say(f"final reconstruction ({recon_cfg.epochs} epochs)")
    fld, recon_report = reconstruct(projections, angles, recon_cfg)
    return IneatResult(field=fld, angles=angles, match_reports=reports,
                       recon_report=recon_report, n_outer_iters=it,
                       converged=converged)
