"""Iterative reconstruction by full-batch gradient descent.

Minimizes sum_i ||render(field, theta_i) - I_i||^2 + lambda_tv * TV(field)
over the stored densities, starting from a zero field, with an optional
nonnegativity clamp after every update and optional octree refinement
between epochs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from . import field as field_mod
from .field import DenseVolume, OctreeVolume, block_split_scores, init_octree, refine
from .geometry import AngleSequence, ConeBeamGeometry
from .projector import (ProjectionSet, ScatterWorkspace, _field_kernel_args,
                        forward_project_planned, make_plan)


class DivergenceError(RuntimeError):
    """Raised when the epoch loss blows past the divergence guard; carries
    the partial report gathered so far."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class ReconConfig:
    """Knobs of one reconstruction run.

    learning_rate None means the SIRT-like default 1 / (mean samples per
    contributing ray). lambda_tv None means 1e-3 times the mean per-pixel
    data loss of the zero field (a data-scale heuristic); pass 0.0 to turn
    the penalty off exactly. octree_mode picks the field layout: 'dense'
    is a plain grid of resolution^3, 'global' an octree fully subdivided
    to oct_max_grid, 'adaptive' an octree refined between epochs.
    """

    epochs: int = 200
    learning_rate: float | None = None
    lambda_tv: float | None = 0.0
    step: float = 1.0 / 128.0
    octree_mode: str = "dense"
    refine_every: int = 10
    tau_split: float = 30.0
    tau_prune: float = 0.02
    nonneg_clamp: bool = True
    resolution: int = 64
    oct_payload: int = 8
    oct_max_grid: int = 16
    oct_base_grid: int = 4
    extent_edge: float = 1.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.lambda_tv is not None and self.lambda_tv < 0:
            raise ValueError("lambda_tv must be nonnegative")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.octree_mode not in ("adaptive", "global", "dense"):
            raise ValueError("octree_mode must be 'adaptive', 'global' or 'dense'")
        if self.refine_every < 1:
            raise ValueError("refine_every must be at least 1")


@dataclass
class ReconReport:
    """Loss trajectory of a run: rows of (data_loss, tv, total) per epoch."""

    history: list = dc_field(default_factory=list)
    final_data_loss: float = 0.0
    final_tv: float = 0.0
    wall_time_s: float = 0.0
    learning_rate: float = 0.0
    lambda_tv: float = 0.0
    diverged: bool = False


def _payload(fld) -> np.ndarray:
    return fld.data if isinstance(fld, DenseVolume) else fld.payload


def data_loss(fld, projections: ProjectionSet, angles: AngleSequence,
              step: float) -> float:
    """Sum of squared residuals between renders at the given angles and
    the input projections."""
    if len(projections) != len(angles):
        raise ValueError("projections and angles must have equal length")
    geom = projections.geometry
    kind, args = _field_kernel_args(fld)
    total = 0.0
    for im, theta in zip(projections.images, angles.angles_deg):
        plan = make_plan(geom, float(theta), step, fld.extent_edge)
        rendered = forward_project_planned(kind, args, geom, plan)
        total += float(((rendered.data - im.data) ** 2).sum())
    return total


def _tv_value_grad(data: np.ndarray):
    # isotropic TV of forward differences; the boundary simply lacks its
    # outward difference (one-sided scheme)
    d0 = np.zeros_like(data)
    d1 = np.zeros_like(data)
    d2 = np.zeros_like(data)
    d0[:-1] = data[1:] - data[:-1]
    d1[:, :-1] = data[:, 1:] - data[:, :-1]
    d2[:, :, :-1] = data[:, :, 1:] - data[:, :, :-1]
    norm = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
    tv = float(norm.sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(norm > 0, 1.0 / norm, 0.0)
    r0, r1, r2 = d0 * inv, d1 * inv, d2 * inv
    grad = -(r0 + r1 + r2)
    grad[1:] += r0[:-1]
    grad[:, 1:] += r1[:, :-1]
    grad[:, :, 1:] += r2[:, :, :-1]
    return tv, grad


def tv_penalty(fld) -> float:
    """Isotropic discrete total variation of the stored densities.

    Octree fields sum the penalty leaf by leaf over their payloads;
    differences across leaf faces are not coupled.
    """
    if isinstance(fld, DenseVolume):
        return _tv_value_grad(fld.data)[0]
    total = 0.0
    for l in range(fld.n_leaves):
        total += _tv_value_grad(fld.payload[l])[0]
    return total


def _tv_grad_field(fld):
    if isinstance(fld, DenseVolume):
        return _tv_value_grad(fld.data)
    grads = np.zeros_like(fld.payload)
    total = 0.0
    for l in range(fld.n_leaves):
        t, g = _tv_value_grad(fld.payload[l])
        total += t
        grads[l] = g
    return total, grads


def _init_field(cfg: ReconConfig):
    if cfg.octree_mode == "dense":
        n = cfg.resolution
        return DenseVolume(np.zeros((n, n, n)), extent_edge=cfg.extent_edge)
    return init_octree(cfg.octree_mode, payload_res=cfg.oct_payload,
                       max_grid=cfg.oct_max_grid, base_grid=cfg.oct_base_grid,
                       extent_edge=cfg.extent_edge)


def refine_pass(fld: OctreeVolume, cfg: ReconConfig) -> OctreeVolume:
    """Score every leaf and apply one subdivision/pruning sweep."""
    return refine(fld, block_split_scores(fld), cfg.tau_split, cfg.tau_prune)


def reconstruct(projections: ProjectionSet, angles: AngleSequence,
                cfg: ReconConfig, field0=None):
    """Gradient-descent reconstruction from the given projections.

    Returns (field, ReconReport). field0 continues training an existing
    field (used by warm-started outer loops); the default starts from
    zeros.
    """
    if len(projections) != len(angles):
        raise ValueError("projections and angles must have equal length")
    t_start = time.perf_counter()
    geom = projections.geometry
    fld = field0 if field0 is not None else _init_field(cfg)

    plans = [make_plan(geom, float(t), cfg.step, fld.extent_edge)
             for t in angles.angles_deg]
    targets = [np.ascontiguousarray(im.data.ravel()) for im in projections.images]

    k_all = np.concatenate([p.kcnt for p in plans])
    k_pos = k_all[k_all > 0]
    eta = cfg.learning_rate
    if eta is None:
        eta = 1.0 / float(k_pos.mean()) if k_pos.size else 1.0

    lam = cfg.lambda_tv
    if lam is None:
        zero_loss = sum(float((t * t).sum()) for t in targets)
        n_pix = sum(t.size for t in targets)
        lam = 1e-3 * zero_loss / n_pix if n_pix else 0.0

    report = ReconReport(learning_rate=eta, lambda_tv=lam)
    ws = ScatterWorkspace(fld)
    guard = None
    for epoch in range(cfg.epochs):
        kind, args = _field_kernel_args(fld)
        ws.reset()
        dloss = 0.0
        for plan, target in zip(plans, targets):
            rendered = forward_project_planned(kind, args, geom, plan)
            resid = rendered.data.ravel() - target
            dloss += float((resid * resid).sum())
            ws.scatter(fld, args, plan, np.ascontiguousarray(2.0 * resid))
        grad = ws.merged()
        tv = 0.0
        if lam > 0:
            tv, tv_grad = _tv_grad_field(fld)
            grad += lam * tv_grad
        total = dloss + lam * tv
        report.history.append((dloss, tv, total))
        if guard is None:
            guard = 10.0 * total if total > 0 else None
        elif guard is not None and total > guard:
            report.diverged = True
            report.final_data_loss = dloss
            report.final_tv = tv
            report.wall_time_s = time.perf_counter() - t_start
            raise DivergenceError(
                f"epoch {epoch} loss {total:.3e} exceeds 10x initial", report)

        p = _payload(fld)
        p -= eta * grad
        if cfg.nonneg_clamp:
            np.maximum(p, 0.0, out=p)

        if (cfg.octree_mode == "adaptive" and (epoch + 1) % cfg.refine_every == 0
                and epoch + 1 < cfg.epochs):
            refine_pass(fld, cfg)
            if not ws.matches(fld):
                ws = ScatterWorkspace(fld)

    report.final_data_loss = report.history[-1][0] if report.history else 0.0
    report.final_tv = report.history[-1][1] if report.history else 0.0
    report.wall_time_s = time.perf_counter() - t_start
    if isinstance(fld, DenseVolume) and not cfg.nonneg_clamp:
        fld.require_nonneg = False
    return fld, report
