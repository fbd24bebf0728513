"""Evaluation: slice PSNR, circular angle error, curve exports, MIP views.

Corrected angle sets are only defined up to a rigid rotation of the whole
scene about z, so angle errors are computed after removing the circular
mean of the residuals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import DenseVolume
from .geometry import AngleSequence

PSNR_CAP_DB = 120.0


def wrap_degrees(x):
    """Wrap angles (elementwise) into (-180, 180]."""
    return 180.0 - np.mod(180.0 - np.asarray(x, dtype=np.float64), 360.0)


def circular_mean_deg(x) -> float:
    r = np.deg2rad(np.asarray(x, dtype=np.float64))
    return float(np.rad2deg(np.arctan2(np.sin(r).sum(), np.cos(r).sum())))


@dataclass
class AngleErrorReport:
    """Offset-removed circular angle statistics."""

    global_offset_deg: float
    rmse_deg: float
    max_abs_deg: float
    residuals_deg: np.ndarray


def psnr(test: np.ndarray, reference: np.ndarray) -> float:
    """10 log10(MAX^2 / MSE) with MAX the reference maximum, capped at
    120 dB. The reference must not be constant."""
    test = np.asarray(test, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if test.shape != reference.shape:
        raise ValueError("psnr requires equal shapes")
    if reference.max() == reference.min():
        raise ValueError("reference slice is constant")
    mse = float(((test - reference) ** 2).mean())
    if mse == 0.0:
        return PSNR_CAP_DB
    val = 10.0 * np.log10(reference.max() ** 2 / mse)
    return float(min(val, PSNR_CAP_DB))


def angle_error(estimate: AngleSequence, truth: AngleSequence) -> AngleErrorReport:
    """Per-view circular residuals with the global rotation offset removed."""
    if len(estimate) != len(truth):
        raise ValueError("sequences must have equal length")
    raw = wrap_degrees(estimate.angles_deg - truth.angles_deg)
    offset = circular_mean_deg(raw)
    centered = wrap_degrees(raw - offset)
    rmse = float(np.sqrt((centered ** 2).mean()))
    return AngleErrorReport(global_offset_deg=offset, rmse_deg=rmse,
                            max_abs_deg=float(np.abs(centered).max()),
                            residuals_deg=centered)


def sine_curve_table(assumed: AngleSequence, truth: AngleSequence | None,
                     corrected: AngleSequence | None):
    """Rows (index, assumed, true, corrected, sin of each); missing
    sequences yield empty cells. Written to CSV by the io module."""
    n = len(assumed)
    for seq in (truth, corrected):
        if seq is not None and len(seq) != n:
            raise ValueError("sequences must have equal length")
    rows = []
    for i in range(n):
        a = float(assumed.angles_deg[i])
        t = float(truth.angles_deg[i]) if truth is not None else None
        c = float(corrected.angles_deg[i]) if corrected is not None else None
        rows.append((i, a, t, c,
                     float(np.sin(np.deg2rad(a))),
                     float(np.sin(np.deg2rad(t))) if t is not None else None,
                     float(np.sin(np.deg2rad(c))) if c is not None else None))
    return rows


def mip_triview(volume: DenseVolume):
    """Maximum-intensity projections along x, y and z."""
    d = volume.data
    return d.max(axis=0), d.max(axis=1), d.max(axis=2)
