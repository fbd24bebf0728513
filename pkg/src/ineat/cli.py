"""Batch driver composing the modules into runnable experiments.

One binary, six subcommands. All numeric parameters live in a JSON config
file with one section per module config; --set overrides single keys with
dotted paths so a run remains reproducible from its command line alone.
Progress goes to standard error, machine-readable results only to files.

Exit codes: 0 success, 2 config or validation error, 3 I/O or malformed
input file, 4 numerical divergence.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numba
import numpy as np

from . import io as iio
from .field import DenseVolume, to_dense
from .geometry import ConeBeamGeometry, TrajectoryConfig, make_trajectory
from .io import FormatError
from .metrics import angle_error, mip_triview, psnr, sine_curve_table
from .phantom import (DatasetManifest, SpiralPhantomConfig, make_dataset,
                      spiral_cube_phantom)
from .posecorr import PoseCorrectionConfig, bank_angles, ineat
from .projector import forward_project_set
from .recon import DivergenceError, ReconConfig, reconstruct

_SECTIONS = {
    "phantom": SpiralPhantomConfig,
    "geometry": ConeBeamGeometry,
    "trajectory": TrajectoryConfig,
    "recon": ReconConfig,
    "pose": PoseCorrectionConfig,
}


def _say(msg: str):
    print(msg, file=sys.stderr)


def load_config(path, overrides):
    """Read the JSON experiment file and fold in --set key=value items.

    Returns {section: {field: value}}. Content problems are config errors
    (ValueError), a missing file is an I/O error (OSError passes through).
    """
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: config is not valid JSON ({e})") from None
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ValueError(f"unknown config sections {sorted(unknown)}; "
                         f"expected {sorted(_SECTIONS)}")
    for sec, body in doc.items():
        if not isinstance(body, dict):
            raise ValueError(f"config section {sec!r} must be a JSON object")
    for item in overrides or []:
        key, eq, raw = item.partition("=")
        if not eq:
            raise ValueError(f"--set expects key=value, got {item!r}")
        sec, dot, field_name = key.partition(".")
        if not dot or not field_name or "." in field_name:
            raise ValueError(f"--set key must be section.field, got {key!r}")
        if sec not in _SECTIONS:
            raise ValueError(f"--set names unknown section {sec!r}")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw  # bare strings need no quotes
        doc.setdefault(sec, {})[field_name] = val
    return doc


def build_section(doc, name, **extra):
    cls = _SECTIONS[name]
    body = dict(doc.get(name, {}))
    body.update(extra)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(body) - known
    if unknown:
        raise ValueError(f"unknown keys {sorted(unknown)} in config section {name!r}")
    try:
        return cls(**body)
    except TypeError as e:
        raise ValueError(f"bad {name} config: {e}") from None


def _set_workers(n):
    if n is None:
        return
    if n < 1:
        raise ValueError("--workers must be at least 1")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _as_dense(fld, cfg: ReconConfig) -> DenseVolume:
    if isinstance(fld, DenseVolume):
        return fld
    n = cfg.oct_max_grid * cfg.oct_payload
    return to_dense(fld, n, n, n)


def _write_views(out: Path, stem: str, named_images):
    for name, img in named_images:
        iio.write_image(out / f"{stem}_{name}.pfm", img)
        iio.write_pgm16(out / f"{stem}_{name}.pgm", img)


def _central_slices(vol: DenseVolume):
    d = vol.data
    nx, ny, nz = d.shape
    return [("x", d[nx // 2, :, :]), ("y", d[:, ny // 2, :]),
            ("z", d[:, :, nz // 2])]


def cmd_phantom(args) -> int:
    doc = load_config(args.config, args.overrides)
    cfg = build_section(doc, "phantom")
    if cfg.n_cubes == 0:
        _say("warning: n_cubes = 0, the volume is identically zero")
    vol = spiral_cube_phantom(cfg)
    out = _outdir(args)
    iio.write_volume(out / "phantom.vol", vol)
    mx, my, mz = mip_triview(vol)
    _write_views(out, "mip", [("x", mx), ("y", my), ("z", mz)])
    _say(f"wrote {out / 'phantom.vol'} ({cfg.resolution}^3) and MIP tri-view")
    return 0


def cmd_simulate(args) -> int:
    doc = load_config(args.config, args.overrides)
    geom = build_section(doc, "geometry")
    extra = {} if args.seed is None else {"seed": args.seed}
    tcfg = build_section(doc, "trajectory", **extra)
    rcfg = build_section(doc, "recon")  # supplies the marching step
    vol = iio.read_volume(args.gt)
    true = make_trajectory(tcfg)
    _say(f"projecting {len(true)} views ({true.provenance} trajectory, "
         f"sweep {true.sweep_deg:.1f} deg)")
    projections, manifest = make_dataset(vol, geom, true, rcfg.step)
    out = _outdir(args)
    mpath = iio.write_dataset(out, manifest, projections)
    _say(f"wrote {mpath}")
    return 0


def cmd_reconstruct(args) -> int:
    doc = load_config(args.config, args.overrides)
    rcfg = build_section(doc, "recon")
    projections, manifest = iio.load_projection_set(args.manifest)
    out = _outdir(args)
    _say(f"reconstructing {len(projections)} views, {rcfg.epochs} epochs, "
         f"{rcfg.octree_mode} field")
    fld, report = reconstruct(projections, manifest.angles_assumed, rcfg)
    vol = _as_dense(fld, rcfg)
    iio.write_volume(out / "recon.vol", vol)
    iio.write_loss_csv(out / "loss.csv", report)
    _write_views(out, "slice", _central_slices(vol))
    _say(f"final data loss {report.final_data_loss:.6g} "
         f"in {report.wall_time_s:.1f} s")
    return 0


def cmd_ineat(args) -> int:
    doc = load_config(args.config, args.overrides)
    rcfg = build_section(doc, "recon")
    pcfg = build_section(doc, "pose")
    projections, manifest = iio.load_projection_set(args.manifest)
    out = _outdir(args)
    result = ineat(projections, manifest.geometry, rcfg, pcfg, progress=_say)
    vol = _as_dense(result.field, rcfg)
    iio.write_volume(out / "recon.vol", vol)
    iio.write_loss_csv(out / "loss.csv", result.recon_report)
    iio.write_match_csv(out / "match.csv", result.match_reports)
    rows = sine_curve_table(manifest.angles_assumed, manifest.angles_true,
                            result.angles)
    iio.write_sine_csv(out / "sine.csv", rows)
    _write_views(out, "slice", _central_slices(vol))
    # corrected manifest, re-pointing at the source images
    src = Path(args.manifest).parent
    rel = [os.path.relpath(src / p, out) for p in manifest.image_paths]
    corrected = DatasetManifest(geometry=manifest.geometry,
                                angles_assumed=result.angles,
                                angles_true=manifest.angles_true,
                                image_paths=rel)
    iio.write_manifest(out / "manifest.json", corrected)
    _say(f"converged={result.converged} after {result.n_outer_iters} "
         f"outer iterations")
    return 0


def cmd_reproject(args) -> int:
    doc = load_config(args.config, args.overrides)
    geom = build_section(doc, "geometry")
    rcfg = build_section(doc, "recon")
    vol = iio.read_volume(args.volume)
    if args.angles is not None:
        try:
            deg = np.asarray([float(tok) for tok in args.angles.split(",")])
        except ValueError:
            raise ValueError(f"--angles expects comma-separated degrees, "
                             f"got {args.angles!r}") from None
        if deg.size == 0:
            raise ValueError("--angles must name at least one angle")
    else:
        deg = bank_angles(build_section(doc, "pose"))
    _say(f"rendering {deg.size} projections")
    projections = forward_project_set(vol, geom, deg, rcfg.step)
    out = _outdir(args)
    with open(out / "angles.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["index", "theta_deg"])
        for i, t in enumerate(deg):
            w.writerow([i, repr(float(t))])
    for i, im in enumerate(projections.images):
        iio.write_image(out / f"reproj_{i:05d}.pfm", im)
    return 0


def cmd_eval(args) -> int:
    vol = iio.read_volume(args.volume)
    gt = iio.read_volume(args.gt)
    if vol.data.shape != gt.data.shape:
        raise ValueError(f"volume is {vol.data.shape}, ground truth "
                         f"{gt.data.shape}; cannot compare")
    nz = vol.data.shape[2]
    entries = {
        "psnr_volume_db": psnr(vol.data, gt.data),
        "psnr_central_slice_db": psnr(vol.data[:, :, nz // 2],
                                      gt.data[:, :, nz // 2]),
        "rmse": float(np.sqrt(np.mean((vol.data - gt.data) ** 2))),
    }
    if args.manifest is not None:
        manifest = iio.read_manifest(args.manifest)
        if manifest.angles_true is not None:
            rep = angle_error(manifest.angles_assumed, manifest.angles_true)
            entries["angle_offset_deg"] = rep.global_offset_deg
            entries["angle_rmse_deg"] = rep.rmse_deg
            entries["angle_max_abs_deg"] = rep.max_abs_deg
        else:
            _say("manifest stores no true angles; skipping angle error")
    out = _outdir(args)
    iio.write_summary_csv(out / "summary.csv", entries)
    for key, val in entries.items():
        _say(f"{key} = {val}")
    return 0


def _make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ineat",
        description="Cone-beam tomography with projection-matching "
                    "correction of uncertain gantry angles.")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p):
        p.add_argument("--config", metavar="PATH",
                       help="JSON experiment file (sections: "
                            "phantom, geometry, trajectory, recon, pose)")
        p.add_argument("--set", action="append", dest="overrides",
                       metavar="KEY=VALUE",
                       help="override one config key as section.field=value "
                            "(JSON-typed; repeatable)")
        p.add_argument("--out", required=True, metavar="DIR",
                       help="output directory (created if missing)")
        p.add_argument("--workers", type=int, metavar="N",
                       help="bound the worker thread count")
        p.add_argument("--seed", type=int, metavar="S",
                       help="override the trajectory seed")

    p = sub.add_parser("phantom",
                       help="write the ground-truth volume and its MIP tri-view")
    common(p)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("simulate",
                       help="project a volume along a trajectory into a dataset")
    p.add_argument("--gt", required=True, metavar="PATH",
                   help="ground-truth volume to project")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct",
                       help="reconstruct at the manifest's assumed angles")
    p.add_argument("manifest", help="dataset manifest.json")
    common(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("ineat",
                       help="iterative reconstruction with angle correction")
    p.add_argument("manifest", help="dataset manifest.json")
    common(p)
    p.set_defaults(func=cmd_ineat)

    p = sub.add_parser("reproject",
                       help="render projections of a stored volume")
    p.add_argument("volume", help="volume file to project")
    p.add_argument("--angles", metavar="LIST",
                   help="comma-separated angles in degrees "
                        "(default: the pose section's dense grid)")
    common(p)
    p.set_defaults(func=cmd_reproject)

    p = sub.add_parser("eval", help="compare a volume against ground truth")
    p.add_argument("volume", help="reconstructed volume file")
    p.add_argument("--gt", required=True, metavar="PATH",
                   help="ground-truth volume file")
    p.add_argument("--manifest", metavar="PATH",
                   help="manifest whose assumed angles are scored against "
                        "its stored truth")
    common(p)
    p.set_defaults(func=cmd_eval)

    return ap


def main(argv=None) -> int:
    args = _make_parser().parse_args(argv)
    try:
        _set_workers(args.workers)
        return args.func(args)
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
