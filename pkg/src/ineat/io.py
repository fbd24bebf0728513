"""On-disk formats: volumes, float images, manifests, CSV reports.

All round trips are bitwise exact at the file level. Volume and image
payloads are 32-bit little-endian floats; in-memory float64 data is
quantized once on the first write and survives rewrite cycles unchanged
afterwards.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .field import DenseVolume
from .geometry import AngleSequence, ConeBeamGeometry
from .phantom import DatasetManifest
from .projector import ProjectionImage, ProjectionSet

VOLUME_MAGIC = b"INEATVOL"
VOLUME_VERSION = 1


class FormatError(Exception):
    """Malformed or unsupported file content."""


def write_volume(path, vol: DenseVolume):
    nx, ny, nz = vol.data.shape
    payload = np.asarray(vol.data, dtype="<f4").ravel(order="F")
    with open(path, "wb") as f:
        f.write(VOLUME_MAGIC)
        f.write(struct.pack("<IIIIf", VOLUME_VERSION, nx, ny, nz,
                            float(vol.extent_edge)))
        f.write(payload.tobytes())


def read_volume(path) -> DenseVolume:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8 + 20:
        raise FormatError(f"{path}: truncated header")
    if raw[:8] != VOLUME_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:8]!r}")
    version, nx, ny, nz, extent = struct.unpack("<IIIIf", raw[8:28])
    if version != VOLUME_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    n = nx * ny * nz
    body = raw[28:]
    if len(body) != 4 * n:
        raise FormatError(f"{path}: payload holds {len(body) // 4} floats, "
                          f"header promises {n}")
    data = np.frombuffer(body, dtype="<f4").astype(np.float64)
    data = data.reshape((nx, ny, nz), order="F")
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite payload values")
    return DenseVolume(data, extent_edge=float(extent), require_nonneg=False)


def write_image(path, image):
    """Grayscale PFM, little-endian (scale -1.0), bottom row first; row 0
    of the array is the bottom row."""
    data = image.data if isinstance(image, ProjectionImage) else np.asarray(image)
    if data.ndim != 2:
        raise ValueError("image must be 2-D")
    nv, nu = data.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{nu} {nv}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.asarray(data, dtype="<f4").tobytes())


def read_image(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    try:
        h1, rest = raw.split(b"\n", 1)
        h2, rest = rest.split(b"\n", 1)
        h3, body = rest.split(b"\n", 1)
    except ValueError:
        raise FormatError(f"{path}: incomplete PFM header") from None
    if h1 != b"Pf":
        raise FormatError(f"{path}: not a grayscale PFM (header {h1!r})")
    try:
        nu, nv = (int(tok) for tok in h2.split())
        scale = float(h3)
    except ValueError:
        raise FormatError(f"{path}: malformed PFM dims or scale") from None
    if nu < 1 or nv < 1:
        raise FormatError(f"{path}: bad dimensions {nu} x {nv}")
    if scale >= 0:
        raise FormatError(f"{path}: big-endian PFM (scale {scale}) not supported")
    if len(body) != 4 * nu * nv:
        raise FormatError(f"{path}: payload holds {len(body) // 4} floats, "
                          f"header promises {nu * nv}")
    data = np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(nv, nu)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite pixel values")
    return data


def write_pgm16(path, image: np.ndarray):
    """16-bit PGM preview scaled by the image max, which is recorded in a
    .max sidecar so absolute values stay recoverable."""
    data = np.asarray(image, dtype=np.float64)
    mx = float(data.max())
    scale = 65535.0 / mx if mx > 0 else 0.0
    q = np.clip(np.round(data * scale), 0, 65535).astype(">u2")
    nv, nu = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{nu} {nv}\n65535\n".encode("ascii"))
        f.write(q.tobytes())
    Path(str(path) + ".max").write_text(f"{mx!r}\n")


_GEOM_KEYS = {"sad", "sdd", "det_nu", "det_nv", "det_pitch", "beam_mode"}
_MANIFEST_KEYS = {"geometry", "angles_assumed_deg", "angles_true_deg",
                  "images", "value_convention"}


def write_manifest(path, manifest: DatasetManifest):
    if manifest.image_paths is None:
        raise ValueError("manifest has no image paths; write the images first")
    if len(manifest.image_paths) != len(manifest.angles_assumed):
        raise ValueError("one image path per assumed angle required")
    g = manifest.geometry
    doc = {
        "geometry": {"sad": g.sad, "sdd": g.sdd, "det_nu": g.det_nu,
                     "det_nv": g.det_nv, "det_pitch": g.det_pitch,
                     "beam_mode": g.beam_mode},
        "angles_assumed_deg": [float(a) for a in manifest.angles_assumed.angles_deg],
        "images": list(manifest.image_paths),
        "value_convention": manifest.value_convention,
    }
    if manifest.angles_true is not None:
        doc["angles_true_deg"] = [float(a) for a in manifest.angles_true.angles_deg]
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def read_manifest(path) -> DatasetManifest:
    base = Path(path).parent
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: manifest must be a JSON object")
    unknown = set(doc) - _MANIFEST_KEYS
    if unknown:
        raise FormatError(f"{path}: unknown manifest keys {sorted(unknown)}")
    missing = _MANIFEST_KEYS - {"angles_true_deg"} - set(doc)
    if missing:
        raise FormatError(f"{path}: missing manifest keys {sorted(missing)}")
    gd = doc["geometry"]
    if not isinstance(gd, dict) or set(gd) != _GEOM_KEYS:
        raise FormatError(f"{path}: geometry must have exactly keys {sorted(_GEOM_KEYS)}")
    geom = ConeBeamGeometry(sad=gd["sad"], sdd=gd["sdd"], det_nu=gd["det_nu"],
                            det_nv=gd["det_nv"], det_pitch=gd["det_pitch"],
                            beam_mode=gd["beam_mode"])
    assumed = np.asarray(doc["angles_assumed_deg"], dtype=np.float64)
    if assumed.ndim != 1 or assumed.size == 0 or not np.all(np.isfinite(assumed)):
        raise FormatError(f"{path}: angles_assumed_deg must be a non-empty "
                          f"array of finite degrees")
    images = doc["images"]
    if len(images) != assumed.size:
        raise FormatError(f"{path}: {len(images)} images for {assumed.size} angles")
    if doc["value_convention"] != "line_integral":
        raise FormatError(f"{path}: unsupported value convention "
                          f"{doc['value_convention']!r}")
    true = None
    if "angles_true_deg" in doc:
        td = np.asarray(doc["angles_true_deg"], dtype=np.float64)
        if td.size != assumed.size:
            raise FormatError(f"{path}: angles_true_deg length mismatch")
        if not np.all(np.isfinite(td)):
            raise FormatError(f"{path}: angles_true_deg must be finite")
        # stored truth gets the unordered tag: files do not carry provenance
        true = AngleSequence(td, "corrected")
    for rel in images:
        if not (base / rel).is_file():
            raise FormatError(f"{path}: referenced image {rel} not found")
    # assumed angles are uniform by construction but any labeling is accepted
    prov = "uniform"
    try:
        seq = AngleSequence(assumed, prov)
    except ValueError:
        seq = AngleSequence(assumed, "corrected")
    return DatasetManifest(geometry=geom, angles_assumed=seq, angles_true=true,
                           image_paths=list(images))


def write_dataset(out_dir, manifest: DatasetManifest, projections: ProjectionSet,
                  stem: str = "view"):
    """Write one PFM per projection plus manifest.json; returns the
    manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, im in enumerate(projections.images):
        rel = f"{stem}_{i:04d}.pfm"
        write_image(out / rel, im)
        paths.append(rel)
    manifest.image_paths = paths
    mpath = out / "manifest.json"
    write_manifest(mpath, manifest)
    return mpath


def load_projection_set(manifest_path):
    """Read a manifest and its images; returns (ProjectionSet, DatasetManifest)
    with images labeled by the assumed angles."""
    manifest = read_manifest(manifest_path)
    base = Path(manifest_path).parent
    geom = manifest.geometry
    images = []
    for rel, theta in zip(manifest.image_paths, manifest.angles_assumed.angles_deg):
        data = read_image(base / rel)
        if data.shape != (geom.det_nv, geom.det_nu):
            raise FormatError(f"{rel}: image is {data.shape[1]} x {data.shape[0]}, "
                              f"detector is {geom.det_nu} x {geom.det_nv}")
        images.append(ProjectionImage(data, float(theta)))
    return ProjectionSet(images, geom), manifest


def write_loss_csv(path, report):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "data_loss", "tv", "total"])
        for e, (d, t, tot) in enumerate(report.history):
            w.writerow([e, repr(d), repr(t), repr(tot)])


def write_match_csv(path, match_reports):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iter", "view", "old_deg", "new_deg", "ssim"])
        for rep in match_reports:
            for view, old, new, score in rep.rows:
                w.writerow([rep.iteration, view, repr(old), repr(new), repr(score)])


def write_sine_csv(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["index", "assumed_deg", "true_deg", "corrected_deg",
                    "sin_assumed", "sin_true", "sin_corrected"])
        for row in rows:
            w.writerow(["" if v is None else (v if isinstance(v, int) else repr(v))
                        for v in row])


def write_summary_csv(path, entries: dict):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["metric", "value"])
        for key, val in entries.items():
            w.writerow([key, repr(val) if isinstance(val, float) else val])
