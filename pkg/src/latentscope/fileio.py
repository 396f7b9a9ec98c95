"""Artifact file formats.

Raw volume: magic "LSVOL1\\n", ASCII line "dx dy dz\\n", then dx*dy*dz
little-endian float32 values in x-fastest order (stream index
p = x + dx*(y + dy*z)). Atlas: same layout with magic "LSATL1\\n" and
little-endian uint32 labels. Cohort manifest: CSV id,class_label,volume_path
with volume paths relative to the manifest's directory.

CSV writers emit floats via repr() of the Python float (shortest round-trip
form) so artifact bytes are reproducible across runs. Leading '#' lines are
reserved for metadata comments and skipped by the reader.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os

import numpy as np

from .data import AtlasMap, Cohort, Subject, Volume
from .errors import FormatError

VOLUME_MAGIC = b"LSVOL1\n"
ATLAS_MAGIC = b"LSATL1\n"

# refuse to allocate volumes beyond this voxel count when parsing headers
_MAX_VOXELS = 2**31


def _read_line(f: io.BufferedReader, what: str, limit: int = 64) -> bytes:
    line = f.readline(limit)
    if not line.endswith(b"\n"):
        raise FormatError(f"malformed {what} line")
    return line


def _parse_dims(line: bytes) -> tuple[int, int, int]:
    parts = line.decode("ascii", errors="replace").split()
    if len(parts) != 3:
        raise FormatError(f"expected 3 dims, got {parts!r}")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError as exc:
        raise FormatError(f"non-integer dims {parts!r}") from exc
    if any(d <= 0 for d in dims):
        raise FormatError(f"non-positive dims {dims}")
    if dims[0] * dims[1] * dims[2] > _MAX_VOXELS:
        raise FormatError(f"dims {dims} overflow the voxel budget")
    return dims


def _write_grid(path: str, magic: bytes, arr: np.ndarray, dtype: str) -> None:
    dx, dy, dz = arr.shape
    stream = np.ascontiguousarray(arr.transpose(2, 1, 0)).astype(dtype).tobytes()
    with open(path, "wb") as f:
        f.write(magic)
        f.write(f"{dx} {dy} {dz}\n".encode("ascii"))
        f.write(stream)


def _read_grid(path: str, magic: bytes, dtype: str) -> np.ndarray:
    itemsize = np.dtype(dtype).itemsize
    with open(path, "rb") as f:
        got = f.read(len(magic))
        if got != magic:
            raise FormatError(f"bad magic {got!r}, expected {magic!r}")
        dims = _parse_dims(_read_line(f, "dims"))
        dx, dy, dz = dims
        n = dx * dy * dz
        payload = f.read(n * itemsize + 1)
    if len(payload) < n * itemsize:
        raise FormatError(
            f"truncated payload: expected {n * itemsize} bytes, got {len(payload)}"
        )
    if len(payload) > n * itemsize:
        raise FormatError("trailing bytes after payload")
    flat = np.frombuffer(payload, dtype=dtype)
    return flat.reshape(dz, dy, dx).transpose(2, 1, 0).copy()


def save_volume(volume: Volume, path: str) -> None:
    _write_grid(path, VOLUME_MAGIC, volume.voxels, "<f4")


def load_volume(path: str) -> Volume:
    return Volume(_read_grid(path, VOLUME_MAGIC, "<f4"))


def save_atlas(atlas: AtlasMap, path: str) -> None:
    _write_grid(path, ATLAS_MAGIC, atlas.labels, "<u4")


def load_atlas(path: str) -> AtlasMap:
    labels = _read_grid(path, ATLAS_MAGIC, "<u4")
    if labels.max() == 0:
        raise FormatError("atlas has no foreground labels")
    return AtlasMap(labels=labels, region_count=int(labels.max()))


def fmt_value(v) -> str:
    """Deterministic scalar formatting for CSV artifacts."""
    if isinstance(v, bool) or isinstance(v, np.bool_):
        return "true" if v else "false"
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, (np.integer, int)):
        return str(int(v))
    return str(v)


def write_csv(path: str, fieldnames: list[str], rows, comments=()) -> None:
    with open(path, "w", newline="") as f:
        for c in comments:
            f.write(f"# {c}\n")
        writer = csv.writer(f)
        writer.writerow(fieldnames)
        for row in rows:
            if isinstance(row, dict):
                writer.writerow([fmt_value(row[k]) for k in fieldnames])
            else:
                writer.writerow([fmt_value(v) for v in row])


def read_csv(path: str) -> list[dict[str, str]]:
    with open(path, "r", newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def save_cohort(directory: str, cohort: Cohort) -> None:
    """Write manifest.csv, atlas.atl, and one volume file per subject."""
    os.makedirs(os.path.join(directory, "volumes"), exist_ok=True)
    save_atlas(cohort.atlas, os.path.join(directory, "atlas.atl"))
    rows = []
    for s in cohort.subjects:
        rel = os.path.join("volumes", f"{s.id}.vol")
        save_volume(s.volume, os.path.join(directory, rel))
        rows.append((s.id, s.class_label, rel))
    write_csv(
        os.path.join(directory, "manifest.csv"),
        ["id", "class_label", "volume_path"],
        rows,
        comments=(f"seed={cohort.seed}",),
    )


def load_cohort(directory: str) -> Cohort:
    manifest = os.path.join(directory, "manifest.csv")
    if not os.path.exists(manifest):
        raise FormatError(f"missing manifest {manifest}")
    atlas = load_atlas(os.path.join(directory, "atlas.atl"))
    seed = 0
    with open(manifest) as f:
        for ln in f:
            if ln.startswith("# seed="):
                seed = int(ln.split("=", 1)[1])
            if not ln.startswith("#"):
                break
    subjects = []
    for row in read_csv(manifest):
        vol = load_volume(os.path.join(directory, row["volume_path"]))
        subjects.append(
            Subject(id=row["id"], class_label=int(row["class_label"]), volume=vol)
        )
    return Cohort(subjects=subjects, atlas=atlas, seed=seed)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
