"""File formats: OCTM field/map containers, JSON-lines manifests, PGM previews.

OCTM layout (all little-endian)::

    offset  size  field
    0       4     magic b"OCTM"
    4       2     version (u16) = 1
    6       4     width (u32)
    10      4     height (u32)
    14      1     channels (u8): 1 = scalar field, 3 = (n, mu_s, g) maps
    15      1     dtype (u8): 0 = float32
    16      8     pitch_x (f64, meters)
    24      8     pitch_z (f64, meters)
    32      ...   payload: channels x height x width float32, planar, row-major

Values are narrowed from float64 to float32 with round-to-nearest. Writing
the same path from two processes at once is undefined.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .fields import G_BOUNDS, N_BOUNDS, ParameterMaps, ScalarField, maps_clamp

MAGIC = b"OCTM"
VERSION = 1
DTYPE_F32 = 0
HEADER = struct.Struct("<4sHIIBBdd")
HEADER_SIZE = HEADER.size  # 32

# float32 rounding can push a boundary value (e.g. g = 0.999) just outside its range
_LOAD_SLACK = 1e-6


class OctmapError(ValueError):
    pass


def encode_octmap(obj: ScalarField | ParameterMaps) -> bytes:
    if isinstance(obj, ParameterMaps):
        planes = obj.stack()
        pitch_x, pitch_z = obj.pitch_x, obj.pitch_z
    elif isinstance(obj, ScalarField):
        planes = obj.data[None]
        pitch_x, pitch_z = obj.pitch_x, obj.pitch_z
    else:
        raise TypeError(f"expected ScalarField or ParameterMaps, got {type(obj).__name__}")
    channels, height, width = planes.shape
    head = HEADER.pack(MAGIC, VERSION, width, height, channels, DTYPE_F32, pitch_x, pitch_z)
    return head + planes.astype("<f4").tobytes(order="C")


def write_octmap(path, obj: ScalarField | ParameterMaps) -> None:
    path = Path(path)
    data = encode_octmap(obj)
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from None


def decode_octmap(buf: bytes, source: str = "<bytes>") -> ScalarField | ParameterMaps:
    if len(buf) < HEADER_SIZE:
        raise OctmapError(f"{source}: unexpected end of file at byte {len(buf)} (header needs {HEADER_SIZE})")
    magic, version, width, height, channels, dtype, pitch_x, pitch_z = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise OctmapError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise OctmapError(f"{source}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise OctmapError(f"{source}: unsupported dtype code {dtype}")
    if channels not in (1, 3):
        raise OctmapError(f"{source}: unsupported channel count {channels}")
    if width < 1 or height < 1:
        raise OctmapError(f"{source}: degenerate size {width}x{height}")
    need = HEADER_SIZE + 4 * channels * width * height
    if len(buf) < need:
        raise OctmapError(f"{source}: unexpected end of file at byte {len(buf)} (payload needs {need})")
    if len(buf) > need:
        raise OctmapError(f"{source}: {len(buf) - need} trailing bytes after payload")
    planes = np.frombuffer(buf, dtype="<f4", offset=HEADER_SIZE).reshape(channels, height, width)
    planes = planes.astype(np.float64)
    try:
        if channels == 1:
            return ScalarField(planes[0], pitch_x, pitch_z)
        n, mu_s, g = planes
        _check_range(n, N_BOUNDS, "n", source)
        _check_range(g, G_BOUNDS, "g", source)
        _check_range(mu_s, (0.0, np.inf), "mu_s", source)
        return maps_clamp(n, mu_s, g, pitch_x, pitch_z)
    except ValueError as exc:
        if isinstance(exc, OctmapError):
            raise
        raise OctmapError(f"{source}: {exc}") from None


def _check_range(a, bounds, name, source):
    lo, hi = bounds
    if not np.all(np.isfinite(a)):
        raise OctmapError(f"{source}: non-finite values in {name}")
    tol_lo = _LOAD_SLACK * max(1.0, abs(lo))
    tol_hi = _LOAD_SLACK * max(1.0, abs(hi)) if np.isfinite(hi) else 0.0
    if np.any(a < lo - tol_lo) or np.any(a > hi + tol_hi):
        raise OctmapError(f"{source}: {name} outside [{lo}, {hi}]")


def read_octmap(path) -> ScalarField | ParameterMaps:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise OSError(exc.errno, f"cannot read {path}: {exc.strerror}") from None
    return decode_octmap(buf, source=str(path))


# -- manifests ---------------------------------------------------------------

MANIFEST_KEYS = ("id", "seed", "scene_file", "bscan_file", "maps_file")


def write_manifest(path, records) -> None:
    """JSON lines, one record per (B-scan, maps) pair, keys sorted for stable bytes."""
    with open(path, "w") as fh:
        for rec in records:
            missing = [k for k in MANIFEST_KEYS if k not in rec]
            if missing:
                raise ValueError(f"manifest record lacks {missing}")
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_manifest(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# -- PGM preview -------------------------------------------------------------


def to_gray8(data: np.ndarray, log: bool = False, floor_db: float = -60.0) -> np.ndarray:
    """Min-max scale to 0..255, optionally after a dB transform floored at ``floor_db``.

    A field with no dynamic range maps to mid gray (128).
    """
    a = np.asarray(data, dtype=np.float64)
    if log:
        peak = a.max()
        if peak > 0:
            with np.errstate(divide="ignore"):
                a = 10.0 * np.log10(np.maximum(a, 0.0) / peak)
            a = np.maximum(a, floor_db)
        else:
            a = np.full_like(a, floor_db)
    lo, hi = a.min(), a.max()
    if hi <= lo:
        return np.full(a.shape, 128, dtype=np.uint8)
    return np.rint((a - lo) / (hi - lo) * 255.0).astype(np.uint8)


def render_pgm(field: ScalarField, path, log: bool = False, floor_db: float = -60.0) -> None:
    """Write an 8-bit binary (P5) PGM preview."""
    img = to_gray8(field.data, log=log, floor_db=floor_db)
    head = f"P5\n{field.width} {field.height}\n255\n".encode("ascii")
    path = Path(path)
    try:
        path.write_bytes(head + img.tobytes())
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from None


def read_pgm(path) -> np.ndarray:
    """Read a P5 file in the exact header layout written by :func:`render_pgm`."""
    magic, size, maxval, payload = Path(path).read_bytes().split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    width, height = (int(v) for v in size.split())
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
