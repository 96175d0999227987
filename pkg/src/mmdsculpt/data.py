"""Synthetic XY-family images, IDX ingestion and the latent-dump format.

Latent dump layout (all little-endian)::

    bytes 0-3    b"LTNT"
    bytes 4-7    u32 version (=1)
    bytes 8-11   u32 n
    bytes 12-15  u32 d
    bytes 16-    n*d float32, row-major
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

XY, XYC, XYCS = "XY", "XYC", "XYCS"
VARIANTS = (XY, XYC, XYCS)
FACTOR_NAMES = {
    XY: ("x", "y"),
    XYC: ("x", "y", "color"),
    XYCS: ("x", "y", "color", "shape"),
}
DEFAULT_RESOLUTION = 32
MIN_RESOLUTION = 16
INTENSITY_RANGE = (0.25, 1.0)
SUPERSAMPLE = 4

LTNT_MAGIC = b"LTNT"
LTNT_VERSION = 1
_LTNT_HEADER = struct.Struct("<4sIII")

IDX_UBYTE_3D = b"\x00\x00\x08\x03"


class FormatError(ValueError):
    """Binary payload does not match its declared layout."""


# ------------------------------------------------------------------ XY family

@dataclass
class FactorTable:
    """Ground-truth factors, one row per image, each column in [0, 1]."""

    names: tuple[str, ...]
    values: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.names)
            for row in self.values:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "FactorTable":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        names = tuple(rows[0])
        values = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
        return cls(names, values.reshape(-1, len(names)))


def shape_radius(resolution: int) -> float:
    return resolution / 8.0


def render_shapes(cx, cy, intensity, square, resolution: int = DEFAULT_RESOLUTION) -> np.ndarray:
    """Rasterize filled circles/squares with anti-aliased edges.

    Centers are in pixel units (pixel ``(i, j)`` spans ``[j, j+1] × [i, i+1]``).
    Pixel value is ``intensity`` times the covered fraction, estimated on a
    4×4 subpixel grid.
    """
    cx, cy, intensity, square = (np.atleast_1d(np.asarray(v, dtype=np.float64))
                                 for v in (cx, cy, intensity, square))
    r = shape_radius(resolution)
    sub = (np.arange(resolution * SUPERSAMPLE) + 0.5) / SUPERSAMPLE
    out = np.empty((cx.size, resolution, resolution))
    chunk = 256
    for s in range(0, cx.size, chunk):
        e = min(s + chunk, cx.size)
        dx = sub[None, None, :] - cx[s:e, None, None]
        dy = sub[None, :, None] - cy[s:e, None, None]
        disk = dx * dx + dy * dy <= r * r
        box = (np.abs(dx) <= r) & (np.abs(dy) <= r)
        inside = np.where(square[s:e, None, None] > 0.5, box, disk)
        cov = inside.reshape(e - s, resolution, SUPERSAMPLE, resolution, SUPERSAMPLE).mean(axis=(2, 4))
        out[s:e] = cov * intensity[s:e, None, None]
    return out


def generate_xy_family(variant: str, n: int, resolution: int = DEFAULT_RESOLUTION,
                       rng: np.random.Generator | None = None):
    """Draw ``n`` images of the XY / XYC / XYCS family.

    Returns ``(images, factors)`` with images shaped ``(n, resolution, resolution)``.
    """
    variant = variant.upper()
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution {resolution} too small to fit the shape (need >= {MIN_RESOLUTION})")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng() if rng is None else rng
    r = shape_radius(resolution)
    span = resolution - 2 * r
    cx = rng.uniform(r, resolution - r, size=n)
    cy = rng.uniform(r, resolution - r, size=n)
    cols = [(cx - r) / span, (cy - r) / span]
    lo, hi = INTENSITY_RANGE
    if variant in (XYC, XYCS):
        intensity = rng.uniform(lo, hi, size=n)
        cols.append((intensity - lo) / (hi - lo))
    else:
        intensity = np.ones(n)
    if variant == XYCS:
        square = rng.integers(0, 2, size=n).astype(np.float64)
        cols.append(square)
    else:
        square = np.zeros(n)
    images = render_shapes(cx, cy, intensity, square, resolution)
    return images, FactorTable(FACTOR_NAMES[variant], np.column_stack(cols))


# ------------------------------------------------------------------------ IDX

def parse_idx(buf: bytes) -> np.ndarray:
    """Decode an unsigned-byte rank-3 IDX payload into ``(n, h, w)`` floats in [0, 1]."""
    buf = bytes(buf)
    if len(buf) < 4:
        raise FormatError(f"IDX header truncated at byte offset {len(buf)} (need 4 magic bytes)")
    magic = buf[:4]
    if magic != IDX_UBYTE_3D:
        raise FormatError(f"bad IDX magic {magic.hex(' ')} at byte offset 0 "
                          f"(expected {IDX_UBYTE_3D.hex(' ')}: unsigned bytes, rank 3)")
    if len(buf) < 16:
        raise FormatError(f"IDX header truncated at byte offset {len(buf)} (need 16 header bytes)")
    n, h, w = struct.unpack(">III", buf[4:16])
    need = n * h * w
    have = len(buf) - 16
    if have < need:
        raise FormatError(f"IDX payload truncated: dims ({n}, {h}, {w}) declare {need} bytes, "
                          f"file ends at byte offset {len(buf)} with {have}")
    if have > need:
        raise FormatError(f"IDX payload has {have - need} trailing bytes after offset {16 + need}")
    pixels = np.frombuffer(buf, dtype=np.uint8, offset=16, count=need)
    return pixels.reshape(n, h, w).astype(np.float64) / 255.0


def encode_idx(images: np.ndarray) -> bytes:
    """Inverse of :func:`parse_idx` for images in [0, 1] (rounded to 1/255)."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3:
        raise ValueError(f"expected (n, h, w) images, got shape {images.shape}")
    if images.size and (images.min() < 0 or images.max() > 1):
        raise ValueError("image values must lie in [0, 1]")
    raw = np.rint(images * 255.0).astype(np.uint8)
    return IDX_UBYTE_3D + struct.pack(">III", *images.shape) + raw.tobytes()


def load_idx(path, limit: int | None = None) -> np.ndarray:
    images = parse_idx(Path(path).read_bytes())
    return images if limit is None else images[:limit]


def write_idx(path, images: np.ndarray) -> None:
    Path(path).write_bytes(encode_idx(images))


# ---------------------------------------------------------------- latent dump

def encode_latent_dump(z: np.ndarray) -> bytes:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError(f"latent batch must be 2-D, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("latent batch contains non-finite values")
    n, d = z.shape
    return _LTNT_HEADER.pack(LTNT_MAGIC, LTNT_VERSION, n, d) + z.astype("<f4").tobytes()


def decode_latent_dump(buf: bytes) -> np.ndarray:
    buf = bytes(buf)
    if len(buf) < _LTNT_HEADER.size:
        raise FormatError(f"latent dump header truncated at byte offset {len(buf)} "
                          f"(need {_LTNT_HEADER.size} bytes)")
    magic, version, n, d = _LTNT_HEADER.unpack_from(buf)
    if magic != LTNT_MAGIC:
        raise FormatError(f"bad latent dump magic {magic!r} at byte offset 0 (expected {LTNT_MAGIC!r})")
    if version != LTNT_VERSION:
        raise FormatError(f"unsupported latent dump version {version} at byte offset 4")
    need = n * d * 4
    have = len(buf) - _LTNT_HEADER.size
    if have != need:
        kind = "truncated" if have < need else "has trailing bytes"
        raise FormatError(f"latent dump {kind}: header declares n={n}, d={d} ({need} payload bytes) "
                          f"but payload ends at byte offset {len(buf)} ({have} bytes)")
    return np.frombuffer(buf, dtype="<f4", offset=_LTNT_HEADER.size).reshape(n, d).copy()


def write_latent_dump(path, z: np.ndarray) -> None:
    Path(path).write_bytes(encode_latent_dump(z))


def read_latent_dump(path) -> np.ndarray:
    """Return the stored ``n × d`` float32 array."""
    return decode_latent_dump(Path(path).read_bytes())
