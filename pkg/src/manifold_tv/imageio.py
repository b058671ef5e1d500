"""On-disk image format and CSV export.

A file is one UTF-8 JSON header line followed by the raw payload::

    {"version": 1, "manifold": {"kind": "sphere", "n": 2}, "shape": [512, 1]}\\n
    <little-endian float64 values, row-major pixels, ambient layout per pixel>

The payload holds exactly ``N * M * ambient_size`` doubles, so a round trip
is lossless.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from .cppa import ManifoldImage
from .exceptions import ParseError, ValidationError
from .manifolds import manifold_from_descriptor

FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")


def write_image(path, image: ManifoldImage) -> None:
    header = {
        "version": FORMAT_VERSION,
        "manifold": image.manifold.descriptor(),
        "shape": [int(s) for s in image.shape],
    }
    payload = np.ascontiguousarray(image.data, dtype=_DTYPE).tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(payload)


def read_image(path, validate: bool = True) -> ManifoldImage:
    """Read an image file; format or invariant problems raise :class:`ParseError`."""
    raw = Path(path).read_bytes()
    end = raw.find(b"\n")
    if end < 0:
        raise ParseError(f"{path}: line 1: missing header terminator")
    try:
        header = json.loads(raw[:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: line 1: malformed header ({exc})") from exc
    if not isinstance(header, dict):
        raise ParseError(f"{path}: line 1: header must be a JSON object")
    if header.get("version") != FORMAT_VERSION:
        raise ParseError(f"{path}: line 1: unsupported version {header.get('version')!r}")
    try:
        M = manifold_from_descriptor(header.get("manifold"))
    except ValidationError as exc:
        raise ParseError(f"{path}: line 1: {exc}") from exc
    shape = header.get("shape")
    if (not isinstance(shape, list) or len(shape) != 2
            or not all(isinstance(s, int) and s >= 1 for s in shape)):
        raise ParseError(f"{path}: line 1: shape must be two positive integers, got {shape!r}")
    offset = end + 1
    expected = shape[0] * shape[1] * M.ambient_size * _DTYPE.itemsize
    got = len(raw) - offset
    if got != expected:
        raise ParseError(
            f"{path}: byte offset {offset}: payload has {got} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype=_DTYPE, offset=offset).astype(float)
    data = data.reshape(shape[0], shape[1], M.ambient_size)
    if validate and not M.is_point(data):
        flat = data.reshape(-1, M.ambient_size)
        bad = [k for k in range(len(flat)) if not M.is_point(flat[k])]
        if bad:
            k = bad[0]
            pos = offset + k * M.ambient_size * _DTYPE.itemsize
            try:
                M.check_point(flat[k])
            except ValidationError as exc:
                reason = str(exc)
            raise ParseError(
                f"{path}: byte offset {pos}: pixel {divmod(k, shape[1])} is not a valid "
                f"point ({reason})")
    return ManifoldImage(M, data)


def export_csv(image: ManifoldImage, anisotropy: bool = False) -> str:
    """One pixel per row: ``i,j`` then the ambient coordinates.

    For SPD images ``anisotropy=True`` appends the geodesic anisotropy index.
    """
    from .datagen import geodesic_anisotropy
    from .spd import SPD

    M = image.manifold
    N, W = image.shape
    D = M.ambient_size
    flat = image.data.reshape(-1, D)
    cols = ["i", "j"] + [f"c{k}" for k in range(D)]
    extra = None
    if anisotropy:
        if not isinstance(M, SPD):
            raise ValidationError("anisotropy column needs an SPD image")
        extra = geodesic_anisotropy(M, flat)
        cols.append("anisotropy")
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for k in range(len(flat)):
        i, j = divmod(k, W)
        vals = [repr(float(v)) for v in flat[k]]
        if extra is not None:
            vals.append(repr(float(extra[k])))
        buf.write(f"{i},{j}," + ",".join(vals) + "\n")
    return buf.getvalue()
