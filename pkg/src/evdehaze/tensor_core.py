"""Arrays, images, seeded noise and the on-disk formats everything else uses.

Tensors are plain ``numpy.ndarray`` values of dtype float32 in C (row-major)
order. Feature tensors are channel-first (C, H, W); images use the same
layout with C in {1, 3} and values in [0, 1].

Randomness comes from ``numpy.random.Generator`` over the PCG64 bit
generator; :data:`RNG_ALGORITHM` is stamped into every manifest that embeds
noise so a reader knows which stream produced it.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

RNG_ALGORITHM = f"numpy-PCG64/standard_normal-ziggurat/numpy-{np.__version__}"

TEN_MAGIC = b"TEN0"
_MAX_ELEMENTS = 1 << 31


def make_rng(seed: int) -> np.random.Generator:
    """Single-owner generator for ``seed`` (any non-negative 64-bit integer)."""
    if seed < 0 or seed >= 1 << 64:
        raise DataError(f"seed {seed} outside unsigned 64-bit range")
    return np.random.Generator(np.random.PCG64(seed))


def _check_dims(dims) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims:
        raise DataError("invalid dimension: dims must be nonempty")
    for i, d in enumerate(dims):
        if d <= 0:
            raise DataError(f"invalid dimension: extent {d} at axis {i}")
    return dims


def gaussian_sample(rng: np.random.Generator, dims) -> np.ndarray:
    """i.i.d. N(0, 1) float32 samples of shape ``dims``; advances ``rng``."""
    return rng.standard_normal(_check_dims(dims), dtype=np.float32)


def as_tensor(values, dims=None) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float32)
    if dims is not None:
        arr = arr.reshape(_check_dims(dims))
    return arr


# ---------------------------------------------------------------------------
# .ten files


def encode_tensor(t: np.ndarray) -> bytes:
    t = np.asarray(t)
    dims = _check_dims(t.shape)
    if len(dims) > 255:
        raise DataError(f"too many dimensions for .ten: {len(dims)}")
    header = TEN_MAGIC + struct.pack("<B", len(dims)) + struct.pack(f"<{len(dims)}I", *dims)
    payload = np.ascontiguousarray(t, dtype="<f4").tobytes()
    return header + payload


def decode_tensor(buf: bytes, path=None) -> np.ndarray:
    if len(buf) < 4:
        raise FormatError("truncated magic", offset=len(buf), path=path)
    if buf[:4] != TEN_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {TEN_MAGIC!r}", offset=0, path=path)
    if len(buf) < 5:
        raise FormatError("truncated header: missing ndim", offset=4, path=path)
    ndim = buf[4]
    if ndim == 0:
        raise FormatError("ndim must be at least 1", offset=4, path=path)
    ext_end = 5 + 4 * ndim
    if len(buf) < ext_end:
        raise FormatError("truncated extents", offset=len(buf), path=path)
    dims = struct.unpack_from(f"<{ndim}I", buf, 5)
    count = 1
    for i, d in enumerate(dims):
        if d == 0:
            raise FormatError(f"zero extent at axis {i}", offset=5 + 4 * i, path=path)
        count *= d
        if count > _MAX_ELEMENTS:
            raise FormatError("dimension product overflows element limit", offset=5 + 4 * i, path=path)
    need = ext_end + 4 * count
    if len(buf) < need:
        raise FormatError(f"truncated payload: need {need} bytes, have {len(buf)}",
                          offset=len(buf), path=path)
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} trailing bytes after payload", offset=need, path=path)
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=ext_end)
    return data.astype(np.float32).reshape(dims)


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_tensor(t: np.ndarray, path) -> None:
    atomic_write_bytes(path, encode_tensor(t))


def load_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes(), path=path)


# ---------------------------------------------------------------------------
# images (binary PGM / PPM, maxval 255)


def check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise DataError(f"image must be (C, H, W) with C in (1, 3), got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise DataError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise DataError(f"image values outside [0, 1]: [{img.min()}, {img.max()}]")
    return img


def quantize(img: np.ndarray) -> np.ndarray:
    """Round-half-up to 8-bit codes."""
    return np.floor(np.asarray(img, dtype=np.float64) * 255.0 + 0.5).astype(np.uint8)


def dequantize(codes: np.ndarray) -> np.ndarray:
    return (codes.astype(np.float32) / np.float32(255.0)).astype(np.float32)


def _channels_for(path: Path) -> int:
    ext = path.suffix.lower()
    if ext == ".pgm":
        return 1
    if ext == ".ppm":
        return 3
    raise DataError(f"{path}: unsupported image extension {ext!r} (use .pgm or .ppm)")


def save_image(img: np.ndarray, path) -> None:
    path = Path(path)
    img = check_image(img)
    channels = _channels_for(path)
    if img.shape[0] != channels:
        raise DataError(f"{path}: channel mismatch, {img.shape[0]}-channel image "
                        f"cannot be written as {path.suffix}")
    _, h, w = img.shape
    magic = b"P5" if channels == 1 else b"P6"
    codes = quantize(img).transpose(1, 2, 0)  # H, W, C interleaved
    atomic_write_bytes(path, magic + f"\n{w} {h}\n255\n".encode() + codes.tobytes())


def _read_token(buf: bytes, pos: int, path) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("truncated header", offset=start, path=path)
    return buf[start:pos], pos


def load_image(path) -> np.ndarray:
    path = Path(path)
    channels = _channels_for(path)
    buf = path.read_bytes()
    if buf[:2] not in (b"P5", b"P6"):
        raise FormatError(f"bad magic {buf[:2]!r}, expected P5 or P6", offset=0, path=path)
    file_channels = 1 if buf[:2] == b"P5" else 3
    if file_channels != channels:
        raise DataError(f"{path}: channel mismatch, {buf[:2].decode()} data in {path.suffix} file")
    pos = 2
    fields = []
    for _ in range(3):
        start = pos
        tok, pos = _read_token(buf, pos, path)
        if not tok.isdigit():
            raise FormatError(f"non-numeric header field {tok!r}", offset=start, path=path)
        fields.append(int(tok))
    w, h, maxval = fields
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval} (only 255)", offset=pos, path=path)
    if w <= 0 or h <= 0:
        raise FormatError(f"bad geometry {w}x{h}", offset=pos, path=path)
    pos += 1  # single whitespace byte after maxval
    need = pos + w * h * channels
    if len(buf) < need:
        raise FormatError(f"truncated raster: need {need} bytes, have {len(buf)}",
                          offset=len(buf), path=path)
    codes = np.frombuffer(buf, dtype=np.uint8, count=w * h * channels, offset=pos)
    return dequantize(codes.reshape(h, w, channels).transpose(2, 0, 1).copy())


def luminance(img: np.ndarray) -> np.ndarray:
    """(1, H, W) luma with Rec. 601 weights; single-channel input passes through."""
    img = np.asarray(img, dtype=np.float32)
    if img.shape[0] == 1:
        return img
    y = 0.299 * img[0].astype(np.float64) + 0.587 * img[1] + 0.114 * img[2]
    return y[None].astype(np.float32)
