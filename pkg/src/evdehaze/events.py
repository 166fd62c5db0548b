"""Event streams: validation, windowing, CSV and EVT0 binary I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ParseError, ValidationError
from .tensor_core import atomic_write_bytes

EVT_MAGIC = b"EVT0"
_HEADER = np.dtype([("magic", "S4"), ("width", "<u2"), ("height", "<u2"), ("count", "<u8")])
_RECORD = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])


@dataclass(frozen=True, eq=False)
class EventStream:
    """Columnar event storage. ``p`` holds signed polarity in {-1, +1}.

    Construction does not validate; use :meth:`validated` or go through
    :func:`read_events`, which does.
    """

    width: int
    height: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray

    @classmethod
    def from_arrays(cls, width, height, t, x, y, p) -> "EventStream":
        t = np.array(t, dtype=np.uint64).reshape(-1)
        x = np.array(x, dtype=np.int64).reshape(-1)
        y = np.array(y, dtype=np.int64).reshape(-1)
        p = np.array(p, dtype=np.int8).reshape(-1)
        if not (len(t) == len(x) == len(y) == len(p)):
            raise ValidationError("event columns differ in length")
        for a in (t, x, y, p):
            a.setflags(write=False)
        return cls(int(width), int(height), t, x, y, p)

    @classmethod
    def empty(cls, width, height) -> "EventStream":
        return cls.from_arrays(width, height, [], [], [], [])

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and np.array_equal(self.t, other.t) and np.array_equal(self.x, other.x)
                and np.array_equal(self.y, other.y) and np.array_equal(self.p, other.p))

    def validated(self, path=None) -> "EventStream":
        validate(self, path)
        return self


def validate(s: EventStream, path=None) -> None:
    """Raise ValidationError naming the first offending record (1-based)."""
    if not (0 < s.width < 1 << 16 and 0 < s.height < 1 << 16):
        raise ValidationError(f"bad sensor geometry {s.width}x{s.height}", path=path)
    n = len(s)
    if n == 0:
        return
    bad = np.flatnonzero((s.p != 1) & (s.p != -1))
    if bad.size:
        i = int(bad[0])
        raise ValidationError(f"polarity {int(s.p[i])} not in {{-1, 1}}", record=i + 1, path=path)
    oob = np.flatnonzero((s.x < 0) | (s.x >= s.width) | (s.y < 0) | (s.y >= s.height))
    if oob.size:
        i = int(oob[0])
        raise ValidationError(
            f"bounds error: ({int(s.x[i])}, {int(s.y[i])}) outside {s.width}x{s.height}",
            record=i + 1, path=path)
    dec = np.flatnonzero(s.t[1:] < s.t[:-1])
    if dec.size:
        i = int(dec[0]) + 1
        raise ValidationError(f"ordering error: t={int(s.t[i])} after t={int(s.t[i - 1])}",
                              record=i + 1, path=path)


def slice_window(s: EventStream, t0: int, t1: int) -> EventStream:
    """Events with t0 <= t < t1, order preserved."""
    if t0 > t1:
        raise ValidationError(f"invalid window: t0={t0} > t1={t1}")
    lo = int(np.searchsorted(s.t, np.uint64(max(t0, 0)), side="left"))
    hi = int(np.searchsorted(s.t, np.uint64(max(t1, 0)), side="left"))
    sl = slice(lo, hi)
    return EventStream.from_arrays(s.width, s.height, s.t[sl], s.x[sl], s.y[sl], s.p[sl])


# ---------------------------------------------------------------------------
# CSV: "t_us,x,y,p" lines, geometry supplied by the caller


def parse_csv(text: str, width: int, height: int, path=None) -> EventStream:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(f"expected 4 comma-separated fields, got {len(parts)}",
                             line=lineno, path=path)
        try:
            t, x, y, p = (int(v) for v in parts)
        except ValueError:
            raise ParseError(f"non-integer field in {line!r}", line=lineno, path=path) from None
        if t < 0 or t >= 1 << 64:
            raise ParseError(f"timestamp {t} outside unsigned 64-bit range", line=lineno, path=path)
        rows.append((t, x, y, p))
    if rows:
        t, x, y, p = zip(*rows)
    else:
        t = x = y = p = ()
    if any(v not in (-1, 1) for v in p):
        i = next(i for i, v in enumerate(p) if v not in (-1, 1))
        raise ValidationError(f"polarity {p[i]} not in {{-1, 1}}", record=i + 1, path=path)
    s = EventStream.from_arrays(width, height, np.array(t, dtype=np.uint64), x, y, p)
    return s.validated(path)


def format_csv(s: EventStream) -> str:
    return "".join(f"{int(t)},{int(x)},{int(y)},{int(p)}\n"
                   for t, x, y, p in zip(s.t, s.x, s.y, s.p))


# ---------------------------------------------------------------------------
# EVT0 binary


def encode_bin(s: EventStream) -> bytes:
    validate(s)
    header = np.zeros(1, dtype=_HEADER)
    header["magic"] = EVT_MAGIC
    header["width"], header["height"], header["count"] = s.width, s.height, len(s)
    rec = np.empty(len(s), dtype=_RECORD)
    rec["t"], rec["x"], rec["y"] = s.t, s.x, s.y
    rec["p"] = (s.p > 0).astype(np.uint8)
    return header.tobytes() + rec.tobytes()


def decode_bin(buf: bytes, path=None) -> EventStream:
    if len(buf) < 4 or buf[:4] != EVT_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {EVT_MAGIC!r}", offset=0, path=path)
    if len(buf) < _HEADER.itemsize:
        raise FormatError("truncated header", offset=len(buf), path=path)
    head = np.frombuffer(buf, dtype=_HEADER, count=1)[0]
    count = int(head["count"])
    need = _HEADER.itemsize + count * _RECORD.itemsize
    if len(buf) < need:
        complete = (len(buf) - _HEADER.itemsize) // _RECORD.itemsize
        raise FormatError(f"truncated payload: header declares {count} records, "
                          f"{complete} present", offset=len(buf), path=path)
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} trailing bytes", offset=need, path=path)
    rec = np.frombuffer(buf, dtype=_RECORD, count=count, offset=_HEADER.itemsize)
    bad = np.flatnonzero(rec["p"] > 1)
    if bad.size:
        i = int(bad[0])
        raise FormatError(f"polarity byte {int(rec['p'][i])} not in {{0, 1}}",
                          offset=_HEADER.itemsize + i * _RECORD.itemsize + 12, path=path)
    p = np.where(rec["p"] == 1, 1, -1)
    s = EventStream.from_arrays(int(head["width"]), int(head["height"]),
                                rec["t"], rec["x"], rec["y"], p)
    return s.validated(path)


def _fmt(path, fmt):
    fmt = fmt or Path(path).suffix.lstrip(".").lower()
    if fmt not in ("csv", "bin"):
        raise FormatError(f"unknown event format {fmt!r}", path=path)
    return fmt


def read_events(path, fmt=None, width=None, height=None) -> EventStream:
    """Read and validate a stream. CSV needs ``width``/``height``."""
    fmt = _fmt(path, fmt)
    if fmt == "csv":
        if width is None or height is None:
            raise ValidationError("CSV event files need sensor width and height", path=path)
        return parse_csv(Path(path).read_text(), width, height, path=path)
    return decode_bin(Path(path).read_bytes(), path=path)


def write_events(s: EventStream, path, fmt=None) -> None:
    fmt = _fmt(path, fmt)
    validate(s)
    data = format_csv(s).encode() if fmt == "csv" else encode_bin(s)
    atomic_write_bytes(path, data)
