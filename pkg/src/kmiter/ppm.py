"""Binary PPM (P6) and PGM (P5) reading and writing, 8-bit only."""

import numpy as np

from .errors import PPMFormatError


def _read_header(data, magic_expected):
    """Parse magic, width, height and maxval; return them with the payload offset."""
    if len(data) < 2:
        raise PPMFormatError("file too short for a header", 0)
    magic = data[:2].decode("latin-1")
    if magic != magic_expected:
        raise PPMFormatError(f"unsupported magic {magic!r}", 0)
    fields, starts = [], []
    pos = 2
    while len(fields) < 3:
        start = pos
        if pos >= len(data):
            raise PPMFormatError("truncated header", pos)
        c = data[pos:pos + 1]
        if c.isspace():
            pos += 1
            continue
        if c == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise PPMFormatError("unterminated comment", pos)
            pos = nl + 1
            continue
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if pos == start:
            raise PPMFormatError(f"unexpected byte {c!r} in header", pos)
        fields.append(int(data[start:pos]))
        starts.append(start)
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise PPMFormatError("missing whitespace after maxval", pos)
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise PPMFormatError(f"bad dimensions {width}x{height}", starts[0])
    if maxval != 255:
        raise PPMFormatError(f"unsupported maxval {maxval}", starts[2])
    return width, height, pos + 1


def _read(path, magic, channels):
    with open(path, "rb") as fh:
        data = fh.read()
    width, height, offset = _read_header(data, magic)
    need = width * height * channels
    payload = data[offset:offset + need]
    if len(payload) < need:
        raise PPMFormatError(f"truncated payload: expected {need} bytes, got {len(payload)}",
                             offset + len(payload))
    arr = np.frombuffer(payload, dtype=np.uint8).astype(float) / 255.0
    return arr.reshape(height, width, channels) if channels > 1 else arr.reshape(height, width)


def _quantize(x):
    # round half up
    return np.floor(np.clip(x, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def read_ppm(path):
    """Read a binary P6 file into an ``M x N x 3`` float array in [0, 1]."""
    return _read(path, "P6", 3)


def write_ppm(path, x):
    """Write an ``M x N x 3`` array with entries in [0, 1] (clamped) as binary P6."""
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[2] != 3:
        raise ValueError(f"expected an M x N x 3 array, got shape {x.shape}")
    m, n, _ = x.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{n} {m}\n255\n".encode("ascii"))
        fh.write(_quantize(x).tobytes())


def read_pgm(path):
    return _read(path, "P5", 1)


def write_pgm(path, x):
    """Write a 2-D array in [0, 1] as binary P5 (used for masks)."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {x.shape}")
    m, n = x.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{n} {m}\n255\n".encode("ascii"))
        fh.write(_quantize(x).tobytes())
