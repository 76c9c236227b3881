"""Binary (P5) PGM reading and writing for 8-bit grayscale rasters."""
import numpy as np

from ..errors import FormatError

_WHITESPACE = b" \t\n\r\v\f"


def _header_tokens(data: bytes, count: int):
    """Return the first ``count`` header tokens and the offset just past them."""
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos] in _WHITESPACE:
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise FormatError("PGM header ended early")
        start = pos
        while pos < n and data[pos] not in _WHITESPACE and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(data: bytes) -> np.ndarray:
    """Decode P5 bytes into an (H, W) uint8 array."""
    data = bytes(data)
    if data[:2] != b"P5":
        kind = data[:2].decode("latin-1", "replace")
        raise FormatError(f"unsupported image format {kind!r}; only binary P5 PGM is read")
    tokens, pos = _header_tokens(data, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"malformed PGM header {tokens!r}") from exc
    if width <= 0 or height <= 0:
        raise FormatError(f"invalid PGM dimensions {width}x{height}")
    if maxval != 255:
        raise FormatError(f"PGM maxval {maxval} unsupported; expected 255")
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise FormatError("PGM header must end with a single whitespace byte")
    pos += 1
    payload = data[pos:]
    need = width * height
    if len(payload) < need:
        raise FormatError(f"PGM payload truncated: {len(payload)} of {need} bytes")
    if len(payload) > need:
        raise FormatError(f"PGM payload has {len(payload) - need} extra bytes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(raster) -> bytes:
    arr = np.asarray(raster)
    if arr.ndim != 2:
        raise FormatError(f"PGM raster must be 2-D, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 255:
            raise FormatError("PGM values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    h, w = arr.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(arr).tobytes()


def load_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_pgm(fh.read())


def save_pgm(path, raster):
    with open(path, "wb") as fh:
        fh.write(write_pgm(raster))
