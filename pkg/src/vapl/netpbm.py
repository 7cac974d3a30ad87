"""Binary netpbm (P5/P6) reading and writing, 8-bit and 16-bit."""

import numpy as np


class NetpbmError(Exception):
    def __init__(self, path, offset, message):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{path}: byte {offset}: {message}")


def _read_tokens(buf, path, n):
    """Read `n` whitespace/comment separated header tokens; return tokens, offset."""
    tokens = []
    i = 0
    while len(tokens) < n:
        if i >= len(buf):
            raise NetpbmError(path, i, "truncated header")
        c = buf[i:i + 1]
        if c == b"#":
            while i < len(buf) and buf[i:i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(buf) and not buf[j:j + 1].isspace():
                j += 1
            tokens.append(buf[i:j])
            i = j
    if i >= len(buf):
        raise NetpbmError(path, i, "missing whitespace after header")
    i += 1  # single whitespace byte before raster
    return tokens, i


def read_pnm(path):
    """Read a binary PGM/PPM. Returns (array, maxval).

    PGM -> (H, W) array; PPM -> (3, H, W) array. dtype uint8 or uint16.
    """
    with open(path, "rb") as f:
        buf = f.read()
    return parse_pnm(buf, path)


def parse_pnm(buf, path="<bytes>"):
    tokens, offset = _read_tokens(buf, path, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise NetpbmError(path, 0, f"unsupported magic {magic!r} (need P5 or P6)")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise NetpbmError(path, offset, "non-numeric header field")
    if w <= 0 or h <= 0 or maxval <= 0 or maxval > 65535:
        raise NetpbmError(path, offset, f"bad dimensions/maxval {w}x{h}/{maxval}")
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    need = w * h * channels * dtype.itemsize
    raster = buf[offset:offset + need]
    if len(raster) < need:
        raise NetpbmError(path, offset + len(raster), f"truncated raster, need {need} bytes")
    arr = np.frombuffer(raster, dtype=dtype).astype(np.uint16 if maxval > 255 else np.uint8)
    if channels == 3:
        arr = arr.reshape(h, w, 3).transpose(2, 0, 1)
    else:
        arr = arr.reshape(h, w)
    return arr, maxval


def write_pnm(path, arr, maxval=255):
    """Write (H, W) as P5 or (3, H, W) as P6."""
    with open(path, "wb") as f:
        f.write(encode_pnm(arr, maxval))


def encode_pnm(arr, maxval=255):
    arr = np.asarray(arr)
    if arr.ndim == 2:
        magic, h, w, flat = b"P5", arr.shape[0], arr.shape[1], arr
    elif arr.ndim == 3 and arr.shape[0] == 3:
        magic, h, w = b"P6", arr.shape[1], arr.shape[2]
        flat = arr.transpose(1, 2, 0)
    else:
        raise ValueError(f"expected (H,W) or (3,H,W), got {arr.shape}")
    if arr.min() < 0 or arr.max() > maxval:
        raise ValueError(f"pixel values outside [0, {maxval}]")
    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    header = magic + b"\n%d %d\n%d\n" % (w, h, maxval)
    return header + np.ascontiguousarray(flat).astype(dtype).tobytes()


def image_to_unit(arr, maxval):
    """uint image -> float64 (C, H, W) in [0, 1]."""
    a = arr.astype(np.float64) / float(maxval)
    if a.ndim == 2:
        a = a[None, :, :]
    return a


def unit_to_image(a, maxval=255):
    """float (C, H, W) or (H, W) in [0, 1] -> uint image for write_pnm."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 3 and a.shape[0] == 1:
        a = a[0]
    out = np.rint(np.clip(a, 0.0, 1.0) * maxval)
    return out.astype(np.uint16 if maxval > 255 else np.uint8)
