"""Minimal 8-bit RGB PNG writer (stdlib zlib only)."""
import struct
import zlib

import numpy as np

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def to_uint8(img) -> np.ndarray:
    """[3,H,W] or [1,3,H,W] in [-1,1] -> [H,W,3] uint8, rounding half up."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 4:
        if a.shape[0] != 1:
            raise ValueError(f"expected a single image, got batch of {a.shape[0]}")
        a = a[0]
    if a.ndim != 3 or a.shape[0] != 3:
        raise ValueError(f"expected [3,H,W], got {a.shape}")
    a = np.clip(a, -1.0, 1.0)
    v = np.floor((a + 1.0) * 127.5 + 0.5)
    return np.clip(v, 0, 255).astype(np.uint8).transpose(1, 2, 0)


def _chunk(kind: bytes, data: bytes) -> bytes:
    crc = zlib.crc32(data, zlib.crc32(kind)) & 0xFFFFFFFF
    return struct.pack(">I", len(data)) + kind + data + struct.pack(">I", crc)


def encode_png(rgb: np.ndarray) -> bytes:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w, c = rgb.shape
    if c != 3:
        raise ValueError("encode_png expects H x W x 3 uint8")
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    # filter type 0 on every scanline
    raw = b"".join(b"\x00" + rgb[y].tobytes() for y in range(h))
    return (PNG_SIGNATURE + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", zlib.compress(raw, 9))
            + _chunk(b"IEND", b""))


def write_png(path, img) -> None:
    with open(path, "wb") as f:
        f.write(encode_png(to_uint8(img)))
