"""Image ingestion and writing: binary PPM (P6) and 8-bit PNG (RGB/RGBA,
alpha dropped), plus bilinear resizing.

Decoded images are float32 (3,H,W) arrays in [0,1] (byte/255). PPM is the
bit-exact golden format used by the tests; PNG support covers the common
interchange case. Decode failures raise IngestionError carrying the path
and the byte offset where parsing stopped.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import IngestionError, UsageError

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def bilinear_resize(img, out_h, out_w):
    """Half-pixel-center bilinear resize of a (C,H,W) float array."""
    c, h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[None, :, None]
    wx = (xs - x0)[None, None, :]
    top = img[:, y0][:, :, x0] * (1 - wx) + img[:, y0][:, :, x1] * wx
    bottom = img[:, y1][:, :, x0] * (1 - wx) + img[:, y1][:, :, x1] * wx
    return (top * (1 - wy) + bottom * wy).astype(img.dtype)


# -- PPM (P6) -------------------------------------------------------------------


def _read_ppm(data, path):
    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise IngestionError("truncated PPM header", path, start)
        return data[start:pos]

    magic = token()
    if magic != b"P6":
        raise IngestionError(f"not a binary PPM (magic {magic!r})", path, 0)
    try:
        width = int(token())
        height = int(token())
        maxval = int(token())
    except ValueError:
        raise IngestionError("malformed PPM header", path, pos)
    if maxval != 255:
        raise IngestionError(f"unsupported PPM maxval {maxval}", path, pos)
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 3
    raster = data[pos : pos + expected]
    if len(raster) != expected:
        raise IngestionError(
            f"PPM raster truncated ({len(raster)} of {expected} bytes)", path, pos
        )
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return arr


def _write_ppm(path, rgb_u8):
    h, w, _ = rgb_u8.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb_u8.tobytes())


# -- PNG ----------------------------------------------------------------------------


def _paeth(a, b, c):
    p = a.astype(np.int16) + b - c
    pa = np.abs(p - a)
    pb = np.abs(p - b)
    pc = np.abs(p - c)
    out = np.where((pa <= pb) & (pa <= pc), a, np.where(pb <= pc, b, c))
    return out.astype(np.uint8)


def _unfilter(raw, height, width, channels, path):
    stride = width * channels
    out = np.zeros((height, stride), dtype=np.uint8)
    pos = 0
    for row in range(height):
        ftype = raw[pos]
        pos += 1
        line = np.frombuffer(raw[pos : pos + stride], dtype=np.uint8).astype(np.int16)
        pos += stride
        prev = out[row - 1].astype(np.int16) if row else np.zeros(stride, dtype=np.int16)
        if ftype == 0:
            recon = line
        elif ftype == 2:
            recon = line + prev
        elif ftype in (1, 3, 4):
            recon = np.zeros(stride, dtype=np.int16)
            for i in range(stride):
                left = int(recon[i - channels]) if i >= channels else 0
                if ftype == 1:
                    recon[i] = (line[i] + left) & 0xFF
                elif ftype == 3:
                    recon[i] = (line[i] + ((left + prev[i]) >> 1)) & 0xFF
                else:
                    upleft = int(prev[i - channels]) if i >= channels else 0
                    recon[i] = (line[i] + _paeth(
                        np.uint8(left), np.uint8(prev[i]), np.uint8(upleft)
                    )) & 0xFF
        else:
            raise IngestionError(f"unknown PNG filter type {ftype}", path, pos)
        out[row] = recon & 0xFF
    return out.reshape(height, width, channels)


def _read_png(data, path):
    if data[:8] != _PNG_SIGNATURE:
        raise IngestionError("bad PNG signature", path, 0)
    pos = 8
    width = height = None
    channels = None
    idat = bytearray()
    while pos < len(data):
        if pos + 8 > len(data):
            raise IngestionError("truncated PNG chunk header", path, pos)
        length, ctype = struct.unpack(">I4s", data[pos : pos + 8])
        body = data[pos + 8 : pos + 8 + length]
        if len(body) != length:
            raise IngestionError("truncated PNG chunk body", path, pos + 8)
        if ctype == b"IHDR":
            width, height, depth, color, _, _, interlace = struct.unpack(">IIBBBBB", body)
            if depth != 8 or color not in (2, 6):
                raise IngestionError(
                    f"unsupported PNG (bit depth {depth}, color type {color}); "
                    "only 8-bit RGB/RGBA is handled",
                    path,
                    pos + 8,
                )
            if interlace:
                raise IngestionError("interlaced PNG not supported", path, pos + 8)
            channels = 3 if color == 2 else 4
        elif ctype == b"IDAT":
            idat.extend(body)
        elif ctype == b"IEND":
            break
        pos += 12 + length  # header + body + crc
    if width is None or not idat:
        raise IngestionError("PNG missing IHDR or IDAT", path, pos)
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise IngestionError(f"PNG inflate failed: {exc}", path, pos)
    expected = height * (width * channels + 1)
    if len(raw) != expected:
        raise IngestionError(
            f"PNG payload has {len(raw)} bytes, expected {expected}", path, pos
        )
    arr = _unfilter(raw, height, width, channels, path)
    return arr[:, :, :3]


def _write_png(path, rgb_u8):
    h, w, _ = rgb_u8.shape
    raw = bytearray()
    for row in range(h):
        raw.append(0)
        raw.extend(rgb_u8[row].tobytes())
    compressed = zlib.compress(bytes(raw), 9)

    def chunk(ctype, body):
        return (
            struct.pack(">I", len(body))
            + ctype
            + body
            + struct.pack(">I", zlib.crc32(ctype + body) & 0xFFFFFFFF)
        )

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    with open(path, "wb") as fh:
        fh.write(_PNG_SIGNATURE)
        fh.write(chunk(b"IHDR", ihdr))
        fh.write(chunk(b"IDAT", compressed))
        fh.write(chunk(b"IEND", b""))


# -- public API ---------------------------------------------------------------------


def load_image(path, target_size=None):
    """Decode a PPM/PNG file to (3,H,W) float32 in [0,1], optionally resized.

    `target_size` is a single side length; images are resized (bilinear)
    to target_size x target_size.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read file: {exc}", str(path))
    if data[:8] == _PNG_SIGNATURE:
        rgb = _read_png(data, str(path))
    elif data[:2] == b"P6":
        rgb = _read_ppm(data, str(path))
    else:
        raise IngestionError("unsupported image format (expected P6 PPM or PNG)",
                             str(path), 0)
    img = rgb.astype(np.float32).transpose(2, 0, 1) / 255.0
    if target_size is not None and img.shape[1:] != (target_size, target_size):
        img = bilinear_resize(img, target_size, target_size)
    return img


def save_image(path, img):
    """Write a (3,H,W) float image in [0,1] as PPM or PNG by extension."""
    path = Path(path)
    rgb_u8 = np.clip(np.rint(np.clip(img, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)
    rgb_u8 = rgb_u8.transpose(1, 2, 0)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        _write_ppm(path, rgb_u8)
    elif suffix == ".png":
        _write_png(path, rgb_u8)
    else:
        raise UsageError(f"unsupported output extension {suffix!r} (use .ppm or .png)")
