"""PFM and Radiance RGBE file codecs.

PFM is the lossless interchange format: header ``PF\\n<w> <h>\\n-1.0\\n``,
rows stored bottom-up, three little-endian float32 per pixel.

Radiance files carry the ``#?RADIANCE`` magic and shared-exponent RGBE
pixels; scanlines use the new-style RLE when the width allows it.  The
round-trip is exact only up to the 8-bit mantissa quantization.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .envmap import EQUIRECT_HEMISPHERE, SKYANGULAR, HdrImage


class HdrIoError(Exception):
    """Base class for HDR file I/O failures."""


class UnsupportedFormatError(HdrIoError):
    pass


class MalformedHeaderError(HdrIoError):
    pass


class TruncatedPayloadError(HdrIoError):
    pass


def _infer_projection(width: int, height: int) -> str:
    if width == height:
        return SKYANGULAR
    if width == 2 * height:
        return EQUIRECT_HEMISPHERE
    raise MalformedHeaderError(
        f"cannot infer projection from {width}x{height}; expected square or 2:1"
    )


def read_hdr(path, projection: str | None = None) -> HdrImage:
    """Load a PFM or Radiance file, dispatching on the file magic."""
    with open(path, "rb") as f:
        payload = f.read()
    if payload.startswith(b"PF\n") or payload.startswith(b"Pf\n") or payload.startswith(b"PF "):
        w, h, data = _decode_pfm(payload)
    elif payload.startswith(b"#?RADIANCE") or payload.startswith(b"#?RGBE"):
        w, h, data = _decode_rgbe(payload)
    else:
        raise UnsupportedFormatError(f"{path}: not a PFM or Radiance file")
    proj = projection or _infer_projection(w, h)
    return HdrImage(data, projection=proj)


def write_hdr(path, img: HdrImage) -> None:
    """Write PFM (.pfm) or Radiance RGBE (.hdr) based on the extension."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".pfm":
        blob = _encode_pfm(img.data)
    elif ext == ".hdr":
        blob = _encode_rgbe(img.data)
    else:
        raise UnsupportedFormatError(f"unsupported output extension {ext!r}")
    with open(path, "wb") as f:
        f.write(blob)


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------

def _encode_pfm(data: np.ndarray) -> bytes:
    h, w = data.shape[:2]
    header = f"PF\n{w} {h}\n-1.0\n".encode("ascii")
    # rows bottom-up, little-endian float32
    rows = np.ascontiguousarray(data[::-1, :, :].astype("<f4"))
    return header + rows.tobytes()


def _decode_pfm(payload: bytes):
    # header is three whitespace-separated tokens groups: magic, dims, scale
    pos = 0
    tokens = []
    while len(tokens) < 4 and pos < len(payload):
        end = pos
        while end < len(payload) and payload[end : end + 1] not in (b"\n", b" ", b"\t", b"\r"):
            end += 1
        if end > pos:
            tokens.append(payload[pos:end])
        pos = end + 1
    if len(tokens) < 4:
        raise MalformedHeaderError("incomplete PFM header")
    magic = tokens[0]
    if magic == b"PF":
        channels = 3
    elif magic == b"Pf":
        channels = 1
    else:
        raise MalformedHeaderError(f"bad PFM magic {magic!r}")
    try:
        w, h = int(tokens[1]), int(tokens[2])
        scale = float(tokens[3])
    except ValueError as exc:
        raise MalformedHeaderError(f"bad PFM dimensions/scale: {exc}") from exc
    if w <= 0 or h <= 0:
        raise MalformedHeaderError(f"bad PFM dimensions {w}x{h}")
    dtype = "<f4" if scale < 0 else ">f4"
    expected = w * h * channels * 4
    body = payload[pos:]
    if len(body) < expected:
        raise TruncatedPayloadError(f"PFM body has {len(body)} bytes, needs {expected}")
    arr = np.frombuffer(body[:expected], dtype=dtype).reshape(h, w, channels)
    if channels == 1:
        arr = np.repeat(arr, 3, axis=2)
    return w, h, arr[::-1, :, :].astype(np.float64)


# ---------------------------------------------------------------------------
# Radiance RGBE
# ---------------------------------------------------------------------------

def _rgbe_from_float(rgb: np.ndarray) -> np.ndarray:
    """Vectorized float -> RGBE encode (classic shared-exponent scheme)."""
    v = rgb.max(axis=-1)
    out = np.zeros(rgb.shape[:-1] + (4,), dtype=np.uint8)
    nz = v >= 1e-32
    if not np.any(nz):
        return out
    mant, expo = np.frexp(v[nz])
    scale = mant * 256.0 / v[nz]
    out_nz = np.empty(scale.shape + (4,), dtype=np.uint8)
    for ch in range(3):
        # round to nearest: keeps the per-channel error within 1/128
        q = np.floor(rgb[nz][..., ch] * scale + 0.5)
        out_nz[..., ch] = np.minimum(q, 255.0).astype(np.uint8)
    out_nz[..., 3] = (expo + 128).astype(np.uint8)
    out[nz] = out_nz
    return out


def _float_from_rgbe(rgbe: np.ndarray) -> np.ndarray:
    expo = rgbe[..., 3].astype(np.int32)
    scale = np.where(expo == 0, 0.0, np.ldexp(1.0, expo - 136))
    return rgbe[..., :3].astype(np.float64) * scale[..., None]


def _encode_rgbe(data: np.ndarray) -> bytes:
    h, w = data.shape[:2]
    out = bytearray()
    out += b"#?RADIANCE\n"
    out += b"FORMAT=32-bit_rle_rgbe\n\n"
    out += f"-Y {h} +X {w}\n".encode("ascii")
    rgbe = _rgbe_from_float(np.asarray(data, dtype=np.float64))
    if 8 <= w <= 32767:
        for row in rgbe:
            out += struct.pack(">BBH", 2, 2, w)
            for ch in range(4):
                out += _rle_encode(row[:, ch])
    else:
        out += rgbe.tobytes()
    return bytes(out)


def _rle_encode(vals: np.ndarray) -> bytes:
    """New-style Radiance RLE for one component stream."""
    out = bytearray()
    n = len(vals)
    i = 0
    while i < n:
        # find a run of >= 4 equal bytes
        run_start = i
        run_len = 1
        while run_start + run_len < n and run_len < 127 and vals[run_start + run_len] == vals[run_start]:
            run_len += 1
        if run_len >= 4:
            out.append(128 + run_len)
            out.append(int(vals[run_start]))
            i += run_len
        else:
            # literal segment up to the next run of >= 4 or 128 bytes
            lit_end = i + 1
            while lit_end < n and lit_end - i < 128:
                nxt = lit_end
                cnt = 1
                while nxt + cnt < n and cnt < 4 and vals[nxt + cnt] == vals[nxt]:
                    cnt += 1
                if cnt >= 4:
                    break
                lit_end += 1
            out.append(lit_end - i)
            out += vals[i:lit_end].tobytes()
            i = lit_end
    return bytes(out)


def _decode_rgbe(payload: bytes):
    # header lines end at the first blank line, then one resolution line
    pos = payload.find(b"\n\n")
    if pos < 0:
        raise MalformedHeaderError("Radiance header has no terminating blank line")
    header = payload[:pos].decode("ascii", errors="replace")
    if "FORMAT=32-bit_rle_rgbe" not in header and "FORMAT=32-bit_rle_xyze" in header:
        raise UnsupportedFormatError("XYZE Radiance files are not supported")
    body = payload[pos + 2 :]
    nl = body.find(b"\n")
    if nl < 0:
        raise MalformedHeaderError("missing Radiance resolution line")
    res = body[:nl].decode("ascii", errors="replace").split()
    if len(res) != 4 or res[0] != "-Y" or res[2] != "+X":
        raise MalformedHeaderError(f"unsupported Radiance resolution line {res!r}")
    try:
        h, w = int(res[1]), int(res[3])
    except ValueError as exc:
        raise MalformedHeaderError(f"bad Radiance dimensions: {exc}") from exc
    stream = body[nl + 1 :]
    rgbe = np.zeros((h, w, 4), dtype=np.uint8)
    offset = 0
    for y in range(h):
        offset = _decode_scanline(stream, offset, rgbe[y], w)
    return w, h, _float_from_rgbe(rgbe)


def _decode_scanline(stream: bytes, offset: int, row: np.ndarray, w: int) -> int:
    if offset + 4 > len(stream):
        raise TruncatedPayloadError("Radiance payload ended mid-scanline")
    b0, b1, b2, b3 = stream[offset : offset + 4]
    if b0 == 2 and b1 == 2 and (b2 << 8) + b3 == w and w >= 8:
        offset += 4
        for ch in range(4):
            x = 0
            while x < w:
                if offset >= len(stream):
                    raise TruncatedPayloadError("Radiance RLE stream truncated")
                code = stream[offset]
                offset += 1
                if code > 128:  # run
                    count = code - 128
                    if offset >= len(stream) or x + count > w:
                        raise TruncatedPayloadError("bad Radiance RLE run")
                    row[x : x + count, ch] = stream[offset]
                    offset += 1
                else:  # literal
                    count = code
                    if count == 0 or x + count > w or offset + count > len(stream):
                        raise TruncatedPayloadError("bad Radiance RLE literal")
                    row[x : x + count, ch] = np.frombuffer(
                        stream[offset : offset + count], dtype=np.uint8
                    )
                    offset += count
                x += count
        return offset
    # flat (or old-style) scanline: w raw RGBE pixels with repeat codes
    x = 0
    while x < w:
        if offset + 4 > len(stream):
            raise TruncatedPayloadError("Radiance payload ended mid-row")
        px = stream[offset : offset + 4]
        offset += 4
        if px[0] == 1 and px[1] == 1 and px[2] == 1 and x > 0:
            count = px[3]
            if x + count > w:
                raise TruncatedPayloadError("bad old-style Radiance repeat")
            row[x : x + count] = row[x - 1]
            x += count
        else:
            row[x] = np.frombuffer(px, dtype=np.uint8)
            x += 1
    return offset
