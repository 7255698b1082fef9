"""Image file codecs and resizing.

Images cross this boundary as float arrays (H, W, C) with C in {1, 3} and
intensities in [0, 1].  On disk they are 8-bit PNG (via Pillow) or binary
PPM (P6, written and parsed here so the package works with no codec
dependency at all).  Writes quantize by round-half-up (floor(x*255+0.5))
and go through a temp file plus rename so readers never observe a partial
file.  The codec is chosen by file extension.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

try:
    from PIL import Image as _PILImage
except ImportError:
    _PILImage = None

_PPM_EXTS = {".ppm", ".pnm"}


def png_available() -> bool:
    """True when the Pillow PNG codec can be used."""
    return _PILImage is not None


def quantize_u8(img: np.ndarray) -> np.ndarray:
    """[0,1] floats to uint8 by round-half-up, saturating."""
    return np.clip(np.floor(img * 255.0 + 0.5), 0.0, 255.0).astype(np.uint8)


def read_image(path) -> np.ndarray:
    """Decode a PNG or PPM file to float32 (H, W, C) in [0, 1].

    Raises OSError for unreadable files and ValueError for undecodable
    or unsupported content.
    """
    path = Path(path)
    ext = path.suffix.lower()
    if ext in _PPM_EXTS:
        return _read_ppm(path)
    if ext == ".png":
        if _PILImage is None:
            raise ValueError("PNG support needs the Pillow package; use .ppm instead")
        with _PILImage.open(path) as im:
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.uint8)[:, :, None]
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        return (arr.astype(np.float32) / 255.0)
    raise ValueError(f"unsupported image extension {ext!r} for {path}")


def write_image(path, img: np.ndarray) -> None:
    """Encode float [0,1] (H, W, C) to path; atomic, format by extension."""
    path = Path(path)
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"image must be (H, W, C) with C in {{1, 3}}, got {img.shape}")
    data = quantize_u8(img)
    ext = path.suffix.lower()
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    try:
        if ext in _PPM_EXTS:
            _write_ppm(tmp, data)
        elif ext == ".png":
            if _PILImage is None:
                raise ValueError("PNG support needs the Pillow package; use .ppm instead")
            mode = "L" if data.shape[2] == 1 else "RGB"
            pil = _PILImage.fromarray(data[:, :, 0] if mode == "L" else data, mode)
            pil.save(tmp, format="PNG")
        else:
            raise ValueError(f"unsupported image extension {ext!r} for {path}")
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _read_ppm(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(b"P6"):
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    # header: magic, width, height, maxval as whitespace/comment-separated tokens
    pos, tokens = 2, []
    while len(tokens) < 3:
        if pos >= len(raw):
            raise ValueError(f"{path}: truncated PPM header")
        ch = raw[pos:pos + 1]
        if ch == b"#":
            pos = raw.index(b"\n", pos) + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(raw) and not raw[end:end + 1].isspace():
                end += 1
            tokens.append(raw[pos:end])
            pos = end
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ValueError(f"{path}: malformed PPM header") from None
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 PPM supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    need = width * height * 3
    pixels = raw[pos:pos + need]
    if len(pixels) != need:
        raise ValueError(f"{path}: PPM pixel data truncated")
    arr = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3)
    return arr.astype(np.float32) / 255.0


def _write_ppm(path: Path, data: np.ndarray) -> None:
    if data.shape[2] == 1:
        data = np.repeat(data, 3, axis=2)  # PPM is inherently 3-channel
    header = f"P6\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resize; identity when sizes already match."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    if out_h < 2 or out_w < 2:
        raise ValueError(f"target extents must be >= 2, got {out_h}x{out_w}")
    if (h, w) == (out_h, out_w):
        return img.copy()
    ah = _axis_matrix(h, out_h)
    aw = _axis_matrix(w, out_w)
    work = img.astype(np.float64, copy=False)
    out = np.einsum("oh,hwc->owc", ah, work, optimize=True)
    out = np.einsum("pw,owc->opc", aw, out, optimize=True)
    return np.clip(out, 0.0, 1.0).astype(img.dtype, copy=False)


def _axis_matrix(n_in: int, n_out: int) -> np.ndarray:
    mat = np.zeros((n_out, n_in))
    for o in range(n_out):
        src = (o * (n_in - 1)) / (n_out - 1)
        i0 = min(int(np.floor(src)), n_in - 2)
        frac = src - i0
        mat[o, i0] = 1.0 - frac
        mat[o, i0 + 1] += frac
    return mat
