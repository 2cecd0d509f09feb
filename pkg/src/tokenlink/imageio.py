"""Image loading and saving.

Binary PPM (P6, maxval 255) is handled natively and bit-exactly.  Other
formats, PNG in particular, go through Pillow.  Samples are floats in [0, 1]
(8-bit value / 255).
"""

from __future__ import annotations

from os import PathLike
from pathlib import Path

import numpy as np

from .errors import ImageFormatError


def _read_token(raw: bytes, pos: int) -> tuple[bytes, int]:
    n = len(raw)
    while pos < n:
        ch = raw[pos : pos + 1]
        if ch == b"#":
            while pos < n and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not raw[pos : pos + 1].isspace() and raw[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("unexpected end of PPM header", start)
    return raw[start:pos], pos


def decode_ppm(raw: bytes) -> np.ndarray:
    if raw[:2] != b"P6":
        raise ImageFormatError("not a binary PPM (missing P6 magic)", 0)
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        tok, new_pos = _read_token(raw, pos)
        if not tok.isdigit():
            raise ImageFormatError(f"invalid PPM {name} {tok!r}", pos)
        fields.append(int(tok))
        pos = new_pos
    width, height, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"unsupported PPM maxval {maxval}", pos)
    if width <= 0 or height <= 0:
        raise ImageFormatError("PPM dimensions must be positive", pos)
    if pos >= len(raw) or not raw[pos : pos + 1].isspace():
        raise ImageFormatError("missing whitespace after PPM header", pos)
    pos += 1
    need = width * height * 3
    body = raw[pos : pos + need]
    if len(body) != need:
        raise ImageFormatError(f"PPM pixel data truncated: need {need} bytes, have {len(body)}", pos + len(body))
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3).astype(np.float64) / 255.0


def encode_ppm(img: np.ndarray) -> bytes:
    q = to_uint8(img)
    if q.ndim == 2:
        q = np.repeat(q[:, :, None], 3, axis=2)
    h, w, _ = q.shape
    return b"P6\n%d %d\n255\n" % (w, h) + q.tobytes()


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def load_image(path: str | PathLike) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"P6":
        try:
            return decode_ppm(raw)
        except ImageFormatError as exc:
            err = ImageFormatError(f"{path}: {exc}")
            err.offset = exc.offset
            raise err from None
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: unrecognised image format") from exc
    return arr / 255.0


def save_image(img: np.ndarray, path: str | PathLike) -> None:
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm"):
        path.write_bytes(encode_ppm(img))
        return
    from PIL import Image

    Image.fromarray(to_uint8(img)).save(path)
