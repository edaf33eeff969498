"""Binary PGM (P5) and PPM (P6) readers/writers, maxval 255."""

from __future__ import annotations

import numpy as np

from ..errors import FormatError, InvalidArgumentError


def save_image(path, image: np.ndarray) -> None:
    """Write (1,H,W) as P5 or (3,H,W) as P6; pixel byte = round(value*255)."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] not in (1, 3):
        raise InvalidArgumentError(f"expected (1|3)xHxW image, got shape {image.shape}")
    c, h, w = image.shape
    magic = b"P5" if c == 1 else b"P6"
    payload = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    # interleave channels per pixel for PPM
    payload = payload[0] if c == 1 else payload.transpose(1, 2, 0)
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h))
        f.write(payload.tobytes())


def _read_tokens(data: bytes, n: int) -> tuple[list[bytes], int]:
    """Read n whitespace-separated header tokens, skipping # comments."""
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < n:
        if i >= len(data):
            raise FormatError("truncated header")
        ch = data[i : i + 1]
        if ch in b" \t\r\n":
            i += 1
        elif ch == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        else:
            j = i
            while j < len(data) and data[j : j + 1] not in b" \t\r\n":
                j += 1
            tokens.append(data[i:j])
            i = j
    return tokens, i + 1  # consume the single whitespace after the last token


def load_image(path) -> np.ndarray:
    """Read P5/P6 back to a (C,H,W) float32 array via value = byte / 255."""
    with open(path, "rb") as f:
        data = f.read()
    tokens, offset = _read_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported magic {magic!r}")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise FormatError(f"malformed header: {e}") from None
    if maxval != 255:
        raise FormatError(f"only maxval 255 supported, got {maxval}")
    channels = 1 if magic == b"P5" else 3
    need = w * h * channels
    raw = data[offset : offset + need]
    if len(raw) != need:
        raise FormatError(f"truncated payload: expected {need} bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype=np.uint8).astype(np.float32) / 255.0
    if channels == 1:
        return arr.reshape(1, h, w)
    return np.ascontiguousarray(arr.reshape(h, w, 3).transpose(2, 0, 1))
