"""Bit-exact tensor (NCT1) and checkpoint (NCK1) containers.

NCT1: magic "NCT1", u8 dtype (1=f32, 2=f64), u8 ndim, ndim little-endian u32
extents, raw little-endian row-major payload.

NCK1: magic "NCK1", little-endian u32 tensor count, then per tensor a u16
name length, the UTF-8 name, and a full NCT1 record.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import FormatError, InvalidArgumentError

_TENSOR_MAGIC = b"NCT1"
_CKPT_MAGIC = b"NCK1"
_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODE_FOR = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


def _encode_tensor(t: np.ndarray) -> bytes:
    t = np.ascontiguousarray(t)
    code = _CODE_FOR.get(t.dtype)
    if code is None:
        raise InvalidArgumentError(f"unsupported dtype {t.dtype}; use float32 or float64")
    if t.ndim > 255:
        raise InvalidArgumentError("too many dimensions")
    head = _TENSOR_MAGIC + struct.pack("<BB", code, t.ndim)
    head += struct.pack(f"<{t.ndim}I", *t.shape)
    return head + t.astype(_DTYPE_CODES[code], copy=False).tobytes()


def _decode_tensor(data: bytes, offset: int) -> tuple[np.ndarray, int]:
    if data[offset : offset + 4] != _TENSOR_MAGIC:
        raise FormatError("bad tensor magic")
    offset += 4
    code, ndim = struct.unpack_from("<BB", data, offset)
    offset += 2
    dtype = _DTYPE_CODES.get(code)
    if dtype is None:
        raise FormatError(f"bad dtype code {code}")
    shape = struct.unpack_from(f"<{ndim}I", data, offset)
    offset += 4 * ndim
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    nbytes = count * dtype.itemsize
    if offset + nbytes > len(data):
        raise FormatError("truncated tensor payload")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset).reshape(shape)
    return arr.astype(dtype.newbyteorder("=")), offset + nbytes


def save_tensor(path, tensor: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(_encode_tensor(np.asarray(tensor)))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    arr, end = _decode_tensor(data, 0)
    if end != len(data):
        raise FormatError(f"trailing bytes: file has {len(data)}, record ends at {end}")
    return arr


def save_checkpoint(path, params: dict[str, np.ndarray]) -> None:
    names = list(params)
    if len(set(names)) != len(names):
        raise InvalidArgumentError("duplicate parameter names")
    chunks = [_CKPT_MAGIC, struct.pack("<I", len(names))]
    for name in names:
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise InvalidArgumentError(f"name too long: {name!r}")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(_encode_tensor(np.asarray(params[name])))
    with open(path, "wb") as f:
        f.write(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != _CKPT_MAGIC:
        raise FormatError("bad checkpoint magic")
    (count,) = struct.unpack_from("<I", data, 4)
    offset = 8
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        if offset + 2 > len(data):
            raise FormatError("truncated checkpoint")
        (nlen,) = struct.unpack_from("<H", data, offset)
        offset += 2
        name = data[offset : offset + nlen].decode("utf-8")
        offset += nlen
        if name in params:
            raise FormatError(f"duplicate parameter name {name!r}")
        params[name], offset = _decode_tensor(data, offset)
    if offset != len(data):
        raise FormatError("trailing bytes after last tensor")
    return params
