"""Little-endian binary formats for tensors, decompositions and layer checkpoints.

Tensor record::

    b"OLAQ" | version u32 = 1 | dtype u8 (0 float32, 1 quantized) | ndim u8 | dims u64 * ndim
    float32:   payload f32 * n
    quantized: bit_width u8 | scale_exp i32 | payload i16 * n

Container (decompositions, checkpoints)::

    b"OLQC" | version u32 = 1 | count u32 | (name_len u16 | utf-8 name | tensor record) * count
    | meta_len u32 | utf-8 JSON meta | has_mask u8 [| mode u8 | count u64 | indices u64 * count]
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from typing import BinaryIO, Union

import numpy as np

from .bfp import QuantizedBlock, as_float_tensor, dequantize
from .errors import FormatError
from .ilinear import LayerConfig, LinearLayer
from .outlier import Approach1Decomposition, Approach2Decomposition, OutlierMask

TENSOR_MAGIC = b"OLAQ"
CONTAINER_MAGIC = b"OLQC"
VERSION = 1
DTYPE_FLOAT32 = 0
DTYPE_QUANTIZED = 1
MASK_MODES = {"element": 0, "column": 1}

Tensor = Union[np.ndarray, QuantizedBlock]


def _read(f: BinaryIO, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError("unexpected end of file")
    return buf


def write_tensor(f: BinaryIO, t: Tensor) -> None:
    if isinstance(t, QuantizedBlock):
        if not t.per_tensor:
            raise FormatError("per-row quantized blocks have no single scale to serialize")
        dtype, shape = DTYPE_QUANTIZED, t.shape
    else:
        t = as_float_tensor(t)
        dtype, shape = DTYPE_FLOAT32, t.shape
    f.write(TENSOR_MAGIC)
    f.write(struct.pack("<IBB", VERSION, dtype, len(shape)))
    f.write(struct.pack(f"<{len(shape)}Q", *shape))
    if dtype == DTYPE_QUANTIZED:
        f.write(struct.pack("<Bi", t.bit_width, int(t.scale_exp)))
        f.write(t.q.astype("<i2").tobytes())
    else:
        f.write(t.astype("<f4").tobytes())


def read_tensor(f: BinaryIO) -> Tensor:
    if _read(f, 4) != TENSOR_MAGIC:
        raise FormatError("bad tensor magic")
    version, dtype, ndim = struct.unpack("<IBB", _read(f, 6))
    if version != VERSION:
        raise FormatError(f"unsupported tensor version {version}")
    shape = struct.unpack(f"<{ndim}Q", _read(f, 8 * ndim))
    n = int(np.prod(shape, dtype=np.int64))
    if dtype == DTYPE_QUANTIZED:
        bits, exp = struct.unpack("<Bi", _read(f, 5))
        q = np.frombuffer(_read(f, 2 * n), dtype="<i2").astype(np.int16).reshape(shape)
        return QuantizedBlock(q, bits, exp)
    if dtype == DTYPE_FLOAT32:
        return np.frombuffer(_read(f, 4 * n), dtype="<f4").astype(np.float32).reshape(shape)
    raise FormatError(f"unknown dtype code {dtype}")


def save_tensor(path, t: Tensor) -> None:
    with open(path, "wb") as f:
        write_tensor(f, t)


def load_tensor(path) -> Tensor:
    with open(path, "rb") as f:
        t = read_tensor(f)
        if f.read(1):
            raise FormatError("trailing bytes after tensor record")
    return t


def load_float(path) -> np.ndarray:
    """Load a tensor file as float32, dequantizing quantized blocks."""
    t = load_tensor(path)
    return dequantize(t) if isinstance(t, QuantizedBlock) else t


def write_container(f: BinaryIO, tensors: dict, meta: dict | None = None, mask: OutlierMask | None = None) -> None:
    f.write(CONTAINER_MAGIC)
    f.write(struct.pack("<II", VERSION, len(tensors)))
    for name, t in tensors.items():
        raw = name.encode()
        f.write(struct.pack("<H", len(raw)) + raw)
        write_tensor(f, t)
    blob = json.dumps(meta or {}, sort_keys=True).encode()
    f.write(struct.pack("<I", len(blob)) + blob)
    if mask is None:
        f.write(b"\x00")
    else:
        f.write(struct.pack("<BBQ", 1, MASK_MODES[mask.mode], mask.count))
        f.write(np.asarray(mask.indices, dtype="<u8").tobytes())


def read_container(f: BinaryIO) -> tuple[dict, dict, tuple | None]:
    """Returns ``(tensors, meta, mask)`` with ``mask = (mode, indices)`` or None."""
    if _read(f, 4) != CONTAINER_MAGIC:
        raise FormatError("bad container magic")
    version, count = struct.unpack("<II", _read(f, 8))
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", _read(f, 2))
        name = _read(f, nlen).decode()
        tensors[name] = read_tensor(f)
    (mlen,) = struct.unpack("<I", _read(f, 4))
    try:
        meta = json.loads(_read(f, mlen).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt container metadata: {exc}") from None
    mask = None
    if _read(f, 1) == b"\x01":
        mode_code, n = struct.unpack("<BQ", _read(f, 9))
        modes = {v: k for k, v in MASK_MODES.items()}
        if mode_code not in modes:
            raise FormatError(f"unknown mask mode {mode_code}")
        idx = np.frombuffer(_read(f, 8 * n), dtype="<u8").astype(np.int64)
        mask = (modes[mode_code], idx)
    return tensors, meta, mask


def save_decomposition(path, d) -> None:
    if isinstance(d, Approach1Decomposition):
        tensors, approach = {"regular": d.regular, "outlier": d.outlier}, 1
    elif isinstance(d, Approach2Decomposition):
        tensors, approach = {"merged": d.merged, "sp2": d.sp2}, 2
    else:
        raise TypeError(f"not a decomposition: {type(d).__name__}")
    with open(path, "wb") as f:
        write_container(f, tensors, {"approach": approach, "gamma": d.gamma}, d.mask)


def load_decomposition(path):
    with open(path, "rb") as f:
        tensors, meta, mask = read_container(f)
    if mask is None:
        raise FormatError("decomposition file has no mask section")
    first = next(iter(tensors.values()))
    om = OutlierMask(mask[0], mask[1], tuple(first.shape))
    if meta.get("approach") == 1:
        return Approach1Decomposition(tensors["regular"], tensors["outlier"], om, float(meta["gamma"]))
    if meta.get("approach") == 2:
        return Approach2Decomposition(tensors["merged"], tensors["sp2"], om, float(meta["gamma"]))
    raise FormatError(f"unknown approach {meta.get('approach')!r}")


def save_layer(path, layer) -> None:
    cfg = asdict(layer.config)
    cfg["mode"] = layer.config.mode.value
    with open(path, "wb") as f:
        write_container(f, {"weights": layer.weights, "bias": layer.bias}, {"config": cfg})


def load_layer(path):
    with open(path, "rb") as f:
        tensors, meta, _ = read_container(f)
    try:
        return LinearLayer(tensors["weights"], tensors["bias"], LayerConfig(**meta["config"]))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"not a layer checkpoint: missing {exc}") from None
