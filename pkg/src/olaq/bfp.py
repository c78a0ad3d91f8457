"""Block floating-point (dynamic fixed-point) tensors.

A real tensor ``x`` is mapped to integers ``q`` sharing one power-of-two
scale ``2**e``.  The exponent is derived from the largest magnitude in the
block, ``e = floor(log2(max|x|)) - b + 2``, so the block maximum lands in
``[2**(b-2), 2**(b-1))`` before rounding and the full signed range is used.

Rounding is round-to-nearest, ties-to-even (``np.rint``), and the result is
clamped symmetrically to ``+-(2**(b-1) - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigError, InvalidInput

SUPPORTED_BITS = (8, 12, 16)

ScaleExp = Union[int, np.ndarray]


def qmax(bits: int) -> int:
    """Largest representable magnitude for a symmetric ``bits``-wide integer."""
    return (1 << (bits - 1)) - 1


def check_bits(bits: int) -> int:
    if bits not in SUPPORTED_BITS:
        raise ConfigError(f"unsupported bit-width {bits!r}; expected one of {SUPPORTED_BITS}")
    return int(bits)


def as_float_tensor(x, name: str = "x") -> np.ndarray:
    """Coerce to a C-contiguous float32 array, rejecting NaN/Inf."""
    arr = np.asarray(x, dtype=np.float32, order="C")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class QuantizedBlock:
    """Integer tensor ``q`` with scale ``2**scale_exp``.

    ``scale_exp`` is a Python int for the default per-tensor granularity, or
    an integer array broadcastable against ``q`` in per-row mode.
    """

    q: np.ndarray
    bit_width: int
    scale_exp: ScaleExp

    def __post_init__(self):
        check_bits(self.bit_width)
        if self.q.dtype != np.int16:
            object.__setattr__(self, "q", np.asarray(self.q).astype(np.int16))
        if np.any(np.abs(self.q.astype(np.int32)) > qmax(self.bit_width)):
            raise InvalidInput(f"integer payload exceeds the {self.bit_width}-bit range")

    @property
    def shape(self) -> tuple:
        return self.q.shape

    @property
    def per_tensor(self) -> bool:
        return np.ndim(self.scale_exp) == 0

    @property
    def T(self) -> "QuantizedBlock":
        if not self.per_tensor:
            return QuantizedBlock(self.q.T, self.bit_width, np.asarray(self.scale_exp).T)
        return QuantizedBlock(self.q.T, self.bit_width, self.scale_exp)

    def __repr__(self):
        return f"QuantizedBlock(shape={self.shape}, bits={self.bit_width}, scale_exp={self.scale_exp})"


def _block_exponent(xmax: np.ndarray, bits: int) -> np.ndarray:
    # frexp: xmax = m * 2**k with m in [0.5, 1), hence floor(log2(xmax)) == k - 1
    _, k = np.frexp(xmax)
    e = k.astype(np.int64) - 1 - bits + 2
    return np.where(xmax > 0, e, 0)


def quantize_block(x, bits: int = 8, per_row: bool = False) -> QuantizedBlock:
    """Quantize ``x`` to ``bits``-wide integers with a shared power-of-two scale.

    With ``per_row=True`` every row of a 2-D tensor gets its own exponent.
    """
    bits = check_bits(bits)
    arr = as_float_tensor(x).astype(np.float64)
    if per_row:
        if arr.ndim != 2:
            raise ConfigError("per-row quantization needs a 2-D tensor")
        xmax = np.max(np.abs(arr), axis=1, keepdims=True) if arr.size else np.zeros((arr.shape[0], 1))
        exp = _block_exponent(xmax, bits)
    else:
        xmax = np.max(np.abs(arr)) if arr.size else 0.0
        exp = int(_block_exponent(np.asarray(xmax), bits))
    # division by a power of two is exact in float64
    scaled = np.ldexp(arr, -np.asarray(exp))
    lim = qmax(bits)
    q = np.clip(np.rint(scaled), -lim, lim).astype(np.int16)
    return QuantizedBlock(q, bits, exp)


def dequantize(qb: QuantizedBlock) -> np.ndarray:
    """Return ``q * 2**scale_exp`` as float32 (exact for in-range scales)."""
    return np.ldexp(qb.q.astype(np.float32), np.asarray(qb.scale_exp, dtype=np.int32)).astype(np.float32)


def quantization_step(qb: QuantizedBlock):
    """The scale ``S = 2**scale_exp`` (array-valued in per-row mode)."""
    if qb.per_tensor:
        return float(np.ldexp(1.0, int(qb.scale_exp)))
    return np.ldexp(1.0, np.asarray(qb.scale_exp))


def clamped(x, qb: QuantizedBlock) -> np.ndarray:
    """Mask of elements whose rounded value hit the symmetric clamp."""
    arr = np.asarray(x, dtype=np.float64)
    scaled = np.ldexp(arr, -np.asarray(qb.scale_exp))
    return np.abs(np.rint(scaled)) > qmax(qb.bit_width)
