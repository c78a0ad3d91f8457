"""Outlier detection and the two outlier-aware activation decompositions.

Approach 1 isolates whole feature columns whose magnitude exceeds ``gamma``
and quantizes them in a separate 12-bit block.  Approach 2 keeps everything
in 8 bits: each outlier ``x`` is split into a coarse part that is a multiple
of ``2*gamma`` and a residual in ``[-gamma, gamma)``; the residual is merged
back into the regular block, the coarse part gets its own scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Literal, Union

import numpy as np

from .bfp import QuantizedBlock, as_float_tensor, dequantize, quantize_block
from .errors import ConfigError, ShapeError

DEFAULT_GAMMA = 5.0

MaskMode = Literal["element", "column"]


@dataclass(frozen=True, eq=False)
class OutlierMask:
    mode: MaskMode
    indices: np.ndarray
    shape: tuple

    @property
    def total(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def count(self) -> int:
        return len(self.indices)

    @property
    def fraction(self) -> float:
        """Share of source elements covered by the mask."""
        if self.total == 0:
            return 0.0
        if self.mode == "column":
            return self.count / self.shape[1]
        return self.count / self.total

    def dense(self) -> np.ndarray:
        """Boolean array of the source shape, True at outlier elements."""
        out = np.zeros(self.shape, dtype=bool)
        if self.mode == "column":
            out[:, self.indices] = True
        else:
            out.reshape(-1)[self.indices] = True
        return out

    def column_flags(self) -> np.ndarray:
        if self.mode != "column":
            raise ConfigError("column flags are only defined for a per-column mask")
        flags = np.zeros(self.shape[1], dtype=bool)
        flags[self.indices] = True
        return flags


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not gamma > 0 or not np.isfinite(gamma):
        raise ConfigError(f"gamma must be a positive finite number, got {gamma}")
    return gamma


def detect_outliers(x, gamma: float = DEFAULT_GAMMA, mode: MaskMode = "element") -> OutlierMask:
    """Find elements (or columns) with magnitude strictly above ``gamma``."""
    gamma = _check_gamma(gamma)
    arr = as_float_tensor(x)
    if mode == "element":
        idx = np.flatnonzero(np.abs(arr) > gamma)
    elif mode == "column":
        if arr.ndim != 2:
            raise ShapeError(f"per-column detection needs a 2-D tensor, got shape {arr.shape}")
        if arr.shape[0] == 0:
            idx = np.zeros(0, dtype=np.int64)
        else:
            idx = np.flatnonzero(np.max(np.abs(arr), axis=0) > gamma)
    else:
        raise ConfigError(f"unknown mask mode {mode!r}")
    return OutlierMask(mode, idx.astype(np.int64), arr.shape)


def split_outliers(x, gamma: float = DEFAULT_GAMMA) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised outlier split: ``sp2 = floor((x + g) / 2g) * 2g``, ``sp1 = x - sp2``.

    Arithmetic is done in float64.  Quotients that land within rounding
    distance of an integer are resolved with exact rational arithmetic.  When
    ``2*gamma`` is a dyadic rational (e.g. ``gamma = 5``) the split is exact;
    otherwise ``sp1`` is clipped into ``[-gamma, gamma)`` and the sum is off by
    at most the rounding of ``sp2``.
    """
    gamma = _check_gamma(gamma)
    v = np.asarray(x, dtype=np.float64)
    width = 2.0 * gamma
    k = np.floor((v + gamma) / width)
    sp1 = v - k * width
    slack = 4 * np.spacing(np.maximum(np.abs(v), gamma))
    near = (np.abs(sp1 + gamma) <= slack) | (np.abs(sp1 - gamma) <= slack) | (sp1 < -gamma) | (sp1 >= gamma)
    if np.any(near):
        k = np.array(k, dtype=np.float64, copy=True)
        g = Fraction(gamma)
        flat_k, flat_v = k.reshape(-1), v.reshape(-1)
        for i in np.flatnonzero(near.reshape(-1)):
            flat_k[i] = float((Fraction(float(flat_v[i])) + g) // (2 * g))
    sp2 = k * width
    sp1 = np.clip(v - sp2, -gamma, np.nextafter(gamma, -np.inf))
    return sp1, sp2


def split_outlier_value(x: float, gamma: float = DEFAULT_GAMMA) -> tuple[float, float]:
    sp1, sp2 = split_outliers(x, gamma)
    return float(sp1), float(sp2)


@dataclass(frozen=True, eq=False)
class Approach1Decomposition:
    regular: QuantizedBlock
    outlier: QuantizedBlock
    mask: OutlierMask
    gamma: float


@dataclass(frozen=True, eq=False)
class Approach2Decomposition:
    merged: QuantizedBlock
    sp2: QuantizedBlock
    mask: OutlierMask
    gamma: float


Decomposition = Union[Approach1Decomposition, Approach2Decomposition]


def decompose_approach1(x, gamma: float = DEFAULT_GAMMA, outlier_bits: int = 12) -> Approach1Decomposition:
    """Split a 2-D activation into an 8-bit regular block and a 12-bit outlier-column block."""
    arr = as_float_tensor(x)
    mask = detect_outliers(arr, gamma, mode="column")
    cols = mask.column_flags()
    regular = np.where(cols[None, :], np.float32(0), arr)
    outlier = np.where(cols[None, :], arr, np.float32(0))
    return Approach1Decomposition(
        regular=quantize_block(regular, 8),
        outlier=quantize_block(outlier, outlier_bits),
        mask=mask,
        gamma=float(gamma),
    )


def approach2_parts(x, gamma: float = DEFAULT_GAMMA) -> tuple[np.ndarray, np.ndarray, OutlierMask]:
    """Real-valued merged tensor (regular values plus residuals) and coarse tensor, before quantization."""
    arr = as_float_tensor(x)
    mask = detect_outliers(arr, gamma, mode="element")
    dense = mask.dense()
    sp1, sp2 = split_outliers(arr, gamma)
    merged = np.where(dense, sp1, arr).astype(np.float32)
    coarse = np.where(dense, sp2, 0.0).astype(np.float32)
    return merged, coarse, mask


def decompose_approach2(x, gamma: float = DEFAULT_GAMMA) -> Approach2Decomposition:
    merged, coarse, mask = approach2_parts(x, gamma)
    return Approach2Decomposition(
        merged=quantize_block(merged, 8),
        sp2=quantize_block(coarse, 8),
        mask=mask,
        gamma=float(gamma),
    )


def reconstruct(d: Decomposition) -> np.ndarray:
    if isinstance(d, Approach1Decomposition):
        return dequantize(d.regular) + dequantize(d.outlier)
    if isinstance(d, Approach2Decomposition):
        return dequantize(d.merged) + dequantize(d.sp2)
    raise TypeError(f"not a decomposition: {type(d).__name__}")
