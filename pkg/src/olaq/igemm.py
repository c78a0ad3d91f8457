"""Exact integer GEMM and the decomposition-aware tiled products.

Integer products are accumulated in int64, so every accumulator entry is the
exact dot product of its operands.  Rescaling by ``2**(ea + eb)`` happens once
per output element after accumulation.
"""

from __future__ import annotations

import contextlib
import contextvars
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bfp import QuantizedBlock, as_float_tensor, quantize_block
from .errors import ConfigError, MaskMismatch, ShapeError
from .outlier import Approach1Decomposition, Approach2Decomposition

_active_audits: contextvars.ContextVar[tuple] = contextvars.ContextVar("olaq_gemm_audits", default=())


class GemmAudit:
    """Counts GEMM invocations keyed by the wider operand bit-width."""

    def __init__(self):
        self.by_width: Counter = Counter()
        self.pairs: Counter = Counter()

    def record(self, a_bits: int, b_bits: int) -> None:
        self.by_width[max(a_bits, b_bits)] += 1
        self.pairs[(a_bits, b_bits)] += 1

    @property
    def total(self) -> int:
        return sum(self.by_width.values())

    def widest(self) -> int:
        return max(self.by_width, default=0)


@contextlib.contextmanager
def audit_gemms():
    """Collect operand widths of every :func:`igemm` call made inside the block."""
    audit = GemmAudit()
    token = _active_audits.set(_active_audits.get() + (audit,))
    try:
        yield audit
    finally:
        _active_audits.reset(token)


@dataclass(frozen=True, eq=False)
class AccumulatorMatrix:
    values: np.ndarray  # int64
    scale_exp: object

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def to_float(self) -> np.ndarray:
        """``values * 2**scale_exp`` rounded once to float32."""
        return np.ldexp(self.values.astype(np.float64), np.asarray(self.scale_exp)).astype(np.float32)


def _matmul_rows(a: np.ndarray, b: np.ndarray, tile_k: int | None) -> np.ndarray:
    if not tile_k or tile_k >= a.shape[1]:
        return a @ b
    acc = np.zeros((a.shape[0], b.shape[1]), dtype=np.int64)
    for start in range(0, a.shape[1], tile_k):
        acc += a[:, start:start + tile_k] @ b[start:start + tile_k]
    return acc


def igemm(a: QuantizedBlock, b: QuantizedBlock, workers: int = 1, tile_k: int | None = None) -> AccumulatorMatrix:
    """Exact ``a @ b`` over the integer payloads.

    ``workers`` splits the output rows across threads and ``tile_k`` splits
    the inner dimension; neither changes a single bit of the result.
    """
    if a.q.ndim != 2 or b.q.ndim != 2:
        raise ShapeError(f"igemm needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    for audit in _active_audits.get():
        audit.record(a.bit_width, b.bit_width)

    qa = a.q.astype(np.int64)
    qb = b.q.astype(np.int64)
    n = qa.shape[0]
    if workers == 1 or n < 2:
        acc = _matmul_rows(qa, qb, tile_k)
    else:
        bounds = np.linspace(0, n, min(workers, n) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda lo_hi: _matmul_rows(qa[lo_hi[0]:lo_hi[1]], qb, tile_k),
                                  zip(bounds[:-1], bounds[1:])))
        acc = np.concatenate(parts, axis=0)
    scale = np.asarray(a.scale_exp) + np.asarray(b.scale_exp)
    if scale.ndim == 0:
        scale = int(scale)
    return AccumulatorMatrix(acc, scale)


def _sum_scaled(*accs: AccumulatorMatrix) -> np.ndarray:
    # each term is exact in float64 (|acc| < 2**53); a single rounding to float32 at the end
    total = sum(np.ldexp(acc.values.astype(np.float64), np.asarray(acc.scale_exp)) for acc in accs)
    return np.asarray(total).astype(np.float32)


def tiled_matmul_approach2(d: Approach2Decomposition, w: QuantizedBlock, workers: int = 1) -> np.ndarray:
    """Two 8-bit GEMMs: merged block and coarse outlier block, each against ``w``."""
    if d.merged.bit_width != 8 or d.sp2.bit_width != 8 or w.bit_width != 8:
        raise ConfigError("approach-2 tiling expects 8-bit operands throughout")
    if d.merged.q.ndim != 2:
        raise ShapeError("approach-2 tiling needs a 2-D activation")
    if d.merged.shape[1] != w.shape[0]:
        raise ShapeError(f"inner dimensions differ: {d.merged.shape} @ {w.shape}")
    return _sum_scaled(igemm(d.merged, w, workers), igemm(d.sp2, w, workers))


def split_weights(w, mask, regular_bits: int = 8, outlier_bits: int = 12) -> tuple[QuantizedBlock, QuantizedBlock]:
    """Quantize the weight rows matching non-outlier / outlier activation columns separately."""
    arr = as_float_tensor(w, "w")
    if arr.ndim != 2 or arr.shape[0] != mask.shape[1]:
        raise ShapeError(f"weights {arr.shape} do not match activation columns {mask.shape}")
    rows = mask.column_flags()
    w_reg = np.where(rows[:, None], np.float32(0), arr)
    w_out = np.where(rows[:, None], arr, np.float32(0))
    return quantize_block(w_reg, regular_bits), quantize_block(w_out, outlier_bits)


def tiled_matmul_approach1(d: Approach1Decomposition, w_reg: QuantizedBlock, w_out: QuantizedBlock,
                           workers: int = 1) -> np.ndarray:
    """8-bit GEMM on regular columns plus a 12-bit GEMM on isolated outlier columns."""
    if d.regular.shape[1] != w_reg.shape[0] or w_reg.shape != w_out.shape:
        raise ShapeError(f"shape mismatch: activation {d.regular.shape}, weights {w_reg.shape} / {w_out.shape}")
    rows = d.mask.column_flags()
    if np.any(w_out.q[~rows] != 0):
        raise MaskMismatch("outlier weights are nonzero outside the outlier columns")
    acc_reg = igemm(d.regular, w_reg, workers)
    if not rows.any():
        return _sum_scaled(acc_reg)
    return _sum_scaled(acc_reg, igemm(d.outlier, w_out, workers))
