"""Integer linear layer: outlier-aware INT8 forward, all-INT8 backward.

Master weights and bias live in float32 and are quantized afresh on every
call.  The forward pass treats outliers according to ``mode``; the backward
pass always quantizes activations, weights and incoming gradients as single
8-bit blocks with outliers left untreated.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .bfp import as_float_tensor, check_bits, dequantize, quantize_block
from .errors import ConfigError, MissingCache, NonFinite, ShapeError
from .igemm import igemm, split_weights, tiled_matmul_approach1, tiled_matmul_approach2
from .outlier import DEFAULT_GAMMA, decompose_approach1, decompose_approach2


class Mode(str, enum.Enum):
    FULL_PRECISION = "full-precision"
    UNTREATED = "untreated"
    APPROACH1 = "approach1"
    APPROACH2 = "approach2"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, cls):
            return value
        aliases = {"1": cls.APPROACH1, "2": cls.APPROACH2, "fp32": cls.FULL_PRECISION, "fp": cls.FULL_PRECISION}
        key = str(value).strip().lower().replace("_", "-")
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown mode {value!r}") from None

    @property
    def integer(self) -> bool:
        return self is not Mode.FULL_PRECISION


@dataclass
class LayerConfig:
    mode: Mode = Mode.APPROACH2
    gamma: float = DEFAULT_GAMMA
    activation_bits: int = 8
    weight_bits: int = 8
    grad_bits: int = 8
    outlier_bits: int = 12

    def __post_init__(self):
        self.mode = Mode.parse(self.mode)
        for bits in (self.activation_bits, self.weight_bits, self.grad_bits, self.outlier_bits):
            check_bits(bits)
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if self.mode.integer and self.grad_bits != 8:
            raise ConfigError("integer modes keep every gradient GEMM operand at 8 bits")
        if self.mode is Mode.APPROACH2 and (self.activation_bits, self.weight_bits) != (8, 8):
            raise ConfigError("approach2 runs on 8-bit operands only")


@dataclass
class BackwardResult:
    grad_input: np.ndarray
    grad_weights: np.ndarray
    grad_bias: np.ndarray


@dataclass
class ForwardCache:
    x: np.ndarray
    mode: Mode


def integer_matmul(x, w, bits: int = 8) -> np.ndarray:
    """Single-block quantized ``x @ w``: both operands at ``bits``, exact accumulate."""
    return igemm(quantize_block(x, bits), quantize_block(w, bits)).to_float()


def integer_backward(x, w, grad_out, bits: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``x @ w`` w.r.t. ``x`` and ``w`` with every GEMM operand quantized at ``bits``."""
    g = quantize_block(grad_out, bits)
    wq = quantize_block(w, bits)
    xq = quantize_block(x, bits)
    grad_input = igemm(g, wq.T).to_float()
    grad_weights = igemm(xq.T, g).to_float()
    return grad_input, grad_weights


@dataclass
class LinearLayer:
    """One ``y = x @ W + b`` layer with ``W`` of shape ``(d_in, d_out)``."""

    weights: np.ndarray
    bias: np.ndarray
    config: LayerConfig = field(default_factory=LayerConfig)

    def __post_init__(self):
        self.weights = as_float_tensor(self.weights, "weights").copy()
        self.bias = as_float_tensor(self.bias, "bias").copy()
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ShapeError(f"weights {self.weights.shape} and bias {self.bias.shape} do not form a layer")

    @classmethod
    def init(cls, d_in: int, d_out: int, rng: np.random.Generator, config: LayerConfig | None = None):
        bound = 1.0 / np.sqrt(d_in)
        w = rng.uniform(-bound, bound, size=(d_in, d_out)).astype(np.float32)
        return cls(w, np.zeros(d_out, dtype=np.float32), config or LayerConfig())

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    def forward(self, x) -> tuple[np.ndarray, ForwardCache]:
        try:
            x = as_float_tensor(x)
        except ValueError as exc:
            raise NonFinite(str(exc)) from None
        if x.ndim != 2 or x.shape[1] != self.weights.shape[0]:
            raise ShapeError(f"input {x.shape} does not match layer {self.weights.shape}")
        cfg = self.config
        if cfg.mode is Mode.FULL_PRECISION:
            y = x @ self.weights
        elif cfg.mode is Mode.UNTREATED:
            y = igemm(quantize_block(x, cfg.activation_bits), quantize_block(self.weights, cfg.weight_bits)).to_float()
        elif cfg.mode is Mode.APPROACH2:
            y = tiled_matmul_approach2(decompose_approach2(x, cfg.gamma), quantize_block(self.weights, 8))
        else:
            d = decompose_approach1(x, cfg.gamma, cfg.outlier_bits)
            w_reg, w_out = split_weights(self.weights, d.mask, cfg.weight_bits, cfg.outlier_bits)
            y = tiled_matmul_approach1(d, w_reg, w_out)
        return (y + self.bias).astype(np.float32), ForwardCache(x, cfg.mode)

    def backward(self, cache: ForwardCache | None, grad_out) -> BackwardResult:
        if cache is None:
            raise MissingCache("backward called without a forward cache")
        g = as_float_tensor(grad_out, "grad_out")
        n, k = cache.x.shape[0], self.weights.shape[1]
        if g.shape != (n, k):
            raise ShapeError(f"grad_out {g.shape} does not match forward output {(n, k)}")
        if self.config.mode is Mode.FULL_PRECISION:
            grad_input = g @ self.weights.T
            grad_weights = cache.x.T @ g
        else:
            grad_input, grad_weights = integer_backward(cache.x, self.weights, g, self.config.grad_bits)
        return BackwardResult(grad_input, grad_weights, g.sum(axis=0, dtype=np.float32))

    def sgd_step(self, grads: BackwardResult, lr: float) -> "LinearLayer":
        """In-place update of the float32 master copy."""
        if lr < 0:
            raise ConfigError("learning rate must be non-negative")
        lr = np.float32(lr)
        self.weights -= lr * grads.grad_weights
        self.bias -= lr * grads.grad_bias
        return self
