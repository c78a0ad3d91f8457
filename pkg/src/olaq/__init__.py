"""Outlier-aware integer (INT8) training of linear layers."""

from .bfp import QuantizedBlock, dequantize, quantization_step, quantize_block
from .igemm import audit_gemms, igemm, tiled_matmul_approach1, tiled_matmul_approach2
from .ilinear import BackwardResult, LayerConfig, LinearLayer, Mode
from .outlier import (
    Approach1Decomposition,
    Approach2Decomposition,
    OutlierMask,
    decompose_approach1,
    decompose_approach2,
    detect_outliers,
    reconstruct,
    split_outlier_value,
)

__version__ = "0.1.0"
