"""Informativeness statistics for low-precision samples.

All variances use the population convention (divide by ``n``), which makes
the law of total variance an identity rather than an approximation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .bfp import dequantize, quantization_step, quantize_block
from .errors import ConfigError, DegenerateVariance, EmptyComponent, InvalidInput


def as_samples(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size < 2:
        raise InvalidInput(f"{name} needs at least two samples")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite values")
    return arr


def sensitivity_ratio(x, x_hat) -> float:
    """``V(x) / V(x_hat)``: sensitivity of the perturbed sample relative to the original.

    For a location family the leverage is 1 and sensitivity is the reciprocal
    variance, so the leverage terms cancel.
    """
    x, x_hat = as_samples(x), as_samples(x_hat, "x_hat")
    if x.size != x_hat.size:
        raise InvalidInput("paired samples must have equal length")
    v_hat = x_hat.var()
    if v_hat == 0:
        raise DegenerateVariance("perturbed sample has zero variance")
    return float(x.var() / v_hat)


def hcr_lower_bound(x, x_hat) -> float:
    """Hammersley-Chapman-Robbins bound ``(E x - E x_hat)**2 / V(x_hat)``."""
    x, x_hat = as_samples(x), as_samples(x_hat, "x_hat")
    v_hat = x_hat.var()
    if v_hat == 0:
        raise DegenerateVariance("perturbed sample has zero variance")
    return float((x.mean() - x_hat.mean()) ** 2 / v_hat)


def chi2_estimate(p, q, bins: int = 64, debias: bool = False) -> float:
    """Histogram estimate of ``chi2(P || Q) = sum (p_i - q_i)**2 / q_i``.

    Both samples are binned on their shared range with add-one smoothing on
    the counts, so empty bins never divide by zero.  The plug-in estimate is
    biased upwards by roughly ``bins/len(p) + bins/len(q)``; ``debias=True``
    subtracts the first-order multinomial noise term and clips at zero.
    """
    p, q = as_samples(p, "p"), as_samples(q, "q")
    if int(bins) != bins or bins < 2:
        raise ConfigError("bins must be an integer >= 2")
    bins = int(bins)
    lo, hi = min(p.min(), q.min()), max(p.max(), q.max())
    if lo == hi:
        hi = lo + 1.0
    cp, _ = np.histogram(p, bins, (lo, hi))
    cq, _ = np.histogram(q, bins, (lo, hi))
    pi = (cp + 1.0) / (p.size + bins)
    qi = (cq + 1.0) / (q.size + bins)
    est = float(np.sum((pi - qi) ** 2 / qi))
    if debias:
        est = max(0.0, est - float(np.sum((pi / p.size + qi / q.size) / qi)))
    return est


@dataclass(frozen=True)
class MixtureDecomposition:
    p: float
    variance: float
    variance_low: float
    variance_high: float
    within: float
    between: float


def _split(x: np.ndarray, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    low, high = x[x <= gamma], x[x > gamma]
    if low.size < 2 or high.size < 2:
        raise EmptyComponent(f"split at {gamma} leaves {low.size} / {high.size} samples")
    return low, high


def mixture_variance_decomposition(x, gamma: float) -> MixtureDecomposition:
    """Law of total variance for the one-sided split ``x <= gamma`` / ``x > gamma``."""
    x = as_samples(x)
    low, high = _split(x, gamma)
    p = low.size / x.size
    v1, v2 = low.var(), high.var()
    within = p * v1 + (1 - p) * v2
    between = p * (1 - p) * (low.mean() - high.mean()) ** 2
    return MixtureDecomposition(float(p), float(x.var()), float(v1), float(v2), float(within), float(between))


def _grid_codes(x: np.ndarray, step: float, rng: np.random.Generator | None) -> np.ndarray:
    scaled = x / step
    if rng is not None:
        scaled = scaled + rng.uniform(-0.5, 0.5, size=x.shape)
    return np.rint(scaled).astype(np.int64)


def _tv_full_vs_mixture(full: np.ndarray, low: np.ndarray, high: np.ndarray) -> float:
    n, n1, n2 = full.size, low.size, high.size
    p = Fraction(n1, n)
    codes = np.concatenate([full, low, high])
    uniq, inv = np.unique(codes, return_inverse=True)
    cf = np.bincount(inv[:n], minlength=uniq.size)
    c1 = np.bincount(inv[n:n + n1], minlength=uniq.size)
    c2 = np.bincount(inv[n + n1:], minlength=uniq.size)
    tv = Fraction(0)
    for a, b, c in zip(cf.tolist(), c1.tolist(), c2.tolist()):
        tv += abs(Fraction(a, n) - (p * Fraction(b, n1) + (1 - p) * Fraction(c, n2)))
    return float(tv / 2)


def mixture_law_check(x, gamma: float, grid_step: float) -> float:
    """Total variation between the rounded sample and the p-weighted mixture of rounded components.

    Every component is rounded on the same deterministic grid, so the
    distance is exactly zero.
    """
    if not grid_step > 0:
        raise ConfigError("grid_step must be positive")
    x = as_samples(x)
    low, high = _split(x, gamma)
    return _tv_full_vs_mixture(_grid_codes(x, grid_step, None), _grid_codes(low, grid_step, None),
                               _grid_codes(high, grid_step, None))


def dithered_mixture_law_check(x, gamma: float, grid_step: float, rng: np.random.Generator) -> tuple[float, float]:
    """Like :func:`mixture_law_check` but with independent uniform dither per rounding.

    Returns ``(distance, se)``.  ``se`` is the null-hypothesis scale of the
    distance, ``0.5 * sum_i sd(D_i)``, where ``D_i`` is the difference of the
    two bin frequencies; under uniform dither a sample at fractional grid
    position ``f`` lands on the upper code with probability ``f``.
    """
    if not grid_step > 0:
        raise ConfigError("grid_step must be positive")
    x = as_samples(x)
    low, high = _split(x, gamma)
    dist = _tv_full_vs_mixture(_grid_codes(x, grid_step, rng), _grid_codes(low, grid_step, rng),
                               _grid_codes(high, grid_step, rng))
    scaled = x / grid_step
    base = np.floor(scaled).astype(np.int64)
    f = scaled - base
    bern = f * (1 - f)
    codes = np.concatenate([base, base + 1])
    uniq, inv = np.unique(codes, return_inverse=True)
    var = np.bincount(inv, weights=np.concatenate([bern, bern]), minlength=uniq.size)
    se = 0.5 * float(np.sum(np.sqrt(2.0 * var))) / x.size
    return dist, se


@dataclass(frozen=True)
class AnalysisReport:
    n: int
    bits: int
    gamma: float
    scale_exp: int
    sensitivity_ratio: float
    hcr_bound: float
    chi2_estimate: float
    variance_total: float
    variance_within: float
    variance_between: float
    p_mixture: float
    mixture_tv_distance: float
    outlier_fraction: float

    def as_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return "\n".join(f"{k} = {v}" for k, v in self.as_dict().items()) + "\n"


def analyze(x, gamma: float = 5.0, bins: int = 64, bits: int = 8) -> AnalysisReport:
    """Compare a tensor with its single-block ``bits``-wide quantization.

    Mixture fields are NaN when the one-sided split at ``gamma`` leaves a
    component with fewer than two samples.
    """
    values = as_samples(x)
    qb = quantize_block(values.astype(np.float32), bits)
    x_hat = dequantize(qb).astype(np.float64)
    try:
        sens = sensitivity_ratio(values, x_hat)
        hcr = hcr_lower_bound(values, x_hat)
    except DegenerateVariance:
        sens = hcr = float("nan")
    nan = float("nan")
    try:
        mix = mixture_variance_decomposition(values, gamma)
        tv = mixture_law_check(values, gamma, quantization_step(qb))
        total, within, between, p = mix.variance, mix.within, mix.between, mix.p
    except EmptyComponent:
        total, within, between, p, tv = float(values.var()), nan, nan, nan, nan
    return AnalysisReport(
        n=int(values.size),
        bits=bits,
        gamma=float(gamma),
        scale_exp=int(qb.scale_exp),
        sensitivity_ratio=sens,
        hcr_bound=hcr,
        chi2_estimate=chi2_estimate(values, x_hat, bins),
        variance_total=float(total),
        variance_within=float(within),
        variance_between=float(between),
        p_mixture=float(p),
        mixture_tv_distance=float(tv),
        outlier_fraction=float(np.mean(np.abs(values) > gamma)),
    )
