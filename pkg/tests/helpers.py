"""Independent scalar oracles shared by the test modules."""

from fractions import Fraction

import numpy as np


def ref_quantize(values, bits):
    """Reference quantizer: exponent by repeated doubling, exact rational division, Python round()."""
    vals = [float(np.float32(v)) for v in np.ravel(values)]
    m = max((abs(v) for v in vals), default=0.0)
    if m == 0:
        return 0, [0] * len(vals)
    e_max = 0
    while 2.0 ** e_max > m:
        e_max -= 1
    while 2.0 ** (e_max + 1) <= m:
        e_max += 1
    exp = e_max - bits + 2
    lim = 2 ** (bits - 1) - 1
    q = [max(-lim, min(lim, round(Fraction(v) / Fraction(2) ** exp))) for v in vals]
    return exp, q


def ulp32(x):
    return np.spacing(np.abs(np.asarray(x, dtype=np.float32))).astype(np.float64)


def finite_difference_check(layer, x, target, h=0.5):
    """Central differences of L = 0.5 |y - t|^2 (exact for a quadratic in each parameter)."""

    def loss():
        y, _ = layer.forward(x)
        return 0.5 * float(np.sum((y.astype(np.float64) - target) ** 2))

    y, cache = layer.forward(x)
    res = layer.backward(cache, y - target)
    num_w = np.zeros(layer.weights.shape)
    for idx in np.ndindex(*layer.weights.shape):
        old = layer.weights[idx]
        layer.weights[idx] = old + h
        up = loss()
        layer.weights[idx] = old - h
        down = loss()
        layer.weights[idx] = old
        num_w[idx] = (up - down) / (2 * h)
    num_b = np.zeros(layer.bias.shape)
    for j in range(len(layer.bias)):
        old = layer.bias[j]
        layer.bias[j] = old + h
        up = loss()
        layer.bias[j] = old - h
        down = loss()
        layer.bias[j] = old
        num_b[j] = (up - down) / (2 * h)
    num_x = np.zeros(x.shape)
    for idx in np.ndindex(*x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        yp, _ = layer.forward(xp)
        ym, _ = layer.forward(xm)
        num_x[idx] = (0.5 * np.sum((yp.astype(np.float64) - target) ** 2)
                      - 0.5 * np.sum((ym.astype(np.float64) - target) ** 2)) / (2 * h)

    def rel(a, b):
        return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-30)

    return max(rel(res.grad_weights, num_w), rel(res.grad_bias, num_b), rel(res.grad_input, num_x))


def stochastic_round(x, step, rng):
    """Unbiased rounding onto a grid: E[x_hat] = x."""
    lo = np.floor(x / step)
    return (lo + (rng.random(x.shape) < x / step - lo)) * step


def ratio_se(x, x_hat):
    """Delta-method standard error of V(x) / V(x_hat)."""
    a, b = x.var(), x_hat.var()
    psi = ((x - x.mean()) ** 2 - a) / b - a * ((x_hat - x_hat.mean()) ** 2 - b) / b ** 2
    return psi.std() / np.sqrt(x.size)


def cosine(a, b):
    a, b = np.ravel(a).astype(np.float64), np.ravel(b).astype(np.float64)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
