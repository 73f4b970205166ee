"""History-summing Caputo discretizations: midpoint, Grünwald–Letnikov, Diethelm, Gao (L1).

Every method walks the full history at each step, so the work is quadratic in
the number of steps. Each kernel is applied as one dot product per step so that
the wall time reflects that cost, and ``ops`` counts the multiply-adds.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import SampleSeries, check_alpha


@dataclass(frozen=True, eq=False)
class MethodOutput:
    series: SampleSeries
    cost: float
    ops: int

    @property
    def values(self) -> np.ndarray:
        return self.series.values


def _convolve_steps(w: np.ndarray, x: np.ndarray, start: int) -> tuple[np.ndarray, int]:
    """``out[n] = sum_{j=0}^{n-start} w[j] * x[n-j]`` for n >= start, one dot per step.

    ``x`` has shape (steps+1, C). Rows below ``start`` are zero.
    """
    nt = x.shape[0]
    out = np.zeros_like(x)
    wr = w[::-1].copy()
    ops = 0
    for n in range(start, nt):
        m = n - start + 1
        out[n] = wr[len(wr) - m:] @ x[start:n + 1]
        ops += m
    return out, ops * x.shape[1]


def _finish(f: SampleSeries, values: np.ndarray, t0: float, ops: int) -> MethodOutput:
    return MethodOutput(SampleSeries(f.grid, values), time.perf_counter() - t0, ops)


def midpoint_derivative(f: SampleSeries, alpha: float) -> MethodOutput:
    r"""Midpoint rule on the increments:

    .. math:: D_n = \frac{1}{\Gamma(1-\alpha)} \sum_{i=1}^n \frac{f_i - f_{i-1}}{(t_n - (i-\tfrac12)\Delta_t)^\alpha}

    The value at ``t_0`` is 0.
    """
    alpha = check_alpha(alpha)
    t0 = time.perf_counter()
    dt = f.grid.dt
    n = f.grid.steps
    w = ((np.arange(n) + 0.5) * dt) ** (-alpha) / math.gamma(1.0 - alpha)
    df = np.zeros_like(f.values)
    df[1:] = np.diff(f.values, axis=0)
    out, ops = _convolve_steps(w, df, 1)
    return _finish(f, out, t0, ops)


def gl_weights(alpha: float, n: int) -> np.ndarray:
    """``w_m = (-1)^m binom(alpha, m)`` by ``w_m = w_{m-1} (1 - (alpha+1)/m)``."""
    w = np.empty(n + 1)
    w[0] = 1.0
    m = np.arange(1, n + 1)
    w[1:] = np.cumprod(1.0 - (alpha + 1.0) / m)
    return w


def grunwald_letnikov(f: SampleSeries, alpha: float) -> MethodOutput:
    r"""Grünwald–Letnikov sum with the Caputo correction

    .. math:: D_n = \Delta_t^{-\alpha} \sum_{m=0}^n w_m f_{n-m} - \frac{t_n^{-\alpha} f_0}{\Gamma(1-\alpha)} .

    Undefined at ``t_0`` (the correction is singular); row 0 is filled with 0.
    """
    alpha = check_alpha(alpha)
    t0 = time.perf_counter()
    dt = f.grid.dt
    n = f.grid.steps
    w = gl_weights(alpha, n) * dt ** (-alpha)
    out, ops = _convolve_steps(w, f.values, 0)
    t = f.grid.times
    t[0] = np.inf
    out -= np.outer(t ** (-alpha) / math.gamma(1.0 - alpha), f.values[0])
    out[0] = 0.0
    return _finish(f, out, t0, ops)


def diethelm_weights(alpha: float, n: int) -> np.ndarray:
    """Product-trapezoid weights ``a_{m,n}`` for m = 0..n (unscaled)."""
    a = np.empty(n + 1)
    a[0] = 1.0
    if n == 0:
        return a
    m = np.arange(1, n, dtype=float)
    p = 1.0 - alpha
    a[1:n] = (m + 1) ** p - 2 * m**p + (m - 1) ** p
    a[n] = p * n ** (-alpha) - n**p + (n - 1.0) ** p
    return a


def diethelm_trapezoidal(f: SampleSeries, alpha: float, f0_derivs: Sequence[float]) -> MethodOutput:
    r"""Diethelm's product-trapezoid scheme applied to ``f - T[f]``, where ``T``
    is the Taylor polynomial at 0 of order ``ceil(alpha) - 1`` (just ``f(0)`` here).

    .. math:: D_n = \frac{\Delta_t^{-\alpha}}{\Gamma(2-\alpha)} \sum_{m=0}^n a_{m,n} (f_{n-m} - f(0))
    """
    alpha = check_alpha(alpha)
    f0 = np.atleast_1d(np.asarray(f0_derivs, dtype=float))
    if f0.shape[0] != math.ceil(alpha):
        raise ValueError(f"expected {math.ceil(alpha)} initial derivative(s), got {f0.shape[0]}")
    t0 = time.perf_counter()
    dt = f.grid.dt
    nt = f.grid.steps
    g = f.values - f0[0]
    scale = dt ** (-alpha) / math.gamma(2.0 - alpha)
    out = np.zeros_like(g)
    ops = 0
    # the last weight depends on n, so the kernel is not a plain convolution
    p = 1.0 - alpha
    m = np.arange(1, nt + 1, dtype=float)
    interior = (m + 1) ** p - 2 * m**p + (m - 1) ** p
    wr = np.concatenate([interior[::-1], [1.0]])
    for n in range(1, nt + 1):
        boundary = p * n ** (-alpha) - n**p + (n - 1.0) ** p
        acc = wr[nt - n + 1:] @ g[1:n + 1] + boundary * g[0]
        out[n] = scale * acc
        ops += n + 1
    return _finish(f, out, t0, ops * g.shape[1])


def gao_weights(alpha: float, n: int) -> np.ndarray:
    """``a_i = (i+1)^{1-alpha} - i^{1-alpha}`` for i = 0..n."""
    i = np.arange(n + 1, dtype=float)
    return (i + 1) ** (1 - alpha) - i ** (1 - alpha)


def gao_weights_derivative(f: SampleSeries, alpha: float) -> MethodOutput:
    r"""L1 scheme

    .. math:: D_n = \frac{\Delta_t^{-\alpha}}{\Gamma(2-\alpha)}\Big[a_0 f_n - \sum_{i=1}^{n-1}(a_{n-i-1}-a_{n-i}) f_i - a_{n-1} f_0\Big]

    evaluated in the equivalent increment form
    :math:`\sum_{i=1}^n a_{n-i}(f_i - f_{i-1})`, which is exactly zero on constants.
    """
    alpha = check_alpha(alpha)
    t0 = time.perf_counter()
    nt = f.grid.steps
    scale = f.grid.dt ** (-alpha) / math.gamma(2.0 - alpha)
    df = np.zeros_like(f.values)
    df[1:] = np.diff(f.values, axis=0)
    out, ops = _convolve_steps(gao_weights(alpha, nt) * scale, df, 1)
    return _finish(f, out, t0, ops)
