"""Convergence and timing study for the fractional derivative of a polynomial.

Errors are L2 norms over ``[0, T]``. Discrete values are joined by straight
lines and compared with the exact derivative on a fine uniform grid; this keeps
coarse steps from being judged on their nodes alone.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import STUDY_POLYNOMIAL, Polynomial, SampleSeries, UniformGrid, caputo_polynomial
from .cumulative import MethodOutput, grunwald_letnikov, midpoint_derivative
from .prony import PronySeries, continuous_error_l2, prony_derivative

METHODS = ("mp", "mp-lagged", "gl", "prony")
DENSE_POINTS = 90001


@dataclass(frozen=True)
class PolyRow:
    alpha: float
    method: str
    terms: int | None
    dt: float            # 0 marks the continuous (dt -> 0) Prony limit
    error: float
    seconds: float
    ops: int


def lagged(values: np.ndarray) -> np.ndarray:
    """Shift by one step: the value reported at ``t_n`` is the one computed at ``t_{n-1}``."""
    out = np.zeros_like(values)
    out[1:] = values[:-1]
    return out


def dense_l2_error(times: np.ndarray, values: np.ndarray, exact: Callable, T: float,
                   n_dense: int = DENSE_POINTS) -> float:
    td = np.linspace(0.0, T, n_dense)
    if times.size >= n_dense:
        td = times
        approx = values
    else:
        approx = np.interp(td, times, values)
    err = approx - exact(td)
    return math.sqrt(np.trapezoid(err * err, td))


def run_method(method: str, f: SampleSeries, alpha: float,
               series: PronySeries | None = None) -> MethodOutput:
    if method in ("mp", "mp-lagged"):
        out = midpoint_derivative(f, alpha)
        if method == "mp-lagged":
            out = MethodOutput(SampleSeries(f.grid, lagged(out.values)), out.cost, out.ops)
        return out
    if method == "gl":
        return grunwald_letnikov(f, alpha)
    if method == "prony":
        if series is None:
            raise ValueError("prony needs a series")
        return prony_derivative(f, series)
    raise ValueError(f"unknown method {method!r}")


def poly_study(alphas: Sequence[float], dts: Sequence[float], methods: Sequence[str] = METHODS,
               terms: Sequence[int] = (3, 6, 9, 12), T: float = 0.9,
               series_of: Callable[[float, int], PronySeries] | None = None,
               poly: Polynomial = STUDY_POLYNOMIAL, continuous_rows: bool = True) -> list[PolyRow]:
    """Error table over ``alphas x dts x methods`` (Prony also over ``terms``).

    ``series_of(alpha, N)`` supplies fitted series; with ``continuous_rows``
    each Prony column also gets a ``dt = 0`` row holding the L2 norm of the
    undiscretized operator's error.
    """
    rows = []
    d1, d2 = poly.deriv(), poly.deriv(2)
    for a in alphas:
        exact = lambda t, a=a: caputo_polynomial(poly, a, t)
        for dt in dts:
            f = SampleSeries.sample(poly, UniformGrid.over(T, dt))
            for m in methods:
                for N in (terms if m == "prony" else (None,)):
                    s = series_of(a, N) if m == "prony" else None
                    out = run_method(m, f, a, s)
                    e = dense_l2_error(f.times, out.values[:, 0], exact, T)
                    rows.append(PolyRow(a, m, N, dt, e, out.cost, out.ops))
        if continuous_rows and "prony" in methods:
            for N in terms:
                s = series_of(a, N)
                t0 = time.perf_counter()
                e = continuous_error_l2(s, float(d1(0.0)), d2, T)
                rows.append(PolyRow(a, "prony", N, 0.0, e, time.perf_counter() - t0, 0))
    return rows


def timing_table(alpha: float, dts: Sequence[float], terms: Sequence[int], series_of,
                 T: float = 0.9, poly: Polynomial = STUDY_POLYNOMIAL, repeat: int = 1) -> list[PolyRow]:
    """Wall time of MP versus Prony for each ``dt`` (best of ``repeat``)."""
    rows = []
    exact = lambda t: caputo_polynomial(poly, alpha, t)
    for dt in dts:
        f = SampleSeries.sample(poly, UniformGrid.over(T, dt))
        cases = [("mp", None)] + [("prony", N) for N in terms]
        for m, N in cases:
            s = series_of(alpha, N) if N else None
            best = None
            for _ in range(repeat):
                out = run_method(m, f, alpha, s)
                best = out if best is None or out.cost < best.cost else best
            e = dense_l2_error(f.times, best.values[:, 0], exact, T)
            rows.append(PolyRow(alpha, m, N, dt, e, best.cost, best.ops))
    return rows
