r"""Basic types, closed-form Caputo derivatives and a quadrature oracle.

The Caputo derivative of order :math:`0 < \alpha < 1` is

.. math::

    D_t^\alpha f(t) = \frac{1}{\Gamma(1-\alpha)} \int_0^t f'(s)(t-s)^{-\alpha}\,ds .
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"fractional order must lie in (0, 1), got {alpha}")
    return alpha


@dataclass(frozen=True)
class FractionalOrder:
    alpha: float

    def __post_init__(self) -> None:
        check_alpha(self.alpha)

    def __float__(self) -> float:
        return self.alpha


@dataclass(frozen=True)
class UniformGrid:
    """Uniform time grid ``t_n = n*dt`` for ``n = 0..steps``."""

    dt: float
    steps: int

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")

    @classmethod
    def over(cls, T: float, dt: float) -> "UniformGrid":
        """Grid covering [0, T] with step ``dt`` (T/dt rounded to the nearest int)."""
        return cls(dt, max(1, int(round(T / dt))))

    @property
    def horizon(self) -> float:
        return self.dt * self.steps

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)


@dataclass(frozen=True, eq=False)
class SampleSeries:
    """Samples ``values[n, c]`` of ``C`` channels on a uniform grid."""

    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.steps + 1 or v.shape[1] < 1:
            raise ValueError(f"values shape {v.shape} does not match grid with {self.grid.steps + 1} points")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def sample(cls, f: Callable[[np.ndarray], np.ndarray], grid: UniformGrid) -> "SampleSeries":
        return cls(grid, np.asarray(f(grid.times), dtype=float))

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


@dataclass(frozen=True)
class Polynomial:
    """``p(t) = sum_k coeffs[k] * t**k`` (``coeffs[0]`` is the constant)."""

    coeffs: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        c = tuple(float(x) for x in self.coeffs)
        if not c:
            raise ValueError("polynomial needs at least one coefficient")
        if not all(math.isfinite(x) for x in c):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(t, self.coeffs)

    def deriv(self, m: int = 1) -> "Polynomial":
        d = np.polynomial.polynomial.polyder(self.coeffs, m)
        return Polynomial(tuple(d) if len(d) else (0.0,))


# Fig. 4 polynomial of the polynomial convergence study.
STUDY_POLYNOMIAL = Polynomial((2.17, 101.54, -977.47, 3368.61, -5636.44, 4937.49, -2191.59, 398.40))


def caputo_power_rule(m: float, alpha: float, t):
    r"""Caputo derivative of :math:`t^m`: :math:`\Gamma(m+1)/\Gamma(m+1-\alpha)\,t^{m-\alpha}`.

    Works elementwise on array ``t``. Returns 0 for ``m = 0``.
    """
    alpha = check_alpha(alpha)
    if m < 0:
        raise ValueError("exponent must be nonnegative")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    if m == 0:
        out = np.zeros_like(t)
    else:
        c = math.exp(math.lgamma(m + 1) - math.lgamma(m + 1 - alpha))
        with np.errstate(divide="ignore"):
            out = c * np.power(t, m - alpha)
        out = np.where(t == 0, 0.0 if m > alpha else np.inf, out)
    return out[()] if out.ndim == 0 else out


def caputo_polynomial(p: Polynomial, alpha: float, t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for m, b in enumerate(p.coeffs):
        if m and b:
            out = out + b * caputo_power_rule(m, alpha, t)
    return out[()] if out.ndim == 0 else out


class OracleError(RuntimeError):
    pass


def caputo_quadrature_oracle(fprime: Callable[[float], float], alpha: float, t: float,
                             tol: float = 1e-12, limit: int = 200) -> float:
    """Brute-force Caputo derivative from ``f'``; test oracle only.

    The weak singularity at ``s = t`` is absorbed into QUADPACK's algebraic
    weight ``(t-s)**(-alpha)`` so the integrand seen by the rule is smooth.
    """
    alpha = check_alpha(alpha)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0.0
    val, err, *rest = integrate.quad(fprime, 0.0, t, weight="alg", wvar=(0.0, -alpha),
                                     epsabs=tol, epsrel=0.0, limit=limit, full_output=1)
    # quad appends a message only when ier != 0
    if len(rest) > 1 and err > 10 * max(tol, 1e-14 * abs(val)):
        raise OracleError(f"quadrature did not converge: {rest[1]} (estimate {err:.3e})")
    return val / math.gamma(1.0 - alpha)


def fourier_symbol(alpha: float, omega):
    """``(i*omega)**alpha`` on the principal branch."""
    alpha = check_alpha(alpha)
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("omega must be positive")
    out = omega**alpha * cmath.exp(0.5j * math.pi * alpha)
    return out[()] if np.ndim(out) == 0 else out


def l2_norm(values: np.ndarray, dt: float, axis: int = 0) -> np.ndarray:
    """Trapezoid-rule L2 norm of uniformly sampled values."""
    return np.sqrt(integrate.trapezoid(np.abs(values) ** 2, dx=dt, axis=axis))
