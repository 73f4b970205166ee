r"""Recursive Prony-series approximation of the Caputo derivative.

The power-law kernel is replaced by a dashpot plus ``N`` Maxwell modes,

.. math::

    \frac{t^{-\alpha}}{\Gamma(1-\alpha)} \approx \beta_0\,\delta(t) + \sum_k \beta_k e^{-t/\tau_k},

so the hereditary integral collapses into ``N`` internal variables updated by

.. math::

    q_k^n = e_k^2 q_k^{n-1} + e_k \beta_k (f^n - f^{n-1}),\qquad e_k = e^{-\Delta_t/(2\tau_k)},

    \hat D^\alpha_n f = \frac{\beta_0}{\Delta_t}(f^n - f^{n-1}) + \sum_k q_k^n .
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize as sopt, signal

from .core import SampleSeries, check_alpha
from .cumulative import MethodOutput

N_MIN, N_MAX = 3, 15


@dataclass(frozen=True, eq=False)
class PronySeries:
    """Fitted parameters for one (alpha, N, fitting horizon).

    ``beta0``, ``beta`` and ``tau`` are always stored de-normalized (physical
    units). ``omega_star`` is the base frequency of the fit and ``scale`` the
    time-scale multiplier it was fitted with. ``normalized`` records whether the
    hatted values were the primary output of the fit.
    """

    alpha: float
    beta0: float
    beta: np.ndarray
    tau: np.ndarray
    omega_star: float = 1.0
    scale: float = 1.0
    normalized: bool = True

    def __post_init__(self) -> None:
        check_alpha(self.alpha)
        b = np.array(self.beta, dtype=float).ravel()
        t = np.array(self.tau, dtype=float).ravel()
        if b.shape != t.shape:
            raise ValueError("beta and tau must have equal length")
        if not (N_MIN <= b.size <= N_MAX):
            raise ValueError(f"number of terms must lie in [{N_MIN}, {N_MAX}], got {b.size}")
        if not (np.all(b > 0) and np.all(t > 0) and np.all(np.isfinite(b)) and np.all(np.isfinite(t))):
            raise ValueError("beta and tau must be finite and positive")
        if not (self.beta0 >= 0 and math.isfinite(self.beta0)):
            raise ValueError("beta0 must be finite and nonnegative")
        if not self.omega_star > 0:
            raise ValueError("omega_star must be positive")
        b.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "tau", t)
        object.__setattr__(self, "beta0", float(self.beta0))

    @property
    def n_terms(self) -> int:
        return self.beta.size

    @classmethod
    def from_normalized(cls, alpha: float, beta0_hat: float, beta_hat, tau_hat,
                        omega_star: float, scale: float = 1.0) -> "PronySeries":
        w = omega_star
        return cls(alpha, beta0_hat * w ** (alpha - 1.0), np.asarray(beta_hat) * w**alpha,
                   np.asarray(tau_hat) / w, w, scale, True)

    def normalized_params(self) -> tuple[float, np.ndarray, np.ndarray]:
        w = self.omega_star
        return (self.beta0 * w ** (1.0 - self.alpha), self.beta * w ** (-self.alpha), self.tau * w)

    def transfer(self, omega) -> np.ndarray:
        r""":math:`H(i\omega) = \beta_0 i\omega + \sum_k \beta_k \tau_k \omega(\tau_k\omega + i)/((\tau_k\omega)^2+1)`."""
        w = np.asarray(omega, dtype=float)[..., None]
        x = self.tau * w
        modes = (self.beta * self.tau * w[..., 0:1] * (x + 1j) / (x * x + 1)).sum(-1)
        return 1j * self.beta0 * np.asarray(omega, dtype=float) + modes

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "N": self.n_terms, "omega_star": self.omega_star,
                "scale": self.scale, "beta0": self.beta0, "beta": self.beta.tolist(),
                "tau": self.tau.tolist(), "normalized": self.normalized}

    @classmethod
    def from_dict(cls, d: dict) -> "PronySeries":
        if len(d["beta"]) != d.get("N", len(d["beta"])):
            raise ValueError("N does not match the number of terms")
        return cls(float(d["alpha"]), float(d["beta0"]), d["beta"], d["tau"],
                   float(d.get("omega_star", 1.0)), float(d.get("scale", 1.0)),
                   bool(d.get("normalized", True)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "PronySeries":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PronySeries):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


def decay_factors(series: PronySeries, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError("dt must be positive")
    return np.exp(-dt / (2.0 * series.tau))


def consolidated_gamma(series: PronySeries, dt: float) -> float:
    """Coefficient of the current increment: ``beta0/dt + sum beta_k e_k``."""
    return series.beta0 / dt + float(series.beta @ decay_factors(series, dt))


@dataclass(eq=False)
class PronyState:
    """Per-channel recursion state. Storage is ``N x C`` regardless of step count."""

    series: PronySeries
    dt: float
    e: np.ndarray
    q: np.ndarray
    prev: np.ndarray | None = None
    ops: int = 0

    @property
    def channels(self) -> int:
        return self.q.shape[1]

    def seed(self, f0) -> "PronyState":
        f0 = np.atleast_1d(np.asarray(f0, dtype=float))
        if f0.shape != (self.channels,):
            raise ValueError(f"expected {self.channels} channels, got {f0.shape}")
        self.prev = f0.copy()
        return self

    def advance(self, fn) -> np.ndarray:
        fn = np.atleast_1d(np.asarray(fn, dtype=float))
        if fn.shape != (self.channels,):
            raise ValueError(f"expected {self.channels} channels, got {fn.shape}")
        if self.prev is None:
            raise RuntimeError("state must be seeded with f^0 before advancing")
        d = fn - self.prev
        e = self.e[:, None]
        self.q *= e * e
        self.q += (e * self.series.beta[:, None]) * d
        self.prev = fn.copy()
        self.ops += 2 * self.q.size + self.channels
        return self.series.beta0 / self.dt * d + self.q.sum(0)

    def memory(self) -> np.ndarray:
        """History part of the next step: ``sum_k e_k^2 q_k``."""
        return ((self.e**2)[:, None] * self.q).sum(0)

    @property
    def nbytes(self) -> int:
        return self.q.nbytes + self.e.nbytes + (0 if self.prev is None else self.prev.nbytes)


def init_state(series: PronySeries, channels: int, dt: float) -> PronyState:
    if channels < 1:
        raise ValueError("channels must be >= 1")
    e = decay_factors(series, dt)
    return PronyState(series, float(dt), e, np.zeros((series.n_terms, channels)))


def prony_derivative(f: SampleSeries, series: PronySeries, streaming: bool = False) -> MethodOutput:
    """Apply the recursion along a whole sample series.

    The batch path runs each mode's first-order recursion through
    ``scipy.signal.lfilter``; ``streaming=True`` steps :class:`PronyState`
    instead. Both cost O(N * steps).
    """
    t0 = time.perf_counter()
    dt = f.grid.dt
    x = f.values
    if streaming:
        st = init_state(series, f.channels, dt).seed(x[0])
        out = np.zeros_like(x)
        for n in range(1, x.shape[0]):
            out[n] = st.advance(x[n])
        ops = st.ops
    else:
        d = np.zeros_like(x)
        d[1:] = np.diff(x, axis=0)
        e = decay_factors(series, dt)
        out = series.beta0 / dt * d
        for ek, bk in zip(e, series.beta):
            out += signal.lfilter([ek * bk], [1.0, -ek * ek], d, axis=0)
        ops = (2 * series.n_terms + 1) * (x.shape[0] - 1) * x.shape[1]
    return MethodOutput(SampleSeries(f.grid, out), time.perf_counter() - t0, ops)


def truncation_error(series: PronySeries, z):
    r""":math:`\varepsilon(z) = z^{1-\alpha}/\Gamma(2-\alpha) - \beta_0 + \sum_k \beta_k\tau_k(e^{-z/\tau_k}-1)`."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("z must be nonnegative")
    a = series.alpha
    modes = (series.beta * series.tau * np.expm1(-z[..., None] / series.tau)).sum(-1)
    out = z ** (1.0 - a) / math.gamma(2.0 - a) - series.beta0 + modes
    return out[()] if out.ndim == 0 else out


def _graded_grid(T: float, n: int, series: PronySeries) -> np.ndarray:
    """Uniform points plus a geometric cluster near 0 where eps varies on the scale of the smallest tau."""
    z_lo = min(series.tau.min(), T) * 1e-3
    near = np.geomspace(z_lo, T, n // 2)
    return np.unique(np.concatenate([[0.0], np.linspace(0.0, T, n), near]))


def truncation_norms(series: PronySeries, T: float, n_samples: int = 4000) -> tuple[float, float]:
    """``(sup |eps|, ||eps||_L2)`` over ``[0, T]``.

    Sup: dense sample, then bounded scalar refinement around each interior
    local maximum of ``|eps|``. L2: trapezoid on a graded grid.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    z = _graded_grid(T, n_samples, series)
    e = np.abs(truncation_error(series, z))
    sup = float(e.max())
    interior = np.flatnonzero((e[1:-1] >= e[:-2]) & (e[1:-1] >= e[2:])) + 1
    for i in interior:
        r = sopt.minimize_scalar(lambda s: -abs(truncation_error(series, s)),
                                     bounds=(z[i - 1], z[i + 1]), method="bounded",
                                     options={"xatol": 1e-14 * max(z[i + 1], 1e-300)})
        sup = max(sup, -float(r.fun))
    l2 = math.sqrt(np.trapezoid(e * e, z))
    return sup, l2


@dataclass(frozen=True)
class TruncationProfile:
    series: PronySeries
    horizon: float
    z: np.ndarray
    eps: np.ndarray
    eps_inf: float
    eps_l2: float

    @classmethod
    def build(cls, series: PronySeries, T: float, n_samples: int = 4000) -> "TruncationProfile":
        z = _graded_grid(T, n_samples, series)
        sup, l2 = truncation_norms(series, T, n_samples)
        return cls(series, T, z, truncation_error(series, z), sup, l2)


def btau_constant(series: PronySeries, dt: float) -> float:
    """``C(beta, tau) = sum_k (beta_k/24) max(tau_k^-2, tau_k^-1, 1 + e_k)``."""
    b, t = series.beta, series.tau
    e = decay_factors(series, dt)
    return float(np.sum(b / 24.0 * np.maximum.reduce([t**-2.0, 1.0 / t, 1.0 + e])))


@dataclass(frozen=True)
class ErrorBound:
    series: PronySeries
    eps_inf: float

    @classmethod
    def for_series(cls, series: PronySeries, T: float, n_samples: int = 4000) -> "ErrorBound":
        return cls(series, truncation_norms(series, T, n_samples)[0])

    def C_btau(self, dt: float) -> float:
        return btau_constant(self.series, dt)

    def __call__(self, dt: float, fprime0: float, f2_L1: float, f_W3inf: float) -> float:
        return theorem1_bound(self, dt, fprime0, f2_L1, f_W3inf)


def theorem1_bound(bound: ErrorBound, dt: float, fprime0: float, f2_L1: float, f_W3inf: float) -> float:
    r"""A-priori error bound

    .. math:: \|\varepsilon\|_\infty(|f'(0)| + \|f''\|_{L^1}) + \Delta_t(\beta_0/2 + C(\beta,\tau)\Delta_t)\|f\|_{W^{3,\infty}}

    ``f_W3inf`` is the sum of the sup-norms of ``f, f', f'', f'''`` on the
    interval. At ``dt = 0`` only the truncation part remains.
    """
    if min(fprime0, f2_L1, f_W3inf) < 0 or dt < 0:
        raise ValueError("norms and dt must be nonnegative")
    trunc = bound.eps_inf * (abs(fprime0) + f2_L1)
    if dt == 0:
        return trunc
    return trunc + dt * (bound.series.beta0 / 2.0 + btau_constant(bound.series, dt) * dt) * f_W3inf


def continuous_error(series: PronySeries, fprime0: float, f2, t: float) -> float:
    r"""Error of the undiscretized Prony operator on ``f`` at time ``t``:

    .. math:: \varepsilon(t) f'(0) + \int_0^t \varepsilon(z) f''(t-z)\,dz

    This is the dt -> 0 limit of the recursion's error; ``f2`` is ``f''``.
    """
    from scipy import integrate

    if t == 0:
        return -series.beta0 * fprime0
    brk = [x for x in np.concatenate([series.tau, series.tau * 10]) if x < t]
    val, _ = integrate.quad(lambda z: truncation_error(series, z) * f2(t - z), 0.0, t,
                            limit=500, points=brk or None, epsabs=1e-13, epsrel=1e-10)
    return float(truncation_error(series, t)) * fprime0 + val


def continuous_error_l2(series: PronySeries, fprime0: float, f2, T: float, n: int = 120) -> float:
    """L2 norm over [0, T] of :func:`continuous_error`, on a grid graded toward 0.

    The error has a boundary layer of width ~ smallest tau at t = 0 when
    ``f'(0) != 0``; a uniform grid would over-weight the t = 0 sample.
    """
    z_lo = min(series.tau.min() * 1e-3, T * 1e-6)
    ts = np.unique(np.concatenate([[0.0], np.geomspace(z_lo, T, n), np.linspace(0, T, n)]))
    err = np.array([continuous_error(series, fprime0, f2, t) for t in ts])
    return math.sqrt(np.trapezoid(err * err, ts))
