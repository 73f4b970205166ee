r"""Rheometer benchmark for a fractional viscoelastic liver model.

A cylinder of radius ``R`` and height ``H`` is compressed by 10 % over the
first second and then twisted sinusoidally. The kinematics are prescribed, so
stresses follow by direct evaluation of

.. math::

    S = \delta\,\mathrm{Dev}[D_t^\alpha S_v] + pJC^{-1},\qquad
    S_v = e^{b(C:C-3)}C,\qquad \mathrm{Dev}[A] = A - \tfrac{A:C}{3}C^{-1},

with the fractional derivative taken componentwise on the six independent
entries of ``S_v``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .core import SampleSeries, UniformGrid
from .cumulative import MethodOutput, gl_weights, grunwald_letnikov, midpoint_derivative
from .prony import PronySeries, prony_derivative

VOIGT = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))


@dataclass(frozen=True)
class LiverModel:
    delta: float = 126.4          # Pa
    b: float = 1.5
    alpha: float = 0.2
    R: float = 0.010              # m
    H: float = 0.0027             # m
    compression: float = 0.10
    gamma_s: float = 0.25
    f_hz: float = 1.0
    T: float = 2.0

    def __post_init__(self) -> None:
        if not (self.delta > 0 and self.b >= 0 and self.R > 0 and self.H > 0):
            raise ValueError("need delta > 0, b >= 0, R > 0, H > 0")
        if not 0 <= self.compression < 1:
            raise ValueError("compression ratio must lie in [0, 1)")

    def stretch(self, t):
        return 1.0 - self.compression * np.minimum(t, 1.0)

    def shear_phase(self, t):
        return np.maximum(0.0, np.asarray(t, dtype=float) - 1.0)

    def twist_rate(self, t):
        """Twist per unit reference height; the rim shear ``F_theta3`` equals
        ``lambda * gamma_s * sin(2 pi f t_hat)``."""
        lam = self.stretch(t)
        return self.gamma_s * lam**1.5 * np.sin(2 * math.pi * self.f_hz * self.shear_phase(t)) / self.R


@dataclass(frozen=True)
class KinematicState:
    u: np.ndarray
    F: np.ndarray

    @property
    def C(self) -> np.ndarray:
        return np.swapaxes(self.F, -1, -2) @ self.F

    @property
    def J(self):
        return np.linalg.det(self.F)


def _check_point(X, model: LiverModel) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    r = math.hypot(X[0], X[1])
    tol = 1e-12 * model.R
    if r > model.R + tol or X[2] < -tol or X[2] > model.H + tol:
        raise ValueError(f"point {X} lies outside the reference cylinder")
    return X


def placement(X, t, model: LiverModel) -> np.ndarray:
    """Current position ``x(X, t)`` (vectorized over t)."""
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float)
    lam = model.stretch(t)
    a = 1.0 / np.sqrt(lam)
    th = model.twist_rate(t) * X[2]
    c, s = np.cos(th), np.sin(th)
    return np.stack([a * (X[0] * c - X[1] * s), a * (X[0] * s + X[1] * c), lam * X[2]], axis=-1)


def deformation(X, t, model: LiverModel) -> KinematicState:
    """Displacement and deformation gradient at material point ``X``; ``t`` may be an array."""
    X = _check_point(X, model)
    t = np.asarray(t, dtype=float)
    lam = model.stretch(t)
    a = 1.0 / np.sqrt(lam)
    psi = model.twist_rate(t)
    th = psi * X[2]
    c, s = np.cos(th), np.sin(th)
    F = np.zeros(t.shape + (3, 3))
    F[..., 0, 0] = a * c
    F[..., 0, 1] = -a * s
    F[..., 0, 2] = -a * psi * (X[0] * s + X[1] * c)
    F[..., 1, 0] = a * s
    F[..., 1, 1] = a * c
    F[..., 1, 2] = a * psi * (X[0] * c - X[1] * s)
    F[..., 2, 2] = lam
    u = placement(X, t, model) - X
    return KinematicState(u, F)


def fd_gradient(X, t: float, model: LiverModel, step: float | None = None) -> np.ndarray:
    """Central-difference deformation gradient (test oracle)."""
    X = np.asarray(X, dtype=float)
    h = 1e-6 * model.R if step is None else step
    F = np.zeros((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        F[:, j] = (placement(X + e, t, model) - placement(X - e, t, model)) / (2 * h)
    return F


def to_voigt(A: np.ndarray) -> np.ndarray:
    return np.stack([A[..., i, j] for i, j in VOIGT], axis=-1)


def from_voigt(v: np.ndarray) -> np.ndarray:
    A = np.zeros(v.shape[:-1] + (3, 3))
    for c, (i, j) in enumerate(VOIGT):
        A[..., i, j] = v[..., c]
        A[..., j, i] = v[..., c]
    return A


def viscous_stress(C: np.ndarray, b: float) -> np.ndarray:
    """``S_v = exp(b (C:C - 3)) C``."""
    II = np.einsum("...ij,...ij->...", C, C)
    return np.exp(b * (II - 3.0))[..., None, None] * C


def dev(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    Ci = np.linalg.inv(C)
    tr = np.einsum("...ij,...ij->...", A, C)
    return A - (tr / 3.0)[..., None, None] * Ci


def _apply_engine(values: np.ndarray, grid: UniformGrid, alpha: float, engine, series=None) -> MethodOutput:
    """Fractional derivative of each column. ``engine``: 'prony', 'gl', 'gl-fft', 'mp' or 'identity'."""
    f = SampleSeries(grid, values)
    if engine == "prony":
        if series is None:
            raise ValueError("prony engine needs a series")
        if abs(series.alpha - alpha) > 1e-12:
            raise ValueError("series alpha does not match the model")
        return prony_derivative(f, series)
    if engine == "gl":
        return grunwald_letnikov(f, alpha)
    if engine == "gl-fft":
        return gl_fft(f, alpha)
    if engine == "mp":
        return midpoint_derivative(f, alpha)
    if engine == "identity":
        return MethodOutput(f, 0.0, 0)
    raise ValueError(f"unknown engine {engine!r}")


def gl_fft(f: SampleSeries, alpha: float) -> MethodOutput:
    """Same sum as :func:`grunwald_letnikov`, evaluated as one FFT convolution.

    Used to build fine reference solutions; the result differs from the
    step-by-step sum by rounding only.
    """
    t0 = time.perf_counter()
    dt = f.grid.dt
    n = f.grid.steps
    w = gl_weights(alpha, n) * dt ** (-alpha)
    x = f.values
    out = signal.fftconvolve(x, w[:, None], axes=0)[: n + 1]
    t = f.grid.times
    t[0] = np.inf
    out -= np.outer(t ** (-alpha) / math.gamma(1.0 - alpha), x[0])
    out[0] = 0.0
    return MethodOutput(SampleSeries(f.grid, out), time.perf_counter() - t0, 0)


@dataclass
class StressHistory:
    times: np.ndarray
    S: np.ndarray          # (nt, npts, 3, 3) without the pressure term
    sigma: np.ndarray      # Cauchy, same shape
    F: np.ndarray
    cost: float = 0.0
    ops: int = 0


def stress_history(points, model: LiverModel, engine: str = "prony", grid: UniformGrid | None = None,
                   series: PronySeries | None = None, pressure=None) -> StressHistory:
    """Stress histories at one or more material points.

    ``pressure`` (array broadcastable to (nt, npts)) adds ``p J C^-1``; by
    default it is left out, which leaves the shear components unchanged.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    grid = grid or UniformGrid.over(model.T, 1e-3)
    t = grid.times
    Fs = np.stack([deformation(X, t, model).F for X in pts], axis=1)   # (nt, npts, 3, 3)
    C = np.swapaxes(Fs, -1, -2) @ Fs
    Sv = to_voigt(viscous_stress(C, model.b)).reshape(t.size, -1)
    out = _apply_engine(Sv, grid, model.alpha, engine, series)
    DSv = from_voigt(out.values.reshape(t.size, pts.shape[0], 6))
    S = model.delta * dev(DSv, C)
    J = np.linalg.det(Fs)
    if pressure is not None:
        p = np.broadcast_to(np.asarray(pressure, dtype=float), J.shape)
        S = S + (p * J)[..., None, None] * np.linalg.inv(C)
    sigma = Fs @ S @ np.swapaxes(Fs, -1, -2) / J[..., None, None]
    return StressHistory(t, S, sigma, Fs, out.cost, out.ops)


def _cyl_components(x: np.ndarray, sigma: np.ndarray):
    """Cylindrical stress components at current positions ``x``."""
    r = np.hypot(x[..., 0], x[..., 1])
    er = np.stack([x[..., 0] / r, x[..., 1] / r, np.zeros_like(r)], axis=-1)
    et = np.stack([-er[..., 1], er[..., 0], np.zeros_like(r)], axis=-1)
    ez = np.zeros_like(er)
    ez[..., 2] = 1.0
    comp = lambda a, b: np.einsum("...i,...ij,...j->...", a, sigma, b)
    return r, comp(er, er), comp(et, et), comp(ez, ez), comp(et, ez)


def torque_and_normal(model: LiverModel, engine: str = "prony", grid: UniformGrid | None = None,
                      series: PronySeries | None = None, n_quad: int = 16):
    """Torque and normal force on the top plate.

    Both integrals run over the deformed top disc with Gauss–Legendre nodes in
    the reference radius. The torque integrand ``r sigma_theta_z`` does not see
    the pressure. For the normal force the pressure comes from radial
    equilibrium with a traction-free rim, which reduces to

        t_N = 2 pi int r [s_zz - (s_rr + s_thth)/2] dr

    in terms of the pressure-free stress ``s``.
    """
    if n_quad < 8:
        raise ValueError("n_quad must be >= 8")
    xg, wg = np.polynomial.legendre.leggauss(n_quad)
    rho = 0.5 * model.R * (xg + 1.0)
    w = 0.5 * model.R * wg
    pts = np.stack([rho, np.zeros_like(rho), np.full_like(rho, model.H)], axis=1)
    hist = stress_history(pts, model, engine, grid, series)
    t = hist.times
    x = np.stack([placement(X, t, model) for X in pts], axis=1)
    r, srr, stt, szz, stz = _cyl_components(x, hist.sigma)
    lam = model.stretch(t)[:, None]
    dr = w[None, :] / np.sqrt(lam)             # dr = d(rho) / sqrt(lambda)
    torque = 2 * math.pi * np.sum(r * r * stz * dr, axis=1)
    normal = 2 * math.pi * np.sum(r * (szz - 0.5 * (srr + stt)) * dr, axis=1)
    return t, torque, normal


def reference_point(model: LiverModel) -> np.ndarray:
    return np.array([model.R, 0.0, model.H])


def sigma13_history(model: LiverModel, engine: str, dt: float, series: PronySeries | None = None):
    grid = UniformGrid.over(model.T, dt)
    h = stress_history(reference_point(model), model, engine, grid, series)
    return h.times, h.sigma[:, 0, 0, 2], h


def relative_l2_percent(t_coarse, v_coarse, t_ref, v_ref) -> float:
    """100 ||v - v_ref|| / ||v_ref|| on the coarse grid (reference sampled there)."""
    vr = np.interp(t_coarse, t_ref, v_ref)
    dt = t_coarse[1] - t_coarse[0]
    num = np.trapezoid((v_coarse - vr) ** 2, dx=dt)
    den = np.trapezoid(vr**2, dx=dt)
    return 100.0 * math.sqrt(num / den)


def load_or_build_reference(path, model: LiverModel, dt: float = 1e-5, what: str = "sigma13",
                            n_quad: int = 16):
    """GL reference on a fine grid, cached as CSV with an engine/dt/alpha header."""
    path = Path(path)
    header = f"# engine=gl dt={dt:.6e} alpha={model.alpha:.6e} what={what} n_quad={n_quad}"
    if path.exists():
        with path.open() as fh:
            first = fh.readline().strip()
        if first == header:
            data = np.loadtxt(path, delimiter=",", skiprows=2)
            return data[:, 0], data[:, 1:]
    if what == "sigma13":
        t, s13, _ = sigma13_history(model, "gl-fft", dt)
        cols = s13[:, None]
        names = "t,sigma13"
    else:
        t, tq, tn = torque_and_normal(model, "gl-fft", UniformGrid.over(model.T, dt), n_quad=n_quad)
        cols = np.stack([tq, tn], axis=1)
        names = "t,torque,normal_force"
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w") as fh:
        fh.write(header + "\n" + names + "\n")
        np.savetxt(fh, np.column_stack([t, cols]), delimiter=",", fmt="%.16e")
    tmp.replace(path)
    return t, cols


def timing_matrix(model: LiverModel, engines, dts, terms, series_of=None):
    """Wall time and multiply-adds per (engine, N, dt) for the reference point."""
    rows = []
    for dt in dts:
        for eng in engines:
            for N in (terms if eng == "prony" else [None]):
                s = series_of(N) if eng == "prony" else None
                t0 = time.perf_counter()
                h = stress_history(reference_point(model), model, eng, UniformGrid.over(model.T, dt), s)
                rows.append({"engine": eng, "terms": N, "dt": dt,
                             "seconds": time.perf_counter() - t0, "ops": h.ops})
    return rows
