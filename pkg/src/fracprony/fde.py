r"""1D time-fractional diffusion with linear finite elements.

Solves :math:`D_t^\alpha u - u_{xx} = f` on :math:`[0,1]^2` with the manufactured
solution :math:`u = (x-1)^4(e^{-x}t^{3+\alpha} + x^4)`. Time discretization is
either the Prony recursion (fixed memory) or the L1/Gao weights (full history).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import lapack

from .core import UniformGrid, check_alpha
from .cumulative import gao_weights
from .prony import PronySeries, consolidated_gamma, init_state

GAUSS2 = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


def analytic_solution(x, t, alpha: float):
    x = np.asarray(x, dtype=float)
    return (x - 1.0) ** 4 * (np.exp(-x) * np.power(t, 3.0 + alpha) + x**4)


def source(x, t, alpha: float):
    x = np.asarray(x, dtype=float)
    g = math.gamma(4.0 + alpha)
    return ((x - 1) ** 2 * np.exp(-x) * t**3 * (g * (x - 1) ** 2 / 6.0 - (21 - 10 * x + x * x) * t**alpha)
            - 4 * x * x * (x - 1) ** 2 * (14 * x * x - 14 * x + 3))


@dataclass(frozen=True)
class FdeProblem:
    alpha: float
    n_x: int
    n_t: int
    T: float = 1.0
    f: Callable = source
    left: Callable = None
    right: Callable = None
    initial: Callable = None

    def __post_init__(self) -> None:
        check_alpha(self.alpha)
        if self.n_x < 2 or self.n_t < 1:
            raise ValueError("need n_x >= 2 and n_t >= 1")
        a = self.alpha
        if self.left is None:
            object.__setattr__(self, "left", lambda t: t ** (3.0 + a))
        if self.right is None:
            object.__setattr__(self, "right", lambda t: 0.0)
        if self.initial is None:
            object.__setattr__(self, "initial", lambda x: x**4 * (x - 1) ** 4)

    @property
    def h(self) -> float:
        return 1.0 / self.n_x

    @property
    def grid(self) -> UniformGrid:
        return UniformGrid(self.T / self.n_t, self.n_t)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_x + 1)

    def exact(self, t: float) -> np.ndarray:
        return analytic_solution(self.nodes, t, self.alpha)


@dataclass
class FdeSolution:
    problem: FdeProblem
    error: float                      # max over nodes and time levels
    u_final: np.ndarray
    history: np.ndarray | None = None
    state_bytes: int = 0
    wall: float = 0.0
    error_l2: float = 0.0             # max over time levels of the spatial L2 error

    def norm(self, kind: str) -> float:
        if kind == "max":
            return self.error
        if kind == "l2":
            return self.error_l2
        raise ValueError(f"unknown norm {kind!r}")


class Tridiagonal:
    """Tridiagonal matrix stored as (lower, diag, upper) bands."""

    def __init__(self, lower, diag, upper):
        self.dl = np.asarray(lower, dtype=float)
        self.d = np.asarray(diag, dtype=float)
        self.du = np.asarray(upper, dtype=float)

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        y = self.d * x
        y[1:] += self.dl * x[:-1]
        y[:-1] += self.du * x[1:]
        return y

    def scaled_sum(self, a: float, other: "Tridiagonal", b: float) -> "Tridiagonal":
        return Tridiagonal(a * self.dl + b * other.dl, a * self.d + b * other.d, a * self.du + b * other.du)

    def dense(self) -> np.ndarray:
        return np.diag(self.d) + np.diag(self.dl, -1) + np.diag(self.du, 1)

    def factor(self) -> "TridiagonalLU":
        return TridiagonalLU(self)


class TridiagonalLU:
    """LAPACK gttrf/gttrs: factor once, back-substitute every time step."""

    def __init__(self, A: Tridiagonal):
        if A.d.size < 3:
            # the f2py wrapper rejects n < 3; solve these densely
            self._f = None
            self._dense = A.dense()
            return
        dl, d, du, du2, ipiv, info = lapack.dgttrf(A.dl, A.d, A.du)
        if info != 0:
            raise np.linalg.LinAlgError(f"singular tridiagonal system (info={info})")
        self._f = (dl, d, du, du2, ipiv)

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self._f is None:
            return np.linalg.solve(self._dense, b)
        x, info = lapack.dgttrs(*self._f, b)
        if info != 0:
            raise np.linalg.LinAlgError(f"gttrs failed (info={info})")
        return x


def thomas(lower, diag, upper, rhs) -> np.ndarray:
    """Plain Thomas algorithm (no pivoting); reference for small systems."""
    n = len(diag)
    c = np.zeros(n)
    d = np.zeros(n)
    c[0] = upper[0] / diag[0] if n > 1 else 0.0
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - lower[i - 1] * c[i - 1]
        if i < n - 1:
            c[i] = upper[i] / m
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / m
    x = np.empty(n)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def assemble_fe(n_x: int) -> tuple[Tridiagonal, Tridiagonal]:
    """Consistent mass and stiffness for linear elements on a uniform mesh of [0, 1]."""
    if n_x < 2:
        raise ValueError("n_x must be >= 2")
    h = 1.0 / n_x
    n = n_x + 1
    md = np.full(n, 4 * h / 6)
    md[[0, -1]] = 2 * h / 6
    mo = np.full(n - 1, h / 6)
    kd = np.full(n, 2 / h)
    kd[[0, -1]] = 1 / h
    ko = np.full(n - 1, -1 / h)
    return Tridiagonal(mo, md, mo.copy()), Tridiagonal(ko, kd, ko.copy())


class _LoadAssembler:
    """``F_i = int f(x, t) phi_i dx`` with two Gauss points per element; the
    points and shape weights are fixed, so they are computed once."""

    def __init__(self, problem: FdeProblem):
        self.p = problem
        x = problem.nodes
        h = problem.h
        self.xg = np.concatenate([x[:-1] + g * h for g in GAUSS2])
        self.ne = problem.n_x
        self.g = GAUSS2
        self.half_h = 0.5 * h

    def __call__(self, t: float) -> np.ndarray:
        fg = self.p.f(self.xg, t, self.p.alpha) * self.half_h
        F = np.zeros(self.ne + 1)
        for i, g in enumerate(self.g):
            part = fg[i * self.ne:(i + 1) * self.ne]
            F[:-1] += part * (1 - g)
            F[1:] += part * g
        return F


def load_vector(problem: FdeProblem, t: float) -> np.ndarray:
    """``F_i = int f(x, t) phi_i dx`` with two Gauss points per element."""
    return _LoadAssembler(problem)(t)


def _constrain(A: Tridiagonal) -> Tridiagonal:
    """Row substitution for Dirichlet nodes 0 and n."""
    dl, d, du = A.dl.copy(), A.d.copy(), A.du.copy()
    d[0] = d[-1] = 1.0
    du[0] = 0.0
    dl[-1] = 0.0
    return Tridiagonal(dl, d, du)


class _ErrorTracker:
    """Running max-norm error at the nodes and L2 error of the piecewise-linear
    interpolant (3-point Gauss per element)."""

    def __init__(self, problem: FdeProblem, keep: bool):
        self.p = problem
        self.err = 0.0
        self.err_l2 = 0.0
        self.hist = [] if keep else None
        g, w = np.polynomial.legendre.leggauss(3)
        self.g = 0.5 * (g + 1.0)
        self.w = 0.5 * w * problem.h
        x = problem.nodes
        self.n = x.size
        xg = x[:-1, None] + self.g[None, :] * problem.h
        self.x_all = np.concatenate([x, xg.ravel()])

    def __call__(self, u: np.ndarray, t: float) -> None:
        ex = analytic_solution(self.x_all, t, self.p.alpha)
        self.err = max(self.err, float(np.max(np.abs(u - ex[:self.n]))))
        uh = u[:-1, None] * (1.0 - self.g) + u[1:, None] * self.g
        d = uh - ex[self.n:].reshape(uh.shape)
        self.err_l2 = max(self.err_l2, math.sqrt(float(np.sum(d * d * self.w))))
        if self.hist is not None:
            self.hist.append(u.copy())


def _initial(problem: FdeProblem, exact_init: bool) -> np.ndarray:
    x = problem.nodes
    u = problem.initial(x).astype(float)
    u[0], u[-1] = problem.left(0.0), problem.right(0.0)
    return u


def solve_fde_prony(problem: FdeProblem, series: PronySeries, keep_history: bool = False,
                    inject_exact: bool = False) -> FdeSolution:
    """Step ``(gamma M + K) u^n = F^n + M (gamma u^{n-1} - sum_k e_k^2 q_k^{n-1})``.

    ``inject_exact`` replaces every computed solution by the analytic one
    (tests the error bookkeeping only).
    """
    if abs(series.alpha - problem.alpha) > 1e-12:
        raise ValueError("series was fitted for a different alpha")
    t0 = time.perf_counter()
    M, K = assemble_fe(problem.n_x)
    dt = problem.grid.dt
    g = consolidated_gamma(series, dt)
    lu = _constrain(M.scaled_sum(g, K, 1.0)).factor()
    u = _initial(problem, False)
    state = init_state(series, u.size, dt).seed(u)
    load = _LoadAssembler(problem)
    exact_nodes = problem.exact
    track = _ErrorTracker(problem, keep_history)
    track(u, 0.0)
    for n in range(1, problem.n_t + 1):
        t = n * dt
        rhs = load(t) + M @ (g * u - state.memory())
        rhs[0], rhs[-1] = problem.left(t), problem.right(t)
        u = exact_nodes(t) if inject_exact else lu.solve(rhs)
        state.advance(u)
        track(u, t)
    hist = np.array(track.hist) if keep_history else None
    return FdeSolution(problem, track.err, u, hist, state.nbytes, time.perf_counter() - t0, track.err_l2)


def solve_fde_gao(problem: FdeProblem, keep_history: bool = False,
                  inject_exact: bool = False) -> FdeSolution:
    r"""L1 stepping: with :math:`c = \Delta_t^{-\alpha}/\Gamma(2-\alpha)`,

    .. math:: (cM + K)u^n = F^n + cM\Big[\sum_{i=1}^{n-1}(a_{n-i-1} - a_{n-i})u^i + a_{n-1}u^0\Big]
    """
    t0 = time.perf_counter()
    M, K = assemble_fe(problem.n_x)
    a = problem.alpha
    dt = problem.grid.dt
    nt = problem.n_t
    c = dt ** (-a) / math.gamma(2.0 - a)
    lu = _constrain(M.scaled_sum(c, K, 1.0)).factor()
    w = gao_weights(a, nt)
    b = w[:-1] - w[1:]            # b[j-1] = a_{j-1} - a_j, weight of u^{n-j}
    U = np.zeros((nt + 1, problem.n_x + 1))
    U[0] = _initial(problem, False)
    load = _LoadAssembler(problem)
    track = _ErrorTracker(problem, keep_history)
    track(U[0], 0.0)
    for n in range(1, nt + 1):
        t = n * dt
        # u^{n-1} ... u^1 weighted by b_0 ... b_{n-2}
        hist = b[:n - 1] @ U[n - 1:0:-1] if n > 1 else 0.0
        rhs = load(t) + c * (M @ (hist + w[n - 1] * U[0]))
        rhs[0], rhs[-1] = problem.left(t), problem.right(t)
        U[n] = problem.exact(t) if inject_exact else lu.solve(rhs)
        track(U[n], t)
    return FdeSolution(problem, track.err, U[nt].copy(), U if keep_history else None, U.nbytes,
                       time.perf_counter() - t0, track.err_l2)


@dataclass
class ConvergenceTable:
    axis: str
    method: str
    alpha: float
    terms: int | None
    norm: str = "max"
    refinements: list = field(default_factory=list)   # n_t (time) or n_x (space)
    errors: list = field(default_factory=list)

    @property
    def rates(self) -> list:
        e = self.errors
        return [math.log2(e[i] / e[i + 1]) if e[i] > 0 and e[i + 1] > 0 else float("nan")
                for i in range(len(e) - 1)] + [None]

    def rows(self):
        for r, e, q in zip(self.refinements, self.errors, self.rates):
            yield r, e, q


def convergence_study(axis: str, method: str, alpha: float, refinements: Sequence[int],
                      fixed_other: int, series: PronySeries | None = None,
                      inject_exact: bool = False, norm: str = "max") -> ConvergenceTable:
    """``axis='time'`` sweeps n_t at fixed n_x = ``fixed_other``; ``'space'`` the reverse.

    ``norm`` is ``'max'`` (nodal, all time levels) or ``'l2'`` (spatial L2, max over time).
    """
    if len(refinements) < 2:
        raise ValueError("need at least two refinement levels")
    if axis not in ("time", "space"):
        raise ValueError("axis must be 'time' or 'space'")
    if method == "prony" and series is None:
        raise ValueError("prony method needs a series")
    table = ConvergenceTable(axis, method, alpha, None if series is None else series.n_terms, norm)
    for r in refinements:
        nx, nt = (fixed_other, r) if axis == "time" else (r, fixed_other)
        prob = FdeProblem(alpha, nx, nt)
        if method == "prony":
            sol = solve_fde_prony(prob, series, inject_exact=inject_exact)
        elif method == "gao":
            sol = solve_fde_gao(prob, inject_exact=inject_exact)
        else:
            raise ValueError(f"unknown method {method!r}")
        table.refinements.append(r)
        table.errors.append(sol.norm(norm))
    return table
