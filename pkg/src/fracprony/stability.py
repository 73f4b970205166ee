r"""Energy-stability harness for a 1D fractional Kelvin–Voigt bar.

Weak form on :math:`(0, L)` with homogeneous Dirichlet ends, backward Euler in
time and the Prony recursion for the fractional strain rate:

.. math::

    \varrho\Big(\frac{v^n - v^{n-1}}{\Delta_t}, w\Big) + \big(E\,Du^n + \eta\beta_0 Dv^n
    + \eta\textstyle\sum_k Q_k^n, Dw\big) = (b^n, w),\qquad u^n = u^{n-1} + \Delta_t v^n,

    Q_k^n = e_k^2 Q_k^{n-1} + \beta_k e_k \Delta_t Dv^n .

The memory variables live at two Gauss points per element. Testing with
``w = v^n`` gives, for ``b = 0``,

.. math::

    \varrho\|v^n\|^2 + E\|Du^n\|^2 + \eta\beta_0\sum_{m\le n}\Delta_t\|Dv^m\|^2
    + \sum_k \frac{\eta}{\beta_k e_k}\|Q_k^n\|^2 \le \varrho\|v^0\|^2 + E\|Du^0\|^2 .
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .core import UniformGrid
from .fde import assemble_fe
from .prony import PronySeries, decay_factors


@dataclass(frozen=True)
class LinearViscoParams:
    rho: float
    E: float
    eta: float
    series: PronySeries
    n_x: int
    grid: UniformGrid
    L: float = 1.0

    def __post_init__(self) -> None:
        if min(self.rho, self.E, self.eta) <= 0:
            raise ValueError("rho, E and eta must be positive")
        if self.n_x < 2:
            raise ValueError("need at least two elements")

    @property
    def alpha(self) -> float:
        return self.series.alpha


@dataclass
class EnergyLedger:
    kinetic: np.ndarray
    elastic: np.ndarray
    dissipation: np.ndarray      # cumulative eta beta0 sum dt ||Dv||^2
    memory: np.ndarray
    rhs: np.ndarray              # initial energy (+ estimated forcing allowance)
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    step_defect: np.ndarray | None = None
    estimated: bool = False

    @property
    def lhs(self) -> np.ndarray:
        return self.kinetic + self.elastic + self.dissipation + self.memory


def _operators(p: LinearViscoParams):
    """Interior-node mass/stiffness (dense, small) and the element gradient map."""
    M, K = assemble_fe(p.n_x)
    s = p.L
    Md = M.dense()[1:-1, 1:-1] * s
    Kd = K.dense()[1:-1, 1:-1] / s
    h = p.L / p.n_x
    n_in = p.n_x - 1
    # D: nodal interior values -> constant element gradients
    D = np.zeros((p.n_x, n_in))
    for e in range(p.n_x):
        if e - 1 >= 0:
            D[e, e - 1] = -1.0 / h
        if e < n_in:
            D[e, e] = 1.0 / h
    return Md, Kd, D, h


def run_linear(p: LinearViscoParams, u0, v0, b=None, keep_solution: bool = False) -> EnergyLedger:
    """March ``p.grid.steps`` steps from interior nodal data ``u0, v0``.

    ``b`` is an optional steady body force (interior nodal values, interpolated
    with the mass matrix). With ``b`` present, the right-hand side adds
    ``sum dt C^2 ||b||^2 / (eta beta0)``, where ``C`` is the discrete Poincaré
    constant. The ledger is then flagged ``estimated``.
    """
    Md, Kd, D, h = _operators(p)
    n_in = Md.shape[0]
    u = np.asarray(u0, dtype=float).copy()
    v = np.asarray(v0, dtype=float).copy()
    if u.shape != (n_in,) or v.shape != (n_in,):
        raise ValueError(f"initial data must have {n_in} interior values")
    s = p.series
    dt = p.grid.dt
    e = decay_factors(s, dt)
    beta = s.beta
    eta, rho, E = p.eta, p.rho, p.E
    # two Gauss points per element carry the same constant gradient for linear elements,
    # so Q is stored per (mode, element, gauss point) and the quadrature weight is h/2 each
    Q = np.zeros((beta.size, p.n_x, 2))
    A = rho / dt * Md + (E * dt + eta * s.beta0 + eta * dt * float(beta @ e)) * Kd
    cho = linalg.cho_factor(A)
    force = np.zeros(n_in) if b is None else Md @ np.asarray(b, dtype=float)
    if b is not None and s.beta0 <= 0:
        raise ValueError("forcing bound needs beta0 > 0")
    c2 = 1.0 / linalg.eigh(Kd, Md, eigvals_only=True)[0] if b is not None else 0.0
    bnorm2 = 0.0 if b is None else float(np.asarray(b) @ Md @ np.asarray(b))

    n = p.grid.steps
    kin = np.zeros(n + 1)
    ela = np.zeros(n + 1)
    dis = np.zeros(n + 1)
    mem = np.zeros(n + 1)
    defect = np.zeros(n + 1)
    kin[0] = rho * v @ Md @ v
    ela[0] = E * u @ Kd @ u
    rhs = np.full(n + 1, kin[0] + ela[0])
    if b is not None:
        rhs += dt * np.arange(n + 1) * c2 * bnorm2 / (eta * s.beta0)
    U = [u.copy()] if keep_solution else None
    V = [v.copy()] if keep_solution else None
    wq = 0.5 * h
    for m in range(1, n + 1):
        Qold = Q
        memforce = D.T @ ((e**2)[:, None] * Qold.sum(-1) * wq).sum(0)
        r = rho / dt * Md @ v - E * Kd @ u - eta * memforce + force
        v_new = linalg.cho_solve(cho, r)
        dv = D @ v_new
        Q = (e**2)[:, None, None] * Qold + (beta * e * dt)[:, None, None] * dv[None, :, None]
        u = u + dt * v_new
        v = v_new
        kin[m] = rho * v @ Md @ v
        ela[m] = E * u @ Kd @ u
        dis[m] = dis[m - 1] + eta * s.beta0 * dt * float(dv @ dv) * h
        # modes with e_k underflowed to 0 carry Q_k = 0 and no energy
        qq = (Q**2 * wq).sum((1, 2))
        mem[m] = float(np.sum(np.divide(eta * qq, beta * e, out=np.zeros_like(qq), where=e > 0)))
        # one-step form before induction: total change must not be positive
        defect[m] = (kin[m - 1] + ela[m - 1] + mem[m - 1]) - (kin[m] + ela[m] + mem[m]) \
            - (dis[m] - dis[m - 1])
        if keep_solution:
            U.append(u.copy())
            V.append(v.copy())
    return EnergyLedger(kin, ela, dis, mem, rhs,
                        np.array(U) if keep_solution else None,
                        np.array(V) if keep_solution else None, defect, b is not None)


@dataclass
class Lemma3Report:
    holds: np.ndarray
    worst_margin: float
    violations: int
    estimated: bool

    @property
    def ok(self) -> bool:
        return self.violations == 0


def check_lemma3(ledger: EnergyLedger, params: LinearViscoParams | None = None,
                 rtol: float = 1e-12) -> Lemma3Report:
    """Per-step check of ``lhs <= rhs`` with a round-off allowance ``rtol * rhs``."""
    margin = ledger.rhs - ledger.lhs
    slack = rtol * np.maximum(ledger.rhs, np.finfo(float).tiny)
    holds = margin >= -slack
    return Lemma3Report(holds, float(margin.min()), int((~holds).sum()), ledger.estimated)


def random_trial(rng: np.random.Generator, series_of, n_x: int = 16, steps: int = 40,
                 dt: float | None = None, E: float | None = None):
    """One randomized case of the stated sweep.

    rho, E, eta ~ logU[0.1, 10], alpha ~ U[0.05, 0.95], dt ~ logU[1e-4, 1e-1],
    N in {3, 6, 9}, and v0 a random sine combination. ``series_of(alpha, N)``
    supplies the Prony series.
    """
    lu = lambda lo, hi: float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    rho, eta = lu(0.1, 10), lu(0.1, 10)
    E = lu(0.1, 10) if E is None else E
    alpha = float(rng.uniform(0.05, 0.95))
    N = int(rng.choice([3, 6, 9]))
    dt = lu(1e-4, 1e-1) if dt is None else dt
    x = np.linspace(0, 1, n_x + 1)[1:-1]
    modes = rng.normal(size=4) / np.arange(1, 5)
    v0 = sum(c * np.sin((j + 1) * np.pi * x) for j, c in enumerate(modes))
    u0 = 0.1 * rng.normal() * np.sin(np.pi * x)
    p = LinearViscoParams(rho, E, eta, series_of(alpha, N), n_x, UniformGrid(dt, steps))
    return p, u0, v0


def write_ledger_csv(path, rows, header: str | None = None) -> None:
    """rows: iterable of (trial, step, lhs, rhs, margin, violated); ``header``
    is an optional leading comment line."""
    import os
    import tempfile
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "step", "lhs", "rhs", "margin", "violated"])
        for tr, st, l, r, m, v in rows:
            w.writerow([tr, st, f"{l:.5e}", f"{r:.5e}", f"{m:.5e}", int(v)])
    os.chmod(tmp, 0o644)
    os.replace(tmp, path)
