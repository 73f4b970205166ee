import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracprony.fde import (FdeProblem, Tridiagonal, analytic_solution, assemble_fe, convergence_study,
                           load_vector, solve_fde_gao, solve_fde_prony, thomas)
from fracprony.optimizer import series_for


def test_assembly_row_sums():
    M, K = assemble_fe(8)
    Kd, Md = K.dense(), M.dense()
    assert np.allclose(Kd[1:-1].sum(1), 0.0)
    assert np.allclose(Md[1:-1].sum(1), 1 / 8)
    assert Md.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        assemble_fe(1)


def test_single_interior_node():
    _, K = assemble_fe(2)
    # -u'' = 2 with u(0) = u(1) = 0; the load at the middle node is int 2 phi = h * 2
    u_mid = (2 * 0.5) / K.dense()[1, 1]
    assert u_mid == pytest.approx(0.25)


def test_load_vector_integrates_exactly_for_linear_source():
    p = FdeProblem(0.5, 4, 1, f=lambda x, t, a: 1.0 + x)
    F = load_vector(p, 0.3)
    assert F.sum() == pytest.approx(1.5, rel=1e-14)


def test_analytic_examples():
    assert analytic_solution(0.0, 1.0, 0.5) == pytest.approx(1.0)
    assert analytic_solution(1.0, 0.7, 0.3) == 0.0
    assert analytic_solution(0.5, 0.0, 0.5) == pytest.approx(0.00390625)


def test_source_consistent_with_solution():
    # D^a u - u_xx = f, with D^a t^{3+a} = Gamma(4+a)/6 t^3
    a, x, t, h = 0.5, 0.37, 0.8, 1e-4
    from fracprony.fde import source
    u = lambda x: analytic_solution(x, t, a)
    uxx = (u(x + h) - 2 * u(x) + u(x - h)) / h**2
    dt_u = (x - 1) ** 4 * math.exp(-x) * math.gamma(4 + a) / 6 * t**3
    assert source(x, t, a) == pytest.approx(dt_u - uxx, rel=1e-6)


def _zero_problem(a, nx, nt):
    return FdeProblem(a, nx, nt, f=lambda x, t, a: 0 * x, left=lambda t: 0.0, right=lambda t: 0.0,
                      initial=lambda x: 0 * x)


def test_zero_problem_gives_zero():
    s = series_for(0.5, 3)
    p = _zero_problem(0.5, 10, 20)
    assert np.all(solve_fde_prony(p, s, keep_history=True).history == 0)
    assert np.all(solve_fde_gao(p, keep_history=True).history == 0)


def test_inject_exact_gives_zero_error():
    s = series_for(0.5, 3)
    p = FdeProblem(0.5, 10, 20)
    assert solve_fde_prony(p, s, inject_exact=True).error == 0.0
    assert solve_fde_gao(p, inject_exact=True).error == 0.0
    tab = convergence_study("time", "gao", 0.5, [5, 10], 10, inject_exact=True)
    assert tab.errors == [0.0, 0.0]


def test_dirichlet_values_exact():
    s = series_for(0.5, 6, scale=100)
    p = FdeProblem(0.5, 16, 10)
    sol = solve_fde_prony(p, s, keep_history=True)
    t = p.grid.times
    assert np.allclose(sol.history[:, 0], t**3.5, rtol=0, atol=1e-15)
    assert np.all(sol.history[:, -1] == 0.0)


@given(st.integers(2, 40), st.integers(0, 10_000))
def test_thomas_matches_lapack(n, seed):
    r = np.random.default_rng(seed)
    lo, up = r.uniform(-1, 1, n - 1), r.uniform(-1, 1, n - 1)
    d = 3 + r.uniform(0, 1, n)        # diagonally dominant
    b = r.normal(size=n)
    A = Tridiagonal(lo, d, up)
    x = A.factor().solve(b)
    assert np.allclose(thomas(lo, d, up, b), x, rtol=1e-10, atol=1e-12)
    assert np.allclose(A @ x, b, atol=1e-10)


def test_prony_memory_independent_of_steps():
    s = series_for(0.5, 6, scale=100)
    small = solve_fde_prony(FdeProblem(0.5, 20, 10), s).state_bytes
    big = solve_fde_prony(FdeProblem(0.5, 20, 400), s).state_bytes
    assert small == big
    g1 = solve_fde_gao(FdeProblem(0.5, 20, 10)).state_bytes
    g2 = solve_fde_gao(FdeProblem(0.5, 20, 40)).state_bytes
    assert g2 > 3 * g1


def test_discrete_maximum_principle_for_heat_like_data():
    # positive source and zero data: the solution stays nonnegative
    p = FdeProblem(0.5, 20, 40, f=lambda x, t, a: 1.0 + 0 * x, left=lambda t: 0.0, right=lambda t: 0.0,
                   initial=lambda x: 0 * x)
    sol = solve_fde_gao(p, keep_history=True)
    assert sol.history.min() >= -1e-12
    assert sol.history[-1].max() <= 1 / 8 + 1e-12


def test_gao_temporal_cell():
    sol = solve_fde_gao(FdeProblem(0.5, 20000, 10))
    assert sol.error == pytest.approx(8.48e-4, rel=0.2)


def test_prony_temporal_cell_order_of_magnitude():
    sol = solve_fde_prony(FdeProblem(0.5, 20000, 10), series_for(0.5, 3, scale=100))
    assert 2.13e-4 < sol.error < 2.13e-2


def test_prony_spatial_cell():
    s = series_for(0.5, 6, scale=100)
    tab = convergence_study("space", "prony", 0.5, [10, 20], 20000, s, norm="l2")
    assert tab.errors[0] == pytest.approx(6.02e-3, rel=0.2)
    assert tab.errors[1] == pytest.approx(1.50e-3, rel=0.2)
    assert tab.rates[0] == pytest.approx(2.0, abs=0.15)


def test_gao_spatial_cell():
    tab = convergence_study("space", "gao", 2 / 3, [10, 20], 2000, norm="l2")
    assert tab.rates[0] == pytest.approx(1.99, abs=0.15)
    # the reference 1.37e-2 comes from a finite-difference discretization; same order of magnitude here
    assert 1.37e-3 < tab.errors[0] < 1.37e-1


def test_study_validation():
    with pytest.raises(ValueError):
        convergence_study("time", "gao", 0.5, [10], 10)
    with pytest.raises(ValueError):
        convergence_study("depth", "gao", 0.5, [10, 20], 10)
    with pytest.raises(ValueError):
        convergence_study("time", "prony", 0.5, [10, 20], 10)
    with pytest.raises(ValueError):
        solve_fde_prony(FdeProblem(0.4, 4, 4), series_for(0.5, 3))
    with pytest.raises(ValueError):
        FdeProblem(0.5, 1, 4)
