import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracprony.core import Polynomial, SampleSeries, UniformGrid, caputo_polynomial, caputo_power_rule
from fracprony.cumulative import (diethelm_trapezoidal, diethelm_weights, gao_weights,
                                  gao_weights_derivative, gl_weights, grunwald_letnikov,
                                  midpoint_derivative)

ENGINES = {
    "mp": lambda f, a: midpoint_derivative(f, a),
    "gl": lambda f, a: grunwald_letnikov(f, a),
    "diethelm": lambda f, a: diethelm_trapezoidal(f, a, [f.values[0, 0]]),
    "gao": lambda f, a: gao_weights_derivative(f, a),
}


@pytest.mark.parametrize("name", ["mp", "diethelm", "gao"])
def test_constant_annihilated(name):
    f = SampleSeries(UniformGrid(0.01, 200), np.full((201, 2), 3.7))
    assert np.all(ENGINES[name](f, 0.4).values == 0.0)


def test_gl_constant_is_small_and_decays():
    # GL with the Caputo correction is not exact on constants; the residue decays with n
    f = SampleSeries(UniformGrid(0.01, 400), np.ones(401))
    v = np.abs(grunwald_letnikov(f, 0.4).values[1:, 0])
    assert v[-1] < v[9] < v[0]


def test_gl_weights_closed_form():
    a = 0.35
    w = gl_weights(a, 6)
    ref = [(-1) ** m * math.gamma(a + 1) / (math.gamma(m + 1) * math.gamma(a - m + 1)) for m in range(7)]
    assert np.allclose(w, ref, rtol=1e-12)


def test_gl_first_step_by_hand():
    a, dt = 0.5, 0.1
    f = SampleSeries(UniformGrid(dt, 3), np.array([2.0, 3.0, 5.0, 4.0]))
    got = grunwald_letnikov(f, a).values[1, 0]
    ref = dt**-a * (3.0 - a * 2.0) - dt**-a * 2.0 / math.gamma(1 - a)
    assert got == pytest.approx(ref, rel=1e-13)


@pytest.mark.parametrize("n", [1, 2, 5, 50, 1000])
@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_diethelm_weight_sum(n, alpha):
    assert diethelm_weights(alpha, n).sum() == pytest.approx((1 - alpha) * n ** (-alpha), rel=1e-10)


def test_gao_weights_monotone():
    a = gao_weights(0.5, 100)
    assert a[0] == 1.0 and np.all(np.diff(a) < 0) and np.all(a > 0)


def test_diethelm_linear_function():
    g = UniformGrid(1e-3, 1000)
    f = SampleSeries.sample(lambda t: t, g)
    out = diethelm_trapezoidal(f, 0.5, [0.0]).values[:, 0]
    assert abs(out[-1] - caputo_power_rule(1, 0.5, 1.0)) < 1e-3
    with pytest.raises(ValueError):
        diethelm_trapezoidal(f, 0.5, [0.0, 1.0])


@given(st.floats(-3, 3), st.floats(-3, 3), st.sampled_from(list(ENGINES)))
def test_linearity(a, b, name):
    g = UniformGrid(0.05, 20)
    t = g.times
    f1 = SampleSeries(g, np.sin(3 * t))
    f2 = SampleSeries(g, t**2 - t)
    fc = SampleSeries(g, a * np.sin(3 * t) + b * (t**2 - t))
    run = ENGINES[name]
    lhs = run(fc, 0.3).values
    rhs = a * run(f1, 0.3).values + b * run(f2, 0.3).values
    assert np.allclose(lhs, rhs, atol=1e-9)


@pytest.mark.parametrize("name", list(ENGINES))
def test_quadratic_ops_growth(name):
    ops = []
    for n in (1000, 2000):
        f = SampleSeries(UniformGrid(1.0 / n, n), np.linspace(0, 1, n + 1))
        ops.append(ENGINES[name](f, 0.4).ops)
    assert 3.6 <= ops[1] / ops[0] <= 4.4


@pytest.mark.parametrize("name", list(ENGINES))
@pytest.mark.parametrize("alpha", [0.1, 0.4, 0.8])
@pytest.mark.parametrize("poly", [(0, 0, 1), (1, 1, 1)])
def test_convergence_on_quadratic(name, alpha, poly):
    p = Polynomial(poly)
    errs = []
    for n in (200, 400, 800):
        f = SampleSeries.sample(p, UniformGrid(1.0 / n, n))
        out = ENGINES[name](f, alpha).values[-1, 0]
        errs.append(abs(out - caputo_polynomial(p, alpha, 1.0)))
    assert errs[2] < errs[1] < errs[0]
    assert math.log2(errs[1] / errs[2]) > 0.1


def test_expected_orders():
    p = Polynomial((0, 0, 1))
    a = 0.5
    def rate(name):
        e = []
        for n in (400, 800):
            f = SampleSeries.sample(p, UniformGrid(1.0 / n, n))
            e.append(abs(ENGINES[name](f, a).values[-1, 0] - caputo_polynomial(p, a, 1.0)))
        return math.log2(e[0] / e[1])
    assert rate("gl") == pytest.approx(1.0, abs=0.15)
    assert rate("gao") == pytest.approx(2 - a, abs=0.15)
    assert rate("diethelm") == pytest.approx(2 - a, abs=0.15)
