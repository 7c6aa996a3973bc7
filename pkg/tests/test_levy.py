import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from levy_mfg.errors import DegenerateIntensity, InvalidTruncation, NonIntegrableMeasure
from levy_mfg.grid import Grid
from levy_mfg.levy import (LevyMeasure, _hat_weight, derive, fractional_constant, generator_quad,
                           weight_row_sum_check)
from levy_mfg.testfn import SmoothFunction

EX1_R = 0.005 ** (1 / 3)
UNIT = Grid.uniform(0.0, 1.0, 0.005)


def _quad_side(f, lo, hi, pts=()):
    pts = [p for p in pts if lo < p < hi]
    return quad(f, lo, hi, points=pts or None, limit=400, epsabs=1e-14, epsrel=1e-13)[0]


def test_fractional_constant_matches_mpmath():
    for s in (0.5, 1.0, 1.5, 1.9):
        ref = s * 2 ** (s - 1) * mpmath.gamma((1 + s) / 2) / (mpmath.sqrt(mpmath.pi) * mpmath.gamma(1 - s / 2))
        assert fractional_constant(s) == pytest.approx(float(ref), rel=1e-14)
    assert fractional_constant(1.0) == pytest.approx(1 / math.pi, rel=1e-14)


@pytest.mark.parametrize("s", [0.5, 1.0, 1.5])
def test_fractional_constant_gives_unit_symbol(s):
    # int (1 - cos z) c_s / |z|^{1+s} dz = 1, the symbol |xi|^s at xi = 1
    c = fractional_constant(s)
    near = quad(lambda z: 2 * c * (1 - math.cos(z)) / z ** (1 + s), 0, 1, limit=200)[0]
    far = quad(lambda z: 2 * c / z ** (1 + s), 1, math.inf)[0]
    far -= 2 * c * quad(lambda z: z ** (-1 - s), 1, math.inf, weight="cos", wvar=1.0)[0]
    assert near + far == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("order", [0.0, 2.0, -1.0, 2.5])
def test_order_outside_range_is_not_integrable(order):
    with pytest.raises(NonIntegrableMeasure):
        LevyMeasure.fractional(order)


def test_zero_measure():
    d = derive(LevyMeasure.zero(), 0.3, UNIT)
    assert d.sigma_r == d.b_r == d.lambda_r == 0.0
    assert not np.any(d.weights) and d.tail_mass == 0.0
    with pytest.raises(DegenerateIntensity):
        weight_row_sum_check(d)


@pytest.mark.parametrize("r", [0.0, -0.1, 1.5])
def test_invalid_truncation(r):
    with pytest.raises(InvalidTruncation):
        derive(LevyMeasure.fractional(1.5), r, UNIT)


def test_unknown_walk_rejected():
    with pytest.raises(ValueError):
        derive(LevyMeasure.fractional(1.5), 0.2, UNIT, walk="other")


@settings(max_examples=20, deadline=None)
@given(st.floats(0.3, 1.9), st.floats(0.01, 1.0), st.floats(0.01, 3.0))
def test_fractional_closed_forms_against_quadrature(s, r, mult):
    mu = LevyMeasure.fractional(s, mult)
    c = mult * fractional_constant(s)
    d = derive(mu, r, Grid.uniform(0.0, 1.0, 0.05))
    lam = 2 * _quad_side(lambda z: c * z ** (-1 - s), r, 1) + 2 * _quad_side(lambda z: c * z ** (-1 - s), 1, math.inf)
    var = _quad_side(lambda z: c * z ** (1 - s), 0, r)
    assert d.lambda_r == pytest.approx(2 * c * r ** (-s) / s, rel=1e-12)
    assert d.lambda_r == pytest.approx(lam, rel=1e-10)
    assert d.sigma_r**2 == pytest.approx(c * r ** (2 - s) / (2 - s), rel=1e-12)
    assert d.sigma_r**2 == pytest.approx(var, rel=1e-10)
    assert d.b_r == 0.0


def test_cgmy_quantities_against_quadrature():
    mu = LevyMeasure.cgmy(1.0, 1.0, 10.0, 1.5)
    r = EX1_R
    d = derive(mu, r, UNIT)
    k = lambda z: math.exp(-1.0 * z) / z**2.5 if z > 0 else math.exp(-10.0 * -z) / (-z) ** 2.5  # noqa: E731
    lam = sum(_quad_side(lambda y: k(sg * y), r, 1) + _quad_side(lambda y: k(sg * y), 1, math.inf) for sg in (1, -1))
    var = 0.5 * sum(_quad_side(lambda y: y * y * k(sg * y), 0, r) for sg in (1, -1))
    b = _quad_side(lambda y: y * k(y), r, 1) - _quad_side(lambda y: y * k(-y), r, 1)
    assert d.lambda_r == pytest.approx(lam, rel=1e-10)
    assert d.sigma_r**2 == pytest.approx(var, rel=1e-10)
    assert d.b_r == pytest.approx(b, rel=1e-10)
    assert d.b_r > 0  # lighter tempering on the positive side


def test_weight_identity_example1():
    d = derive(LevyMeasure.fractional(1.5, 0.09**2), EX1_R, UNIT)
    assert weight_row_sum_check(d) <= 1e-10


def test_weight_identity_cgmy():
    d = derive(LevyMeasure.cgmy(1.0, 1.0, 10.0, 1.5), EX1_R, UNIT)
    assert weight_row_sum_check(d) <= 1e-8


@pytest.mark.parametrize("measure", [
    LevyMeasure.fractional(1.5, 0.0081),
    LevyMeasure.cgmy(1.0, 1.0, 10.0, 1.5),
    LevyMeasure.truncated(1.5, 0.5),
    LevyMeasure.one_sided(1.5, 1),
    LevyMeasure.one_sided(0.7, -1),
])
def test_vectorised_weights_match_adaptive_quadrature(measure):
    g = Grid.uniform(0.0, 1.0, 0.02)
    r = 0.13
    d = derive(measure, r, g)
    for j in (-60, -7, -6, -1, 0, 1, 6, 7, 25, 200, 499):
        assert d.weight(j) == pytest.approx(_hat_weight(measure, j, g.rho, r), rel=1e-10, abs=1e-15)


def test_one_sided_and_truncated_supports():
    g = Grid.uniform(0.0, 1.0, 0.02)
    pos = derive(LevyMeasure.one_sided(1.5, 1), 0.1, g)
    assert not np.any(pos.weights[pos.offsets < 0])
    band = derive(LevyMeasure.truncated(1.5, 0.5), 0.1, g)
    # jumps inside the excluded band are absent: no small-jump variance either
    assert not np.any(band.weights[np.abs(band.offsets) * g.rho < 0.5 - g.rho])
    assert np.all(band.weights[np.abs(band.offsets) * g.rho > 0.5 + g.rho] > 0)
    assert band.sigma_r == 0.0


def test_weights_are_symmetric_for_symmetric_measure():
    d = derive(LevyMeasure.fractional(1.5), 0.1, Grid.uniform(0.0, 1.0, 0.02))
    np.testing.assert_allclose(d.weights, d.weights[::-1], rtol=1e-13)


def test_domain_operator_rows():
    g = Grid.uniform(0.0, 1.0, 0.05)
    d = derive(LevyMeasure.fractional(1.5, 0.0081), 0.2, g)
    W, out = d.domain_operator(g.n_nodes)
    np.testing.assert_allclose(W.sum(axis=1) + out, d.table_mass, rtol=1e-14)
    assert W[3, 5] == d.weight(2) and W[5, 3] == d.weight(-2)


def test_walk_variants():
    g = Grid.uniform(0.0, 1.0, 0.05)
    mu = LevyMeasure.fractional(1.5)
    a = derive(mu, 0.2, g)
    b = derive(mu, 0.2, g, walk="literal")
    assert a.walk_step(0.01) == pytest.approx(math.sqrt(2) * b.walk_step(0.01))
    assert b.walk_step(0.01) == pytest.approx(0.1 * b.sigma_r)


def test_weights_csv_roundtrip(tmp_path):
    g = Grid.uniform(0.0, 1.0, 0.1)
    d = derive(LevyMeasure.fractional(1.5), 0.3, g)
    p = tmp_path / "w.csv"
    d.to_csv(p)
    rows = np.genfromtxt(p, delimiter=",", names=True)
    np.testing.assert_array_equal(rows["j"], d.offsets)
    np.testing.assert_allclose(rows["omega_j"], d.weights, rtol=1e-15)


# ---- generator oracle and small-jump substitution -------------------------------------------

PHI = SmoothFunction("exp(-x**2)*cos(3*x)").at(0.0)


def test_generator_quad_on_fourier_mode():
    # (-(-Delta)^{s/2}) cos(k x) = -|k|^s cos(k x)
    phi = SmoothFunction("cos(2*x)").at(0.0)
    s = 1.5
    val = generator_quad(LevyMeasure.fractional(s), phi, 0.3)
    assert val == pytest.approx(-(2**s) * math.cos(0.6), rel=1e-8)


def test_generator_parts_add_up():
    mu = LevyMeasure.cgmy(1.0, 1.0, 10.0, 1.5)
    r = 0.2
    full = generator_quad(mu, PHI, 0.1)
    inner = generator_quad(mu, PHI, 0.1, r, "inner")
    outer = generator_quad(mu, PHI, 0.1, r, "outer")
    assert full == pytest.approx(inner + outer, rel=1e-9)
    # uncompensated large jumps differ from the compensated part by the drift b_r phi'
    d = derive(mu, r, UNIT)
    x = 0.1
    k = lambda z: math.exp(-z) / z**2.5 if z > 0 else math.exp(10.0 * z) / (-z) ** 2.5  # noqa: E731
    raw = sum(_quad_side(lambda y: (float(PHI(x + sg * y)) - float(PHI(x))) * k(sg * y), r, 60.0)
              for sg in (1, -1))
    raw -= float(PHI(x)) * sum(_quad_side(lambda y: k(sg * y), 60.0, math.inf) for sg in (1, -1))
    assert raw == pytest.approx(outer + d.b_r * float(PHI.d1(x)), rel=1e-9)


def _substitution_order(mu, x=0.3):
    rs = 2.0 ** -np.arange(2, 8)
    errs = []
    for r in rs:
        d = derive(mu, r, Grid.uniform(-1.0, 1.0, 0.01))
        errs.append(abs(generator_quad(mu, PHI, x, r, "inner") - d.sigma_r**2 * float(PHI.d2(x))))
    return float(np.polyfit(np.log(rs), np.log(errs), 1)[0])


@pytest.mark.parametrize("s", [0.8, 1.2, 1.5])
def test_small_jump_substitution_order_symmetric(s):
    assert _substitution_order(LevyMeasure.fractional(s)) >= (4 - s) - 0.2


@pytest.mark.parametrize("s", [0.8, 1.5])
def test_small_jump_substitution_order_one_sided(s):
    assert _substitution_order(LevyMeasure.one_sided(s, 1)) >= (3 - s) - 0.2
