import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from levy_mfg.control import FeedbackControl, constant_control
from levy_mfg.errors import NegativeMass
from levy_mfg.fpk import (DensityField, backward_apply, evolve, generator_at_nodes, initial_masses, kernel,
                          weak_form_defect)
from levy_mfg.grid import Grid
from levy_mfg.harness.metrics import fitted_order
from levy_mfg.levy import LevyMeasure, derive
from levy_mfg.testfn import bump

G = Grid.uniform(0.0, 1.0, 0.02)
H = 0.02
JUMPS = derive(LevyMeasure.fractional(1.5, 0.0081), H ** (1 / 3), G)
ONE_SIDED = derive(LevyMeasure.one_sided(1.2, -1, 0.05), H ** (1 / 3), G)
ZERO = derive(LevyMeasure.zero(), 0.3, G)

controls = arrays(np.float64, (2, G.n_nodes), elements=st.floats(-3.0, 3.0))


@settings(max_examples=40, deadline=None)
@given(controls, arrays(np.float64, G.n_nodes, elements=st.floats(-1.0, 1.0)), st.sampled_from([0, 1]))
def test_kernel_is_dual_to_interpolation(alpha, phi, k):
    for disc in (JUMPS, ONE_SIDED):
        fc = FeedbackControl(alpha, G, H, 0.1)
        B = kernel(fc, disc, k).dense()
        np.testing.assert_allclose(phi @ B, backward_apply(fc, disc, k, phi), atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(controls)
def test_columns_are_stochastic_with_the_sink(alpha):
    fc = FeedbackControl(alpha, G, H, 0.1)
    for disc in (JUMPS, ONE_SIDED, ZERO):
        B = kernel(fc, disc, 0)
        assert B.dense().min() >= 0.0 and B.leak.min() >= -1e-15
        np.testing.assert_allclose(B.column_sums() + B.leak, 1.0, atol=1e-13)
        np.testing.assert_allclose(B.row_sums(), B.dense().sum(axis=1), atol=1e-13)


def test_identity_kernel_without_noise_or_control():
    fc = constant_control(G, H, 1, 0.0)
    np.testing.assert_allclose(kernel(fc, ZERO, 0).dense(), np.eye(G.n_nodes), atol=1e-13)


def test_shift_kernel_moves_mass_one_cell():
    fc = constant_control(G, H, 3, -G.rho / H)  # drift +rho/h: one cell right per step
    m0 = np.zeros(G.n_nodes)
    m0[10] = 0.25
    m0[-1] = 0.75
    m = evolve(m0, fc, ZERO)
    assert m.m[3, 13] == pytest.approx(0.25, abs=1e-14)
    assert m.m[1].sum() == pytest.approx(0.25, abs=1e-14)
    np.testing.assert_allclose(m.leak, [0.75, 0.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(m.accounted_mass(), 1.0, atol=1e-14)


def test_evolution_conserves_accounted_mass_and_positivity(rng):
    fc = FeedbackControl(rng.normal(size=(25, G.n_nodes)), G, H, 0.1)
    m0 = initial_masses(G, lambda x: np.exp(-((x - 0.4) ** 2) / 0.02))
    m = evolve(m0, fc, JUMPS)
    assert m.m.min() >= 0.0
    np.testing.assert_allclose(m.accounted_mass(), 1.0, atol=1e-13)
    assert np.all(np.diff(m.mass()) <= 1e-15)


def test_initial_masses_are_exact_cell_integrals():
    # degree-4 polynomial: Gauss-Legendre with five points is exact on every half cell
    poly = np.polynomial.Polynomial([0.3, -1.0, 2.0, 0.5, 1.0])
    prim = poly.integ()
    m = initial_masses(G, poly, normalize=False)
    edges = np.clip(G.cell_edges(), G.a, G.b)
    np.testing.assert_allclose(m, prim(edges[1:]) - prim(edges[:-1]), rtol=1e-13)
    # indicators with jumps at nodes are integrated exactly as well
    ind = initial_masses(G, lambda x: ((x >= 0.3) & (x <= 0.6)).astype(float), normalize=False)
    assert ind.sum() == pytest.approx(0.3, abs=1e-14)
    assert ind[15] == pytest.approx(G.rho / 2) and ind[16] == pytest.approx(G.rho)
    norm = initial_masses(G, poly)
    assert norm.sum() == pytest.approx(1.0, abs=1e-14)


def test_negative_mass_is_rejected():
    with pytest.raises(NegativeMass):
        initial_masses(G, lambda x: x - 0.5)
    with pytest.raises(NegativeMass):
        evolve(-np.ones(G.n_nodes), constant_control(G, H, 1, 0.0), ZERO)
    with pytest.raises(ValueError):
        initial_masses(G, lambda x: 0 * x)


def test_density_field_norms_and_csv(tmp_path):
    g = Grid.uniform(0.0, 1.0, 0.25)
    m = DensityField(np.array([[0.0, 0.5, 0.5, 0.0, 0.0]]), g, 0.1)
    assert m.lp_norm(0, np.inf) == pytest.approx(2.0)
    assert m.lp_norm(0, 1) == pytest.approx(1.0)
    assert m.lp_norm(0, 2) == pytest.approx(np.sqrt(2 * 4 * 0.25))
    m.to_csv(tmp_path / "m.csv")
    rows = np.genfromtxt(tmp_path / "m.csv", delimiter=",", names=True)
    np.testing.assert_allclose(rows["density"], [0, 2, 2, 0, 0])


def test_weak_form_defect_decreases_with_h():
    mu = LevyMeasure.fractional(1.5, 0.0081)
    phi = bump(0.5, 0.3).at(0.0)
    powers = range(5, 9)
    fine = Grid.uniform(0.0, 1.0, 2.0 ** -max(powers))
    gen_fine = generator_at_nodes(mu, phi, fine.nodes)
    hs, defects = [], []
    for p in powers:
        h = 2.0**-p
        g = Grid.uniform(0.0, 1.0, h)
        n = int(round(0.5 / h))
        fc = FeedbackControl(np.tile(0.3 * np.sin(2 * np.pi * g.nodes), (n, 1)), g, h, 0.1)
        m = evolve(initial_masses(g, lambda x: np.exp(-((x - 0.5) ** 2) / 0.01)), fc, derive(mu, h ** (1 / 3), g))
        gen = gen_fine[:: 2 ** (max(powers) - p)]
        hs.append(h)
        defects.append(weak_form_defect(m, fc, phi, mu, gen))
    defects = np.array(defects)
    assert np.all(defects[:-1] / defects[1:] > 1.5)
    assert fitted_order(hs, defects) >= 0.8
