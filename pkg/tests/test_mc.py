import dataclasses
import math

import numpy as np
import pytest

from levy_mfg.control import FeedbackControl, constant_control
from levy_mfg.coupler import flat_distance
from levy_mfg.errors import DegenerateIntensity
from levy_mfg.fpk import evolve, initial_masses
from levy_mfg.grid import Grid
from levy_mfg.levy import LevyMeasure, derive
from levy_mfg.mc_validate import SimConfig, jump_sampler_check, sample_initial, sample_jumps, simulate

G = Grid.uniform(0.0, 1.0, 0.01)
H = 0.01
FRAC = derive(LevyMeasure.fractional(1.5, 0.0081), H ** (1 / 3), G)


def _walk_only(disc):
    """The same discretization with the large jumps switched off."""
    return dataclasses.replace(disc, lambda_r=0.0, weights=np.zeros_like(disc.weights), tail_mass=0.0, _cache={})


def test_config_validation():
    fc = constant_control(G, H, 3, 0.0)
    with pytest.raises(ValueError):
        SimConfig(0, 1, fc, FRAC)
    with pytest.raises(ValueError):
        SimConfig(10, 1, fc, FRAC, chunk=0)
    assert SimConfig(10, 1, fc, FRAC).n_steps == 3


def test_paths_stand_still_without_noise_or_control():
    zero = derive(LevyMeasure.zero(), 0.3, G)
    m0 = initial_masses(G, lambda x: np.exp(-((x - 0.5) ** 2) / 0.01))
    flow = simulate(SimConfig(5000, 3, constant_control(G, H, 10, 0.0), zero), m0)
    np.testing.assert_array_equal(flow.m, np.tile(flow.m[0], (11, 1)))
    assert not flow.escaped.any() and not flow.jumps.any()
    np.testing.assert_array_equal(flow.moves, 5000)


def test_walk_variance_grows_linearly():
    fine = Grid.uniform(0.0, 1.0, 0.002)
    disc = _walk_only(derive(LevyMeasure.fractional(1.5, 0.0081), H ** (1 / 3), fine))
    w = disc.walk_step(H)
    n, steps = 20000, 25
    flow = simulate(SimConfig(n, 11, constant_control(fine, H, steps, 0.0), disc), lambda k, rng: np.full(k, 0.5))
    x = fine.nodes
    assert fine.rho**2 < 0.1 * w**2
    for k in (5, 15, 25):
        var = float(flow.m[k] @ (x - 0.5) ** 2)
        # binning to nodes moves each path by at most rho/2
        sd = w**2 * k * math.sqrt(2.0 / n)
        assert abs(var - w**2 * k) < 4 * sd + fine.rho**2


def test_drift_follows_the_control():
    disc = _walk_only(FRAC)
    fc = constant_control(G, H, 20, -0.5)
    flow = simulate(SimConfig(20000, 5, fc, disc), lambda k, rng: np.full(k, 0.3))
    m = flow.m[20]
    # drift is -alpha = +0.5 over t = 0.2
    assert float(m @ G.nodes) / m.sum() == pytest.approx(0.4, abs=2 * G.rho)


def test_seeded_runs_are_reproducible():
    m0 = initial_masses(G, lambda x: 1.0 + 0 * x)
    fc = constant_control(G, H, 8, 0.1)
    a = simulate(SimConfig(3000, 42, fc, FRAC, chunk=1000), m0)
    b = simulate(SimConfig(3000, 42, fc, FRAC, chunk=1000), m0)
    c = simulate(SimConfig(3000, 43, fc, FRAC, chunk=1000), m0)
    np.testing.assert_array_equal(a.m, b.m)
    np.testing.assert_array_equal(a.jumps, b.jumps)
    assert not np.array_equal(a.m, c.m)
    assert a.meta["n_chunks"] == 3


def test_every_live_path_moves_or_jumps_once_per_step():
    m0 = initial_masses(G, lambda x: 1.0 + 0 * x)
    n = 4000
    flow = simulate(SimConfig(n, 9, constant_control(G, H, 30, 0.0), FRAC), m0)
    alive = np.rint(flow.alive() * n).astype(int)
    np.testing.assert_array_equal(flow.jumps + flow.moves, alive[:-1])
    np.testing.assert_allclose(flow.alive() + flow.escaped, 1.0, atol=1e-12)
    # jump frequency matches 1 - exp(-h lambda_r)
    p = -math.expm1(-H * FRAC.lambda_r)
    total = (flow.jumps + flow.moves).sum()
    assert abs(flow.jumps.sum() / total - p) < 4 * math.sqrt(p * (1 - p) / total)


def test_one_sided_jumps_never_go_left():
    disc = derive(LevyMeasure.one_sided(1.5, 1), 0.2, G)
    draws = sample_jumps(disc, 100000, np.random.default_rng(0))
    assert draws.min() >= 0.0
    neg = derive(LevyMeasure.one_sided(1.5, -1), 0.2, G)
    assert sample_jumps(neg, 1000, np.random.default_rng(0)).max() <= 0.0


def test_two_atom_table_is_fair():
    weights = np.zeros_like(FRAC.weights)
    J = FRAC.half_width
    weights[J - 20] = weights[J + 20] = 3.0
    disc = dataclasses.replace(FRAC, weights=weights, lambda_r=6.0, tail_mass=0.0, _cache={})
    n = 200000
    draws = sample_jumps(disc, n, np.random.default_rng(1))
    assert set(np.round(np.unique(draws), 12)) == {-0.2, 0.2}
    assert abs(np.mean(draws > 0) - 0.5) < 3 * math.sqrt(0.25 / n)


def test_sampler_matches_the_table():
    assert jump_sampler_check(FRAC, 10**6, seed=0) <= 0.005
    with pytest.raises(DegenerateIntensity):
        sample_jumps(derive(LevyMeasure.zero(), 0.3, G), 10, np.random.default_rng(0))


def test_initial_sampler_matches_masses(rng):
    m0 = initial_masses(G, lambda x: np.exp(-((x - 0.3) ** 2) / 0.02))
    x = sample_initial(m0, G, 200000, rng)
    assert x.min() >= G.a and x.max() <= G.b
    hist = np.bincount(np.searchsorted(G.cell_edges(), x, side="right") - 1, minlength=G.n_nodes) / len(x)
    assert np.max(np.abs(hist - m0)) < 5 * math.sqrt(m0.max() / len(x))
    with pytest.raises(ValueError):
        sample_initial(-m0, G, 10, rng)


def test_simulation_agrees_with_the_fpk_scheme():
    n_steps = 50
    fc = FeedbackControl(np.tile(0.5 * np.sin(2 * np.pi * G.nodes), (n_steps, 1)), G, H, 0.1)
    m0 = initial_masses(G, lambda x: np.exp(-((x - 0.5) ** 2) / 0.01))
    fpk = evolve(m0, fc, FRAC)
    mc = simulate(SimConfig(100000, 20240601, fc, FRAC), m0)
    worst = max(flat_distance(mc.m[k], fpk.m[k], G.rho, mass_tol=0.05) for k in range(0, n_steps + 1, 5))
    assert worst < 0.01
    np.testing.assert_allclose(mc.alive(), fpk.mass(), atol=0.01)


def test_flow_csv(tmp_path):
    flow = simulate(SimConfig(100, 1, constant_control(G, H, 2, 0.0), FRAC),
                    initial_masses(G, lambda x: 1.0 + 0 * x))
    flow.to_csv(tmp_path / "mc.csv")
    rows = np.genfromtxt(tmp_path / "mc.csv", delimiter=",", names=True)
    assert len(rows) == 3 * G.n_nodes
