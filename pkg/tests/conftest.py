import numpy as np
import pytest

from levy_mfg import control
from levy_mfg.coupler import solve
from levy_mfg.harness.config import build_problem, preset


@pytest.fixture(scope="session")
def ex1():
    """Converged Example 1 run: ``(problem, solution, feedback)``."""
    problem = build_problem(preset("example1"))
    sol = solve(problem, tol=1e-12, max_iter=300)
    fc = control.build(sol.u, problem.eps, problem.ham, problem.control_exterior)
    return problem, sol, fc


@pytest.fixture(scope="session")
def ex1_quick():
    """Example 1 with h and rho four times coarser; cheap enough for structural tests."""
    cfg = preset("example1")
    cfg["params"]["h"] = cfg["params"]["rho"] = 0.02
    cfg.pop("stated")
    problem = build_problem(cfg)
    sol = solve(problem, tol=1e-10, max_iter=300)
    return problem, sol


@pytest.fixture(scope="session")
def ex3():
    """Converged Example 3 run: ``(problem, solution)``."""
    problem = build_problem(preset("example3"))
    return problem, solve(problem, tol=1e-12, max_iter=300)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
