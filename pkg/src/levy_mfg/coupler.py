"""Damped fixed-point iteration for the coupled HJB / FPK system."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from . import control as control_mod
from .errors import CFLViolation, MassMismatch, NoConvergence
from .fpk import DensityField, evolve
from .grid import Grid
from .hjb import CouplingCosts, Hamiltonian, ValueField, solve_backward
from .levy import LevyDiscretization, LevyMeasure, derive

logger = logging.getLogger(__name__)

DEFAULT_CFL_THRESHOLD = 5.0


@dataclass
class CFLReport:
    ratios: dict
    threshold: float = DEFAULT_CFL_THRESHOLD
    forced: bool = False

    @classmethod
    def compute(cls, rho, h, r, sigma, eps, threshold=DEFAULT_CFL_THRESHOLD, forced=False):
        ratios = {
            "rho^2/h": rho**2 / h,
            "h/r^sigma": h / r**sigma,
            "sqrt(h)/eps": math.sqrt(h) / eps,
        }
        return cls(ratios, threshold, forced)

    @property
    def violations(self) -> dict:
        return {k: v for k, v in self.ratios.items() if v > self.threshold}

    @property
    def ok(self) -> bool:
        return not self.violations

    def enforce(self) -> None:
        if self.violations and not self.forced:
            bad = ", ".join(f"{k}={v:.3g}" for k, v in self.violations.items())
            raise CFLViolation(f"CFL ratios above {self.threshold}: {bad}", report=self)
        if self.violations:
            logger.warning("CFL gate overridden: %s", self.violations)

    def as_dict(self) -> dict:
        return {"ratios": self.ratios, "threshold": self.threshold, "forced": self.forced, "ok": self.ok}


@dataclass
class MfgProblem:
    grid: Grid
    horizon: float
    h: float
    n_steps: int
    measure: LevyMeasure
    r: float
    eps: float
    disc: LevyDiscretization
    ham: Hamiltonian
    costs: CouplingCosts
    m0: np.ndarray
    ghost: float
    control_box: float
    cfl: CFLReport
    damping: float = 0.5
    control_exterior: str = "clamp"
    on_box: str = "refine"
    cost_time: str = "left"
    name: str = "custom"
    config: dict = field(default_factory=dict)

    @classmethod
    def build(cls, grid: Grid, horizon: float, h: float, measure: LevyMeasure, r: float, eps: float,
              ham: Hamiltonian, costs: CouplingCosts, m0: np.ndarray, ghost: float | None = None,
              control_box: float | None = None, cfl_threshold: float = DEFAULT_CFL_THRESHOLD,
              force: bool = False, walk: str = "consistent", **kw) -> "MfgProblem":
        """Snap ``h`` so that ``N h = T``, derive the jump data and gate on CFL."""
        n_steps = max(1, int(round(horizon / h)))
        h = horizon / n_steps
        cfl = CFLReport.compute(grid.rho, h, r, measure.sigma, eps, cfl_threshold, force)
        cfl.enforce()
        disc = derive(measure, r, grid, walk=walk)
        if ghost is None:
            ghost = exterior_value(costs, grid, horizon)
        if control_box is None:
            from .harness.constants import RegularityConstants

            rc = RegularityConstants.estimate(costs, ham, grid, horizon)
            control_box = rc.control_box(horizon)
        m0 = np.asarray(m0, dtype=float)
        return cls(grid, horizon, h, n_steps, measure, r, eps, disc, ham, costs, m0,
                   float(ghost), float(control_box), cfl, **kw)

    def frozen_flow(self) -> np.ndarray:
        return np.tile(self.m0, (self.n_steps + 1, 1))


def exterior_value(costs: CouplingCosts, grid: Grid, horizon: float, samples: int = 201) -> float:
    """``sup|G| + T sup|f|`` over the domain (coupling term excluded)."""
    xs = np.linspace(grid.a, grid.b, 4 * grid.n_cells + 1)
    ts = np.linspace(0.0, horizon, samples)
    fmax = float(np.max(np.abs(np.broadcast_to(costs.f(ts[:, None], xs[None, :]), (samples, len(xs))))))
    gmax = float(np.max(np.abs(np.broadcast_to(costs.g(xs), xs.shape))))
    return gmax + horizon * fmax


@dataclass
class FixedPointTrace:
    l1_change: list = field(default_factory=list)
    flat_change: list = field(default_factory=list)
    hjb_time: list = field(default_factory=list)
    fpk_time: list = field(default_factory=list)
    converged: bool = False
    mu: np.ndarray | None = None

    @property
    def iterations(self) -> int:
        return len(self.l1_change)

    def rows(self):
        for i, (a, b, c, d) in enumerate(zip(self.l1_change, self.flat_change, self.hjb_time, self.fpk_time)):
            yield {"iteration": i + 1, "l1_change": a, "flat_change": b, "hjb_seconds": c, "fpk_seconds": d}


class Solution(NamedTuple):
    u: ValueField
    m: DensityField
    trace: FixedPointTrace


def one_pass(problem: MfgProblem, mu) -> tuple[ValueField, DensityField]:
    u = solve_backward(mu, problem)
    fc = control_mod.build(u, problem.eps, problem.ham, problem.control_exterior)
    return u, evolve(problem.m0, fc, problem.disc)


def solve(problem: MfgProblem, tol: float = 1e-12, max_iter: int = 200, raise_on_failure: bool = True) -> Solution:
    """Iterate ``mu <- (1 - d) mu + d FPK(HJB(mu))`` from ``mu = m0`` until the sup-in-time L1 change is below ``tol``."""
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    d = problem.damping
    mu = problem.frozen_flow()
    trace = FixedPointTrace()
    u = m = None
    for _ in range(max_iter):
        t0 = time.perf_counter()
        if u is None or problem.costs.depends_on_density:
            u = solve_backward(mu, problem)
            recompute = True
        else:
            recompute = False
        t1 = time.perf_counter()
        if recompute:
            fc = control_mod.build(u, problem.eps, problem.ham, problem.control_exterior)
            m = evolve(problem.m0, fc, problem.disc)
        t2 = time.perf_counter()
        new = (1.0 - d) * mu + d * m.m
        diff = new - mu
        trace.l1_change.append(float(np.max(np.sum(np.abs(diff), axis=1))))
        trace.flat_change.append(float(max(w1_surrogate(new[k], mu[k], problem.grid.rho) for k in range(len(mu)))))
        trace.hjb_time.append(t1 - t0)
        trace.fpk_time.append(t2 - t1)
        mu = new
        if trace.l1_change[-1] <= tol:
            trace.converged = True
            break
    trace.mu = mu
    m.meta["iterations"] = trace.iterations
    if not trace.converged and raise_on_failure:
        raise NoConvergence(
            f"no convergence after {max_iter} iterations (last change {trace.l1_change[-1]:.3e})", trace
        )
    return Solution(u, m, trace)


def w1_surrogate(m1, m2, rho: float) -> float:
    """``min(W1, 2)`` from the CDF difference on a common lattice."""
    return min(rho * float(np.sum(np.abs(np.cumsum(np.asarray(m1) - np.asarray(m2))[:-1]))), 2.0)


def flat_distance(m1, m2, rho: float, exact: bool = True, mass_tol: float = 1e-2) -> float:
    """Bounded-Lipschitz distance between two lattice measures on a common grid.

    The exact value solves ``max sum f_i (m1_i - m2_i)`` over ``|f_i| <= 1`` and
    ``|f_{i+1} - f_i| <= rho``.
    """
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    if m1.shape != m2.shape:
        raise ValueError("measures live on different grids")
    if abs(m1.sum() - m2.sum()) > mass_tol:
        raise MassMismatch(f"masses differ by {abs(m1.sum() - m2.sum()):.3e}")
    if not exact:
        return w1_surrogate(m1, m2, rho)
    d = m1 - m2
    n = len(d)
    if n == 1 or not np.any(d):
        return float(abs(d.sum()))
    D = sparse.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")
    A = sparse.vstack([D, -D], format="csr")
    b = np.full(2 * (n - 1), rho)
    res = linprog(-d, A_ub=A, b_ub=b, bounds=[(-1.0, 1.0)] * n, method="highs")
    if not res.success:
        raise RuntimeError(f"flat distance LP failed: {res.message}")
    return float(-res.fun)
