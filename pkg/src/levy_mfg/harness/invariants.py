"""Executable structural and a-priori checks on a problem and its solution.

Every check returns a :class:`Check` holding the measured quantity, the bound
it must respect and the verdict, so the same code backs the test suite and the
``check-invariants`` command.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .. import control as control_mod
from ..fpk import DensityField, kernel
from ..hjb import SLOperator, ValueField, solve_backward
from ..levy import LevyDiscretization, weight_row_sum_check
from .constants import RegularityConstants


@dataclass
class Check:
    name: str
    value: float
    bound: float
    ok: bool

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"{status} {self.name}: {self.value:.3e} (bound {self.bound:.3e})"

    def as_dict(self) -> dict:
        return asdict(self)


def _le(name, value, bound) -> Check:
    return Check(name, float(value), float(bound), bool(value <= bound))


def _operator(problem, ghost_shift: float = 0.0) -> SLOperator:
    return SLOperator(problem.grid, problem.disc, problem.ham, problem.h,
                      problem.ghost + ghost_shift, problem.control_box, on_box="ignore")


def random_fields(problem, n: int, rng: np.random.Generator) -> np.ndarray:
    """Random value fields of the size the operator sees: smooth trends plus noise."""
    x = problem.grid.nodes
    span = max(abs(problem.ghost), 1.0)
    out = np.empty((n, len(x)))
    for k in range(n):
        c = rng.normal(size=4)
        trend = c[0] + c[1] * x + c[2] * x**2 + c[3] * np.sin(2 * np.pi * x)
        out[k] = span * 0.1 * (trend + 0.1 * rng.normal(size=len(x)))
    return out


def hjb_monotonicity(problem, n_fields: int = 100, seed: int = 0, tol: float = 1e-12) -> Check:
    """``v <= w`` implies ``S v <= S w``: the worst ``max(S v - S w)`` over random pairs."""
    rng = np.random.default_rng(seed)
    op = _operator(problem)
    F = problem.costs.running(problem.grid, 0.0, problem.m0)
    worst = -math.inf
    scale = 1.0
    for v in random_fields(problem, n_fields, rng):
        w = v + np.abs(rng.normal(size=v.shape)) * (rng.random(v.shape) < 0.3)
        sv, sw = op.apply(v, F)[0], op.apply(w, F)[0]
        worst = max(worst, float(np.max(sv - sw)))
        scale = max(scale, float(np.max(np.abs(sv))))
    return _le("hjb monotonicity", worst, tol * scale)


def hjb_commutation(problem, n_fields: int = 100, seed: int = 1, tol: float = 1e-12) -> Check:
    """``S(v + c) = S v + c`` when the exterior value is shifted by the same ``c``."""
    rng = np.random.default_rng(seed)
    op = _operator(problem)
    F = problem.costs.running(problem.grid, 0.0, problem.m0)
    worst = 0.0
    scale = 1.0
    for v in random_fields(problem, n_fields, rng):
        c = float(rng.normal()) * 10.0
        shifted = _operator(problem, c)
        sv = op.apply(v, F)[0]
        worst = max(worst, float(np.max(np.abs(shifted.apply(v + c, F)[0] - sv - c))))
        scale = max(scale, float(np.max(np.abs(sv))), abs(c))
    return _le("hjb commutation by constants", worst, tol * scale)


def kernel_structure(fc, disc: LevyDiscretization, tol: float = 1e-12) -> list[Check]:
    """Nonnegative entries and unit column sums once the sink is included, at every step."""
    neg = 0.0
    defect = 0.0
    for k in range(fc.n_steps):
        B = kernel(fc, disc, k)
        neg = max(neg, -float(B.dense().min()), -float(B.leak.min()))
        defect = max(defect, float(np.max(np.abs(B.column_sums() + B.leak - 1.0))))
    return [_le("fpk kernel nonnegativity", neg, tol), _le("fpk column sums with sink", defect, tol)]


def mass_balance(m: DensityField, tol: float = 1e-12) -> list[Check]:
    drift = float(np.max(np.abs(m.accounted_mass() - m.mass()[0])))
    return [_le("mass conservation incl. sink", drift, tol), _le("density positivity", -float(m.m.min()), 0.0)]


def weight_identity(disc: LevyDiscretization, tol: float = 1e-12) -> Check:
    """``(sum omega + tail) / lambda_r - 1``; trivially zero without large jumps."""
    value = 0.0 if disc.lambda_r == 0 else weight_row_sum_check(disc)
    return _le("jump weights sum to lambda_r", value, tol)


def apriori_bounds(u: ValueField, rc: RegularityConstants, region=None, tol: float = 1e-9) -> list[Check]:
    """Sup, Lipschitz and one-sided second-difference bounds at every time slice.

    Only nodes inside ``region`` (default: the whole lattice) enter.  All node
    pairs are used for the second differences, not just neighbours.
    """
    g, h = u.grid, u.h
    lo, hi = (g.a, g.b) if region is None else region
    idx = np.flatnonzero((g.nodes >= lo - 1e-12) & (g.nodes <= hi + 1e-12))
    excess = {"sup": -math.inf, "lip": -math.inf, "semi": -math.inf}
    n = u.n_steps
    for k in range(n + 1):
        rem = (n - k) * h
        v = u.u[k][idx]
        excess["sup"] = max(excess["sup"], float(np.max(np.abs(v))) - rc.sup_bound(rem))
        if len(v) > 1:
            lip = float(np.max(np.abs(np.diff(v)))) / g.rho
            excess["lip"] = max(excess["lip"], lip - rc.lipschitz_bound(rem))
        semi = max(
            (float(np.max((v[2 * j:] - 2 * v[j:-j] + v[: -2 * j]) / (j * g.rho) ** 2))
             for j in range(1, (len(v) + 1) // 2)),
            default=-math.inf,
        )
        if semi > -math.inf:
            excess["semi"] = max(excess["semi"], semi - rc.semiconcavity_bound(rem))
    return [
        _le("value sup bound", excess["sup"], tol),
        _le("value Lipschitz bound", excess["lip"], tol),
        _le("value semiconcavity bound", excess["semi"], tol),
    ]


def whole_line_surrogate(problem, mu, pad: float | None = None):
    """Value function of the same data on a domain padded by ``pad`` on each side.

    The bounds above are statements about the scheme on the whole lattice.  On
    a bounded domain the constant exterior value bends the solution near the
    edges, so the bounds are checked on the original domain inside a wider run
    whose edges are far enough away.  Returns ``(u, constants, region)``.
    """
    from .config import build_problem

    g = problem.grid
    pad = 2.0 * (g.b - g.a) if pad is None else pad
    shift = int(round(pad / g.rho))
    cfg = dict(problem.config)
    cfg["domain"] = [g.a - shift * g.rho, g.b + shift * g.rho]
    wide = build_problem(cfg, force=True)
    mu = np.asarray(mu, dtype=float)
    flow = np.zeros((wide.n_steps + 1, wide.grid.n_nodes))
    flow[:, shift: shift + g.n_nodes] = mu
    u = solve_backward(flow, wide)
    rc = RegularityConstants.estimate(wide.costs, wide.ham, wide.grid, wide.horizon)
    return u, rc, (g.a, g.b)


def row_sum_rate(fc, disc: LevyDiscretization) -> float:
    """``K = max_k log(max row sum of B_k) / h``, the growth rate the L^p bound uses."""
    worst = 0.0
    for k in range(fc.n_steps):
        worst = max(worst, math.log(max(float(np.max(kernel(fc, disc, k).row_sums())), 1e-300)))
    return worst / fc.h


def lp_stability(m: DensityField, fc, disc: LevyDiscretization, ps=(2.0, math.inf), tol: float = 1e-12) -> list[Check]:
    """``||m(t_k)||_p <= exp(K t_k) ||m_0||_p`` with ``K`` from :func:`row_sum_rate`."""
    K = row_sum_rate(fc, disc)
    out = []
    for p in ps:
        base = m.lp_norm(0, p)
        worst = max(m.lp_norm(k, p) / (math.exp(K * k * m.h) * base) - 1.0 for k in range(m.n_steps + 1))
        out.append(_le(f"L^{p:g} stability (K={K:.3g})", worst, tol))
    return out


def comparison_bound(problem, mu1, mu2, tol: float = 1e-9) -> Check:
    """``||u[mu1] - u[mu2]|| <= T ||F(mu1) - F(mu2)||`` (terminal cost does not see the density)."""
    u1 = solve_backward(mu1, problem)
    u2 = solve_backward(mu2, problem)
    dF = float(np.max(np.abs(problem.costs.coupling(problem.grid, mu1) - problem.costs.coupling(problem.grid, mu2))))
    gap = float(np.max(np.abs(u1.u - u2.u)))
    return _le("hjb comparison bound", gap - problem.horizon * dF, tol)


def perturbed_flows(problem, scale: float = 0.2, seed: int = 0):
    """Two admissible density flows: ``m0`` and a shifted, renormalised copy of it."""
    rng = np.random.default_rng(seed)
    base = problem.frozen_flow()
    bumps = np.abs(1.0 + scale * rng.normal(size=base.shape))
    other = base * bumps
    other /= other.sum(axis=1, keepdims=True)
    return base, other


def run_suite(problem, solution=None, n_fields: int = 100) -> list[Check]:
    """All structural checks; the a-priori and stability checks need ``solution`` (a ``Solution``)."""
    checks = [
        hjb_monotonicity(problem, n_fields),
        hjb_commutation(problem, n_fields),
        weight_identity(problem.disc),
    ]
    if solution is None:
        return checks
    fc = control_mod.build(solution.u, problem.eps, problem.ham, problem.control_exterior)
    checks += kernel_structure(fc, problem.disc)
    checks += mass_balance(solution.m)
    if problem.config:
        checks += apriori_bounds(*whole_line_surrogate(problem, solution.trace.mu if solution.trace else solution.m.m))
    else:
        rc = RegularityConstants.estimate(problem.costs, problem.ham, problem.grid, problem.horizon)
        checks += apriori_bounds(solution.u, rc)
    checks += lp_stability(solution.m, fc, problem.disc)
    checks.append(comparison_bound(problem, *perturbed_flows(problem)))
    return checks
