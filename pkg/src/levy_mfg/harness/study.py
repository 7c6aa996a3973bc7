"""Convergence studies over a ladder of time steps."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

from ..coupler import solve
from .config import build_problem, with_resolution
from .metrics import err_metrics, fitted_order, ratios

logger = logging.getLogger(__name__)


@dataclass
class ConvergenceStudy:
    """Ladder ``h = 2^-l`` for ``l`` in ``levels`` against a reference at ``2^-reference``.

    ``rho = h`` unless ``rho_factor`` says otherwise; ``r`` and ``eps`` follow the
    rules of ``base``.
    """

    base: dict
    levels: list
    reference: int
    region: tuple = (1.0 / 3.0, 2.0 / 3.0)
    tol: float = 1e-12
    max_iter: int = 300
    rho_factor: float = 1.0

    def __post_init__(self):
        if len(self.levels) < 2:
            raise ValueError("a study needs at least two levels")
        if self.reference <= max(self.levels):
            raise ValueError("the reference level must be strictly finer than every compared level")


@dataclass
class StudyResult:
    hs: list
    err_u: list
    err_m: list
    order_u: float
    order_m: float
    ratios_u: list
    ratios_m: list
    degenerate: bool
    timings: dict = field(default_factory=dict)

    def rows(self):
        for i, h in enumerate(self.hs):
            yield {"h": h, "err_u": self.err_u[i], "err_m": self.err_m[i]}


def run_level(base: dict, h: float, rho_factor: float = 1.0, tol: float = 1e-12, max_iter: int = 300, force=None):
    problem = build_problem(with_resolution(base, h, rho_factor * h), force=force)
    return solve(problem, tol=tol, max_iter=max_iter)


def convergence_study(spec: ConvergenceStudy, reference_solution=None) -> StudyResult:
    timings = {}
    t0 = time.perf_counter()
    ref = reference_solution or run_level(spec.base, 2.0**-spec.reference, spec.rho_factor, spec.tol, spec.max_iter)
    timings["reference"] = time.perf_counter() - t0
    hs, eu, em = [], [], []
    for level in spec.levels:
        h = 2.0**-level
        t0 = time.perf_counter()
        sol = run_level(spec.base, h, spec.rho_factor, spec.tol, spec.max_iter)
        timings[f"2^-{level}"] = time.perf_counter() - t0
        a, b = err_metrics(sol, ref, spec.region)
        logger.info("h=2^-%d ERR_u=%.4g ERR_m=%.4g", level, a, b)
        hs.append(h)
        eu.append(a)
        em.append(b)
    return summarize(hs, eu, em, timings)


def summarize(hs, eu, em, timings=None) -> StudyResult:
    degenerate = max(eu + em) <= 1e-14
    ou = float("nan") if degenerate else fitted_order(hs, eu)
    om = float("nan") if degenerate else fitted_order(hs, em)
    if degenerate:
        logger.warning("degenerate ladder: all errors vanish")
    return StudyResult(list(hs), eu, em, ou, om, ratios(eu), ratios(em), degenerate or math.isnan(ou), timings or {})
