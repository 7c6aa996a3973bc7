"""Error metrics between runs on different lattices."""

from __future__ import annotations

import numpy as np

from ..errors import IncompatibleRuns
from ..grid import interp


def _check(run_grid, ref_grid, run_T, ref_T, run_h, ref_h):
    if not (np.isclose(run_grid.a, ref_grid.a) and np.isclose(run_grid.b, ref_grid.b)):
        raise IncompatibleRuns("runs live on different domains")
    if not np.isclose(run_T, ref_T):
        raise IncompatibleRuns("runs have different horizons")
    if ref_h > run_h * (1 + 1e-12) or ref_grid.rho > run_grid.rho * (1 + 1e-12):
        raise IncompatibleRuns("reference must be at least as fine as the compared run")


def _breaks(lo, hi, *edge_sets):
    pts = np.concatenate([np.asarray(e, dtype=float) for e in edge_sets] + [[lo, hi]])
    pts = pts[(pts >= lo) & (pts <= hi)]
    return np.unique(pts)


def sup_error(u_run, run_grid, u_ref, ref_grid, region):
    """``(sup |I u_run - I u_ref|, sup |I u_ref|)`` over ``region``.

    Both interpolants are piecewise linear, so their extrema sit on the union of
    the two node sets and the region ends.
    """
    lo, hi = region
    pts = _breaks(lo, hi, run_grid.nodes, ref_grid.nodes)
    a = interp(u_run, run_grid, pts)
    b = interp(u_ref, ref_grid, pts)
    return float(np.max(np.abs(a - b))), float(np.max(np.abs(b)))


def l1_error(m_run, run_grid, m_ref, ref_grid, region):
    """``(int |d_run - d_ref|, int |d_ref|)`` over ``region`` for cell-constant densities."""
    lo, hi = region
    pts = _breaks(lo, hi, run_grid.cell_edges(), ref_grid.cell_edges())
    mid = 0.5 * (pts[1:] + pts[:-1])
    width = np.diff(pts)

    def density(m, g):
        idx = np.clip(np.searchsorted(g.cell_edges(), mid, side="right") - 1, 0, g.n_nodes - 1)
        return np.asarray(m)[idx] / g.rho

    a = density(m_run, run_grid)
    b = density(m_ref, ref_grid)
    return float(np.sum(np.abs(a - b) * width)), float(np.sum(np.abs(b) * width))


def err_metrics(run, ref, region=(1.0 / 3.0, 2.0 / 3.0)):
    """Relative ``(ERR_u, ERR_m)``: u at ``t = 0`` in sup norm, m at ``t = T`` in L1.

    ``run`` and ``ref`` are ``(ValueField, DensityField)`` pairs (or objects with
    ``.u`` and ``.m``).
    """
    u1, m1 = (run.u, run.m) if hasattr(run, "u") else run
    u2, m2 = (ref.u, ref.m) if hasattr(ref, "u") else ref
    T1, T2 = u1.h * u1.n_steps, u2.h * u2.n_steps
    _check(u1.grid, u2.grid, T1, T2, u1.h, u2.h)
    num_u, den_u = sup_error(u1.u[0], u1.grid, u2.u[0], u2.grid, region)
    num_m, den_m = l1_error(m1.m[-1], m1.grid, m2.m[-1], m2.grid, region)
    if den_u == 0 or den_m == 0:
        raise IncompatibleRuns("reference vanishes on the region")
    return num_u / den_u, num_m / den_m


def fitted_order(hs, errs) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    hs, errs = np.asarray(hs, dtype=float), np.asarray(errs, dtype=float)
    ok = errs > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(hs[ok]), np.log(errs[ok]), 1)[0])


def ratios(errs) -> list:
    e = np.asarray(errs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return list(e[:-1] / e[1:])
