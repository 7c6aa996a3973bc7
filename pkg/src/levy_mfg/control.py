"""Feedback control from the mollified value function and the FPK characteristics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid, hat, mollify
from .hjb import Hamiltonian, ValueField
from .levy import LevyDiscretization


@dataclass
class FeedbackControl:
    """``alpha[k, j] = H_p(x_j, D u^eps(t_k, x_j))`` for ``k = 0..N-1``."""

    alpha: np.ndarray
    grid: Grid
    h: float
    eps: float
    gradient: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return self.alpha.shape[0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "i", "x_i", "alpha"])
            x = self.grid.nodes
            for k in range(self.alpha.shape[0]):
                for i in range(self.grid.n_nodes):
                    w.writerow([k, i, repr(float(x[i])), repr(float(self.alpha[k, i]))])


def build(u: ValueField, eps: float, ham: Hamiltonian, exterior="clamp") -> FeedbackControl:
    """Mollified-gradient feedback at every node and every step but the last.

    ``exterior="clamp"`` continues ``u`` by its boundary values before
    mollifying; ``"ghost"`` uses the value stored in ``u.meta["ghost"]``.
    """
    if eps <= 0:
        raise ValueError("mollification width must be positive")
    if exterior == "clamp":
        ext = None
    elif exterior == "ghost":
        ext = u.meta["ghost"]
    else:
        ext = float(exterior)
    g = u.grid
    field = mollify(u.u[:-1], g, eps, ext)
    grad = field.derivative(g.nodes)
    alpha = np.asarray(ham.H_p(g.nodes[None, :], grad), dtype=float)
    return FeedbackControl(alpha, g, u.h, eps, grad)


def constant_control(grid: Grid, h: float, n_steps: int, value: float) -> FeedbackControl:
    return FeedbackControl(np.full((n_steps, grid.n_nodes), float(value)), grid, h, float("nan"))


def characteristics(fc: FeedbackControl, disc: LevyDiscretization, h: float | None = None):
    """``Phi^{+-}[k, j] = x_j - h (alpha[k, j] + b_r) +- w`` with ``w = disc.walk_step(h)``."""
    h = fc.h if h is None else h
    centre = fc.grid.nodes[None, :] - h * (fc.alpha + disc.b_r)
    spread = disc.walk_step(h)
    return centre + spread, centre - spread


def row_sums(phi: np.ndarray, grid: Grid) -> np.ndarray:
    """``sum_j beta_i(phi_j)`` for every node ``i`` (one slice of characteristics)."""
    pos = (np.asarray(phi) - grid.a) / grid.rho
    lo = np.floor(pos).astype(np.int64)
    theta = pos - lo
    out = np.zeros(grid.n_nodes)
    for idx, w in ((lo, 1.0 - theta), (lo + 1, theta)):
        ok = (idx >= 0) & (idx < grid.n_nodes)
        np.add.at(out, idx[ok], w[ok])
    return out


def row_sums_direct(phi: np.ndarray, grid: Grid) -> np.ndarray:
    """Same quantity evaluated densely with the hat basis (test oracle)."""
    return hat(np.asarray(phi)[None, :], grid.nodes[:, None], grid.rho).sum(axis=1)


def row_sum_excess(fc: FeedbackControl, disc: LevyDiscretization, interior: float = 0.0) -> float:
    """``max_{k, i} sum_j beta_i(Phi^{+-}_{j,k}) - 1`` over both families.

    Nodes within ``interior`` of the boundary are skipped; characteristics
    leaving the domain otherwise make the boundary rows artificially light.
    """
    g = fc.grid
    keep = (g.nodes >= g.a + interior) & (g.nodes <= g.b - interior)
    worst = -math.inf
    for fam in characteristics(fc, disc):
        for k in range(fam.shape[0]):
            worst = max(worst, float(np.max(row_sums(fam[k], g)[keep])))
    return worst - 1.0


def separation_constant(fc: FeedbackControl, disc: LevyDiscretization) -> float:
    """Smallest ``c0`` with ``|Phi_j - Phi_i| >= sqrt(1 - c0 h) |x_j - x_i|`` on all pairs.

    In one dimension a pair's ratio is the mean of the neighbour gaps between
    them, so the neighbours give the worst case as long as every gap is
    positive.  Crossing characteristics return ``inf``.
    """
    phi, _ = characteristics(fc, disc)
    worst = float(np.min(np.diff(phi, axis=1))) / fc.grid.rho
    if worst <= 0.0:
        return math.inf
    return max(0.0, (1.0 - worst**2) / fc.h)
