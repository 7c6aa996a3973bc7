"""Backward semi-Lagrangian solver for the HJB equation.

One step of the scheme at node ``x_i`` is

    min_alpha  h F_i + h L(x_i, alpha)
               + e^{-h lam}/2 * (I[v](y+) + I[v](y-))
               + (1 - e^{-h lam})/lam * (sum_m W[i, m] v_m + out_i * ghost)

with ``y+- = x_i - h (alpha + b_r) +- w`` and ``w`` the walk half-width
(``sqrt(2h) sigma_r`` by default).  For fixed ``v`` the
diffusion part is piecewise linear in ``alpha`` with kinks where a
characteristic crosses a lattice node, so on each piece the objective is convex
and its minimiser is ``H_p(x_i, p)`` for the piece's averaged slope ``p``.
Enumerating kinks and stationary points gives the exact minimum over the
control box, which keeps the discrete operator monotone and commuting with
constants up to rounding.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import UnboundedControlSearch
from .grid import Grid, interp, interp_slope
from .levy import LevyDiscretization

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Hamiltonian:
    """Running cost ``L(x, q)`` with its Legendre pair.

    ``H(x, p) = sup_q (p q - L(x, q))`` and ``H_p`` is its ``p``-gradient, which
    is also the maximiser ``q`` of ``p q - L(x, q)``.
    """

    L: Callable
    H: Callable
    H_p: Callable
    name: str = "custom"

    @classmethod
    def quadratic(cls, weight: float = 1.0) -> "Hamiltonian":
        w = float(weight)
        return cls(
            L=lambda x, q: 0.5 * w * np.asarray(q) ** 2,
            H=lambda x, p: 0.5 * np.asarray(p) ** 2 / w,
            H_p=lambda x, p: np.asarray(p) / w + 0.0 * np.asarray(x),
            name=f"quadratic(weight={w})",
        )


def gaussian_weights(rho: float, delta: float, cutoff: float = 6.0) -> np.ndarray:
    """Sampled Gaussian of width ``delta`` on ``|d rho| <= cutoff*delta``, ``rho * sum = 1``."""
    D = int(math.floor(cutoff * delta / rho + 1e-9))
    d = np.arange(-D, D + 1) * rho
    w = np.exp(-0.5 * (d / delta) ** 2)
    return w / (rho * w.sum())


@dataclass
class CouplingCosts:
    """Running cost ``f(t, x) + K (phi_delta * m)(x)`` and terminal cost ``g(x)``."""

    f: Callable
    g: Callable
    K: float = 0.0
    delta: float = 0.4
    bounds: tuple[float, float] | None = None
    f_expr: str | None = None
    g_expr: str | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def depends_on_density(self) -> bool:
        return self.K != 0.0

    def convolution_matrix(self, grid: Grid) -> np.ndarray:
        key = (grid.n_nodes, grid.rho)
        if key not in self._cache:
            w = gaussian_weights(grid.rho, self.delta)
            D = (len(w) - 1) // 2
            i = np.arange(grid.n_nodes)
            diff = i[:, None] - i[None, :]
            C = np.where(np.abs(diff) <= D, w[np.clip(diff + D, 0, 2 * D)], 0.0)
            self._cache[key] = C
        return self._cache[key]

    def coupling(self, grid: Grid, masses) -> np.ndarray:
        """``K sum_j m_j w_{i-j}`` for one slice or a stack of slices."""
        m = np.asarray(masses, dtype=float)
        if self.K == 0.0:
            return np.zeros(m.shape)
        return self.K * (m @ self.convolution_matrix(grid).T)

    def running(self, grid: Grid, t: float, masses) -> np.ndarray:
        out = np.asarray(self.f(t, grid.nodes), dtype=float) + self.coupling(grid, masses)
        self._check("running", out, 0)
        return np.broadcast_to(out, (grid.n_nodes,)).astype(float)

    def terminal(self, grid: Grid) -> np.ndarray:
        out = np.broadcast_to(np.asarray(self.g(grid.nodes), dtype=float), (grid.n_nodes,)).astype(float)
        self._check("terminal", out, 1)
        return out

    def _check(self, label, values, which):
        if self.bounds is not None and np.max(np.abs(values)) > self.bounds[which] * (1 + 1e-9):
            warnings.warn(f"{label} cost exceeds its configured bound {self.bounds[which]}", stacklevel=3)


@dataclass
class ValueField:
    """Lattice value function ``u[k, i]`` with the minimising controls ``alpha[k, i]``."""

    u: np.ndarray
    grid: Grid
    h: float
    alpha: np.ndarray | None = None
    box_hits: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.u.shape[0] - 1

    def slice(self, k: int) -> np.ndarray:
        return self.u[k]

    def interp(self, k: int, x, exterior=None):
        return interp(self.u[k], self.grid, x, exterior)

    def lipschitz(self, k: int) -> float:
        return float(np.max(np.abs(np.diff(self.u[k]))) / self.grid.rho)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "i", "x_i", "u"])
            x = self.grid.nodes
            for k in range(self.u.shape[0]):
                for i in range(self.grid.n_nodes):
                    w.writerow([k, i, repr(float(x[i])), repr(float(self.u[k, i]))])


class SLOperator:
    """The one-step operator for a fixed grid, time step and jump discretization."""

    def __init__(self, grid: Grid, disc: LevyDiscretization, ham: Hamiltonian, h: float,
                 ghost: float, box: float, on_box: str = "refine"):
        if h <= 0:
            raise ValueError("time step must be positive")
        if on_box not in ("refine", "raise", "ignore"):
            raise ValueError(f"unknown box policy {on_box!r}")
        self.grid, self.disc, self.ham = grid, disc, ham
        self.h, self.ghost, self.box, self.on_box = float(h), float(ghost), float(box), on_box
        lam = disc.lambda_r
        if lam > 0:
            self.c_diff = 0.5 * math.exp(-h * lam)
            self.c_jump = -math.expm1(-h * lam) / lam
        else:
            self.c_diff, self.c_jump = 0.5, h
        self.spread = disc.walk_step(h)
        self.base = grid.nodes - h * disc.b_r
        if lam > 0:
            self.W, self.out = disc.domain_operator(grid.n_nodes)
        else:
            self.W = self.out = None

    def jump_term(self, v) -> np.ndarray:
        if self.W is None:
            return np.zeros(self.grid.n_nodes)
        return self.c_jump * (self.W @ v + self.out * self.ghost)

    def _objective(self, v, alpha):
        h, g = self.h, self.grid
        x = g.nodes[:, None]
        drift = self.base[:, None] - h * alpha
        diff = interp(v, g, drift + self.spread, self.ghost) + interp(v, g, drift - self.spread, self.ghost)
        return h * self.ham.L(x, alpha) + self.c_diff * diff

    def _candidates(self, v, A):
        g, h = self.grid, self.h
        n = g.n_nodes
        width = int(math.ceil(2 * A * h / g.rho)) + 3
        cols = [np.full((n, 1), -A), np.full((n, 1), A)]
        for s in (1.0, -1.0):
            shifted = self.base + s * self.spread
            mlo = np.ceil((shifted - g.a - h * A) / g.rho).astype(np.int64) - 1
            m = np.clip(mlo[:, None] + np.arange(width)[None, :], -1, n)
            cols.append(np.clip((shifted[:, None] - (g.a + m * g.rho)) / h, -A, A))
        cand = np.sort(np.concatenate(cols, axis=1), axis=1)
        mid = 0.5 * (cand[:, 1:] + cand[:, :-1])
        drift = self.base[:, None] - h * mid
        slope = interp_slope(v, g, drift + self.spread, self.ghost) + interp_slope(v, g, drift - self.spread, self.ghost)
        stat = self.ham.H_p(g.nodes[:, None], self.c_diff * slope)
        stat = np.clip(stat, cand[:, :-1], cand[:, 1:])
        return np.concatenate([cand, stat], axis=1)

    def _minimise(self, v, A):
        alphas = self._candidates(v, A)
        obj = self._objective(v, alphas)
        k = np.argmin(obj, axis=1)
        rows = np.arange(len(k))
        return obj[rows, k], alphas[rows, k]

    def apply(self, v_next, F) -> tuple[np.ndarray, np.ndarray, int]:
        """Return ``(S[v_next], argmin controls, number of box hits)``."""
        v = np.asarray(v_next, dtype=float)
        best, alpha = self._minimise(v, self.box)
        hit = np.abs(alpha) >= self.box * (1 - 1e-12)
        hits = int(hit.sum())
        if hits and self.on_box == "raise":
            raise UnboundedControlSearch(f"minimising control on the box |alpha| = {self.box:g} at {hits} nodes")
        if hits and self.on_box == "refine":
            wide = 4.0 * self.box
            b2, a2 = self._minimise(v, wide)
            best = np.where(hit, b2, best)
            alpha = np.where(hit, a2, alpha)
            still = hit & (np.abs(alpha) >= wide * (1 - 1e-12))
            if still.any():
                raise UnboundedControlSearch(
                    f"minimising control on the search box |alpha| = {wide:g} at {int(still.sum())} nodes"
                )
            logger.warning("control box %.3g active at %d nodes; refined to %.3g", self.box, hits, wide)
        return self.h * np.asarray(F, dtype=float) + best + self.jump_term(v), alpha, hits


def step(v_next, k: int, mu, disc: LevyDiscretization, ham: Hamiltonian, costs: CouplingCosts,
         grid: Grid, h: float, ghost: float, box: float) -> np.ndarray:
    """Single application of the scheme at time index ``k`` (``mu`` holds masses per step)."""
    op = SLOperator(grid, disc, ham, h, ghost, box)
    F = costs.running(grid, k * h, np.asarray(mu)[k])
    return op.apply(v_next, F)[0]


def solve_backward(mu, problem) -> ValueField:
    """Run the scheme from the terminal cost down to ``t = 0`` against the flow ``mu``."""
    grid, h, N = problem.grid, problem.h, problem.n_steps
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (N + 1, grid.n_nodes):
        raise ValueError(f"density flow has shape {mu.shape}, expected {(N + 1, grid.n_nodes)}")
    op = SLOperator(grid, problem.disc, problem.ham, h, problem.ghost, problem.control_box,
                    getattr(problem, "on_box", "refine"))
    u = np.empty((N + 1, grid.n_nodes))
    alpha = np.empty((N, grid.n_nodes))
    u[N] = problem.costs.terminal(grid)
    coupling = problem.costs.coupling(grid, mu)
    # "left" charges step k with F(t_k, mu(t_k)); "right" uses t_{k+1}
    shift = 1 if getattr(problem, "cost_time", "left") == "right" else 0
    hits = 0
    for k in range(N - 1, -1, -1):
        F = np.asarray(problem.costs.f((k + shift) * h, grid.nodes), dtype=float) + coupling[k + shift]
        u[k], alpha[k], nh = op.apply(u[k + 1], F)
        hits += nh
    return ValueField(u, grid, h, alpha, hits, meta={"ghost": problem.ghost, "box": problem.control_box})


def consistency_defect(phi, k: int, i: int, grid: Grid, h: float, disc: LevyDiscretization,
                       ham: Hamiltonian, generator: float, F: float = 0.0,
                       ghost: float = 0.0, box: float = 50.0) -> float:
    """Truncation error of the scheme on a smooth ``phi(t, x)`` at ``(t_k, x_i)``.

    Compares ``(phi(t_k) - S[phi(t_{k+1})])/h`` with the continuous operator
    ``-phi_t + H(x, D phi) - L phi - F``; ``generator`` is ``L phi(t_k, x_i)``
    from an independent oracle.
    """
    t0, t1 = k * h, (k + 1) * h
    x = grid.nodes
    op = SLOperator(grid, disc, ham, h, ghost, box)
    Fv = np.full(grid.n_nodes, float(F))
    S = op.apply(phi.value(t1, x), Fv)[0][i]
    discrete = (float(phi.value(t0, x[i])) - S) / h
    xi = x[i]
    continuous = (-float(phi.dt(t0, xi)) + float(ham.H(xi, float(phi.dx(t0, xi))))
                  - generator - F)
    return discrete - continuous
