"""Forward dual semi-Lagrangian scheme for the Fokker-Planck equation.

Column ``j`` of the transition kernel distributes the mass at ``x_j``: half of
``e^{-h lam}`` to the hat stencils at each characteristic foot ``Phi^{+-}_j``
and ``(1 - e^{-h lam})/lam * omega_{i-j}`` to node ``i`` through jumps.  Mass
that lands outside ``[a, b]`` (or in the jump tail) goes to a sink and is never
returned.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .control import FeedbackControl, characteristics
from .errors import NegativeMass
from .grid import Grid, interp, pw_const_density_view
from .levy import LevyDiscretization, LevyMeasure, generator_quad


@dataclass
class TransitionKernel:
    diffusion: sparse.csr_matrix
    jump: np.ndarray | None
    c_jump: float
    leak: np.ndarray
    grid: Grid

    def apply(self, m) -> np.ndarray:
        out = self.diffusion @ m
        if self.jump is not None:
            out = out + self.c_jump * (self.jump.T @ m)
        return out

    def dense(self) -> np.ndarray:
        B = self.diffusion.toarray()
        if self.jump is not None:
            B = B + self.c_jump * self.jump.T
        return B

    def column_sums(self) -> np.ndarray:
        s = np.asarray(self.diffusion.sum(axis=0)).ravel()
        if self.jump is not None:
            s = s + self.c_jump * self.jump.sum(axis=1)
        return s

    def row_sums(self) -> np.ndarray:
        s = np.asarray(self.diffusion.sum(axis=1)).ravel()
        if self.jump is not None:
            s = s + self.c_jump * self.jump.sum(axis=0)
        return s


def kernel(fc: FeedbackControl, disc: LevyDiscretization, k: int) -> TransitionKernel:
    g = fc.grid
    h = fc.h
    n = g.n_nodes
    lam = disc.lambda_r
    if lam > 0:
        c_diff = 0.5 * math.exp(-h * lam)
        c_jump = -math.expm1(-h * lam) / lam
        W, out = disc.domain_operator(n)
    else:
        c_diff, c_jump, W, out = 0.5, h, None, np.zeros(n)
    rows, cols, vals = [], [], []
    kept = np.zeros(n)
    cols_j = np.arange(n)
    for fam in characteristics(fc, disc):
        pos = (fam[k] - g.a) / g.rho
        lo = np.floor(pos).astype(np.int64)
        theta = pos - lo
        for idx, w in ((lo, 1.0 - theta), (lo + 1, theta)):
            ok = (idx >= 0) & (idx < n) & (w > 0)
            rows.append(idx[ok])
            cols.append(cols_j[ok])
            vals.append(c_diff * w[ok])
            np.add.at(kept, cols_j[ok], w[ok])
    D = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    leak = c_diff * (2.0 - kept) + c_jump * out
    return TransitionKernel(D, W, c_jump, leak, g)


def backward_apply(fc: FeedbackControl, disc: LevyDiscretization, k: int, phi_nodes) -> np.ndarray:
    """``sum_i phi_i B(i, j)`` computed through interpolation, not through the kernel."""
    g, h = fc.grid, fc.h
    lam = disc.lambda_r
    phi_nodes = np.asarray(phi_nodes, dtype=float)
    plus, minus = characteristics(fc, disc)
    if lam > 0:
        c_diff = 0.5 * math.exp(-h * lam)
        c_jump = -math.expm1(-h * lam) / lam
        W, _ = disc.domain_operator(g.n_nodes)
        jump = c_jump * (W @ phi_nodes)
    else:
        c_diff, jump = 0.5, 0.0
    return c_diff * (interp(phi_nodes, g, plus[k], 0.0) + interp(phi_nodes, g, minus[k], 0.0)) + jump


@dataclass
class DensityField:
    """Cell masses ``m[k, i]`` and the mass sent to the sink during each step."""

    m: np.ndarray
    grid: Grid
    h: float
    leak: np.ndarray = field(default_factory=lambda: np.zeros(0))
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.m.shape[0] - 1

    def mass(self) -> np.ndarray:
        return self.m.sum(axis=1)

    def accounted_mass(self) -> np.ndarray:
        """Lattice mass plus everything leaked so far (equals the initial mass)."""
        return self.mass() + np.concatenate([[0.0], np.cumsum(self.leak)])

    def view(self, t: float):
        return pw_const_density_view(self.m, self.grid, self.h, t)

    def density(self, k: int) -> np.ndarray:
        return self.m[k] / self.grid.rho

    def lp_norm(self, k: int, p: float) -> float:
        d = self.density(k)
        if math.isinf(p):
            return float(np.max(np.abs(d)))
        return float((np.sum(np.abs(d) ** p) * self.grid.rho) ** (1.0 / p))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "i", "x_i", "density"])
            x = self.grid.nodes
            for k in range(self.m.shape[0]):
                d = self.density(k)
                for i in range(self.grid.n_nodes):
                    w.writerow([k, i, repr(float(x[i])), repr(float(d[i]))])


_GL5_X, _GL5_W = np.polynomial.legendre.leggauss(5)


def initial_masses(grid: Grid, density, normalize: bool = True) -> np.ndarray:
    """``m_i = int_{E_i cap [a, b]} m0`` by 5-point Gauss-Legendre on each half cell.

    Half cells end at nodes, so indicators with jumps at nodes are integrated
    exactly.  The result is renormalised to unit mass unless ``normalize`` is off.
    """
    x = grid.nodes
    half = grid.rho / 2
    left = np.maximum(x - half, grid.a)
    right = np.minimum(x + half, grid.b)
    out = np.zeros(grid.n_nodes)
    for lo, hi in ((left, x), (x, right)):
        w = 0.5 * (hi - lo)
        c = 0.5 * (hi + lo)
        pts = c[:, None] + w[:, None] * _GL5_X[None, :]
        vals = np.asarray(density(pts), dtype=float)
        out += w * (np.broadcast_to(vals, pts.shape) @ _GL5_W)
    if np.any(out < 0):
        raise NegativeMass("initial density is negative somewhere")
    if normalize:
        total = out.sum()
        if total <= 0:
            raise ValueError("initial density has no mass on the domain")
        out = out / total
    return out


def evolve(m0, fc: FeedbackControl, disc: LevyDiscretization, kernels=None) -> DensityField:
    """Push ``m0`` forward through ``N = fc.n_steps`` kernels."""
    g = fc.grid
    N = fc.n_steps
    m = np.empty((N + 1, g.n_nodes))
    m[0] = np.asarray(m0, dtype=float)
    if np.any(m[0] < 0):
        raise NegativeMass("initial masses must be nonnegative")
    leak = np.empty(N)
    for k in range(N):
        B = kernels[k] if kernels is not None else kernel(fc, disc, k)
        m[k + 1] = B.apply(m[k])
        leak[k] = float(B.leak @ m[k])
        if np.any(m[k + 1] < 0):
            raise NegativeMass(f"negative mass {m[k + 1].min():.3e} after step {k}")
    return DensityField(m, g, fc.h, leak)


def generator_at_nodes(measure: LevyMeasure, phi, nodes) -> np.ndarray:
    return np.array([generator_quad(measure, phi, float(x)) for x in nodes])


def weak_form_defect(m: DensityField, fc: FeedbackControl, phi, measure: LevyMeasure,
                     generator=None) -> float:
    """Residual of the very weak formulation against a time-independent ``phi``.

    ``|<phi, m(T)> - <phi, m0> - int_0^T <L phi - alpha D phi, m(s)> ds|`` with
    lattice sums in space and a left Riemann sum in time.  The drift is
    ``-alpha``.  ``generator`` may carry precomputed ``L phi`` at the nodes.
    """
    x = m.grid.nodes
    phi_x = phi(x)
    dphi = phi.d1(x)
    Lphi = generator_at_nodes(measure, phi, x) if generator is None else np.asarray(generator)
    flux = (Lphi[None, :] - fc.alpha * dphi[None, :]) * m.m[:-1]
    integral = m.h * float(flux.sum())
    return abs(float(phi_x @ m.m[-1]) - float(phi_x @ m.m[0]) - integral)
