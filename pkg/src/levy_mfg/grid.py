"""Uniform 1D lattice, hat-basis interpolation and mollification.

Lattice functions are plain numpy arrays indexed by node (last axis).  Values
outside ``[a, b]`` come from an *exterior* policy: a float is a constant ghost
value (the interpolant ramps linearly from the boundary node to it over one
cell), ``None`` extends the boundary values as constants.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import TimeOutOfRange

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    """Nodes ``x_i = a + i*rho`` for ``i = 0..n_cells`` with cells ``E_i``."""

    a: float
    b: float
    rho: float
    n_cells: int

    @classmethod
    def uniform(cls, a: float, b: float, rho: float) -> "Grid":
        if not b > a:
            raise ValueError(f"empty domain [{a}, {b}]")
        if rho <= 0:
            raise ValueError(f"grid spacing must be positive, got {rho}")
        ratio = (b - a) / rho
        n = max(1, int(round(ratio)))
        if abs(ratio - n) > 1e-9 * max(1.0, ratio):
            snapped = (b - a) / n
            warnings.warn(
                f"domain length {b - a} is not a multiple of rho={rho}; "
                f"snapping rho to {snapped}",
                stacklevel=2,
            )
            rho = snapped
        else:
            rho = (b - a) / n
        return cls(float(a), float(b), float(rho), n)

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.a + self.rho * np.arange(self.n_nodes)

    def node(self, i):
        return self.a + self.rho * np.asarray(i)

    def cell_edges(self) -> np.ndarray:
        """Edges of the cells ``E_i = (x_i - rho/2, x_i + rho/2)``."""
        return self.a + self.rho * (np.arange(self.n_nodes + 1) - 0.5)

    def contains(self, x) -> np.ndarray:
        return (np.asarray(x) >= self.a) & (np.asarray(x) <= self.b)


def hat(x, center: float, rho: float):
    """Piecewise linear basis function of width ``rho`` centred at ``center``."""
    return np.maximum(0.0, 1.0 - np.abs(np.asarray(x, dtype=float) - center) / rho)


def _extended(values: np.ndarray, exterior):
    v = np.asarray(values, dtype=float)
    if exterior is None:
        left, right = v[..., :1], v[..., -1:]
    else:
        left = right = np.full(v.shape[:-1] + (1,), float(exterior))
    return np.concatenate([left, v, right], axis=-1)


def interp(values, grid: Grid, x, exterior=None):
    """Evaluate ``I[f](x) = sum_i f(x_i) beta_i(x)`` for a 1D lattice array."""
    x = np.asarray(x, dtype=float)
    ve = _extended(values, exterior)
    xe0 = grid.a - grid.rho
    pos = (x - xe0) / grid.rho
    last = ve.shape[-1] - 1
    idx = np.clip(np.floor(pos).astype(np.int64), 0, last - 1)
    theta = np.clip(pos - idx, 0.0, 1.0)
    return ve[idx] * (1.0 - theta) + ve[idx + 1] * theta


def interp_slope(values, grid: Grid, x, exterior=None):
    """Slope of the interpolant on the segment containing ``x`` (0 far outside)."""
    x = np.asarray(x, dtype=float)
    ve = _extended(values, exterior)
    xe0 = grid.a - grid.rho
    pos = np.floor((x - xe0) / grid.rho).astype(np.int64)
    last = ve.shape[-1] - 1
    inside = (pos >= 0) & (pos < last)
    idx = np.clip(pos, 0, last - 1)
    return np.where(inside, (ve[idx + 1] - ve[idx]) / grid.rho, 0.0)


def _bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = np.abs(t) < 1.0
    out[m] = np.exp(1.0 / (t[m] ** 2 - 1.0))
    return out


class Mollifier:
    """Unit-mass bump kernel ``exp(1/(t^2-1))`` on (-1, 1), scaled to width eps.

    The cumulative mass ``Q`` and first moment ``Q1`` of the unit kernel are
    tabulated once and evaluated by cubic Hermite interpolation using the exact
    derivatives; this is what makes convolution with piecewise linear data exact
    up to ~1e-14.
    """

    _TABLE = 4000

    def __init__(self):
        edges = np.linspace(-1.0, 1.0, self._TABLE + 1)
        xi, w = np.polynomial.legendre.leggauss(12)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        pts = mid[:, None] + half[:, None] * xi[None, :]
        k = _bump(pts)
        cell_mass = half * (k @ w)
        cell_moment = half * ((k * pts) @ w)
        mass = np.concatenate([[0.0], np.cumsum(cell_mass)])
        moment = np.concatenate([[0.0], np.cumsum(cell_moment)])
        self.norm = mass[-1]
        mass /= self.norm
        moment /= self.norm
        mass[-1] = 1.0
        moment[-1] = 0.0
        self._q = CubicHermiteSpline(edges, mass, _bump(edges) / self.norm)
        self._q1 = CubicHermiteSpline(edges, moment, edges * _bump(edges) / self.norm)

    def density(self, t):
        return _bump(t) / self.norm

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        m = np.abs(t) < 1.0
        tm = t[m]
        out[m] = np.exp(1.0 / (tm**2 - 1.0)) * (-2.0 * tm / (tm**2 - 1.0) ** 2)
        return out / self.norm

    def cdf(self, t):
        t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
        return self._q(t)

    def first_moment(self, t):
        t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
        return self._q1(t)


_MOLLIFIER: Mollifier | None = None


def standard_mollifier() -> Mollifier:
    global _MOLLIFIER
    if _MOLLIFIER is None:
        _MOLLIFIER = Mollifier()
    return _MOLLIFIER


class MollifiedField:
    """Smooth view ``u^eps = I[u] * rho_eps`` of one or more lattice functions.

    ``values`` may carry leading batch axes (e.g. time); evaluation returns an
    array of shape ``values.shape[:-1] + x.shape``.
    """

    def __init__(self, values, grid: Grid, eps: float, exterior=None):
        if eps <= 0:
            raise ValueError(f"mollification width must be positive, got {eps}")
        self.grid = grid
        self.eps = float(eps)
        self.kernel = standard_mollifier()
        v = np.asarray(values, dtype=float)
        self.pad = int(math.ceil(self.eps / grid.rho)) + 3
        if exterior is None:
            left, right = v[..., :1], v[..., -1:]
        else:
            left = right = np.full(v.shape[:-1] + (1,), float(exterior))
        reps = (1,) * (v.ndim - 1) + (self.pad,)
        self._u = np.concatenate([np.tile(left, reps), v, np.tile(right, reps)], axis=-1)
        self._s = np.diff(self._u, axis=-1) / grid.rho

    def _segments(self, x):
        g = self.grid
        x = np.asarray(x, dtype=float)
        if np.any(x < g.a - g.rho) or np.any(x > g.b + g.rho):
            raise ValueError("mollified view is only evaluated on [a - rho, b + rho]")
        first = np.floor((x - self.eps - g.a) / g.rho).astype(np.int64)
        count = int(math.ceil(2 * self.eps / g.rho)) + 2
        return x, first, count

    def derivative(self, x):
        x, first, count = self._segments(x)
        g, q = self.grid, self.kernel
        out = np.zeros(self._s.shape[:-1] + x.shape)
        for k in range(count):
            m = first + k
            xm = g.a + m * g.rho
            dq = q.cdf((x - xm) / self.eps) - q.cdf((x - xm - g.rho) / self.eps)
            out += self._s[..., m + self.pad] * dq
        return out

    def value(self, x):
        x, first, count = self._segments(x)
        g, q = self.grid, self.kernel
        out = np.zeros(self._s.shape[:-1] + x.shape)
        for k in range(count):
            m = first + k
            xm = g.a + m * g.rho
            t2 = (x - xm) / self.eps
            t1 = (x - xm - g.rho) / self.eps
            dq = q.cdf(t2) - q.cdf(t1)
            dq1 = q.first_moment(t2) - q.first_moment(t1)
            out += self._u[..., m + self.pad] * dq
            out += self._s[..., m + self.pad] * ((x - xm) * dq - self.eps * dq1)
        return out


def mollify(values, grid: Grid, eps: float, exterior=None) -> MollifiedField:
    return MollifiedField(values, grid, eps, exterior)


def pw_const_density_view(masses, grid: Grid, h: float, t: float):
    """Density of the lattice measure at time ``t``.

    ``masses`` has shape ``(N+1, n_nodes)``.  The view is ``m_{i,k}/rho`` on
    ``E_i`` at ``t_k`` and affine in time between steps.
    """
    masses = np.asarray(masses, dtype=float)
    n_steps = masses.shape[0] - 1
    horizon = n_steps * h
    if t < -1e-12 * max(1.0, horizon) or t > horizon * (1 + 1e-12) + 1e-15:
        raise TimeOutOfRange(f"t={t} outside [0, {horizon}]")
    s = min(max(t / h, 0.0), float(n_steps))
    k = min(int(math.floor(s)), n_steps - 1) if n_steps > 0 else 0
    w = s - k
    profile = masses[k] if n_steps == 0 else (1.0 - w) * masses[k] + w * masses[k + 1]
    profile = profile / grid.rho
    edges = grid.cell_edges()

    def view(x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(edges, x, side="right") - 1
        inside = (idx >= 0) & (idx < grid.n_nodes)
        return np.where(inside, profile[np.clip(idx, 0, grid.n_nodes - 1)], 0.0)

    view.profile = profile
    return view
