"""Regularity constants of the costs and the Lagrangian, estimated on the working domain."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import sympy as sp

_t, _x = sp.symbols("t x", real=True)


def _sampled(expr: str | None, fn, order: int, ts, xs, dx):
    """Values of ``d^order/dx^order`` on the sample grid: exact if an expression is known."""
    T, X = np.meshgrid(ts, xs, indexing="ij")
    if expr is not None:
        e = sp.diff(sp.sympify(expr, locals={"t": _t, "x": _x}), _x, order)
        f = sp.lambdify((_t, _x), e, "numpy")
        return np.broadcast_to(np.asarray(f(T, X), dtype=float), T.shape)
    v = lambda xx: np.broadcast_to(np.asarray(fn(T, xx), dtype=float), T.shape)  # noqa: E731
    if order == 0:
        return v(X)
    if order == 1:
        return (v(X + dx) - v(X - dx)) / (2 * dx)
    return (v(X + dx) - 2 * v(X) + v(X - dx)) / dx**2


def gaussian_sup(delta: float) -> tuple[float, float, float]:
    """``(sup phi, sup |phi'|, sup phi'')`` of the centred normal density of width ``delta``."""
    c = 1.0 / (delta * math.sqrt(2 * math.pi))
    return c, c / (delta * math.sqrt(math.e)), 2.0 * c * math.exp(-1.5) / delta**2


@dataclass(frozen=True)
class RegularityConstants:
    """Sup, Lipschitz and semiconcavity constants of ``F``, ``G`` and ``L``.

    ``C_L`` bounds ``|L(x, 0)|`` together with ``-inf L``, which is what the
    sup-norm estimate of the value function consumes when the zero control is
    admissible.
    """

    L_F: float
    L_G: float
    C_F: float
    C_G: float
    c_F: float
    c_G: float
    L_L: float
    c_L: float
    C_L: float

    @classmethod
    def estimate(cls, costs, ham, grid, horizon: float, n_x: int = 2001, n_t: int = 201,
                 q_range: float | None = None) -> "RegularityConstants":
        xs = np.linspace(grid.a, grid.b, n_x)
        ts = np.linspace(0.0, horizon, n_t)
        dx = 1e-4 * (grid.b - grid.a)
        f = costs.f
        g = lambda t, x: costs.g(x)  # noqa: E731
        f0 = _sampled(costs.f_expr, f, 0, ts, xs, dx)
        f1 = _sampled(costs.f_expr, f, 1, ts, xs, dx)
        f2 = _sampled(costs.f_expr, f, 2, ts, xs, dx)
        one = np.zeros(1)
        g0 = _sampled(costs.g_expr, g, 0, one, xs, dx)
        g1 = _sampled(costs.g_expr, g, 1, one, xs, dx)
        g2 = _sampled(costs.g_expr, g, 2, one, xs, dx)
        K = abs(costs.K)
        p0, p1, p2 = gaussian_sup(costs.delta) if K else (0.0, 0.0, 0.0)
        C_F = float(np.max(np.abs(f0))) + K * p0
        L_F = float(np.max(np.abs(f1))) + K * p1
        c_F = max(float(np.max(f2)), 0.0) + K * p2
        C_G = float(np.max(np.abs(g0)))
        L_G = float(np.max(np.abs(g1)))
        c_G = max(float(np.max(g2)), 0.0)

        A = (L_F * horizon + L_G + 1.0) if q_range is None else q_range
        qs = np.linspace(-A, A, 201)
        X, Q = np.meshgrid(xs[:: max(1, n_x // 201)], qs, indexing="ij")
        Lv = lambda xx: np.broadcast_to(np.asarray(ham.L(xx, Q), dtype=float), Q.shape)  # noqa: E731
        L0 = Lv(X)
        L_L = float(np.max(np.abs(Lv(X + dx) - Lv(X - dx)))) / (2 * dx)
        c_L = max(float(np.max((Lv(X + dx) - 2 * L0 + Lv(X - dx)) / dx**2)), 0.0)
        at_zero = np.asarray(ham.L(xs, 0.0 * xs), dtype=float)
        C_L = max(float(np.max(np.abs(at_zero))), -float(np.min(L0)), 0.0)
        return cls(L_F, L_G, C_F, C_G, c_F, c_G, L_L, c_L, C_L)

    def control_box(self, horizon: float) -> float:
        return (self.L_F + self.L_L) * horizon + self.L_G + 1.0

    def lipschitz_bound(self, remaining: float) -> float:
        return (self.L_F + self.L_L) * remaining + self.L_G

    def semiconcavity_bound(self, remaining: float) -> float:
        return (self.c_F + self.c_L) * remaining + self.c_G

    def sup_bound(self, remaining: float) -> float:
        return (self.C_F + self.C_L) * remaining + self.C_G

    def as_dict(self) -> dict:
        return asdict(self)
