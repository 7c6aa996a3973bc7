"""Smooth test functions with exact derivatives, built from sympy expressions."""

from __future__ import annotations

import numpy as np
import sympy as sp

_t, _x = sp.symbols("t x", real=True)


class SmoothFunction:
    """``phi(t, x)`` given as an expression string, optionally cut off outside ``support``.

    Calling conventions follow the generator oracle: ``phi(x)``, ``phi.d1(x)``
    and ``phi.d2(x)`` evaluate at the bound time ``self.time``; the explicit
    ``value``/``dx``/``dt`` methods take the time argument.
    """

    def __init__(self, expr: str | sp.Expr, support: tuple[float, float] | None = None, time: float = 0.0):
        self.expr = sp.sympify(expr, locals={"t": _t, "x": _x}) if isinstance(expr, str) else expr
        self.support = support
        self.time = float(time)
        self._fns = {}

    def _fn(self, nx: int, nt: int = 0):
        key = (nx, nt)
        if key not in self._fns:
            e = self.expr
            if nx:
                e = sp.diff(e, _x, nx)
            if nt:
                e = sp.diff(e, _t, nt)
            self._fns[key] = sp.lambdify((_t, _x), e, "numpy")
        return self._fns[key]

    def derivative(self, t, x, nx: int = 0, nt: int = 0):
        x = np.asarray(x, dtype=float)
        if self.support is None:
            return np.broadcast_to(self._fn(nx, nt)(t, x), np.broadcast(np.asarray(t), x).shape).astype(float)
        lo, hi = self.support
        inside = (x > lo) & (x < hi)
        xs = np.where(inside, x, 0.5 * (lo + hi))
        val = np.broadcast_to(self._fn(nx, nt)(t, xs), np.broadcast(np.asarray(t), x).shape)
        return np.where(inside, val, 0.0)

    def at(self, time: float) -> "SmoothFunction":
        out = SmoothFunction(self.expr, self.support, time)
        out._fns = self._fns
        return out

    def value(self, t, x):
        return self.derivative(t, x)

    def dx(self, t, x, order: int = 1):
        return self.derivative(t, x, nx=order)

    def dt(self, t, x):
        return self.derivative(t, x, nt=1)

    def __call__(self, x):
        return self.derivative(self.time, x)

    def d1(self, x):
        return self.derivative(self.time, x, nx=1)

    def d2(self, x):
        return self.derivative(self.time, x, nx=2)


def bump(center: float = 0.0, radius: float = 1.0, amplitude: float = 1.0) -> SmoothFunction:
    """Compactly supported ``C^inf`` bump ``A exp(1 - 1/(1 - ((x-c)/R)^2))``."""
    y = (_x - center) / radius
    return SmoothFunction(amplitude * sp.exp(1 - 1 / (1 - y**2)), support=(center - radius, center + radius))
