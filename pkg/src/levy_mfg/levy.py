"""Levy measures and their r-dependent discretization.

A measure is stored through its two one-sided densities ``k_+(y)`` and
``k_-(y)`` on ``y > 0`` (``dnu(z) = k_{sign z}(|z|) dz``).  Every family here is
``scale * y**(-1-order) * exp(-decay * y)`` restricted to ``y >= band``, which
covers the fractional Laplacian, CGMY, truncated and one-sided kernels.
Power laws (``decay == 0``) have closed-form moments; tempered kernels fall back
to adaptive quadrature.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma

from .errors import DegenerateIntensity, InvalidTruncation, NonIntegrableMeasure

KINDS = ("fractional", "cgmy", "truncated", "one_sided", "zero")

QUAD_EPSABS = 1e-14
QUAD_EPSREL = 1e-13


def fractional_constant(s: float) -> float:
    """Normalising constant of ``(-Delta)^{s/2}`` in one dimension."""
    return s * 2.0 ** (s - 1.0) * gamma((1.0 + s) / 2.0) / (math.sqrt(math.pi) * gamma(1.0 - s / 2.0))


def _quad(f, lo, hi, points=None):
    pts = None
    if points and math.isfinite(hi):
        pts = sorted(p for p in points if lo < p < hi) or None
    val, _ = quad(f, lo, hi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200, points=pts)
    return val


@dataclass(frozen=True)
class LevyMeasure:
    kind: str
    order: float = 1.0
    scale: float = 0.0
    pos_decay: float = 0.0
    neg_decay: float = 0.0
    band: float = 0.0
    pos: bool = True
    neg: bool = True
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.kind == "zero":
            return
        if not 0.0 < self.order < 2.0:
            raise NonIntegrableMeasure(
                f"singularity order {self.order} outside (0, 2): "
                "the integral of min(1, z^2) against the measure diverges"
            )
        if self.scale < 0 or self.pos_decay < 0 or self.neg_decay < 0 or self.band < 0:
            raise ValueError("measure parameters must be nonnegative")
        total = self.levy_integral()
        if not math.isfinite(total):
            raise NonIntegrableMeasure(f"integral of min(1, z^2) is {total}")

    # -- constructors ---------------------------------------------------
    @classmethod
    def fractional(cls, s: float, multiplier: float = 1.0, constant: float | None = None):
        c = fractional_constant(s) if constant is None else constant
        return cls("fractional", order=s, scale=multiplier * c,
                   params={"s": s, "multiplier": multiplier, "constant": c})

    @classmethod
    def cgmy(cls, C: float, G: float, M: float, Y: float, multiplier: float = 1.0):
        # G tempers positive jumps, M negative ones: density C exp(-G z+ - M z-)/|z|^(1+Y)
        return cls("cgmy", order=Y, scale=multiplier * C, pos_decay=G, neg_decay=M,
                   params={"C": C, "G": G, "M": M, "Y": Y, "multiplier": multiplier})

    @classmethod
    def truncated(cls, s: float, band: float, multiplier: float = 1.0, constant: float | None = None):
        c = fractional_constant(s) if constant is None else constant
        return cls("truncated", order=s, scale=multiplier * c, band=band,
                   params={"s": s, "band": band, "multiplier": multiplier, "constant": c})

    @classmethod
    def one_sided(cls, s: float, sign: int = 1, multiplier: float = 1.0, constant: float | None = None):
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        c = fractional_constant(s) if constant is None else constant
        return cls("one_sided", order=s, scale=multiplier * c, pos=sign > 0, neg=sign < 0,
                   params={"s": s, "sign": sign, "multiplier": multiplier, "constant": c})

    @classmethod
    def zero(cls):
        return cls("zero", order=1.0, scale=0.0)

    # -- basic queries ----------------------------------------------------
    @property
    def sigma(self) -> float:
        """Singularity order used in the CFL ratio ``h / r**sigma``."""
        return 0.0 if self.is_zero else self.order

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.scale == 0.0 or not (self.pos or self.neg)

    @property
    def is_symmetric(self) -> bool:
        return self.is_zero or (self.pos and self.neg and self.pos_decay == self.neg_decay)

    def sides(self):
        if self.is_zero:
            return []
        out = []
        if self.pos:
            out.append((1, self.pos_decay))
        if self.neg:
            out.append((-1, self.neg_decay))
        return out

    def side_density(self, y, decay):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            d = self.scale * np.abs(y) ** (-1.0 - self.order) * np.exp(-decay * np.abs(y))
        return np.where((y > 0) & (y >= self.band), d, 0.0)

    def density(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        for sign, decay in self.sides():
            out = out + np.where(sign * z > 0, self.side_density(sign * z, decay), 0.0)
        return out

    def breakpoints(self):
        return [self.band, -self.band] if self.band > 0 else []

    def side_integral(self, p: float, lo: float, hi: float, sign: int) -> float:
        """``int_lo^hi y**p k_sign(y) dy`` over ``y > 0``."""
        decay = dict(self.sides()).get(sign)
        if decay is None:
            return 0.0
        lo = max(lo, self.band)
        if not hi > lo:
            return 0.0
        q = p - 1.0 - self.order
        if decay == 0.0:
            if q == -1.0:
                if not math.isfinite(hi) or lo == 0.0:
                    return math.inf
                return self.scale * math.log(hi / lo)
            if lo == 0.0 and q <= -1.0:
                return math.inf
            if not math.isfinite(hi):
                if q >= -1.0:
                    return math.inf
                return self.scale * (-(lo ** (q + 1.0))) / (q + 1.0)
            return self.scale * (hi ** (q + 1.0) - lo ** (q + 1.0)) / (q + 1.0)
        f = lambda y: y**p * float(self.side_density(y, decay))  # noqa: E731
        if lo == 0.0 and q <= -1.0:
            return math.inf
        if math.isfinite(hi) or lo >= 1.0:
            return _quad(f, lo, hi)
        return _quad(f, lo, 1.0) + _quad(f, 1.0, hi)

    def levy_integral(self) -> float:
        """``int min(1, z^2) dnu``."""
        return sum(
            self.side_integral(2.0, 0.0, 1.0, s) + self.side_integral(0.0, 1.0, math.inf, s)
            for s, _ in self.sides()
        )

    def describe(self) -> dict:
        return {"kind": self.kind, "order": self.order, "scale": self.scale, **self.params}


@dataclass(frozen=True, eq=False)
class LevyDiscretization:
    """Quantities derived from a measure for a truncation radius and a grid.

    ``weights[k]`` is the hat-weighted mass at offset ``offsets[k]`` (jump of
    ``offsets[k] * rho``); ``tail_mass`` is the large-jump mass that does not
    fit in the table.
    """

    measure: LevyMeasure
    r: float
    rho: float
    sigma_r: float
    b_r: float
    lambda_r: float
    offsets: np.ndarray
    weights: np.ndarray
    tail_mass: float
    r_max: float
    walk_variance: float = 2.0
    _cache: dict = field(default_factory=dict, repr=False)

    def walk_step(self, h: float) -> float:
        """Half-width of the two-point walk replacing the small jumps over one step.

        The default variance ``2 h sigma_r^2`` gives the walk the generator
        ``sigma_r^2 phi''``, which is what the small jumps converge to; the
        ``"literal"`` walk (variance ``h sigma_r^2``) only carries half of it.
        """
        return math.sqrt(self.walk_variance * h) * self.sigma_r

    @property
    def half_width(self) -> int:
        return (len(self.offsets) - 1) // 2

    @property
    def table_mass(self) -> float:
        return float(self.weights.sum()) + self.tail_mass

    def weight(self, j: int) -> float:
        J = self.half_width
        return float(self.weights[j + J]) if -J <= j <= J else 0.0

    def jump_sizes(self) -> np.ndarray:
        return self.offsets * self.rho

    def domain_operator(self, n_nodes: int):
        """Toeplitz ``W[i, m] = omega_{m-i}`` over in-domain nodes and exterior mass.

        ``out[i]`` is the jump mass from node ``i`` that leaves the lattice
        (landing outside ``[a, b]`` or in the tail), so that
        ``W[i].sum() + out[i] == table_mass`` for every ``i``.
        """
        key = ("domain", n_nodes)
        if key not in self._cache:
            J = self.half_width
            if n_nodes - 1 > J:
                raise ValueError("weight table narrower than the domain")
            i = np.arange(n_nodes)
            diff = i[None, :] - i[:, None]
            W = self.weights[diff + J]
            out = self.table_mass - W.sum(axis=1)
            self._cache[key] = (W, np.maximum(out, 0.0))
        return self._cache[key]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "z_j", "omega_j"])
            for j, om in zip(self.offsets, self.weights):
                w.writerow([int(j), repr(float(j * self.rho)), repr(float(om))])


def _hat_weight(measure: LevyMeasure, j: int, rho: float, r: float) -> float:
    zj = j * rho
    cuts = [r, -r, 0.0, zj] + measure.breakpoints()
    total = 0.0
    for lo, hi in ((zj - rho, zj), (zj, zj + rho)):
        pts = sorted({lo, hi, *[c for c in cuts if lo < c < hi]})
        for a, b in zip(pts[:-1], pts[1:]):
            mid = 0.5 * (a + b)
            if abs(mid) < r or measure.density(mid) == 0.0:
                continue
            total += _quad(lambda z: (1.0 - abs(z - zj) / rho) * float(measure.density(z)), a, b)
    return total


_PANEL_X, _PANEL_W = np.polynomial.legendre.leggauss(16)


def _hat_weights(measure: LevyMeasure, offsets: np.ndarray, rho: float, r: float) -> np.ndarray:
    # Panels well separated from the origin and from every density kink carry an
    # analytic integrand: fixed Gauss-Legendre is exact to rounding there.
    # Everything else goes through adaptive quadrature.
    cuts = np.array([r, -r, 0.0] + measure.breakpoints())
    out = np.zeros(len(offsets))
    smooth = np.ones(len(offsets), dtype=bool)
    for side in (-1.0, 1.0):
        lo = offsets * rho + np.minimum(side, 0.0) * rho
        hi = lo + rho
        near = np.any((cuts[None, :] > lo[:, None] - 2 * rho) & (cuts[None, :] < hi[:, None] + 2 * rho), axis=1)
        smooth &= ~near
    zj = offsets[smooth] * rho
    for side in (-1.0, 1.0):
        mid = zj + 0.5 * side * rho
        z = mid[:, None] + 0.5 * rho * _PANEL_X[None, :]
        f = (1.0 - np.abs(z - zj[:, None]) / rho) * np.where(np.abs(z) >= r, measure.density(z), 0.0)
        out[smooth] += 0.5 * rho * (f @ _PANEL_W)
    for k in np.flatnonzero(~smooth):
        out[k] = _hat_weight(measure, int(offsets[k]), rho, r)
    return out


WALKS = {"consistent": 2.0, "literal": 1.0}


def derive(measure: LevyMeasure, r: float, grid, r_max: float | None = None,
           walk: str = "consistent") -> LevyDiscretization:
    """Small-jump variance, compensator drift, intensity and jump table."""
    if walk not in WALKS:
        raise ValueError(f"unknown walk {walk!r}; choose from {sorted(WALKS)}")
    if not r > 0:
        raise InvalidTruncation(f"truncation radius must be positive, got {r}")
    if r > 1:
        raise InvalidTruncation(f"truncation radius must lie in (0, 1], got {r}")
    rho = grid.rho
    if r_max is None:
        r_max = max(2.0 * (grid.b - grid.a), 10.0)
    J = int(math.ceil(r_max / rho - 1e-9))
    offsets = np.arange(-J, J + 1)
    if measure.is_zero:
        return LevyDiscretization(measure, r, rho, 0.0, 0.0, 0.0, offsets,
                                  np.zeros(len(offsets)), 0.0, r_max, WALKS[walk])

    lam = sum(measure.side_integral(0.0, r, math.inf, s) for s, _ in measure.sides())
    var = 0.5 * sum(measure.side_integral(2.0, 0.0, r, s) for s, _ in measure.sides())
    b_r = measure.side_integral(1.0, r, 1.0, 1) - measure.side_integral(1.0, r, 1.0, -1)
    if not (math.isfinite(lam) and math.isfinite(var)):
        raise NonIntegrableMeasure("derived quantities diverge")

    weights = _hat_weights(measure, offsets, rho, r)
    edge = J * rho
    tail = 0.0
    for sign, decay in measure.sides():
        k = lambda y, d=decay: float(measure.side_density(y, d))  # noqa: E731
        lo = max(edge, r)
        tail += _quad(lambda y: (y - edge) / rho * k(y), lo, edge + rho, measure.breakpoints())
        tail += measure.side_integral(0.0, edge + rho, math.inf, sign)
    return LevyDiscretization(measure, r, rho, math.sqrt(var), b_r, lam, offsets,
                              weights, tail, r_max, WALKS[walk])


def weight_row_sum_check(disc: LevyDiscretization) -> float:
    """Relative defect of ``sum_j omega_j + tail = lambda_r``."""
    if disc.lambda_r == 0.0:
        raise DegenerateIntensity("lambda_r is zero; the jump table is empty")
    return abs(disc.table_mass / disc.lambda_r - 1.0)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
_GL_T = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def generator_quad(measure: LevyMeasure, phi, x: float, r: float | None = None, part: str = "full") -> float:
    """Apply the nonlocal generator to ``phi`` at ``x`` by direct quadrature.

    ``phi`` must provide ``phi(x)``, ``phi.d1(x)`` and ``phi.d2(x)``.  ``part``
    selects the full operator, the small jumps ``|z| < r`` (``"inner"``) or the
    large jumps ``|z| > r`` (``"outer"``).  For ``|z| < 1`` the Taylor remainder
    is written as ``y^2 int_0^1 (1-t) phi''(x + t y) dt`` to avoid cancellation.
    """
    if measure.is_zero:
        return 0.0
    if part != "full" and r is None:
        raise ValueError("r is required for a partial generator")
    lo_y, hi_y = {"full": (0.0, math.inf), "inner": (0.0, r), "outer": (r, math.inf)}[part]
    phi0, dphi0 = float(phi(x)), float(phi.d1(x))
    total = 0.0
    for sign, decay in measure.sides():
        k = lambda y, d=decay: float(measure.side_density(y, d))  # noqa: E731

        def near(y, sign=sign, k=k):
            rem = np.dot(_GL_W, (1.0 - _GL_T) * phi.d2(x + sign * _GL_T * y))
            return y * y * rem * k(y)

        def far(y, sign=sign, k=k):
            return (float(phi(x + sign * y)) - phi0) * k(y)

        bps = [b for b in measure.breakpoints() if b > 0]
        a, b = lo_y, min(hi_y, 1.0)
        if b > a:
            total += _quad(near, a, b, bps)
        a, b = max(lo_y, 1.0), hi_y
        if b > a:
            if math.isfinite(b):
                total += _quad(far, a, b, bps)
            else:
                cut = max(a, 50.0)
                total += _quad(far, a, cut, bps)
                # oscillating tails defeat QUADPACK's infinite-range rule: integrate phi on a
                # long finite range and the phi0 term exactly to infinity
                total += quad(lambda y, sign=sign, k=k: float(phi(x + sign * y)) * k(y), cut, 1e4,
                              epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=20000)[0]
                total -= phi0 * _quad(k, cut, math.inf)
    del dphi0
    return total
