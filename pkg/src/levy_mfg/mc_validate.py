"""Monte-Carlo simulation of the discrete controlled process under a frozen feedback.

Each step a live path either jumps (probability ``1 - exp(-h lambda_r)``) or
moves along its characteristic ``x - h (alpha + b_r) +- w``; never both.  Jump
sizes are drawn from the hat-weight table as a categorical law, the large-jump
tail counting as an exit.  Paths leaving the cells of the lattice are retired
and booked against the sink, mirroring the leak of the FPK scheme.

Random streams: chunk ``c`` of ``chunk`` paths uses
``SeedSequence(seed).spawn(n_chunks)[c]``, so a run is reproducible for a fixed
``(seed, chunk)`` pair regardless of how chunks are scheduled.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .control import FeedbackControl
from .errors import DegenerateIntensity
from .grid import interp
from .levy import LevyDiscretization


@dataclass
class SimConfig:
    n_paths: int
    seed: int
    control: FeedbackControl
    disc: LevyDiscretization
    chunk: int = 1 << 14

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("need at least one path")
        if self.chunk < 1:
            raise ValueError("chunk size must be positive")

    @property
    def h(self) -> float:
        return self.control.h

    @property
    def n_steps(self) -> int:
        return self.control.n_steps


@dataclass
class EmpiricalFlow:
    """Path fractions per cell (``m[k, i]``) and the fraction retired so far."""

    m: np.ndarray
    escaped: np.ndarray
    jumps: np.ndarray
    moves: np.ndarray
    grid: object
    h: float
    n_paths: int
    meta: dict = field(default_factory=dict)

    def alive(self) -> np.ndarray:
        return self.m.sum(axis=1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "i", "x_i", "density"])
            x = self.grid.nodes
            for k in range(self.m.shape[0]):
                d = self.m[k] / self.grid.rho
                for i in range(self.grid.n_nodes):
                    w.writerow([k, i, repr(float(x[i])), repr(float(d[i]))])


def sample_initial(masses, grid, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draws from the cell-constant density with cell masses ``masses`` (cells clipped to ``[a, b]``)."""
    p = np.asarray(masses, dtype=float)
    if np.any(p < 0) or p.sum() <= 0:
        raise ValueError("initial masses must be nonnegative with positive total")
    idx = rng.choice(len(p), size=n, p=p / p.sum())
    lo = np.maximum(grid.nodes[idx] - grid.rho / 2, grid.a)
    hi = np.minimum(grid.nodes[idx] + grid.rho / 2, grid.b)
    return lo + (hi - lo) * rng.random(n)


def _jump_law(disc: LevyDiscretization):
    """Categorical law over table offsets plus a final exit category for the tail."""
    total = disc.table_mass
    probs = np.append(disc.weights, disc.tail_mass) / total
    return np.cumsum(probs), disc.jump_sizes()


def _run_chunk(x0, cfg: SimConfig, rng, m, escaped, jumps, moves):
    fc, disc = cfg.control, cfg.disc
    g = fc.grid
    h = cfg.h
    edges = g.cell_edges()
    lo, hi = edges[0], edges[-1]
    lam = disc.lambda_r
    p_jump = 1.0 - math.exp(-h * lam) if lam > 0 else 0.0
    cdf, sizes = _jump_law(disc) if p_jump > 0 else (None, None)
    w = disc.walk_step(h)
    x = x0.copy()
    alive = (x >= lo) & (x < hi)

    def book(k):
        m[k] += np.bincount(np.searchsorted(edges, x[alive], side="right") - 1, minlength=g.n_nodes)

    book(0)
    escaped[0] += np.count_nonzero(~alive)
    for k in range(cfg.n_steps):
        idx = np.flatnonzero(alive)
        xa = x[idx]
        jump = rng.random(len(idx)) < p_jump
        new = np.empty_like(xa)
        if np.any(jump):
            cat = np.searchsorted(cdf, rng.random(int(jump.sum())) * cdf[-1], side="right")
            cat = np.minimum(cat, len(cdf) - 1)
            z = np.where(cat < len(sizes), sizes[np.minimum(cat, len(sizes) - 1)], np.inf)
            new[jump] = xa[jump] + z
        walk = ~jump
        if np.any(walk):
            xw = xa[walk]
            alpha = interp(fc.alpha[k], g, xw)
            sign = np.where(rng.random(len(xw)) < 0.5, 1.0, -1.0)
            new[walk] = xw - h * (alpha + disc.b_r) + sign * w
        jumps[k] += int(jump.sum())
        moves[k] += int(walk.sum())
        x[idx] = new
        alive[idx] = (new >= lo) & (new < hi)
        book(k + 1)
        escaped[k + 1] += np.count_nonzero(~alive)


def simulate(cfg: SimConfig, m0) -> EmpiricalFlow:
    """Simulate ``cfg.n_paths`` paths from the lattice masses ``m0`` (or a callable sampler ``(n, rng) -> x``)."""
    g = cfg.control.grid
    N = cfg.n_steps
    m = np.zeros((N + 1, g.n_nodes))
    escaped = np.zeros(N + 1)
    jumps = np.zeros(N, dtype=np.int64)
    moves = np.zeros(N, dtype=np.int64)
    n_chunks = -(-cfg.n_paths // cfg.chunk)
    streams = np.random.SeedSequence(cfg.seed).spawn(n_chunks)
    for c, ss in enumerate(streams):
        n = min(cfg.chunk, cfg.n_paths - c * cfg.chunk)
        rng = np.random.default_rng(ss)
        x0 = m0(n, rng) if callable(m0) else sample_initial(m0, g, n, rng)
        _run_chunk(np.asarray(x0, dtype=float), cfg, rng, m, escaped, jumps, moves)
    meta = {"seed": cfg.seed, "n_paths": cfg.n_paths, "chunk": cfg.chunk, "n_chunks": n_chunks}
    return EmpiricalFlow(m / cfg.n_paths, escaped / cfg.n_paths, jumps, moves, g, cfg.h, cfg.n_paths, meta)


def sample_jumps(disc: LevyDiscretization, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` jump sizes from the table normalised to unit mass (tail excluded)."""
    if disc.lambda_r <= 0:
        raise DegenerateIntensity("no jumps above the truncation radius")
    p = disc.weights / disc.weights.sum()
    return disc.jump_sizes()[rng.choice(len(p), size=n, p=p)]


def jump_sampler_check(disc: LevyDiscretization, n_draws: int = 10**6, seed: int = 0) -> float:
    """Sup distance between the empirical CDF of ``n_draws`` jumps and the table CDF."""
    rng = np.random.default_rng(seed)
    draws = sample_jumps(disc, n_draws, rng)
    sizes = disc.jump_sizes()
    expected = np.cumsum(disc.weights) / disc.weights.sum()
    empirical = np.searchsorted(np.sort(draws), sizes, side="right") / n_draws
    return float(np.max(np.abs(empirical - expected)))
