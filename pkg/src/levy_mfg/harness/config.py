"""Solver configuration: named presets, YAML files and problem construction.

A configuration is a plain mapping::

    name: example1
    domain: [0.0, 1.0]
    horizon: 2.0
    measure: {kind: fractional, params: {s: 1.5}, multiplier: 0.09}
    costs: {f: "5*(x - 0.5*(1 - sin(2*pi*t)))**2", G: "0", K: 1.0, delta: 0.4}
    hamiltonian: {kind: quadratic}
    m0: "exp(-(x - 0.5)**2/0.01)"
    params: {rho: 0.005, h: 0.005, r_rule: "h**(1/(2*s))", eps_rule: "sqrt(h)"}
    solver: {tol: 1.0e-12, max_iter: 300, damping: 0.5}
    cfl: {threshold: 5.0, force: false}

The operator in front of the measure is ``multiplier**2``; ``r_rule`` and
``eps_rule`` are expressions in ``h``, ``rho`` and ``s`` (the singularity order).
Optional keys: ``params.walk`` (``consistent`` or ``literal`` small-jump walk),
``solver.cost_time`` (``left`` or ``right`` time sampling of the running cost),
``solver.control_exterior`` (``clamp`` or ``ghost``), ``ghost`` and
``control_box`` overrides.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import numpy as np
import sympy as sp
import yaml

from ..coupler import MfgProblem
from ..fpk import initial_masses
from ..grid import Grid
from ..hjb import CouplingCosts, Hamiltonian
from ..levy import LevyMeasure, fractional_constant

_t, _x, _h, _rho, _s = sp.symbols("t x h rho s", real=True)

_EX1_F = "5*(x - 0.5*(1 - sin(2*pi*t)))**2"
_EX1_M0 = "exp(-(x - 0.5)**2/0.01)"

_BASE_EX1 = {
    "domain": [0.0, 1.0],
    "horizon": 2.0,
    "measure": {"kind": "fractional", "params": {"s": 1.5}, "multiplier": 0.09},
    "costs": {"f": _EX1_F, "G": "0", "K": 1.0, "delta": 0.4},
    "hamiltonian": {"kind": "quadratic"},
    "m0": _EX1_M0,
    "params": {"rho": 0.005, "h": 0.005, "r_rule": "h**(1/(2*s))", "eps_rule": "sqrt(h)"},
    "solver": {"tol": 1e-12, "max_iter": 300, "damping": 0.5, "control_exterior": "clamp"},
    "cfl": {"threshold": 5.0, "force": False},
}


def _ex1(**changes):
    cfg = copy.deepcopy(_BASE_EX1)
    for key, val in changes.items():
        cfg[key] = val
    return cfg


PRESETS = {
    "example1": _ex1(name="example1"),
    "example2-i": _ex1(name="example2-i"),
    "example2-ii": _ex1(
        name="example2-ii",
        measure={"kind": "one_sided", "params": {"s": 1.5, "sign": 1}, "multiplier": 0.09},
    ),
    "example2-iii": _ex1(
        name="example2-iii",
        measure={"kind": "truncated", "params": {"s": 1.5, "band": 0.5}, "multiplier": 0.09},
    ),
    "example2-iv": _ex1(
        name="example2-iv",
        measure={"kind": "cgmy", "params": {"G": 1.0, "M": 10.0, "Y": 1.5}, "multiplier": 0.09},
    ),
    "example3": {
        "name": "example3",
        "domain": [-1.0, 2.0],
        "horizon": 10.0,
        "measure": {"kind": "fractional", "params": {"s": 1.5}, "multiplier": 0.09},
        "costs": {"f": "x**2", "G": "(x - 2)**2", "K": 0.0, "delta": 0.4},
        "hamiltonian": {"kind": "quadratic"},
        "m0": "Piecewise((1, (x >= 1) & (x <= 2)), (0, True))",
        "params": {"rho": 0.01, "h": 0.01, "r_rule": "h**(1/(2*s))", "eps_rule": "sqrt(h)"},
        "solver": {"tol": 1e-12, "max_iter": 300, "damping": 0.5, "control_exterior": "clamp"},
        "cfl": {"threshold": 5.0, "force": False},
    },
    "example4": _ex1(
        name="example4",
        horizon=0.5,
        measure={"kind": "fractional", "params": {"s": 1.5}, "multiplier": 0.2},
        params={"rho": 2.0**-4, "h": 2.0**-4, "r_rule": "h**(1/(2*s))", "eps_rule": "0.25"},
        region=[1.0 / 3.0, 2.0 / 3.0],
        study={"levels": [2, 3, 4, 5, 6], "reference": 8},
    ),
}
# Parameters as originally stated for each example, carried verbatim into manifests.
STATED = {
    "example1": [
        "h = \\rho = 0.005", "r = h^{\\frac{1}{2 s}}", "\\epsilon = \\sqrt{h} \\approx 0.0707",
        "\\sigma = 0.09", "\\delta = 0.4", "K = 1",
    ],
    "example3": ["h = \\rho = 0.01"],
    "example4": ["T = 0.5", "\\epsilon = 0.25", "\\rho = h, r = h^{\\frac{1}{2 s}}"],
}
for _name in ("example2-i", "example2-ii", "example2-iii", "example2-iv"):
    STATED[_name] = STATED["example1"]
for _name, _stated in STATED.items():
    PRESETS[_name]["stated"] = list(_stated)

PRESETS["example3-coupled"] = copy.deepcopy(PRESETS["example3"])
PRESETS["example3-coupled"]["name"] = "example3-coupled"
PRESETS["example3-coupled"]["costs"]["K"] = 0.4


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[name])


def load_config(path) -> dict:
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: configuration must be a mapping")
    return cfg


def dump_config(cfg: dict, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg, sort_keys=True))


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def _expr(text) -> sp.Expr:
    return sp.sympify(str(text), locals={"t": _t, "x": _x})


def compile_tx(text):
    """Vectorised ``f(t, x)`` from an expression string."""
    fn = sp.lambdify((_t, _x), _expr(text), "numpy")

    def f(t, x):
        t, x = np.asarray(t, dtype=float), np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(fn(t, x), dtype=float), np.broadcast(t, x).shape)

    return f


def compile_x(text):
    f = compile_tx(text)
    return lambda x: f(0.0, x)


def build_measure(spec: dict) -> LevyMeasure:
    kind = spec.get("kind", "fractional")
    p = dict(spec.get("params", {}))
    mult = float(spec.get("multiplier", 1.0)) ** 2
    if kind == "zero":
        return LevyMeasure.zero()
    if kind == "fractional":
        return LevyMeasure.fractional(p["s"], mult, p.get("constant"))
    if kind == "truncated":
        return LevyMeasure.truncated(p["s"], p["band"], mult, p.get("constant"))
    if kind == "one_sided":
        return LevyMeasure.one_sided(p["s"], int(p.get("sign", 1)), mult, p.get("constant"))
    if kind == "cgmy":
        C = p.get("C")
        C = fractional_constant(p["Y"]) if C is None else C
        return LevyMeasure.cgmy(C, p["G"], p["M"], p["Y"], mult)
    raise ValueError(f"unknown measure kind {kind!r}")


def build_hamiltonian(spec: dict | None) -> Hamiltonian:
    spec = spec or {"kind": "quadratic"}
    if spec.get("kind", "quadratic") != "quadratic":
        raise ValueError("only the quadratic Hamiltonian is configurable from files")
    return Hamiltonian.quadratic(float(spec.get("weight", 1.0)))


def rule_value(rule, h: float, rho: float, s: float) -> float:
    e = sp.sympify(str(rule), locals={"h": _h, "rho": _rho, "s": _s})
    return float(e.subs({_h: h, _rho: rho, _s: s}))


def resolved_parameters(cfg: dict) -> dict:
    """Numerical ``rho, h, r, eps`` after applying the rules (``h`` snapped to ``T/N``)."""
    p = cfg["params"]
    measure = build_measure(cfg["measure"])
    h0 = float(p["h"])
    n = max(1, int(round(float(cfg["horizon"]) / h0)))
    h = float(cfg["horizon"]) / n
    rho = float(p.get("rho", h))
    s = measure.order
    return {
        "rho": rho,
        "h": h,
        "n_steps": n,
        "r": min(rule_value(p.get("r_rule", "h**(1/(2*s))"), h, rho, s), 1.0),
        "eps": rule_value(p.get("eps_rule", "sqrt(h)"), h, rho, s),
    }


def with_resolution(cfg: dict, h: float, rho: float | None = None) -> dict:
    out = copy.deepcopy(cfg)
    out["params"]["h"] = h
    out["params"]["rho"] = h if rho is None else rho
    return out


def build_problem(cfg: dict, force: bool | None = None) -> MfgProblem:
    a, b = (float(v) for v in cfg["domain"])
    res = resolved_parameters(cfg)
    grid = Grid.uniform(a, b, res["rho"])
    measure = build_measure(cfg["measure"])
    c = cfg["costs"]
    costs = CouplingCosts(
        f=compile_tx(c["f"]), g=compile_x(c.get("G", "0")), K=float(c.get("K", 0.0)),
        delta=float(c.get("delta", 0.4)), f_expr=str(c["f"]), g_expr=str(c.get("G", "0")),
    )
    m0 = initial_masses(grid, compile_x(cfg["m0"]))
    solver = cfg.get("solver", {})
    cfl = cfg.get("cfl", {})
    return MfgProblem.build(
        grid, float(cfg["horizon"]), res["h"], measure, res["r"], res["eps"],
        build_hamiltonian(cfg.get("hamiltonian")), costs, m0,
        ghost=cfg.get("ghost"), control_box=cfg.get("control_box"),
        cfl_threshold=float(cfl.get("threshold", 5.0)),
        force=bool(cfl.get("force", False)) if force is None else force,
        damping=float(solver.get("damping", 0.5)),
        control_exterior=solver.get("control_exterior", "clamp"),
        cost_time=solver.get("cost_time", "left"),
        walk=cfg["params"].get("walk", "consistent"),
        name=cfg.get("name", "custom"), config=copy.deepcopy(cfg),
    )
