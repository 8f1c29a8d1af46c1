"""Problem data for finite-horizon control of finite-state pure jump processes.

A problem is a controlled rate kernel lambda[x][a][y] on a finite state space,
a strictly positive base intensity lambda0 on the action space, running and
terminal costs, and a horizon. All integrals over states/actions are finite
sums, so every solver in this package can be checked exactly.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


def _readonly(a):
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Problem:
    """Immutable problem data.

    rates has shape (n_states, n_actions, n_states); self-jumps (positive
    diagonal entries) are allowed and are treated as genuine jump events.
    running_cost is either (n_states, n_actions), constant in time, or
    (K, n_states, n_actions) sampled at the uniform nodes k*T/(K-1) and
    interpolated piecewise-linearly in between.
    """

    states: tuple
    actions: tuple
    rates: np.ndarray
    lambda0: np.ndarray
    running_cost: np.ndarray
    terminal_cost: np.ndarray
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "rates", _readonly(self.rates))
        object.__setattr__(self, "lambda0", _readonly(self.lambda0))
        object.__setattr__(self, "running_cost", _readonly(self.running_cost))
        object.__setattr__(self, "terminal_cost", _readonly(self.terminal_cost))
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def n_states(self):
        return len(self.states)

    @property
    def n_actions(self):
        return len(self.actions)

    @property
    def row_sums(self):
        """Total jump rate lambda(x, a, E) as an (n_states, n_actions) array."""
        return self.rates.sum(axis=2)


@dataclass(frozen=True)
class SolverConfig:
    """Numerical parameters shared by the solvers and diagnostic suites."""

    n_steps: int = 2000
    picard_tol: float = 1e-10
    picard_max_iter: int = 1000
    mc_paths: int = 100_000
    master_seed: int = 0
    penalization_levels: tuple = (1, 2, 4, 8, 16, 32, 64, 128, 256)

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError("n_steps must be at least 2")
        if self.picard_tol <= 0:
            raise ValueError("picard_tol must be positive")
        if self.picard_max_iter < 1:
            raise ValueError("picard_max_iter must be at least 1")
        if self.mc_paths < 1:
            raise ValueError("mc_paths must be at least 1")
        levels = tuple(int(n) for n in self.penalization_levels)
        if any(n <= 0 for n in levels):
            raise ValueError("penalization levels must be positive integers")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("penalization levels must be strictly increasing")
        object.__setattr__(self, "penalization_levels", levels)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def add(self, kind, location, detail):
        self.violations.append({"kind": kind, "location": location, "detail": detail})

    def __str__(self):
        if self.ok:
            return "problem admissible"
        return "\n".join(
            f"{v['kind']} at {v['location']}: {v['detail']}" for v in self.violations
        )


def validate_problem(p: Problem) -> ValidationReport:
    """Check admissibility of the problem data; pure and idempotent.

    Returns a report listing every violation (negative or non-finite rate,
    a lambda0 entry without full support, non-finite cost, bad horizon);
    the report is empty iff the problem is admissible.
    """
    rep = ValidationReport()
    nS, nA = p.n_states, p.n_actions
    if p.rates.shape != (nS, nA, nS):
        rep.add("rates shape", p.rates.shape, f"expected {(nS, nA, nS)}")
        return rep
    if p.lambda0.shape != (nA,):
        rep.add("lambda0 shape", p.lambda0.shape, f"expected {(nA,)}")
        return rep
    bad = ~np.isfinite(p.rates)
    for idx in np.argwhere(bad):
        rep.add("non-finite rate", tuple(int(i) for i in idx), float("nan"))
    neg = np.isfinite(p.rates) & (p.rates < 0)
    for idx in np.argwhere(neg):
        rep.add("negative rate", tuple(int(i) for i in idx), float(p.rates[tuple(idx)]))
    for b in range(nA):
        lb = p.lambda0[b]
        if not np.isfinite(lb):
            rep.add("non-finite lambda0", b, float("nan"))
        elif lb <= 0:
            rep.add("lambda0 support", b, float(lb))
    if p.running_cost.ndim not in (2, 3):
        rep.add("running_cost shape", p.running_cost.shape, "expected 2-D or 3-D")
    elif p.running_cost.shape[-2:] != (nS, nA):
        rep.add("running_cost shape", p.running_cost.shape, f"trailing axes must be {(nS, nA)}")
    elif p.running_cost.ndim == 3 and p.running_cost.shape[0] < 2:
        rep.add("running_cost shape", p.running_cost.shape, "time axis needs at least 2 layers")
    if not np.all(np.isfinite(p.running_cost)):
        rep.add("non-finite running cost", "f", "NaN or inf entry")
    if p.terminal_cost.shape != (nS,):
        rep.add("terminal_cost shape", p.terminal_cost.shape, f"expected {(nS,)}")
    elif not np.all(np.isfinite(p.terminal_cost)):
        rep.add("non-finite terminal cost", "g", "NaN or inf entry")
    if not (math.isfinite(p.horizon) and p.horizon > 0):
        rep.add("horizon", "T", float(p.horizon))
    return rep


def rate_bound(p: Problem) -> float:
    """Uniform bound Lambda_E = max over (x, a) of the total jump rate."""
    return float(p.row_sums.max())


def pair_rate_bound(p: Problem) -> float:
    """Rate bound for the pair process (X, I): Lambda_E plus the lambda0 mass."""
    return rate_bound(p) + float(p.lambda0.sum())


def cost_layer(p: Problem, t: float) -> np.ndarray:
    """Running cost at time t as an (n_states, n_actions) array.

    Piecewise-linear in t between the sampled nodes; exact at nodes.
    """
    T = p.horizon
    if t < -1e-12 or t > T + 1e-12:
        raise ValueError(f"time {t} outside [0, {T}]")
    f = p.running_cost
    if f.ndim == 2:
        return f
    K = f.shape[0] - 1
    u = min(max(t / T, 0.0), 1.0) * K
    k = min(int(u), K - 1)
    w = u - k
    return (1.0 - w) * f[k] + w * f[k + 1]


def cost_at(p: Problem, t: float, x: int, a: int) -> float:
    """Running cost f(t, x, a); see cost_layer for the interpolation rule."""
    return float(cost_layer(p, t)[x, a])


def problem_from_dict(doc: dict) -> Problem:
    """Build a Problem from the JSON model schema.

    Keys: states, actions, rates [x][a][y], lambda0, f (scalar | [x][a] |
    [k][x][a]), g, T. Scalar or 2-D f broadcasts over the missing axes.
    """
    states = tuple(str(s) for s in doc["states"])
    actions = tuple(str(a) for a in doc["actions"])
    nS, nA = len(states), len(actions)
    f = doc["f"]
    if np.isscalar(f):
        f = np.full((nS, nA), float(f))
    else:
        f = np.asarray(f, dtype=float)
    return Problem(
        states=states,
        actions=actions,
        rates=np.asarray(doc["rates"], dtype=float),
        lambda0=np.asarray(doc["lambda0"], dtype=float),
        running_cost=f,
        terminal_cost=np.asarray(doc["g"], dtype=float),
        horizon=float(doc["T"]),
    )


def problem_to_dict(p: Problem) -> dict:
    return {
        "states": list(p.states),
        "actions": list(p.actions),
        "rates": p.rates.tolist(),
        "lambda0": p.lambda0.tolist(),
        "f": p.running_cost.tolist(),
        "g": p.terminal_cost.tolist(),
        "T": p.horizon,
    }


def load_problem(path) -> Problem:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))
