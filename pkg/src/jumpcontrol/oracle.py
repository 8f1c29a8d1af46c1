"""Brute-force backward-induction value engine used as ground truth.

Deliberately independent of the main solvers: plain Python loops and naive
summations over flat lists, a first-order explicit scheme, and a hard
stability precondition dt * Lambda_E <= 0.1 (which also makes the scheme
monotone). Meant to run on a grid 10x-25x finer than the solver under test.
"""
from __future__ import annotations

from .linear import ValueGrid
from .model import Problem, cost_at

_STABILITY = 0.1


def oracle_value(p: Problem, n_steps: int) -> ValueGrid:
    """Backward induction V[k][x] = V[k+1][x] + dt * max_a (sum + f)."""
    n_states = len(p.states)
    n_actions = len(p.actions)
    T = p.horizon
    dt = T / n_steps
    rates = [[[float(p.rates[x][a][y]) for y in range(n_states)]
              for a in range(n_actions)] for x in range(n_states)]
    lam = 0.0
    for x in range(n_states):
        for a in range(n_actions):
            row = 0.0
            for y in range(n_states):
                row += rates[x][a][y]
            if row > lam:
                lam = row
    if dt * lam > _STABILITY:
        raise ValueError(
            f"oracle stability precondition violated: dt*Lambda = {dt * lam:.4f} > {_STABILITY}"
        )
    time_dependent_cost = p.running_cost.ndim == 3
    f_const = None
    if not time_dependent_cost:
        f_const = [[float(p.running_cost[x][a]) for a in range(n_actions)]
                   for x in range(n_states)]
    values = [[0.0] * n_states for _ in range(n_steps + 1)]
    for x in range(n_states):
        values[n_steps][x] = float(p.terminal_cost[x])
    for k in range(n_steps - 1, -1, -1):
        t_k = k * dt
        nxt = values[k + 1]
        cur = values[k]
        for x in range(n_states):
            best = None
            for a in range(n_actions):
                total = 0.0
                row = rates[x][a]
                for y in range(n_states):
                    total += (nxt[y] - nxt[x]) * row[y]
                if time_dependent_cost:
                    total += cost_at(p, t_k, x, a)
                else:
                    total += f_const[x][a]
                if best is None or total > best:
                    best = total
            cur[x] = nxt[x] + dt * best
    import numpy as np

    return ValueGrid(np.array(values), T)


def oracle_compare(p: Problem, sol, tol: float, n_steps_oracle: int | None = None) -> dict:
    """Sup-norm gap between the oracle and a solved HJB solution.

    The oracle grid is a whole multiple of the solution grid so the two can
    be compared at shared nodes; reports the gap at t = 0, the gap over the
    shared grid, and pass/fail against tol.
    """
    grid = sol.values
    n_main = grid.n_steps
    if n_steps_oracle is None:
        n_steps_oracle = 25 * n_main
    ratio = max(1, round(n_steps_oracle / n_main))
    n_oracle = ratio * n_main
    ref = oracle_value(p, n_oracle)
    gap0 = 0.0
    gap_grid = 0.0
    for k in range(n_main + 1):
        for x in range(len(p.states)):
            d = abs(float(grid.values[k][x]) - float(ref.values[k * ratio][x]))
            if d > gap_grid:
                gap_grid = d
            if k == 0 and d > gap0:
                gap0 = d
    return {
        "gap_t0": gap0,
        "gap_grid": gap_grid,
        "n_steps_oracle": n_oracle,
        "tol": tol,
        "passed": gap_grid <= tol,
    }
