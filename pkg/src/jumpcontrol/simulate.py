"""Exact simulation of the controlled jump process and of the pair (X, I).

Three samplers: the feedback-controlled chain X (thinning against the
uniform rate bound), the uncontrolled pair (X, I) with the autonomous
lambda0-driven action component (competing exponentials), and the tilted
pair where the I-intensity is nu(t, x, a, b) * lambda0[b] (thinning of the
I-component against the declared bound).

Every path is a pure function of (problem, inputs, seed); path i of a batch
uses the child stream SeedSequence(entropy=master_seed, spawn_key=(i,)), so
batch statistics are independent of worker count and scheduling.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import Problem, pair_rate_bound, rate_bound

NU_MIN = 1e-6

# Safety margin over the expected jump count before declaring explosion.
_CAP_BASE = 1000
_CAP_FACTOR = 50


class ExplosionError(RuntimeError):
    pass


def child_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent child stream for path `index` of a batch."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    )


@dataclass(frozen=True)
class Path:
    """A realized marked point process trajectory on [t0, T].

    times are the strictly increasing jump epochs; x_marks[i] is the state
    entered at times[i]. For pair paths a_marks carries the I-component
    (a_marks is None for X-only paths). Trajectories are cadlag: X_s equals
    the last mark at or before s.
    """

    t0: float
    x0: int
    a0: int | None
    times: np.ndarray
    x_marks: np.ndarray
    a_marks: np.ndarray | None
    horizon: float
    seed_key: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size and not (np.all(np.diff(t) > 0) and t[0] > self.t0 and t[-1] <= self.horizon):
            raise ValueError("jump times must be strictly increasing in (t0, T]")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "x_marks", np.asarray(self.x_marks, dtype=np.int64))
        if self.a_marks is not None:
            object.__setattr__(self, "a_marks", np.asarray(self.a_marks, dtype=np.int64))

    @property
    def n_jumps(self):
        return int(self.times.size)

    def state_at(self, s: float) -> int:
        i = int(np.searchsorted(self.times, s, side="right")) - 1
        return self.x0 if i < 0 else int(self.x_marks[i])

    def action_at(self, s: float) -> int:
        if self.a_marks is None:
            raise ValueError("X-only path has no action component")
        i = int(np.searchsorted(self.times, s, side="right")) - 1
        return self.a0 if i < 0 else int(self.a_marks[i])


@dataclass(frozen=True)
class FeedbackPolicy:
    """Action table alpha[k][x], piecewise-constant on [t_k, t_{k+1})."""

    table: np.ndarray
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "table", np.asarray(self.table, dtype=np.int64))
        if self.table.ndim != 2:
            raise ValueError("policy table must be 2-D (time layer, state)")

    @property
    def n_layers(self):
        return self.table.shape[0] - 1

    def layer_index(self, t: float) -> int:
        n = max(self.n_layers, 1)
        k = int(t / self.horizon * n + 1e-12)
        return min(max(k, 0), n - 1)

    def action_at(self, t: float, x: int) -> int:
        return int(self.table[self.layer_index(t), x])


def constant_policy(p: Problem, action: int) -> FeedbackPolicy:
    return FeedbackPolicy(np.full((2, p.n_states), action), p.horizon)


@dataclass(frozen=True)
class IntensityControl:
    """Bounded positive tilt nu[j][x][a][b] of the I-component intensity.

    Piecewise-constant on the uniform layers [t_j, t_{j+1}); entries must
    lie in [NU_MIN, n_max] (strict positivity keeps the tilted measure
    equivalent to the reference one).
    """

    field: np.ndarray
    horizon: float
    n_max: float

    def __post_init__(self):
        f = np.asarray(self.field, dtype=float)
        if f.ndim != 4:
            raise ValueError("control field must be 4-D (layer, state, action, mark)")
        if not np.all(np.isfinite(f)):
            raise ValueError("control field must be finite")
        if f.min() < NU_MIN or f.max() > self.n_max:
            raise ValueError(
                f"control field must lie in [{NU_MIN}, n_max={self.n_max}]; "
                f"got range [{f.min()}, {f.max()}]"
            )
        object.__setattr__(self, "field", f)

    @property
    def n_layers(self):
        return self.field.shape[0]

    def layer_index(self, t: float) -> int:
        k = int(t / self.horizon * self.n_layers + 1e-12)
        return min(max(k, 0), self.n_layers - 1)

    def layer_times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_layers + 1)

    def value(self, t: float, x: int, a: int, b: int) -> float:
        return float(self.field[self.layer_index(t), x, a, b])


def constant_control(p: Problem, values, n_max: float | None = None) -> IntensityControl:
    """Time- and state-homogeneous control; `values` broadcasts to the mark axis."""
    field = np.broadcast_to(
        np.asarray(values, dtype=float), (1, p.n_states, p.n_actions, p.n_actions)
    ).copy()
    if n_max is None:
        n_max = float(field.max())
    return IntensityControl(field, p.horizon, n_max)


def _draw_index(cum, total, u):
    """Inverse-CDF draw from an unnormalized cumulative table."""
    v = u * total
    last = len(cum) - 1
    for i in range(last):
        if v < cum[i]:
            return i
    return last


def _sim_tables(p: Problem) -> dict:
    """Per-problem scalar lookup tables for the samplers (cached lazily).

    Plain nested lists: scalar indexing in the tight simulation loops is
    several times faster on lists than on numpy arrays.
    """
    tables = p.__dict__.get("_sim_tables")
    if tables is None:
        tables = {
            "rows": p.row_sums.tolist(),
            "cums": p.rates.cumsum(axis=2).tolist(),
            "lam0_cum": p.lambda0.cumsum().tolist(),
            "lam0_tot": float(p.lambda0.sum()),
            "lam": rate_bound(p),
            "pair_lam": pair_rate_bound(p),
        }
        object.__setattr__(p, "_sim_tables", tables)
    return tables


def _cap(mean_rate, span):
    return _CAP_BASE + int(_CAP_FACTOR * mean_rate * max(span, 0.0))


def simulate_controlled_path(
    p: Problem, alpha: FeedbackPolicy, t: float, x: int, seed, rng=None
) -> Path:
    """Sample X on [t, T] under the feedback law alpha.

    Thinning: propose epochs at the constant bound Lambda_E, accept a
    proposal at s with probability lambda(X, alpha(s, X), E) / Lambda_E,
    then draw the mark from the normalized row. Accepted self-jumps are
    recorded as genuine points.
    """
    if rng is None:
        rng = child_rng(seed, 0) if np.isscalar(seed) else np.random.default_rng(seed)
    T = p.horizon
    tab = _sim_tables(p)
    lam = tab["lam"]
    times, marks = [], []
    if lam > 0.0:
        rows, cums = tab["rows"], tab["cums"]
        inv_lam = 1.0 / lam
        cap = _cap(lam, T - t)
        s, cur = t, int(x)
        table = alpha.table
        n_layers = max(alpha.n_layers, 1)
        scale = n_layers / alpha.horizon
        last_layer = n_layers - 1
        expo = rng.exponential
        unif = rng.random
        while True:
            s += expo() * inv_lam
            if s >= T:
                break
            a = int(table[min(int(s * scale + 1e-12), last_layer), cur])
            r = rows[cur][a]
            if r > 0.0 and unif() * lam < r:
                cur = _draw_index(cums[cur][a], r, unif())
                times.append(s)
                marks.append(cur)
                if len(times) > cap:
                    raise ExplosionError(
                        f"path exceeded {cap} jumps on [{t}, {T}] (bound {lam})"
                    )
    return Path(t, int(x), None, np.array(times), np.array(marks), None, T, ("ctrl", seed))


def simulate_pair_path(p: Problem, t: float, x: int, a: int, seed, rng=None) -> Path:
    """Sample the uncontrolled pair (X, I) on [t, T].

    Competing exponentials at total rate lambda(X, I, E) + lambda0(A): an
    X-jump keeps I and draws the new state from the normalized row, an
    I-jump keeps X and draws the new action from lambda0 / lambda0(A).
    """
    if rng is None:
        rng = child_rng(seed, 0) if np.isscalar(seed) else np.random.default_rng(seed)
    T = p.horizon
    tab = _sim_tables(p)
    rows, cums = tab["rows"], tab["cums"]
    lam0_tot, lam0_cum = tab["lam0_tot"], tab["lam0_cum"]
    cap = _cap(tab["pair_lam"], T - t)
    s, cx, ca = t, int(x), int(a)
    times, xm, am = [], [], []
    expo = rng.exponential
    unif = rng.random
    while True:
        rx = rows[cx][ca]
        r = rx + lam0_tot
        if r <= 0.0:
            break
        s += expo() / r
        if s >= T:
            break
        if unif() * r < rx:
            cx = _draw_index(cums[cx][ca], rx, unif())
        else:
            ca = _draw_index(lam0_cum, lam0_tot, unif())
        times.append(s)
        xm.append(cx)
        am.append(ca)
        if len(times) > cap:
            raise ExplosionError(f"pair path exceeded {cap} jumps on [{t}, {T}]")
    return Path(t, int(x), int(a), np.array(times), np.array(xm), np.array(am), T, ("pair", seed))


def simulate_tilted_path(
    p: Problem, nu: IntensityControl, t: float, x: int, a: int, seed, rng=None
) -> Path:
    """Sample the pair (X, I) with I-intensity nu(s, X, I, b) * lambda0[b].

    The X-component is sampled exactly as in simulate_pair_path; I-jump
    proposals arrive at the dominating rate n_max * lambda0(A) with marks
    from lambda0 and are accepted with probability nu(s, X, I, b) / n_max.
    """
    if rng is None:
        rng = child_rng(seed, 0) if np.isscalar(seed) else np.random.default_rng(seed)
    T = p.horizon
    tab = _sim_tables(p)
    rows, cums = tab["rows"], tab["cums"]
    lam0_tot, lam0_cum = tab["lam0_tot"], tab["lam0_cum"]
    n_max = nu.n_max
    bound_i = n_max * lam0_tot
    cap = _cap(tab["lam"] + bound_i, T - t)
    field = nu.field
    n_layers = nu.n_layers
    scale = n_layers / nu.horizon
    last_layer = n_layers - 1
    n_proposals = 0
    s, cx, ca = t, int(x), int(a)
    times, xm, am = [], [], []
    expo = rng.exponential
    unif = rng.random
    while True:
        rx = rows[cx][ca]
        r = rx + bound_i
        if r <= 0.0:
            break
        s += expo() / r
        if s >= T:
            break
        n_proposals += 1
        if n_proposals > cap:
            raise ExplosionError(f"tilted path exceeded {cap} proposals on [{t}, {T}]")
        if unif() * r < rx:
            cx = _draw_index(cums[cx][ca], rx, unif())
        else:
            b = _draw_index(lam0_cum, lam0_tot, unif())
            j = min(int(s * scale + 1e-12), last_layer)
            if unif() * n_max >= field[j, cx, ca, b]:
                continue
            ca = b
        times.append(s)
        xm.append(cx)
        am.append(ca)
    return Path(t, int(x), int(a), np.array(times), np.array(xm), np.array(am), T, ("tilt", seed))


def running_cost_along_path(p: Problem, path: Path) -> float:
    """Exact integral of f(s, X_s, I_s) ds over [t0, T] along a pair path.

    Breakpoints are the jump times plus (for time-dependent f) the cost
    grid nodes; on each piece the state is constant and f is linear, so the
    trapezoid rule is exact.
    """
    from .model import cost_at

    f = p.running_cost
    T = p.horizon
    total = 0.0
    if f.ndim == 2:
        ftab = _sim_tables(p).setdefault("f_const", f.tolist())
        lo, x, a = path.t0, path.x0, path.a0
        for j in range(path.n_jumps):
            hi = path.times[j]
            total += ftab[x][a] * (hi - lo)
            lo, x, a = hi, int(path.x_marks[j]), int(path.a_marks[j])
        return total + ftab[x][a] * (T - lo)
    nodes = np.linspace(0.0, T, f.shape[0])
    cuts = np.union1d(
        np.asarray([path.t0, *path.times.tolist(), T]),
        nodes[(nodes > path.t0) & (nodes < T)],
    )
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        mid = 0.5 * (lo + hi)
        x, a = path.state_at(mid), path.action_at(mid)
        total += 0.5 * (cost_at(p, lo, x, a) + cost_at(p, hi, x, a)) * (hi - lo)
    return total


def paths_to_csv(paths, fileobj):
    """Dump paths as rows (path_id, jump_index, time, X_mark, I_mark)."""
    w = csv.writer(fileobj)
    w.writerow(["path_id", "jump_index", "time", "X_mark", "I_mark"])
    for pid, path in enumerate(paths):
        for j in range(path.n_jumps):
            imark = "" if path.a_marks is None else int(path.a_marks[j])
            w.writerow([pid, j, repr(float(path.times[j])), int(path.x_marks[j]), imark])
