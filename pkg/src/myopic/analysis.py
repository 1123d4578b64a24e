"""Suboptimality bounds, parameter selection, reach/avoid metrics and the
true-dynamics oracle used to measure the realized myopic gap."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controller import CycleRecord, cube_lattice, cube_vertices
from .dynamics import ControlAffineSystem, ControlSpace, Trajectory, velocities
from .goodness import GoodnessFunction, Region
from .learner import choose_perturbations

DEFAULT_ORACLE_GRID = 101


@dataclass(frozen=True)
class BoundInputs:
    L: float
    M0: float
    M1: float
    m: int
    epsilon: float = 0.0
    delta: float = 1.0

    def __post_init__(self):
        for name in ("L", "M0", "M1", "epsilon"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.m < 1:
            raise ValueError("m must be a positive integer")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")


def epsilon_coefficient(L, M0, M1, m, delta) -> float:
    """Multiplier of epsilon in the suboptimality bound."""
    return 6 * L * (M0 + 1) * (M1 + 1) * (m + 1) ** 3 * (1 + 4 * m * math.sqrt(m) / delta)


def wiggle_term(L, M0, m, delta) -> float:
    """Loss from applying ``u* + du`` instead of ``u*``: ``L M0 (m+1) delta``."""
    return L * M0 * (m + 1) * delta


def suboptimality_bound(b: BoundInputs) -> float:
    """Worst-case per-instant gap of the coupled learn-control loop.

    Valid for every ``t >= (m+1) epsilon`` when G has Lipschitz constant L.
    """
    return epsilon_coefficient(b.L, b.M0, b.M1, b.m, b.delta) * b.epsilon + wiggle_term(
        b.L, b.M0, b.m, b.delta
    )


def model_error_radius(b: BoundInputs) -> float:
    """Model error used inside the suboptimality bound:
    ``2 M0 M1 (m+1)^3 (1 + 4 m^{3/2} / delta) eps``."""
    return 2 * b.M0 * b.M1 * (b.m + 1) ** 3 * (1 + 4 * b.m**1.5 / b.delta) * b.epsilon


def intermediate_bound(
    b: BoundInputs, traj_dist: float, state_dist: float, nu: float, include_wiggle: bool = False
) -> float:
    """Gap bound when the control was chosen on a nearby trajectory with model error ``nu``.

    ``2 L d + 2 L M1 (m+1) ||x - y|| + 2 L nu`` and, with ``include_wiggle``,
    an extra ``L M0 (m+1) delta``.
    """
    if min(traj_dist, state_dist, nu) < 0:
        raise ValueError("distances and nu must be nonnegative")
    out = 2 * b.L * traj_dist + 2 * b.L * b.M1 * (b.m + 1) * state_dist + 2 * b.L * nu
    if include_wiggle:
        out += wiggle_term(b.L, b.M0, b.m, b.delta)
    return out


def select_parameters(L, M0, M1, m, eta):
    """``(epsilon, delta)`` whose suboptimality bound does not exceed ``eta``.

    Half the budget goes to the wiggle term (``delta`` capped at 1), the other
    half to the learning term.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    if L <= 0 or M0 <= 0:
        raise ValueError("L and M0 must be positive")
    delta = min(1.0, eta / (2 * L * M0 * (m + 1)))
    epsilon = (eta / 2) / epsilon_coefficient(L, M0, M1, m, delta)
    # absorb round-off so the bound never lands an ulp above eta
    while suboptimality_bound(BoundInputs(L, M0, M1, m, epsilon, delta)) > eta:
        epsilon = np.nextafter(epsilon, 0.0)
    return float(epsilon), float(delta)


def epsilon_for_budget(L, M0, M1, m, delta, eta) -> float:
    """Largest epsilon keeping the bound within ``eta`` at a fixed ``delta`` (0 if none)."""
    rest = eta - wiggle_term(L, M0, m, delta)
    if rest <= 0:
        return 0.0
    return rest / epsilon_coefficient(L, M0, M1, m, delta)


# ---------------------------------------------------------------------------
# reach / avoid metrics


def first_bad_time(traj: Trajectory, bad: Region, resolution: float | None = None):
    """Earliest time the path enters ``bad``; ``None`` when it never does.

    The crossing inside the first offending sample interval is located by
    bisection on the linear interpolant, to ``resolution`` (default 1/100 of
    that interval).
    """
    sd = np.asarray(bad.signed_distance(traj.states), dtype=float)
    hits = np.flatnonzero(sd <= 0)
    if hits.size == 0:
        return None
    k = int(hits[0])
    if k == 0:
        return float(traj.times[0])
    t_a, t_b = traj.times[k - 1], traj.times[k]
    x_a, x_b = traj.states[k - 1], traj.states[k]
    tol = resolution if resolution is not None else (t_b - t_a) / 100
    lo, hi = 0.0, 1.0  # fractions of the interval; sd > 0 at lo, <= 0 at hi
    while (hi - lo) * (t_b - t_a) > tol:
        mid = 0.5 * (lo + hi)
        if bad.signed_distance(x_a + mid * (x_b - x_a)) <= 0:
            hi = mid
        else:
            lo = mid
    return float(t_a + hi * (t_b - t_a))


def reach_time(traj: Trajectory, target: Region, t_end: float | None = None):
    """Smallest sample time after which the path stays inside ``target``."""
    if t_end is not None:
        traj = traj.upto(t_end)
    inside = np.asarray(target.signed_distance(traj.states), dtype=float) <= 0
    if not inside[-1]:
        return None
    outside = np.flatnonzero(~inside)
    if outside.size == 0:
        return float(traj.times[0])
    return float(traj.times[outside[-1] + 1])


# ---------------------------------------------------------------------------
# true-dynamics oracle


@dataclass
class GapTrace:
    times: np.ndarray
    realized: np.ndarray
    oracle_max: np.ndarray
    bound: float | None = None
    tolerance: float = 0.0

    @property
    def gaps(self) -> np.ndarray:
        return self.oracle_max - self.realized

    @property
    def max_gap(self) -> float:
        return float(self.gaps.max()) if self.gaps.size else 0.0

    def rows(self):
        return list(zip(self.times, self.realized, self.oracle_max, self.gaps))


def oracle_candidates(m: int, oracle_grid: int = DEFAULT_ORACLE_GRID) -> np.ndarray:
    parts = [cube_vertices(m)]
    if oracle_grid >= 2:
        parts.append(cube_lattice(m, oracle_grid))
    return np.unique(np.vstack(parts), axis=0)


def oracle_gap_trace(
    sys: ControlAffineSystem,
    records: list[CycleRecord],
    traj: Trajectory,
    G: GoodnessFunction,
    oracle_grid: int = DEFAULT_ORACLE_GRID,
    space: ControlSpace | None = None,
    bound: float | None = None,
    delta: float | None = None,
) -> GapTrace:
    """Per-cycle gap between the best achievable goodness and the realized one.

    Both sides use the plant's true velocity field at the cycle anchor: the
    oracle maximizes over the cube vertices plus an ``oracle_grid^m`` lattice,
    the realized value uses the control the controller actually selected.
    With ``delta`` the realized value is the worst over the wiggled controls
    ``u* + du^j`` applied during the following cycle, which is what the plant
    really receives.
    """
    m = sys.input_dim
    space = space or ControlSpace.unit(m)
    cands = oracle_candidates(m, oracle_grid)
    phys = space.denormalize(cands)
    times = np.empty(len(records))
    realized = np.empty(len(records))
    best = np.empty(len(records))
    scale = 0.0
    for i, rec in enumerate(records):
        history = traj.upto(rec.anchor_time)
        x = history.final_state
        # the applied control joins the oracle's candidates, so the oracle dominates
        if delta is None:
            applied = rec.chosen_control[None, :]
        else:
            applied = choose_perturbations(rec.chosen_control, delta).probes
        k = applied.shape[0]
        vs = velocities(sys, x, np.vstack([space.denormalize(applied), phys]))
        vals = G.many(history, vs)
        times[i] = rec.anchor_time
        realized[i] = vals[:k].min()
        best[i] = vals.max()
        scale = max(scale, float(np.max(np.abs(vals))))
    tol = 1e-9 * (1.0 + scale)
    return GapTrace(times, realized, best, bound, tol)
