"""Goodness functions: scores of (trajectory so far, candidate velocity).

Every catalogue function accepts either one velocity ``(n,)`` or a batch
``(k, n)`` and returns a float or a ``(k,)`` array respectively, so the
controller and the oracle can score many candidates per call.  Regions are
given by signed distance functions that must likewise broadcast over leading
axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import Trajectory

#: Returned by :func:`slope_goodness` when the horizontal speed is not positive.
SLOPE_SENTINEL = -1e12
SLOPE_V1_FLOOR = 1e-9
DEFAULT_PROBE_DT = 1e-6


@dataclass(frozen=True)
class GoodnessFunction:
    """Wraps ``eval(trajectory, v)``; ``lipschitz`` is L in the pseudo-metric sense.

    ``batched`` says whether ``eval`` already handles a ``(k, n)`` array of
    velocities.  If not, :meth:`many` falls back to a Python loop.
    """

    eval: Callable[[Trajectory, np.ndarray], object]
    lipschitz: float | None = None
    label: str = "G"
    batched: bool = True

    def __call__(self, traj: Trajectory, v) -> float:
        return float(self.eval(traj, np.asarray(v, dtype=float)))

    def many(self, traj: Trajectory, vs) -> np.ndarray:
        vs = np.atleast_2d(np.asarray(vs, dtype=float))
        if self.batched:
            out = np.asarray(self.eval(traj, vs), dtype=float)
            return np.broadcast_to(out, (vs.shape[0],)).copy()
        return np.array([float(self.eval(traj, v)) for v in vs])


@dataclass(frozen=True)
class Region:
    """Set described by a signed distance: negative inside, zero on the boundary."""

    signed_distance: Callable[[np.ndarray], object]
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = "region"

    def contains(self, x) -> bool:
        return bool(self.signed_distance(np.asarray(x, dtype=float)) <= 0)


def half_space(normal, offset: float = 0.0, label="half-space") -> Region:
    """``{x : normal . x <= offset}``."""
    a = np.asarray(normal, dtype=float)
    na = np.linalg.norm(a)
    if na == 0:
        raise ValueError("normal must be nonzero")
    a_unit = a / na
    c = offset / na

    def sd(x):
        return np.asarray(x) @ a_unit - c

    def grad(x):
        return np.broadcast_to(a_unit, np.shape(x)).copy()

    return Region(sd, grad, label)


def ball(center, radius: float, label="ball") -> Region:
    center = np.asarray(center, dtype=float)
    if radius < 0:
        raise ValueError("radius must be nonnegative")

    def sd(x):
        return np.linalg.norm(np.asarray(x) - center, axis=-1) - radius

    def grad(x):
        d = np.asarray(x) - center
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        return d / np.where(r == 0, 1.0, r)

    return Region(sd, grad, label)


def box(lower, upper, label="box") -> Region:
    """Axis-aligned box; exact Euclidean signed distance, no closed-form gradient."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    center = (lower + upper) / 2
    half = (upper - lower) / 2

    def sd(x):
        q = np.abs(np.asarray(x) - center) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    return Region(sd, None, label)


def slab(axis: int, lower: float, upper: float, label="slab") -> Region:
    """``{x : lower <= x[axis] <= upper}``."""
    mid = (lower + upper) / 2
    half = (upper - lower) / 2

    def sd(x):
        return np.abs(np.asarray(x)[..., axis] - mid) - half

    return Region(sd, None, label)


def _interp_states(traj: Trajectory, grid):
    return np.column_stack([np.interp(grid, traj.times, col) for col in traj.states.T])


def trajectory_distance(a: Trajectory, b: Trajectory) -> float:
    """``|T1 - T2| + max_{t <= min(T1, T2)} ||phi1(t) - phi2(t)||``.

    Both paths are linearly interpolated onto the union of their sample grids.
    """
    if len(a) == 0 or len(b) == 0:
        raise ValueError("trajectories must be nonempty")
    if a.states.shape[1] != b.states.shape[1]:
        raise ValueError("trajectories live in different state spaces")
    t_lo = max(a.times[0], b.times[0])
    t_hi = min(a.times[-1], b.times[-1])
    grid = np.union1d(a.times, b.times)
    grid = grid[(grid >= t_lo) & (grid <= t_hi)]
    if grid.size == 0:
        grid = np.array([t_lo])
    gap = np.linalg.norm(_interp_states(a, grid) - _interp_states(b, grid), axis=1)
    return float(abs(a.times[-1] - b.times[-1]) + gap.max())


def _current(traj):
    return traj.states[-1]


# ---------------------------------------------------------------------------
# catalogue


def slope_goodness() -> GoodnessFunction:
    """``v2 / v1`` for a horizontally moving vehicle; sentinel when ``v1`` is not positive."""

    def G(traj, v):
        v = np.asarray(v, dtype=float)
        v1, v2 = v[..., 0], v[..., 1]
        ok = v1 > SLOPE_V1_FLOOR
        return np.where(ok, v2 / np.where(ok, v1, 1.0), SLOPE_SENTINEL)

    return GoodnessFunction(G, None, "slope")


def distance_rate(region: Region, x, v, probe_dt: float = DEFAULT_PROBE_DT):
    """One-sided rate of change of ``region``'s signed distance when moving from x along v.

    Uses the gradient when the region has one and ``x`` is outside it,
    otherwise a forward difference with step ``probe_dt``.
    """
    v = np.asarray(v, dtype=float)
    d0 = region.signed_distance(x)
    if region.gradient is not None and d0 > 0:
        return v @ region.gradient(x)
    return (region.signed_distance(x + probe_dt * v) - d0) / probe_dt


def distance_rate_goodness(region: Region, probe_dt: float = DEFAULT_PROBE_DT) -> GoodnessFunction:
    """Speed at which the state recedes from ``region`` (positive = moving away)."""
    if probe_dt <= 0:
        raise ValueError("probe_dt must be positive")

    def G(traj, v):
        return distance_rate(region, _current(traj), v, probe_dt)

    return GoodnessFunction(G, None, f"distance-rate({region.label})")


def zone_goodness(interior: Region, target: Region, probe_dt: float = DEFAULT_PROBE_DT) -> GoodnessFunction:
    """Head for the interior zone when outside it, otherwise head for the target.

    Discontinuous in the current state, so it has no Lipschitz constant.
    """

    def G(traj, v):
        x = _current(traj)
        aim = target if interior.signed_distance(x) <= 0 else interior
        return -distance_rate(aim, x, v, probe_dt)

    return GoodnessFunction(G, None, f"zone({interior.label},{target.label})")


def mixed_goodness(
    bad: Region, target: Region, d_bad_max: float, probe_dt: float = DEFAULT_PROBE_DT
) -> GoodnessFunction:
    """Blend of escaping ``bad`` and approaching ``target``.

    The weight ``lam = clip(d_bad(x) / d_bad_max, 0, 1)`` shifts priority to
    the target as the state gets safer.
    """
    if d_bad_max <= 0:
        raise ValueError("d_bad_max must be positive")

    def G(traj, v):
        x = _current(traj)
        lam = min(max(float(bad.signed_distance(x)) / d_bad_max, 0.0), 1.0)
        away = distance_rate(bad, x, v, probe_dt)
        toward = distance_rate(target, x, v, probe_dt)
        return (1.0 - lam) * away - lam * toward

    return GoodnessFunction(G, None, f"mixed({bad.label},{target.label})")


def sequential_goodness(stages: Sequence[tuple[Region, GoodnessFunction]]) -> GoodnessFunction:
    """Delegate to the first stage whose target the history has never touched.

    Once every target has been visited the last stage stays in charge.
    """
    stages = list(stages)
    if not stages:
        raise ValueError("need at least one stage")

    def active(traj):
        for target, g in stages:
            if not np.any(np.asarray(target.signed_distance(traj.states)) <= 0):
                return g
        return stages[-1][1]

    def G(traj, v):
        g = active(traj)
        v = np.asarray(v, dtype=float)
        return g.many(traj, v) if v.ndim == 2 else g(traj, v)

    return GoodnessFunction(G, None, "sequential")


def aircraft_climb_rate(x) -> float:
    """Climb rate of the aircraft model computed from the state."""
    return -x[1] + 2.21 * x[3]


def aircraft_branch(x) -> int:
    """Which of the three aircraft goodness branches applies at state ``x``."""
    h, theta = x[4], x[3]
    if h < 100:
        return 1
    if abs(theta) > 40 or abs(aircraft_climb_rate(x)) > 30 or 900 <= h <= 1100:
        return 2
    return 3


def aircraft_goodness() -> GoodnessFunction:
    """Piecewise goodness for keeping the damaged aircraft airborne near 1000 ft.

    1. below 100 ft: push pitch rate up and sink rate down (``v3 - v2``);
    2. pitch or climb rate out of bounds, or altitude already in [900, 1100]:
       damp ``w_v`` and ``theta`` back towards zero once they exceed 2;
    3. otherwise steer altitude towards 1000 ft.
    """

    def G(traj, v):
        x = _current(traj)
        if x.shape != (5,):
            raise ValueError("aircraft goodness expects 5-dimensional states")
        v = np.asarray(v, dtype=float)
        v2, v3 = v[..., 1], v[..., 2]
        branch = aircraft_branch(x)
        if branch == 1:
            return v3 - v2
        if branch == 2:
            m1 = -v2 * np.sign(x[1]) if abs(x[1]) > 2 else 0.0 * v2
            m2 = -v3 * np.sign(x[3]) if abs(x[3]) > 2 else 0.0 * v3
            return m1 + m2
        return (v3 - v2) * np.sign(1000.0 - x[4])

    return GoodnessFunction(G, None, "aircraft")


VANDERPOL_LIPSCHITZ = 29.0


def vanderpol_goodness() -> GoodnessFunction:
    """``-v2 * arctan(x2)``: reward driving the second state towards zero.

    L = 29 on [-5, 5]^2 with the velocities the oscillator can produce there.
    """

    def G(traj, v):
        v = np.asarray(v, dtype=float)
        return -v[..., 1] * math.atan(_current(traj)[1])

    return GoodnessFunction(G, VANDERPOL_LIPSCHITZ, "vanderpol")


def linear_goodness(weights) -> GoodnessFunction:
    """``w . v`` with a fixed weight vector; L = ||w||."""
    w = np.asarray(weights, dtype=float)

    def G(traj, v):
        return np.asarray(v, dtype=float) @ w

    return GoodnessFunction(G, float(np.linalg.norm(w)), "linear")
