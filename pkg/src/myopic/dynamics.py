"""Control-affine plants, piecewise-constant control laws and fixed-step RK4.

A plant is ``xdot = f(x) + sum_i g_i(x) u_i``.  Everything in this module
works with *physical* controls; the learner and controller operate on the
normalized cube ``[-1, 1]^m`` and go through :class:`ControlSpace` at the
plant boundary.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Vector = np.ndarray
VectorField = Callable[[np.ndarray], np.ndarray]

# Relative slack used when deciding whether a step already divides an interval.
_ALIGN_RTOL = 1e-9


class DivergenceError(RuntimeError):
    """Raised when the integrated state stops being finite.

    ``time`` and ``state`` are the last finite sample; ``trajectory`` holds
    everything integrated before the blow-up (may be ``None``).
    """

    def __init__(self, time, state, trajectory=None):
        super().__init__(f"state became non-finite after t={time:.6g}")
        self.time = float(time)
        self.state = np.array(state, dtype=float)
        self.trajectory = trajectory


class OperatingBoxWarning(UserWarning):
    """The simulated state left the box on which M0/M1 were declared."""


@dataclass
class ControlAffineSystem:
    """``xdot = drift(x) + sum_i input_maps[i](x) * u_i``.

    ``bound_norm`` (M0) and ``bound_lipschitz`` (M1) are only meaningful on
    ``state_box``; leaving the box during integration triggers an
    :class:`OperatingBoxWarning`.
    """

    state_dim: int
    input_dim: int
    drift: VectorField
    input_maps: Sequence[VectorField]
    bound_norm: float = math.inf
    bound_lipschitz: float = math.inf
    state_box: tuple[np.ndarray, np.ndarray] | None = None
    label: str = "plant"

    def __post_init__(self):
        if self.state_dim < 1 or self.input_dim < 1:
            raise ValueError("state_dim and input_dim must be positive")
        if len(self.input_maps) != self.input_dim:
            raise ValueError(
                f"expected {self.input_dim} input maps, got {len(self.input_maps)}"
            )
        if self.bound_norm < 0 or self.bound_lipschitz < 0:
            raise ValueError("M0 and M1 must be nonnegative")
        if self.state_box is not None:
            lo, hi = (np.asarray(b, dtype=float) for b in self.state_box)
            if lo.shape != (self.state_dim,) or hi.shape != (self.state_dim,):
                raise ValueError("state_box bounds must have length state_dim")
            self.state_box = (lo, hi)

    def input_matrix(self, x):
        """Columns ``g_1(x) .. g_m(x)`` stacked into an ``(n, m)`` array."""
        return np.column_stack([np.asarray(g(x), dtype=float) for g in self.input_maps])

    def velocity(self, x, u):
        # unchecked fast path used by the integrator
        v = self.drift(x)
        for g, ui in zip(self.input_maps, u):
            if ui != 0.0:
                v = v + g(x) * ui
        return v

    def in_box(self, x) -> bool:
        if self.state_box is None:
            return True
        lo, hi = self.state_box
        return bool(np.all(x >= lo) and np.all(x <= hi))


@dataclass(frozen=True)
class ControlSpace:
    """Axis-aligned box of physical controls, mapped affinely onto [-1, 1]^m."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError("every axis needs lower < upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, m: int) -> "ControlSpace":
        return cls(-np.ones(m), np.ones(m))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def half_width(self) -> np.ndarray:
        return (self.upper - self.lower) / 2

    @property
    def center(self) -> np.ndarray:
        return (self.upper + self.lower) / 2

    def normalize(self, u):
        u = np.asarray(u, dtype=float)
        return (2 * u - self.upper - self.lower) / (self.upper - self.lower)

    def denormalize(self, w):
        w = np.asarray(w, dtype=float)
        return self.center + self.half_width * w

    def contains(self, u, atol: float = 1e-12) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lower - atol) and np.all(u <= self.upper + atol))


@dataclass
class PiecewiseConstantLaw:
    """Control ``values[k]`` is held on ``[breakpoints[k], breakpoints[k+1])``.

    The last value is held until the end of integration.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float).ravel()
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.breakpoints.size == 0 or self.breakpoints[0] != 0.0:
            raise ValueError("first breakpoint must be 0")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if self.values.shape[0] != self.breakpoints.size:
            raise ValueError("need exactly one control value per interval")

    @classmethod
    def constant(cls, u) -> "PiecewiseConstantLaw":
        return cls([0.0], [np.atleast_1d(np.asarray(u, dtype=float))])

    def check_inside(self, space: ControlSpace):
        for u in self.values:
            if not space.contains(u):
                raise ValueError(f"control {u} lies outside the control space")


@dataclass
class Trajectory:
    """Sampled path ``phi|[t_0, T]``.

    ``controls[k]`` is the physical control applied on ``[times[k], times[k+1])``;
    the final row repeats the last applied control so every sample has one.
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).ravel()
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        if self.times.size == 0:
            raise ValueError("trajectory must contain at least one sample")
        if self.states.shape[0] != self.times.size:
            raise ValueError("len(states) must equal len(times)")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.controls is not None:
            self.controls = np.asarray(self.controls, dtype=float)
            if self.controls.ndim == 1:
                self.controls = self.controls[:, None]

    @classmethod
    def _trusted(cls, times, states, controls=None) -> "Trajectory":
        # skips validation; for views of data already known to be well formed
        traj = object.__new__(cls)
        traj.times, traj.states, traj.controls = times, states, controls
        return traj

    def __len__(self):
        return self.times.size

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def upto(self, t: float) -> "Trajectory":
        """Samples with time ``<= t`` (views, no copy)."""
        k = int(np.searchsorted(self.times, t + 1e-12 * max(1.0, abs(t)), side="right"))
        k = max(k, 1)
        ctrl = None if self.controls is None else self.controls[:k]
        return Trajectory._trusted(self.times[:k], self.states[:k], ctrl)

    def at(self, t: float) -> np.ndarray:
        """Piecewise-linear interpolation of the state at time ``t``."""
        return np.array([np.interp(t, self.times, col) for col in self.states.T])


class TrajectoryBuffer:
    """Growable storage for a trajectory being built segment by segment."""

    def __init__(self, t0, x0, state_dim, input_dim, capacity=1024):
        self._t = np.empty(capacity)
        self._x = np.empty((capacity, state_dim))
        self._u = np.full((capacity, input_dim), np.nan)
        self._t[0] = t0
        self._x[0] = x0
        self.size = 1

    def _reserve(self, extra):
        need = self.size + extra
        cap = self._t.size
        if need <= cap:
            return
        while cap < need:
            cap *= 2
        for name in ("_t", "_x", "_u"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:])
            new[: self.size] = old[: self.size]
            setattr(self, name, new)

    def append(self, times, states, u):
        k = len(times)
        self._reserve(k)
        self._u[self.size - 1] = u
        self._t[self.size : self.size + k] = times
        self._x[self.size : self.size + k] = states
        self._u[self.size : self.size + k] = u
        self.size += k

    @property
    def last_time(self) -> float:
        return float(self._t[self.size - 1])

    @property
    def last_state(self) -> np.ndarray:
        return self._x[self.size - 1].copy()

    def view(self) -> Trajectory:
        n = self.size
        return Trajectory._trusted(self._t[:n], self._x[:n], self._u[:n])

    def snapshot(self) -> Trajectory:
        n = self.size
        return Trajectory(self._t[:n].copy(), self._x[:n].copy(), self._u[:n].copy())


def evaluate_rhs(sys: ControlAffineSystem, x, u) -> np.ndarray:
    """Right-hand side ``f(x) + sum_i g_i(x) u_i`` with dimension checks."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if x.shape != (sys.state_dim,):
        raise ValueError(f"state must have length {sys.state_dim}, got shape {x.shape}")
    if u.shape != (sys.input_dim,):
        raise ValueError(f"control must have length {sys.input_dim}, got shape {u.shape}")
    v = np.array(sys.drift(x), dtype=float)
    if v.shape != (sys.state_dim,):
        raise ValueError("drift returned a vector of the wrong length")
    for i, g in enumerate(sys.input_maps):
        gi = np.asarray(g(x), dtype=float)
        if gi.shape != (sys.state_dim,):
            raise ValueError(f"input map {i} returned a vector of the wrong length")
        v = v + gi * u[i]
    return v


def velocities(sys: ControlAffineSystem, x, controls) -> np.ndarray:
    """True velocity field at ``x`` for a batch of physical controls ``(k, m)``."""
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    f = np.asarray(sys.drift(x), dtype=float)
    return f + controls @ sys.input_matrix(x).T


def _n_steps(duration, step):
    n = duration / step
    return max(1, int(math.ceil(n - _ALIGN_RTOL * max(n, 1.0))))


def rk4_segment(sys, x, u, t_start, duration, step):
    """Integrate with constant control ``u`` over ``[t_start, t_start + duration]``.

    The interval is split into equal steps no longer than ``step``, so no step
    crosses the segment end.  Returns ``(times, states)`` excluding the start
    sample.  Raises :class:`DivergenceError` on a non-finite state.
    """
    n = _n_steps(duration, step)
    h = duration / n
    x0 = x
    times = t_start + h * np.arange(1, n + 1)
    times[-1] = t_start + duration
    states = np.empty((n, sys.state_dim))
    rhs = sys.velocity
    u = [float(ui) for ui in u]
    half = 0.5 * h
    sixth = h / 6.0
    for i in range(n):
        k1 = rhs(x, u)
        k2 = rhs(x + half * k1, u)
        k3 = rhs(x + half * k2, u)
        k4 = rhs(x + h * k3, u)
        x = x + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        states[i] = x
    if not np.isfinite(states).all():
        bad = int(np.flatnonzero(~np.isfinite(states).all(axis=1))[0])
        if bad == 0:
            raise DivergenceError(t_start, x0)
        raise DivergenceError(times[bad - 1], states[bad - 1])
    return times, states


class _BoxWatch:
    def __init__(self, sys):
        self.sys = sys
        self.warned = False

    def check(self, states):
        if self.warned or self.sys.state_box is None:
            return
        lo, hi = self.sys.state_box
        if np.any(states < lo) or np.any(states > hi):
            self.warned = True
            warnings.warn(
                f"{self.sys.label}: trajectory left the declared operating box; "
                "M0/M1-based guarantees do not apply there",
                OperatingBoxWarning,
                stacklevel=3,
            )


def integrate(
    sys: ControlAffineSystem,
    x0,
    law: PiecewiseConstantLaw,
    t_end: float,
    step: float = 1e-4,
) -> Trajectory:
    """Fixed-step RK4 solution of the plant under a piecewise-constant law.

    Steps are shortened so that they end exactly on every law breakpoint.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.state_dim,):
        raise ValueError(f"x0 must have length {sys.state_dim}")
    if law.values.shape[1] != sys.input_dim:
        raise ValueError("law values must have length input_dim")

    buf = TrajectoryBuffer(0.0, x0, sys.state_dim, sys.input_dim)
    watch = _BoxWatch(sys)
    watch.check(x0[None, :])
    edges = list(law.breakpoints[law.breakpoints < t_end]) + [t_end]
    x = x0.copy()
    for k in range(len(edges) - 1):
        u = law.values[k]
        try:
            times, states = rk4_segment(sys, x, u, edges[k], edges[k + 1] - edges[k], step)
        except DivergenceError as err:
            err.trajectory = buf.snapshot()
            raise
        watch.check(states)
        buf.append(times, states, u)
        x = states[-1]
    return buf.snapshot()


def augment_with_disturbance(
    sys: ControlAffineSystem,
    disturbance: Callable[[float, np.ndarray], np.ndarray],
    bound_norm_star: float,
    bound_lipschitz_star: float,
) -> ControlAffineSystem:
    """Fold a time-varying disturbance ``N(t, x)`` into an autonomous plant.

    The new last coordinate is a clock with unit rate, so the returned plant
    has ``n + 1`` states.  Bounds become ``max(M0 + M0*, 1)`` and ``M1 + M1*``.
    """
    n = sys.state_dim

    def drift(z):
        x = z[:n]
        nx = disturbance(float(z[n]), x)
        if np.shape(nx) != (n,):
            raise ValueError(f"disturbance must return a vector of length {n}")
        out = np.empty(n + 1)
        out[:n] = sys.drift(x)
        out[:n] += nx
        out[n] = 1.0
        return out

    def lift(g):
        def g_aug(z):
            out = np.zeros(n + 1)
            out[:n] = g(z[:n])
            return out

        return g_aug

    box = None
    if sys.state_box is not None:
        lo, hi = sys.state_box
        box = (np.append(lo, 0.0), np.append(hi, np.inf))
    return ControlAffineSystem(
        state_dim=n + 1,
        input_dim=sys.input_dim,
        drift=drift,
        input_maps=[lift(g) for g in sys.input_maps],
        bound_norm=max(sys.bound_norm + bound_norm_star, 1.0),
        bound_lipschitz=sys.bound_lipschitz + bound_lipschitz_star,
        state_box=box,
        label=f"{sys.label}+disturbance",
    )


def make_aircraft() -> tuple[ControlAffineSystem, ControlSpace]:
    """Damaged-aircraft longitudinal model.

    State ``(w_l, w_v, q, theta, h)``: speed deviation, downward vertical speed,
    pitch rate, pitch angle (centiradians), altitude (ft).  Inputs are elevator
    deflection in [-30, 30] and thrust deviation in [-1, 1].
    """

    def drift(x):
        x1, x2, x3, x4, _ = x.tolist()
        return np.array(
            [
                -0.021 * x1 + 0.122 * x2 - 0.322 * x3,
                -0.209 * x1 - 0.53 * x2 + 2.21 * x3,
                0.017 * x1
                + 0.01 * math.cos(x1) * x1
                - 0.164 * x2
                + 0.15 * math.sin(x1) * x2
                - 0.421 * x3,
                x3,
                -x2 + 2.21 * x4,
            ]
        )

    g_elevator = np.array([0.01, -0.064, -0.378, 0.0, 0.0])
    g_elevator.setflags(write=False)

    def elevator(x):
        return g_elevator

    def thrust(x):
        return np.array([1.0, -0.044, 0.544 + 0.5 * math.sin(float(x[1])), 0.0, 0.0])

    # No M0/M1 are known for this plant, and its goodness is discontinuous so
    # no bound applies anyway; leave them unbounded.
    sys = ControlAffineSystem(5, 2, drift, [elevator, thrust], label="aircraft")
    return sys, ControlSpace([-30.0, -1.0], [30.0, 1.0])


def make_vanderpol() -> tuple[ControlAffineSystem, ControlSpace]:
    """Forced Van der Pol oscillator, control on the second state, u in [-2, 2].

    M0 <= 250 and M1 <= 99 hold on the box [-5, 5]^2.
    """

    def drift(x):
        x1, x2 = x.tolist()
        return np.array([x2, -x1 - 2.0 * (1.0 - x1 * x1) * x2])

    g = np.array([0.0, 1.0])
    g.setflags(write=False)

    sys = ControlAffineSystem(
        2,
        1,
        drift,
        [lambda x: g],
        bound_norm=250.0,
        bound_lipschitz=99.0,
        state_box=(np.array([-5.0, -5.0]), np.array([5.0, 5.0])),
        label="vanderpol",
    )
    return sys, ControlSpace([-2.0], [2.0])


def make_linear(A, B, bound_norm=math.inf, bound_lipschitz=None, state_box=None, label="linear"):
    """``xdot = A x + B u``; ``bound_lipschitz`` defaults to the spectral norm of A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    n, m = B.shape
    if A.shape != (n, n):
        raise ValueError("A must be square with as many rows as B")
    if bound_lipschitz is None:
        bound_lipschitz = float(np.linalg.norm(A, 2))
    cols = [B[:, i].copy() for i in range(m)]
    for c in cols:
        c.setflags(write=False)
    return ControlAffineSystem(
        n,
        m,
        lambda x: A @ x,
        [(lambda x, c=c: c) for c in cols],
        bound_norm=bound_norm,
        bound_lipschitz=bound_lipschitz,
        state_box=state_box,
        label=label,
    )
