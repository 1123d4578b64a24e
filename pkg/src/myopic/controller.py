"""Myopic learn-control loops.

The coupled loop wiggles around the current best control and re-selects it
every ``(m+1) * epsilon`` seconds.  The decoupled loop probes for
``(m+1) * learn_window`` seconds and then holds the selected control,
unperturbed, for the rest of ``cycle_period``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    ControlAffineSystem,
    ControlSpace,
    DivergenceError,
    Trajectory,
    TrajectoryBuffer,
    _BoxWatch,
    rk4_segment,
)
from .goodness import GoodnessFunction
from .learner import LocalAffineModel, choose_perturbations, fit_local_model, probe_into

MAX_VERTEX_DIM = 20
OPTIMIZER_MODES = ("vertex", "grid", "vertex-then-grid")
TIE_BREAKS = ("lexicographic", "origin")


@dataclass(frozen=True)
class OptimizerSpec:
    """How ``argmax_u G(phi, v~(u))`` is searched over the normalized cube.

    ``tie_break="lexicographic"`` returns the lexicographically smallest
    maximizer.  ``"origin"`` adds ``u = 0`` to the candidates and prefers the
    maximizer with the smallest max-norm, so a goodness that is flat in ``u``
    leaves the actuators at rest.
    """

    mode: str = "vertex"
    grid_points_per_axis: int = 33
    tie_break: str = "lexicographic"

    def __post_init__(self):
        if self.mode not in OPTIMIZER_MODES:
            raise ValueError(f"unknown optimizer mode {self.mode!r}")
        if self.mode != "vertex" and self.grid_points_per_axis < 2:
            raise ValueError("grid_points_per_axis must be at least 2")
        if self.tie_break not in TIE_BREAKS:
            raise ValueError(f"unknown tie_break {self.tie_break!r}")


@dataclass(frozen=True)
class CycleConfig:
    epsilon: float
    delta: float
    integrator_step: float | None = None
    learn_window: float | None = None
    cycle_period: float | None = None
    hold_step: float | None = None
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        if self.integrator_step is not None and not self.integrator_step > 0:
            raise ValueError("integrator_step must be positive")
        if self.hold_step is not None and not self.hold_step > 0:
            raise ValueError("hold_step must be positive")
        if (self.learn_window is None) != (self.cycle_period is None):
            raise ValueError("learn_window and cycle_period must be given together")
        if self.learn_window is not None and not (self.learn_window > 0 and self.cycle_period > 0):
            raise ValueError("learn_window and cycle_period must be positive")

    @property
    def decoupled(self) -> bool:
        return self.learn_window is not None

    def probe_duration(self) -> float:
        return self.learn_window if self.decoupled else self.epsilon

    def step_for(self, probe_duration: float) -> float:
        if self.integrator_step is not None:
            return min(self.integrator_step, probe_duration)
        return min(probe_duration / 10, 1e-4)

    def check_decoupled(self, m: int):
        if not self.decoupled:
            raise ValueError("decoupled controller needs learn_window and cycle_period")
        if not 0 < self.learn_window * (m + 1) < self.cycle_period:
            raise ValueError("(m+1) * learn_window must be shorter than cycle_period")


@dataclass
class CycleRecord:
    cycle_index: int
    anchor_time: float
    anchor_state: np.ndarray
    model: LocalAffineModel
    chosen_control: np.ndarray
    chosen_goodness: float
    probe_states: np.ndarray


class ControllerDivergence(DivergenceError):
    """Integrator blow-up inside a controller run; carries the partial results."""

    def __init__(self, err: DivergenceError, trajectory, records):
        super().__init__(err.time, err.state, trajectory)
        self.records = records


def cube_vertices(m: int) -> np.ndarray:
    """All 2^m vertices of [-1, 1]^m in lexicographic order."""
    return np.array(list(itertools.product((-1.0, 1.0), repeat=m)))


def cube_lattice(m: int, points_per_axis: int) -> np.ndarray:
    axis = np.linspace(-1.0, 1.0, points_per_axis)
    grids = np.meshgrid(*([axis] * m), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def candidate_controls(m: int, spec: OptimizerSpec) -> np.ndarray:
    if spec.mode in ("vertex", "vertex-then-grid") and m > MAX_VERTEX_DIM:
        raise ValueError(f"vertex search over 2^{m} corners refused (m > {MAX_VERTEX_DIM})")
    parts = []
    if spec.mode in ("vertex", "vertex-then-grid"):
        parts.append(cube_vertices(m))
    if spec.mode in ("grid", "vertex-then-grid"):
        parts.append(cube_lattice(m, spec.grid_points_per_axis))
    if spec.tie_break == "origin":
        parts.append(np.zeros((1, m)))
    cands = np.unique(np.vstack(parts), axis=0)  # sorted lexicographically
    return cands


def select_best(cands: np.ndarray, values: np.ndarray, tie_break: str):
    best = values.max()
    tied = np.flatnonzero(values == best)
    if tie_break == "origin" and tied.size > 1:
        norms = np.max(np.abs(cands[tied]), axis=1)
        tied = tied[norms == norms.min()]
    k = tied[0]
    return cands[k].copy(), float(values[k])


def maximize_goodness(
    G: GoodnessFunction,
    history: Trajectory,
    model: LocalAffineModel,
    spec: OptimizerSpec = OptimizerSpec(),
    candidates: np.ndarray | None = None,
):
    """Best normalized control for the learned model; returns ``(u_star, value)``."""
    if candidates is None:
        candidates = candidate_controls(model.g_tilde.shape[1], spec)
    values = G.many(history, model.predict(candidates))
    return select_best(candidates, values, spec.tie_break)


def _record(k, model, u_star, G, history, probe_states):
    return CycleRecord(
        cycle_index=k,
        anchor_time=model.anchor_time,
        anchor_state=model.anchor_state,
        model=model,
        chosen_control=u_star,
        chosen_goodness=G(history, model.predict(u_star)),
        probe_states=probe_states,
    )


def _n_cycles(t_end, period):
    n = t_end / period
    return int(math.floor(n + 1e-9 * max(n, 1.0)))


def run_myopic_controller(
    sys: ControlAffineSystem,
    x0,
    G: GoodnessFunction,
    config: CycleConfig,
    t_end: float,
    space: ControlSpace | None = None,
):
    """Coupled learn-control loop; returns ``(trajectory, records)``.

    Cycle ``k`` starts at ``k (m+1) epsilon`` and applies ``u* + du^j`` on
    consecutive ``epsilon`` slots; the model fitted at its end picks the next
    ``u*``.  The run stops after the last whole cycle that fits in ``t_end``.
    """
    m = sys.input_dim
    space = space or ControlSpace.unit(m)
    eps = config.epsilon
    period = (m + 1) * eps
    if t_end < period * (1 - 1e-9):
        raise ValueError("t_end must cover at least one learn-control cycle")
    step = config.step_for(eps)
    cands = candidate_controls(m, config.optimizer)

    x0 = np.asarray(x0, dtype=float)
    buf = TrajectoryBuffer(0.0, x0, sys.state_dim, m, capacity=4096)
    watch = _BoxWatch(sys)
    records: list[CycleRecord] = []
    u_star = np.zeros(m)
    for k in range(_n_cycles(t_end, period)):
        t0 = k * period
        schedule = choose_perturbations(u_star, config.delta)
        start = buf.size
        try:
            probe_states = probe_into(buf, sys, schedule, eps, step, space, t0)
        except DivergenceError as err:
            raise ControllerDivergence(err, buf.snapshot(), records) from err
        watch.check(buf._x[start : buf.size])
        model = fit_local_model(probe_states, schedule, eps, anchor_time=buf.last_time)
        history = buf.view()
        u_star, _ = maximize_goodness(G, history, model, config.optimizer, cands)
        records.append(_record(k, model, u_star, G, history, probe_states))
    return buf.snapshot(), records


def run_decoupled_controller(
    sys: ControlAffineSystem,
    x0,
    G: GoodnessFunction,
    config: CycleConfig,
    t_end: float,
    space: ControlSpace | None = None,
):
    """Learn briefly, then hold the chosen control for the rest of each cycle."""
    m = sys.input_dim
    config.check_decoupled(m)
    space = space or ControlSpace.unit(m)
    eps = config.learn_window
    period = config.cycle_period
    learn_span = (m + 1) * eps
    if t_end < period * (1 - 1e-9):
        raise ValueError("t_end must cover at least one learn-control cycle")
    step = config.step_for(eps)
    hold_step = config.hold_step or step
    cands = candidate_controls(m, config.optimizer)

    x0 = np.asarray(x0, dtype=float)
    buf = TrajectoryBuffer(0.0, x0, sys.state_dim, m, capacity=4096)
    watch = _BoxWatch(sys)
    records: list[CycleRecord] = []
    u_star = np.zeros(m)
    for k in range(_n_cycles(t_end, period)):
        t0 = k * period
        schedule = choose_perturbations(u_star, config.delta)
        start = buf.size
        try:
            probe_states = probe_into(buf, sys, schedule, eps, step, space, t0)
            model = fit_local_model(probe_states, schedule, eps, anchor_time=buf.last_time)
            history = buf.view()
            u_star, _ = maximize_goodness(G, history, model, config.optimizer, cands)
            records.append(_record(k, model, u_star, G, history, probe_states))
            u_phys = space.denormalize(u_star)
            times, states = rk4_segment(
                sys, buf.last_state, u_phys, t0 + learn_span, period - learn_span, hold_step
            )
        except DivergenceError as err:
            raise ControllerDivergence(err, buf.snapshot(), records) from err
        buf.append(times, states, u_phys)
        watch.check(buf._x[start : buf.size])
    return buf.snapshot(), records


def run_controller(sys, x0, G, config: CycleConfig, t_end, space=None):
    """Dispatch on ``config.decoupled``."""
    runner = run_decoupled_controller if config.decoupled else run_myopic_controller
    return runner(sys, x0, G, config, t_end, space)
