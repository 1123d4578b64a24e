"""Wiggle-based learning of the local affine velocity map.

One learning cycle applies the m+1 controls ``u* + du^j`` for ``epsilon``
seconds each, records the endpoints ``x^0 .. x^{m+1}`` and fits the unique
affine map through the finite differences ``(x^{j+1} - x^j) / epsilon``.
All controls here are normalized to ``[-1, 1]^m``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import (
    ControlAffineSystem,
    ControlSpace,
    DivergenceError,
    TrajectoryBuffer,
    rk4_segment,
)


class SingularFitError(ValueError):
    """The probe controls are not affinely independent."""


@dataclass(frozen=True)
class PerturbationSchedule:
    base: np.ndarray
    deltas: np.ndarray  # (m+1, m), first row zero
    wiggle: float

    @property
    def probes(self) -> np.ndarray:
        """The m+1 normalized controls ``u* + du^j``."""
        return self.base + self.deltas

    @property
    def input_dim(self) -> int:
        return self.base.size


@dataclass(frozen=True)
class LocalAffineModel:
    """``predict(u) = f_tilde + g_tilde @ u`` (``g_tilde`` is ``(n, m)``)."""

    f_tilde: np.ndarray
    g_tilde: np.ndarray
    anchor_state: np.ndarray
    anchor_time: float

    def predict(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.f_tilde + u @ self.g_tilde.T


def choose_perturbations(u_star, delta: float) -> PerturbationSchedule:
    """Wiggle each axis by ``delta`` towards the interior of the cube."""
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    u_star = np.atleast_1d(np.asarray(u_star, dtype=float))
    if np.any(np.abs(u_star) > 1 + 1e-12):
        raise ValueError("u_star must lie in [-1, 1]^m")
    m = u_star.size
    signs = np.where(u_star >= 0, -1.0, 1.0)
    deltas = np.zeros((m + 1, m))
    deltas[1:] = np.diag(signs * delta)
    return PerturbationSchedule(u_star.copy(), deltas, float(delta))


def run_learning_cycle(
    sys: ControlAffineSystem,
    x0,
    schedule: PerturbationSchedule,
    epsilon: float,
    step: float,
    space: ControlSpace | None = None,
    t0: float = 0.0,
):
    """Apply each probe control for ``epsilon`` seconds starting from ``x0``.

    Returns ``(probe_states, trajectory)``; ``probe_states`` has shape
    ``(m+2, n)`` and holds ``x^0 .. x^{m+1}``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if step <= 0 or step > epsilon * (1 + 1e-12):
        raise ValueError("integrator step must lie in (0, epsilon]")
    space = space or ControlSpace.unit(sys.input_dim)
    x = np.asarray(x0, dtype=float).copy()
    buf = TrajectoryBuffer(t0, x, sys.state_dim, sys.input_dim, capacity=64)
    try:
        probe_states = probe_into(buf, sys, schedule, epsilon, step, space, t0)
    except DivergenceError as err:
        err.trajectory = buf.snapshot()
        raise
    return probe_states, buf.snapshot()


def probe_into(buf, sys, schedule, epsilon, step, space, t0):
    """Run the probe sequence from the buffer's last state, appending to ``buf``."""
    x = buf.last_state
    probe_states = np.empty((schedule.input_dim + 2, sys.state_dim))
    probe_states[0] = x
    for j, w in enumerate(schedule.probes):
        u = space.denormalize(w)
        times, states = rk4_segment(sys, x, u, t0 + j * epsilon, epsilon, step)
        buf.append(times, states, u)
        x = states[-1]
        probe_states[j + 1] = x
    return probe_states


def finite_differences(probe_states, epsilon: float) -> np.ndarray:
    """Rows ``(x^{j+1} - x^j) / epsilon`` for j = 0..m."""
    return np.diff(np.asarray(probe_states, dtype=float), axis=0) / epsilon


def fit_local_model(
    probe_states, schedule: PerturbationSchedule, epsilon: float, anchor_time: float = 0.0
) -> LocalAffineModel:
    """Affine interpolant through the m+1 (probe control, finite difference) pairs."""
    probe_states = np.asarray(probe_states, dtype=float)
    m = schedule.input_dim
    if probe_states.shape[0] != m + 2:
        raise ValueError(f"expected {m + 2} probe states, got {probe_states.shape[0]}")
    D = finite_differences(probe_states, epsilon)
    A = np.hstack([np.ones((m + 1, 1)), schedule.probes])
    if np.linalg.cond(A) > 1e12:
        raise SingularFitError("probe controls are (nearly) affinely dependent")
    coef = np.linalg.solve(A, D)
    return LocalAffineModel(
        f_tilde=coef[0],
        g_tilde=coef[1:].T.copy(),
        anchor_state=probe_states[-1].copy(),
        anchor_time=float(anchor_time),
    )


def barycentric_prediction(probe_states, schedule: PerturbationSchedule, epsilon: float, u):
    """Direct form of the model: solve for affine weights of ``u`` and mix the differences."""
    m = schedule.input_dim
    P = schedule.probes
    A = np.vstack([np.ones(m + 1), P.T])
    lam = np.linalg.solve(A, np.concatenate([[1.0], np.asarray(u, dtype=float)]))
    return lam @ finite_differences(probe_states, epsilon)


# ---------------------------------------------------------------------------
# error bounds for one learning cycle


def learning_error_bound(M0, M1, m, epsilon, delta) -> float:
    """Worst-case model error ``2 M0 M1 (m+1)^3 eps (4 m^{3/2} + delta) / delta``."""
    return 2 * M0 * M1 * (m + 1) ** 3 * epsilon * (4 * m**1.5 + delta) / delta


def displacement_bound(M0, m, epsilon, j, k) -> float:
    """``||x^j - x^k|| <= M0 (m+1) |j - k| eps``."""
    return M0 * (m + 1) * abs(j - k) * epsilon


def difference_quotient_bound(M0, M1, m, epsilon) -> float:
    """Gap between a finite difference and the true velocity at the probe's end state."""
    return M0 * M1 * (m + 1) ** 2 * epsilon / 2


def anchor_shift_bound(M0, M1, m, epsilon) -> float:
    """Gap between the velocity at a probe's end state and at the cycle anchor."""
    return M0 * M1 * (m + 1) ** 3 * epsilon


def rk4_error_estimate(sys, x0, schedule, epsilon, step, space=None) -> float:
    """Endpoint discrepancy between step ``step`` and ``step/2`` over one cycle.

    A floor of a few ulps per step accounts for round-off, which dominates
    when the field is (nearly) constant.
    """
    coarse, _ = run_learning_cycle(sys, x0, schedule, epsilon, step, space)
    fine, _ = run_learning_cycle(sys, x0, schedule, epsilon, step / 2, space)
    richardson = float(np.max(np.linalg.norm(coarse - fine, axis=1)))
    n_steps = (schedule.input_dim + 1) * int(np.ceil(epsilon / step - 1e-9))
    scale = float(np.max(np.linalg.norm(fine, axis=1))) + 1.0
    return richardson + 4 * np.finfo(float).eps * scale * n_steps
