import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from myopic.dynamics import OperatingBoxWarning, Trajectory

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def constant_path(p, t_end=1.0, samples=11):
    """Trajectory sitting at ``p`` on ``[0, t_end]``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    times = np.linspace(0.0, t_end, samples)
    return Trajectory(times, np.tile(p, (samples, 1)))


def at_state(x):
    """One-sample history ending at ``x``, enough for state-only goodness functions."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return Trajectory(np.array([0.0]), x[None, :])


@pytest.fixture
def quiet_box():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OperatingBoxWarning)
        yield


# --- acceptance report -----------------------------------------------------

ACCEPTANCE = {}  # criterion number -> list of (check, ok, detail)


def record(criterion: int, check: str, ok: bool, detail: str = "") -> bool:
    ACCEPTANCE.setdefault(criterion, []).append((check, bool(ok), detail))
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[k]
        verdict = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        parts = [f"{name}{'' if ok else ' [failed]'}: {detail}" for name, ok, detail in checks]
        tr.write_line(f"criterion {k}: {verdict} | " + "; ".join(parts))
