"""Steering a Van der Pol oscillator onto the x1 axis without knowing its equations.

Run with ``python3 demos/vanderpol_stabilization.py``.  Takes about ten seconds.
"""

# %% The plant and what the controller is allowed to know
import numpy as np

from myopic import (
    BoundInputs,
    CycleConfig,
    make_vanderpol,
    oracle_gap_trace,
    run_myopic_controller,
    suboptimality_bound,
)
from myopic.goodness import VANDERPOL_LIPSCHITZ, vanderpol_goodness

sys, space = make_vanderpol()
print(sys.label, "state dim", sys.state_dim, "input dim", sys.input_dim)
print("control range", space.lower, space.upper)
print("declared M0, M1:", sys.bound_norm, sys.bound_lipschitz)

# The controller only calls sys.velocity through the integrator.  It never
# evaluates the drift or the input map directly.

# %% Goodness: push x2 toward zero
# G(x, v) = -v2 * atan(x2) rewards velocities that shrink |x2|.
G = vanderpol_goodness()
x0 = np.array([1.0, -2.0])

# %% Close the loop for two seconds
eps, delta = 1e-4, 1e-3
traj, records = run_myopic_controller(sys, x0, G, CycleConfig(eps, delta), 2.0, space)
print(f"{len(records)} learning cycles, final state {traj.final_state}")

x2 = traj.states[:, 1]
k = int(np.argmax(x2 >= 0))
print(f"x2 first reaches 0 at t = {traj.times[k]:.4f} s")
print(f"afterwards |x2| stays below {np.abs(x2[k:]).max():.2e}")

# %% How far from the best possible choice was each cycle?
# The oracle evaluates G on the true velocity field; the realized value uses
# the worst of the wiggled controls the plant actually received.
bound = suboptimality_bound(BoundInputs(VANDERPOL_LIPSCHITZ, sys.bound_norm, sys.bound_lipschitz, 1, eps, delta))
trace = oracle_gap_trace(sys, records[::20], traj, G, space=space, bound=bound, delta=delta)
print(f"max gap {trace.max_gap:.3g} against a worst-case bound of {bound:.4g}")

# %% Controls are bang-bang once the model is learned
u = traj.controls[:, 0]
print("share of time at a vertex:", np.mean(np.abs(np.abs(u) - 2.0) < 0.01))
