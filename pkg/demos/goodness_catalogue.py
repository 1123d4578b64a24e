"""A tour of the goodness functions on a double integrator.

Run with ``python3 demos/goodness_catalogue.py``.
"""

# %% A plant with two positions and two velocities
import numpy as np

from myopic import CycleConfig, first_bad_time, make_linear, reach_time, run_myopic_controller
from myopic.goodness import (
    ball,
    distance_rate_goodness,
    half_space,
    linear_goodness,
    mixed_goodness,
    sequential_goodness,
    zone_goodness,
)

# xdot = u directly (single integrator in the plane) keeps the geometry visible
sys = make_linear(np.zeros((2, 2)), np.eye(2))
cfg = CycleConfig(1e-3, 0.05)
x0 = np.array([2.0, 0.0])

# %% Linear goodness: go as far as possible along w
traj, _ = run_myopic_controller(sys, x0, linear_goodness([1.0, 1.0]), cfg, 0.5)
print("linear      ", traj.final_state)

# %% Distance rate: run away from a region
home = ball([0.0, 0.0], 0.5, label="home")
traj, _ = run_myopic_controller(sys, x0, distance_rate_goodness(home), cfg, 0.5)
print("away        ", traj.final_state)

# %% Zone: enter a corridor first, then head for the target inside it
corridor = half_space([0.0, -1.0], -0.5, label="corridor")  # y >= 0.5
target = ball([0.0, 1.0], 0.2, label="target")
traj, _ = run_myopic_controller(sys, x0, zone_goodness(corridor, target), cfg, 3.0)
print("zone        ", traj.final_state, "reached", reach_time(traj, target))

# %% Mixed: escape a hazard, then go for the target
hazard = ball([1.5, 0.0], 0.6, label="hazard")
traj, _ = run_myopic_controller(sys, [1.6, 0.1], mixed_goodness(hazard, target, 0.5), cfg, 3.0)
print("mixed       ", traj.final_state, "hazard distance", round(float(hazard.signed_distance(traj.final_state)), 3))

# %% Sequential: visit waypoints in order
# first_bad_time doubles as a first-visit time for any region
a = ball([2.0, 2.0], 0.1, label="a")
b = ball([-1.0, 2.0], 0.1, label="b")
stages = [(a, zone_goodness(a, a)), (b, zone_goodness(b, b))]
traj, _ = run_myopic_controller(sys, x0, sequential_goodness(stages), cfg, 5.0)
print("sequential  ", traj.final_state, "a at", first_bad_time(traj, a), "b at", first_bad_time(traj, b))
