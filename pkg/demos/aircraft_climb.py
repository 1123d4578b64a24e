"""Climbing a longitudinal aircraft model to the 1000 ft band.

The decoupled loop learns for a short window, then holds the chosen control
for the rest of each 0.1 s period.  Run with
``python3 demos/aircraft_climb.py`` (about ten seconds).
"""

# %% Plant and goodness
import numpy as np

from myopic import CycleConfig, OptimizerSpec, make_aircraft, reach_time, run_decoupled_controller
from myopic.goodness import aircraft_branch, aircraft_climb_rate, aircraft_goodness, slab

sys, space = make_aircraft()
print("state: u, w, q, theta, h   controls: elevator, throttle")
print("control range", space.lower, space.upper)

G = aircraft_goodness()
x0 = np.array([0.0, 0.0, 0.0, 0.0, 100.0])
print("goodness branch at start:", aircraft_branch(x0))

# %% Run five simulated minutes
# The origin tie-break keeps the throttle and elevator at trim whenever the
# goodness is flat, which it is inside the band.
cfg = CycleConfig(
    epsilon=1e-4,
    delta=1e-3,
    learn_window=1e-4,
    cycle_period=0.1,
    hold_step=1e-3,
    optimizer=OptimizerSpec(tie_break="origin"),
)
traj, records = run_decoupled_controller(sys, x0, G, cfg, 300.0, space)

# %% Altitude profile
t, h = traj.times, traj.states[:, 4]
for mark in (10, 25, 50, 100, 200, 300):
    i = min(int(np.searchsorted(t, mark)), len(t) - 1)
    print(f"t = {t[i]:6.1f} s   h = {h[i]:7.1f} ft")

print("settled in [900, 1100] ft from t =", reach_time(traj, slab(4, 900.0, 1100.0)))

# %% Envelope
climb = np.array([aircraft_climb_rate(x) for x in traj.states[::100]])
print(f"peak |pitch| {np.abs(traj.states[:, 3]).max():.1f} deg, peak |climb rate| {np.abs(climb).max():.1f} ft/s")
