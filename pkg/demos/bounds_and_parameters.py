"""From a suboptimality target to cycle parameters, and back.

Run with ``python3 demos/bounds_and_parameters.py``.
"""

# %% The worst-case gap for the Van der Pol constants
import numpy as np

from myopic import BoundInputs, select_parameters, suboptimality_bound
from myopic.analysis import epsilon_coefficient, wiggle_term

L, M0, M1, m = 29.0, 250.0, 99.0, 1
for eps, delta in [(1e-4, 1e-3), (1e-7, 1e-4), (1e-10, 1e-4)]:
    b = suboptimality_bound(BoundInputs(L, M0, M1, m, eps, delta))
    print(f"eps={eps:.0e} delta={delta:.0e}  bound {b:.6g}")

# Two levers: eps shrinks the learning error, delta the cost of wiggling.
delta = 1e-3
print("eps coefficient at delta=1e-3:", epsilon_coefficient(L, M0, M1, m, delta))
print("wiggle term at delta=1e-3:", wiggle_term(L, M0, m, delta))

# %% Asking for a target instead
# The margin at x0 = (1, -2) is max_u G = atan(2): the best the controller
# could ever do there.  Guaranteeing a gap below it needs tiny parameters.
eta = float(np.arctan(2.0))
eps, delta = select_parameters(L, M0, M1, m, eta)
print(f"eta={eta:.4f} -> eps={eps:.3g}, delta={delta:.3g}")
print("bound at the selection:", suboptimality_bound(BoundInputs(L, M0, M1, m, eps, delta)))

# %% The guarantee is loose
# The simulated gap with eps=1e-4, delta=1e-3 stays around 2e-3, while the
# bound for those values is about 1.4e7.
