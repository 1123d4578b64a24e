"""Myopic control of unknown control-affine systems.

A controller that never sees the plant equations: every few microseconds it
wiggles the inputs, fits a local affine velocity model from the response and
applies the control that looks best under a goodness function.
"""

from .analysis import (
    BoundInputs,
    GapTrace,
    epsilon_for_budget,
    first_bad_time,
    intermediate_bound,
    model_error_radius,
    oracle_gap_trace,
    reach_time,
    select_parameters,
    suboptimality_bound,
)
from .controller import (
    ControllerDivergence,
    CycleConfig,
    CycleRecord,
    OptimizerSpec,
    maximize_goodness,
    run_controller,
    run_decoupled_controller,
    run_myopic_controller,
)
from .dynamics import (
    ControlAffineSystem,
    ControlSpace,
    DivergenceError,
    OperatingBoxWarning,
    PiecewiseConstantLaw,
    Trajectory,
    augment_with_disturbance,
    integrate,
    make_aircraft,
    make_linear,
    make_vanderpol,
)
from .goodness import GoodnessFunction, Region, trajectory_distance
from .learner import (
    LocalAffineModel,
    PerturbationSchedule,
    SingularFitError,
    choose_perturbations,
    fit_local_model,
    learning_error_bound,
    run_learning_cycle,
)

__version__ = "0.1.0"
