"""Exact set-membership filtering and smoothing with constrained zonotopes.

Modules
-------
lp          bounded-variable LPs (HiGHS) with verified optima
cz          constrained zonotopes: closure operations and LP queries
model       system descriptions, seeded simulation, benchmark systems
smf         set-membership filter for linear systems
sms         set-membership smoother for linear systems
interval1d  interval filter and smoother for scalar monotone systems
rts         Kalman filter / RTS smoother baseline
oracle      brute-force lattice oracle for small instances
harness     Monte-Carlo experiments, CSV output and the command line
examples    end-to-end examples that double as smoke tests
"""

from .cz import (
    ConstrainedZonotope,
    EmptySetError,
    IntervalBox,
    contains_point,
    diameter_inf,
    generalized_intersection,
    interval_hull,
    is_empty,
    linear_map,
    minkowski_sum,
    reflect,
    support_value,
)
from .errors import InconsistentDataError
from .interval1d import Interval, MonotoneMap, run_filter_1d, run_smoother_1d
from .model import (
    LinearSystem,
    ScalarAffineSystem,
    Trajectory,
    cube_root_benchmark,
    planar_benchmark,
    simulate_linear,
    simulate_scalar,
)
from .smf import run_filter
from .sms import run_smoother

__version__ = "0.1.0"

__all__ = [
    "ConstrainedZonotope",
    "EmptySetError",
    "IntervalBox",
    "contains_point",
    "diameter_inf",
    "generalized_intersection",
    "interval_hull",
    "is_empty",
    "linear_map",
    "minkowski_sum",
    "reflect",
    "support_value",
    "InconsistentDataError",
    "Interval",
    "MonotoneMap",
    "run_filter_1d",
    "run_smoother_1d",
    "LinearSystem",
    "ScalarAffineSystem",
    "Trajectory",
    "cube_root_benchmark",
    "planar_benchmark",
    "simulate_linear",
    "simulate_scalar",
    "run_filter",
    "run_smoother",
]
