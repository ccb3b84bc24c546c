"""Numerics for expectations and capacities under volatility ambiguity.

The package evaluates worst/best-case expectations of random-walk path
functionals over an interval of admissible volatilities, the matching
capacities of path events, and the Brownian closed forms they converge to,
through three mutually cross-validating backends: an exact adversarial-tree
enumerator, a grid dynamic program, and a monotone finite-difference solver
of the band heat equation, complemented by Monte-Carlo volatility control.
An experiment harness scripts the limit-theorem checks and a command-line
front end drives everything reproducibly.
"""

from .core import (
    AxiomReport,
    AxiomSample,
    CapacityPair,
    PathFunctional,
    ScalarTestFunction,
    UpperLowerPair,
    VolatilityBand,
    axiom_report,
    conjugate,
    g_eval,
    mollified_indicator,
    running_max_abs_functional,
    running_max_functional,
    snapshot_functional,
    terminal_functional,
)
from .lattice import (
    BoundaryClampError,
    CapacityBracket,
    ConstantPolicy,
    DPValue,
    GridCoverageError,
    SpatialGrid,
    StepFamily,
    WalkSpec,
    exact_walk_value,
    final_position_statistic,
    grid_walk_value,
    max_abs_statistic,
    max_signed_statistic,
    one_step_upper,
    sample_walk_path,
    walk_capacity,
)
from .pde import (
    PdeGrid,
    PdeValue,
    SolutionField,
    gnormal_pair,
    gnormal_value,
    negate_test_function,
    solve_gheat,
)
from .analytic import (
    AndersonResult,
    ControlPolicy,
    DegenerateBandWarning,
    McEstimate,
    PolicyFamily,
    PolicySearchResult,
    SeriesResult,
    anderson_shift_check,
    gcap_onesided_sup,
    gcap_sup_abs,
    mc_policy_value,
    normal_quantile,
    normal_tail,
    std_small_ball,
)

__version__ = "0.1.0"
