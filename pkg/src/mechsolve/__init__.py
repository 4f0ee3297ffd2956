"""Optimal allocation-and-inspection mechanisms for a shared resource."""
from .dists import (
    DensitySpec,
    QuadratureConfig,
    Tabulated,
    TruncatedGaussian,
    Uniform,
    cdf,
    check_regularity,
    hazard_residual_r,
    integrate,
    inverse_cdf,
    parse_density,
    pdf,
    survival_mass_d,
)
from .errors import *  # noqa: F401,F403
from .model import (
    AllocationDecision,
    InterferenceModel,
    ProblemInstance,
    alpha_star,
    first_best_allocation,
    first_best_expected_welfare,
    interference,
    welfare,
)
from .solver import (
    MechanismOutcome,
    MechanismSolution,
    Region,
    alpha_opt,
    budget_residual,
    classify,
    k_low,
    objective_value,
    payment,
    phi_threshold,
    psi_threshold,
    run_mechanism,
    solve_mechanism,
    solve_u_top,
    u_infinity,
)

__version__ = "0.1.0"
