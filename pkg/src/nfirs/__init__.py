"""Near-field IRS deployment and statistical-CSI sum-rate optimization.

Channel models for a sparse ULA base station talking to single-antenna
users through a sparse planar IRS, closed-form decorrelation metrics with
Monte Carlo cross-checks, and an FP/BCD/ADMM optimizer for the
approximate ergodic sum-rate.
"""

from .geometry import (
    SPEED_OF_LIGHT,
    DeploymentReport,
    SystemGeometry,
    bs_positions,
    direction_cosines,
    fraunhofer_distance,
    irs_positions,
    phase_increment,
    solve_deployment,
    validate_criterion,
)

__version__ = "0.1.0"

__all__ = [
    "SPEED_OF_LIGHT",
    "DeploymentReport",
    "SystemGeometry",
    "bs_positions",
    "direction_cosines",
    "fraunhofer_distance",
    "irs_positions",
    "phase_increment",
    "solve_deployment",
    "validate_criterion",
    "__version__",
]
