"""Continuous-discrete nonlinear Kalman filtering.

Mixed-type estimators pair an EKF moment-ODE time update (adaptive
integration with user tolerances) with unscented or fifth-degree cubature
measurement updates, in conventional and square-root array forms built on
hyperbolic QR.  The :mod:`cdkalman.bench` module reproduces the
coordinated-turn radar tracking and ill-conditioning benchmarks.
"""

from .exceptions import (
    ConfigError,
    DegenerateGeometry,
    DegenerateScaling,
    DimensionMismatch,
    HyperbolicBreakdown,
    InvalidDimension,
    LengthMismatch,
    NonFiniteState,
    NotPositiveDefinite,
    NumericalBreakdown,
    SingularTriangular,
    StepSizeUnderflow,
)
from .filters import FilterSpec, FilterTrace, run_filter
from .linalg import (
    Signature,
    cholesky_lower,
    hyperbolic_block_triangularize,
    phi_map,
    trisolve,
)
from .measurement_update import (
    MeasurementModel,
    UpdateResult,
    mu_conventional,
    mu_ekf_linearized,
    mu_sqrt_joseph,
    mu_sqrt_onesweep,
    wrap_angle,
)
from .models import (
    SimulatedDataset,
    coordinated_turn_model,
    dataset_from_csv,
    dataset_to_csv,
    illcond_model,
    radar_model,
    simulate_dataset,
)
from .ode import IntegrationStats, Tolerances, euler_maruyama_simulate, integrate_adaptive
from .sigma_rules import (
    SigmaRule,
    UkfParams,
    build_weight_factor,
    draw_sigma_matrix,
    make_5dckf_rule,
    make_ukf_rule,
)
from .time_update import (
    GaussianBelief,
    ProcessModel,
    SqrtGaussianBelief,
    mde_rhs,
    pack_belief,
    sqrt_mde_rhs,
    tu_ekf,
    tu_ekf_sqrt,
    unpack_belief,
)

__version__ = "0.1.0"
