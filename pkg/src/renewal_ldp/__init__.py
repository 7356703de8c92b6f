"""Large-deviation rate functions for cumulative (renewal-reward) processes."""

__version__ = "0.1.0"

from importlib import resources as _resources
from pathlib import Path as _Path

from .deviation import (
    ApproxRateReport,
    DeviationReport,
    estimate_approx_rate,
    estimate_tail,
    exponential_tightness_probe,
    fit_slope,
    shift_rate_sequence,
    wilson_interval,
)
from .entropy import OracleResult, SubMeasure, entropy_rate_i, minimize_i
from .estimators import CramerRateEstimator, RenewalPairExtractor
from .exceptions import (
    HypothesisViolation,
    InsufficientCyclesError,
    InsufficientEventsError,
    ModelError,
    ModelPathologyError,
    ParameterError,
    RenewalLDPError,
    SchemaError,
    UnsupportedMomentError,
)
from .hawkes import (
    HawkesConfig,
    PiecewiseKernel,
    extract_renewal_pairs,
    hawkes_deviation_pipeline,
    hawkes_moment_term,
    load_hawkes_config,
    simulate_hawkes,
    simulate_hawkes_ensemble,
)
from .legendre import (
    DeviationBound,
    RateProfile,
    SaddleResult,
    Tolerances,
    cramer_transform,
    deviation_bound,
    lagrangian,
    profile_on_grid,
    rate_function_j,
    rate_function_jbar,
    rate_profile,
    renewal_rate_jtau,
)
from .models import (
    Constant,
    DeterministicReward,
    Deterministic,
    DiscreteJoint,
    EmpiricalSample,
    Exponential,
    Gamma,
    Gaussian,
    IndependentProduct,
    JointModel,
    RewardMap,
    ShiftedBy,
    TruncatedTo,
    Uniform,
    load_model,
    model_from_dict,
)
from .simulation import (
    Path,
    ShiftTau,
    TruncateW,
    lln_clt_check,
    simulate_coupled,
    simulate_ensemble,
    simulate_path,
)
from .xreal import INF, XReal


def fixture_path(name: str) -> _Path:
    """Path of a shipped fixture, e.g. ``fixture_path("poisson.json")``."""
    p = _Path(str(_resources.files(__package__) / "fixtures" / name))
    if not p.exists():
        raise FileNotFoundError(f"no shipped fixture named {name!r}")
    return p
