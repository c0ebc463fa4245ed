"""Multi-fidelity Gaussian-process target search.

A vehicle senses a 2D score field from several altitudes, each altitude a
fidelity level of an autoregressive GP stack.  The library plans greedy
max-variance sampling epochs with fidelity switching, routes them as TSP
tours, classifies cells with shrinking confidence intervals, eliminates
empty regions, and reports detection times — all against a built-in
synthetic simulator.
"""

__version__ = "0.1.0"

from ._linalg import NumericalError
from .classifier import (
    ClassificationMap,
    ConfidenceParams,
    Label,
    c_value,
    check_termination,
    classify_epoch,
    confidence_interval,
)
from .field_model import (
    Bump,
    FidelityModel,
    GridDomain,
    GroundTruth,
    kernel_eval,
    measure,
    prior_moments,
    sample_ground_truth,
)
from .inference import (
    JointCovariance,
    PosteriorField,
    SampleLog,
    append_sample_variance_only,
    cross_covariance,
    greedy_info_gain,
    log_marginal_likelihood,
    posterior,
)
from .mission import (
    DecayCurves,
    DetectionTimeTable,
    MissionConfig,
    MissionReport,
    compare_decay,
    detection_time_study,
    run_mission,
    run_missions,
)
from .planner import (
    EpochPlan,
    FidelityState,
    PlanLimits,
    PlanningComplete,
    plan_epoch,
    select_next_point,
    update_fidelity,
)
from .router import Clock, Tour, build_tour, execute_epoch, plan_tours

__all__ = [
    "Bump",
    "ClassificationMap",
    "Clock",
    "ConfidenceParams",
    "DecayCurves",
    "DetectionTimeTable",
    "EpochPlan",
    "FidelityModel",
    "FidelityState",
    "GridDomain",
    "GroundTruth",
    "JointCovariance",
    "Label",
    "MissionConfig",
    "MissionReport",
    "NumericalError",
    "PlanLimits",
    "PlanningComplete",
    "PosteriorField",
    "SampleLog",
    "Tour",
    "append_sample_variance_only",
    "build_tour",
    "c_value",
    "check_termination",
    "classify_epoch",
    "compare_decay",
    "confidence_interval",
    "cross_covariance",
    "detection_time_study",
    "execute_epoch",
    "greedy_info_gain",
    "kernel_eval",
    "log_marginal_likelihood",
    "measure",
    "plan_epoch",
    "plan_tours",
    "posterior",
    "prior_moments",
    "run_mission",
    "run_missions",
    "sample_ground_truth",
    "select_next_point",
    "update_fidelity",
]
