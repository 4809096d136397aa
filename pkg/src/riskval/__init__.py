"""External validation and intercept recalibration of logistic risk models."""

__version__ = "0.1.0"

from .calibration import (  # noqa: E402
    EoEntry,
    calibration_curve,
    expected_observed,
    median_split_eo,
    recalibrate,
    risk_quantile_groups,
)
from .discrimination import auc, delong_ci, roc_curve  # noqa: E402
from .glm import fit_calibration_intercept, fit_calibration_line, fit_logistic  # noqa: E402
from .ingest import Cohort, load_cohort, load_rules  # noqa: E402
from .longitudinal import VarianceComponents, blup, estimate_variance_components, wave_mean  # noqa: E402
from .model_core import (  # noqa: E402
    MedianCutoffs,
    ModelSpec,
    PredictorSpec,
    count_score,
    linear_predictor,
    load_model,
    predict_probability,
    update_intercept,
)
from .robustness import repeated_holdout, stratified_split  # noqa: E402
from .simulate import SimConfig, generate_cohort, generate_longitudinal  # noqa: E402

__all__ = [
    "Cohort", "EoEntry", "MedianCutoffs", "ModelSpec", "PredictorSpec", "SimConfig", "VarianceComponents",
    "auc", "blup", "calibration_curve", "count_score", "delong_ci", "estimate_variance_components",
    "expected_observed", "fit_calibration_intercept", "fit_calibration_line", "fit_logistic",
    "generate_cohort", "generate_longitudinal", "linear_predictor", "load_cohort", "load_model",
    "load_rules", "median_split_eo", "predict_probability", "recalibrate", "repeated_holdout",
    "risk_quantile_groups", "roc_curve", "stratified_split", "update_intercept", "wave_mean",
]
