"""Ensemble-consistent counterfactual explanations for sensor fault localization."""

from .detector import AlarmStream, DetectionReport, calibrate_threshold, detect, detection_metrics
from .explain import (
    CfConfig,
    Counterfactual,
    LinearClassifier,
    classification_ensemble_cf,
    ensemble_counterfactual,
    independent_counterfactual,
    snapshot_at_alarm,
    snapshot_residuals,
)
from .localize import (
    LocalizationReport,
    ScenarioPrediction,
    aggregate_alarm_sequence,
    aggregate_baseline,
    localization_report,
    normalize_explanation,
    predict_faulty_sensor,
)
from .netgen import (
    ConstantOffset,
    Drift,
    FaultSpec,
    GaussianNoise,
    PowerFailure,
    ProportionalOffset,
    ReadingsPanel,
    Scenario,
    ScenarioConfig,
    SensorKind,
    generate_clean,
    inject_fault,
    load_csv,
    write_csv,
)
from .optim import ConvexProblem, Solution, SolveStatus, kkt_residuals, solve
from .sensors import Ensemble, LinearModel, fit_virtual_sensor, predict, train_ensemble, window_average

__version__ = "0.1.0"

__all__ = [
    "AlarmStream",
    "CfConfig",
    "ConstantOffset",
    "ConvexProblem",
    "Counterfactual",
    "DetectionReport",
    "Drift",
    "Ensemble",
    "FaultSpec",
    "GaussianNoise",
    "LinearClassifier",
    "LinearModel",
    "LocalizationReport",
    "PowerFailure",
    "ProportionalOffset",
    "ReadingsPanel",
    "Scenario",
    "ScenarioConfig",
    "ScenarioPrediction",
    "SensorKind",
    "Solution",
    "SolveStatus",
    "aggregate_alarm_sequence",
    "aggregate_baseline",
    "calibrate_threshold",
    "classification_ensemble_cf",
    "detect",
    "detection_metrics",
    "ensemble_counterfactual",
    "fit_virtual_sensor",
    "generate_clean",
    "independent_counterfactual",
    "inject_fault",
    "kkt_residuals",
    "load_csv",
    "localization_report",
    "normalize_explanation",
    "predict",
    "predict_faulty_sensor",
    "snapshot_at_alarm",
    "snapshot_residuals",
    "solve",
    "train_ensemble",
    "window_average",
    "write_csv",
]
