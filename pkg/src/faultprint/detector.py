"""Residual-based alarm detection over an ensemble of virtual sensors.

For every step t the detector compares each virtual sensor's prediction
(from the trailing window ending at t-1) with the observed reading at t; an
alarm fires when any absolute residual exceeds the calibrated threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .netgen import FaultSpec, ReadingsPanel
from .sensors import Ensemble, lagged_window_means

MIN_CALIBRATION_STEPS = 50


@dataclass(frozen=True)
class AlarmStream:
    """Per-step residuals and alarm flags for steps t in [start, n_steps)."""

    start: int
    residuals: np.ndarray  # shape (n_steps - start, n_models)
    alarms: np.ndarray  # bool, shape (n_steps - start,)
    threshold: float

    def __post_init__(self) -> None:
        if self.residuals.shape[0] != self.alarms.shape[0]:
            raise ValueError("residuals and alarms must cover the same steps")
        expected = np.abs(self.residuals).max(axis=1) > self.threshold
        if not np.array_equal(expected, self.alarms):
            raise ValueError("alarm flags are inconsistent with the residuals")

    @property
    def end(self) -> int:
        return self.start + self.alarms.shape[0]

    def alarm_steps(self) -> np.ndarray:
        """Absolute time indices at which an alarm is raised."""
        return np.flatnonzero(self.alarms) + self.start


@dataclass(frozen=True)
class DetectionReport:
    """Step-level confusion rates plus scenario-level detection outcome."""

    true_positive_rate: float
    true_negative_rate: float
    false_positive_rate: float
    false_negative_rate: float
    detection_delay: float  # steps; math.inf when never detected
    detected: bool

    def __post_init__(self) -> None:
        if not math.isclose(self.true_positive_rate + self.false_negative_rate, 1.0):
            raise ValueError("post-onset rates must sum to 1")
        if not math.isclose(self.true_negative_rate + self.false_positive_rate, 1.0):
            raise ValueError("pre-onset rates must sum to 1")


def residual_matrix(ensemble: Ensemble, panel: ReadingsPanel) -> np.ndarray:
    """Residuals prediction - observation for all t >= window, all models."""
    if ensemble.n_sensors != panel.n_sensors:
        raise ValueError(
            f"ensemble covers {ensemble.n_sensors} sensors, panel has {panel.n_sensors}"
        )
    window = ensemble.window
    if panel.n_steps <= window:
        raise ValueError("panel shorter than the model window")
    means = lagged_window_means(panel.values, window)[window:]
    observed = panel.values[window:]
    residuals = np.empty((means.shape[0], len(ensemble.models)))
    for j, model in enumerate(ensemble.models):
        inputs = np.delete(means, model.target, axis=1)
        residuals[:, j] = inputs @ model.weights + model.bias - observed[:, model.target]
    return residuals


def calibrate_threshold(
    ensemble: Ensemble,
    panel: ReadingsPanel,
    calibration_range: tuple[int, int],
    margin: float = 1.1,
) -> float:
    """Threshold = margin times the largest absolute residual on clean data."""
    if margin < 1.0:
        raise ValueError("margin must be at least 1")
    t_a, t_b = calibration_range
    if t_a < ensemble.window:
        raise ValueError("calibration range must start at or after the first window")
    if t_b > panel.n_steps:
        raise ValueError("calibration range extends beyond the panel")
    if t_b - t_a < MIN_CALIBRATION_STEPS:
        raise ValueError(
            f"calibration range must cover at least {MIN_CALIBRATION_STEPS} steps"
        )
    residuals = residual_matrix(ensemble, panel)
    window = ensemble.window
    segment = residuals[t_a - window : t_b - window]
    return float(margin * np.abs(segment).max())


def detect(ensemble: Ensemble, panel: ReadingsPanel, threshold: float) -> AlarmStream:
    """Evaluate the alarm rule; residuals are retained for explanation."""
    residuals = residual_matrix(ensemble, panel)
    alarms = np.abs(residuals).max(axis=1) > threshold
    return AlarmStream(
        start=ensemble.window, residuals=residuals, alarms=alarms, threshold=threshold
    )


def detection_metrics(alarms: AlarmStream, fault: FaultSpec) -> DetectionReport:
    """Step-level confusion rates split at the fault onset.

    Pre-onset steps are negatives (alarm = false positive), post-onset steps
    positives (alarm = true positive).  Detection succeeds when any alarm
    fires at or after the onset; the delay is the gap to the first one.
    """
    onset = fault.onset
    if not alarms.start < onset < alarms.end:
        raise ValueError(
            f"fault onset {onset} outside evaluated range [{alarms.start}, {alarms.end})"
        )
    split = onset - alarms.start
    pre = alarms.alarms[:split]
    post = alarms.alarms[split:]

    fp = float(pre.sum() / pre.shape[0])
    tp = float(post.sum() / post.shape[0])
    hits = np.flatnonzero(post)
    delay = float(hits[0]) if hits.size else math.inf
    return DetectionReport(
        true_positive_rate=tp,
        true_negative_rate=1.0 - fp,
        false_positive_rate=fp,
        false_negative_rate=1.0 - tp,
        detection_delay=delay,
        detected=bool(hits.size),
    )
