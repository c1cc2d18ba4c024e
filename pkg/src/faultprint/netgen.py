"""Synthetic sensor-panel generation, fault injection and CSV round-trip.

A panel mimics a small pressure/flow monitoring network: every channel is a
mix of a few shared latent signals (daily sinusoids plus a slow random walk),
so each pressure channel is close to a linear function of the remaining
channels.  Faults are injected per channel, never before the training prefix.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.signal import lfilter

DIURNAL_PERIOD = 96  # steps per daily cycle (15-minute cadence analogy)

_SINE_AMPLITUDE = (0.12, 0.18)
_PHASE_JITTER = 0.4
_WALK_STEP_STD = 0.0025
_WALK_REVERSION = 0.999  # damping keeps the slow walk statistically stable
_MIXING_GAIN = (0.7, 1.3)
_LEVEL_OFFSET = (8.0, 15.0)
_MAX_ROW_COSINE = 0.85
_SINE_SHARE = (0.45, 0.70)  # per-channel share of the diurnal signal


class PanelFormatError(ValueError):
    """Raised when a panel CSV file cannot be parsed."""


class SensorKind(enum.Enum):
    PRESSURE = "pressure"
    FLOW = "flow"


@dataclass(frozen=True)
class ScenarioConfig:
    """Shape and randomness of one synthetic monitoring scenario."""

    n_pressure: int = 12
    n_flow: int = 2
    n_steps: int = 2000
    train_end: int = 700
    latent_dim: int = 3
    noise_std: float = 0.01
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_pressure < 2:
            raise ValueError("n_pressure must be at least 2")
        if self.n_flow < 0:
            raise ValueError("n_flow must be nonnegative")
        if not 0 < self.train_end < self.n_steps:
            raise ValueError("train_end must lie strictly inside [1, n_steps)")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be at least 1")
        if self.latent_dim > self.n_sensors:
            raise ValueError("latent_dim cannot exceed the sensor count")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")

    @property
    def n_sensors(self) -> int:
        return self.n_pressure + self.n_flow


@dataclass(frozen=True)
class ReadingsPanel:
    """Time-indexed sensor readings, one column per channel.

    ``values`` is frozen after construction; panels are safe to share.
    """

    values: np.ndarray
    kinds: tuple[SensorKind, ...]
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("panel values must be a 2-D array")
        if values.shape[1] != len(self.kinds) or len(self.kinds) != len(self.labels):
            raise ValueError("kinds/labels must match the column count")
        if not np.isfinite(values).all():
            raise ValueError("panel contains non-finite entries")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_sensors(self) -> int:
        return self.values.shape[1]

    @property
    def pressure_indices(self) -> tuple[int, ...]:
        return tuple(i for i, k in enumerate(self.kinds) if k is SensorKind.PRESSURE)

    @property
    def flow_indices(self) -> tuple[int, ...]:
        return tuple(i for i, k in enumerate(self.kinds) if k is SensorKind.FLOW)

    def with_values(self, values: np.ndarray) -> "ReadingsPanel":
        return ReadingsPanel(values=values, kinds=self.kinds, labels=self.labels)


@dataclass(frozen=True)
class ConstantOffset:
    offset: float
    name = "constant_offset"

    @property
    def magnitude(self) -> float:
        return self.offset


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float
    name = "gaussian_noise"

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def magnitude(self) -> float:
        return self.sigma


@dataclass(frozen=True)
class PowerFailure:
    name = "power_failure"

    @property
    def magnitude(self) -> float:
        return 0.0


@dataclass(frozen=True)
class ProportionalOffset:
    alpha: float
    name = "proportional_offset"

    @property
    def magnitude(self) -> float:
        return self.alpha


@dataclass(frozen=True)
class Drift:
    rate: float
    cap: float
    name = "drift"

    @property
    def magnitude(self) -> float:
        return self.rate


FaultKind = Union[ConstantOffset, GaussianNoise, PowerFailure, ProportionalOffset, Drift]

FAULT_KIND_NAMES = (
    ConstantOffset.name,
    GaussianNoise.name,
    PowerFailure.name,
    ProportionalOffset.name,
    Drift.name,
)


@dataclass(frozen=True)
class FaultSpec:
    """One injected sensor fault: what, where and from when on."""

    kind: FaultKind
    sensor: int
    onset: int

    def __post_init__(self) -> None:
        if self.sensor < 0:
            raise ValueError("sensor index must be nonnegative")
        if self.onset < 0:
            raise ValueError("onset must be nonnegative")


@dataclass(frozen=True)
class Scenario:
    """A clean/faulty panel pair with its fault ground truth."""

    clean: ReadingsPanel
    faulty: ReadingsPanel
    fault: FaultSpec
    config: ScenarioConfig

    def __post_init__(self) -> None:
        if self.fault.onset <= self.config.train_end:
            raise ValueError("fault onset must lie after the training prefix")
        diff = self.faulty.values != self.clean.values
        touched = np.argwhere(diff)
        if touched.size and (
            touched[:, 0].min() < self.fault.onset
            or not (touched[:, 1] == self.fault.sensor).all()
        ):
            raise ValueError("faulty panel differs from clean outside the fault region")


def _sensor_layout(config: ScenarioConfig) -> tuple[tuple[SensorKind, ...], tuple[str, ...]]:
    kinds = (SensorKind.PRESSURE,) * config.n_pressure + (SensorKind.FLOW,) * config.n_flow
    labels = tuple(f"p{i:02d}" for i in range(config.n_pressure)) + tuple(
        f"f{i:02d}" for i in range(config.n_flow)
    )
    return kinds, labels


def _mixing_matrix(
    rng: np.random.Generator, n_sensors: int, latent_dim: int, phasor: np.ndarray
) -> np.ndarray:
    """Seeded random mixing with full column rank and well-spread rows.

    Rows are rejection-sampled so that no two channels are near-collinear and
    every channel carries a bounded, nonzero share of the shared diurnal
    phasor; both properties keep each channel linearly predictable from the
    others without any channel swinging much faster than the rest.
    """
    phasor_norm = np.linalg.norm(phasor)
    rows = np.empty((n_sensors, latent_dim))
    for i in range(n_sensors):
        best = None
        best_score = np.inf
        for _ in range(80):
            cand = rng.normal(size=latent_dim)
            cand /= np.linalg.norm(cand)
            score = 0.0
            if i and latent_dim > 1:
                worst = np.abs(rows[:i] @ cand).max()
                score += max(0.0, worst - _MAX_ROW_COSINE)
            if latent_dim > 1 and phasor_norm > 0:
                share = abs(cand @ phasor) / phasor_norm
                score += max(0.0, _SINE_SHARE[0] - share)
                score += max(0.0, share - _SINE_SHARE[1])
            if score < best_score:
                best, best_score = cand, score
            if score == 0.0:
                break
        rows[i] = best
    gains = rng.uniform(*_MIXING_GAIN, size=n_sensors)
    matrix = rows * gains[:, None]
    if np.linalg.matrix_rank(matrix) < latent_dim:
        raise RuntimeError("mixing matrix is rank deficient")
    return matrix


def generate_clean(config: ScenarioConfig) -> ReadingsPanel:
    """Generate a fault-free panel; a pure function of the config.

    Channels share ``latent_dim`` latent signals (daily sinusoids with period
    ``DIURNAL_PERIOD`` plus a slow random walk) mixed through a seeded
    full-column-rank matrix, shifted by positive offsets, with iid Gaussian
    noise on top.  Every pressure channel is therefore close to a linear
    function of the remaining channels (R^2 >= 0.95 on clean data).
    """
    rng = np.random.default_rng(config.seed)
    n = config.n_sensors
    steps = np.arange(config.n_steps)

    amplitudes = rng.uniform(*_SINE_AMPLITUDE, size=config.latent_dim)
    phases = (
        2.0 * np.pi * np.arange(config.latent_dim) / config.latent_dim
        + rng.uniform(-_PHASE_JITTER, _PHASE_JITTER, size=config.latent_dim)
    )
    sines = amplitudes * np.sin(
        2.0 * np.pi * steps[:, None] / DIURNAL_PERIOD + phases
    )
    kicks = rng.normal(0.0, _WALK_STEP_STD, size=(config.n_steps, config.latent_dim))
    walk = lfilter([1.0], [1.0, -_WALK_REVERSION], kicks, axis=0)
    latents = sines + walk

    phasor = amplitudes * np.exp(1j * phases)
    mixing = _mixing_matrix(rng, n, config.latent_dim, phasor)
    offsets = rng.uniform(*_LEVEL_OFFSET, size=n)
    noise = rng.normal(0.0, config.noise_std, size=(config.n_steps, n))

    values = latents @ mixing.T + offsets + noise
    kinds, labels = _sensor_layout(config)
    return ReadingsPanel(values=values, kinds=kinds, labels=labels)


def inject_fault(clean: ReadingsPanel, fault: FaultSpec, seed: int = 0) -> ReadingsPanel:
    """Apply ``fault`` to one pressure channel from ``fault.onset`` onwards."""
    if not 0 <= fault.sensor < clean.n_sensors:
        raise ValueError(f"fault sensor {fault.sensor} out of range")
    if clean.kinds[fault.sensor] is not SensorKind.PRESSURE:
        raise ValueError("faults can only target pressure channels")
    if not 0 <= fault.onset < clean.n_steps:
        raise ValueError(f"fault onset {fault.onset} out of range")

    values = clean.values.copy()
    k, t0 = fault.sensor, fault.onset
    tail = values[t0:, k]
    kind = fault.kind
    if isinstance(kind, ConstantOffset):
        values[t0:, k] = tail + kind.offset
    elif isinstance(kind, GaussianNoise):
        rng = np.random.default_rng(seed)
        values[t0:, k] = tail + rng.normal(0.0, kind.sigma, size=tail.shape)
    elif isinstance(kind, PowerFailure):
        values[t0:, k] = 0.0
    elif isinstance(kind, ProportionalOffset):
        values[t0:, k] = (1.0 + kind.alpha) * tail
    elif isinstance(kind, Drift):
        drifted = tail + kind.rate * np.arange(tail.shape[0])
        values[t0:, k] = np.minimum(drifted, kind.cap)
    else:
        raise TypeError(f"unknown fault kind: {kind!r}")
    return clean.with_values(values)


def write_csv(panel: ReadingsPanel, path) -> None:
    """Write a panel as UTF-8 CSV with a ``label:kind`` header per column."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            f"{label}:{kind.value}" for label, kind in zip(panel.labels, panel.kinds)
        )
        for row in panel.values:
            writer.writerow(repr(float(v)) for v in row)


def load_csv(path) -> ReadingsPanel:
    """Read a panel written by :func:`write_csv`; exact decimal round-trip."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelFormatError(f"{path}: empty file") from None

        kinds: list[SensorKind] = []
        labels: list[str] = []
        for col, cell in enumerate(header):
            label, sep, kind_token = cell.partition(":")
            if not sep or not label:
                raise PanelFormatError(
                    f"{path}: header column {col} is not 'label:kind': {cell!r}"
                )
            try:
                kinds.append(SensorKind(kind_token))
            except ValueError:
                raise PanelFormatError(
                    f"{path}: header column {col} has unknown kind {kind_token!r}"
                ) from None
            labels.append(label)

        rows: list[list[float]] = []
        for i, row in enumerate(reader):
            if len(row) != len(labels):
                raise PanelFormatError(
                    f"{path}: row {i} has {len(row)} cells, expected {len(labels)}"
                )
            parsed = []
            for col, cell in enumerate(row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise PanelFormatError(
                        f"{path}: row {i}, column {labels[col]!r}: "
                        f"non-numeric cell {cell!r}"
                    ) from None
            rows.append(parsed)

    if not rows:
        raise PanelFormatError(f"{path}: no data rows")
    return ReadingsPanel(values=np.array(rows), kinds=tuple(kinds), labels=tuple(labels))
