import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from faultprint import detector, netgen, sensors


@pytest.fixture(scope="session")
def default_panel() -> netgen.ReadingsPanel:
    return netgen.generate_clean(netgen.ScenarioConfig())


@pytest.fixture(scope="session")
def default_ensemble(default_panel) -> sensors.Ensemble:
    cfg = netgen.ScenarioConfig()
    return sensors.train_ensemble(default_panel, 3, (3, cfg.train_end))


@pytest.fixture(scope="session")
def default_threshold(default_panel, default_ensemble) -> float:
    cfg = netgen.ScenarioConfig()
    return detector.calibrate_threshold(
        default_ensemble, default_panel, (3, cfg.train_end), margin=2.0
    )


@pytest.fixture(scope="session")
def power_failure_scenario(default_panel) -> netgen.Scenario:
    fault = netgen.FaultSpec(kind=netgen.PowerFailure(), sensor=4, onset=900)
    faulty = netgen.inject_fault(default_panel, fault, seed=7)
    return netgen.Scenario(
        clean=default_panel, faulty=faulty, fault=fault, config=netgen.ScenarioConfig()
    )


def constant_panel(value: float, n_steps: int = 30, n_sensors: int = 4) -> netgen.ReadingsPanel:
    kinds = (netgen.SensorKind.PRESSURE,) * n_sensors
    labels = tuple(f"p{i:02d}" for i in range(n_sensors))
    return netgen.ReadingsPanel(
        values=np.full((n_steps, n_sensors), float(value)), kinds=kinds, labels=labels
    )
