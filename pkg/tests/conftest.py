from pathlib import Path

import numpy as np
import pytest

from oracles import grid_single_device
from uavrelay.scenario import Device, GeneratorConfig, Scenario, UavParams, random_scenario

ROOT = Path(__file__).resolve().parents[1]
DEFAULTS = ROOT / "scenarios" / "defaults.yaml"


def toy_scenario(n_slots=8, devices=None, **kw) -> Scenario:
    """Small hand-built scenario: two devices near the straight path."""
    if devices is None:
        devices = (
            Device(1, (420.0, 160.0), 2e6, 1, 4),
            Device(2, (360.0, 60.0), 3e6, 2, 5),
        )
    uav = UavParams(n_slots=n_slots, cache_cap=1e9, p_max=0.0631, start=(500.0, 200.0),
                    end=(380.0, 80.0))
    return Scenario(devices=tuple(devices), gateway=(300.0, 0.0), uav=uav, **kw)


def short_horizon_config(n_devices, n_slots) -> GeneratorConfig:
    """Generator recipe whose end point is reachable in as few as 4 slots."""
    return GeneratorConfig(n_devices=n_devices, n_slots=n_slots, end=(440.0, 160.0))


#: Single-device case small enough for the exhaustive trajectory search.
GRID = dict(start=(200.0, 0.0), end=(300.0, 0.0), device=(250.0, 300.0), gateway=(250.0, -300.0),
            n_slots=6, n_end=3, v_max=75.0, spacing=20.0)


def grid_scenario(data_size) -> Scenario:
    uav = UavParams(n_slots=GRID["n_slots"], v_max=GRID["v_max"], cache_cap=1e9, p_max=0.0631,
                    start=GRID["start"], end=GRID["end"])
    return Scenario(devices=(Device(1, GRID["device"], data_size, 1, GRID["n_end"]),),
                    gateway=GRID["gateway"], uav=uav)


def grid_oracle():
    """``(best min(C_ul, C_dl) in bits, best path, candidate count)`` for :func:`grid_scenario`."""
    s = grid_scenario(1e6)
    uav, ch = s.uav, s.channel
    return grid_single_device(
        uav.start, uav.end, uav.n_slots, uav.max_step, GRID["device"], GRID["gateway"], GRID["n_end"],
        H=uav.altitude, B=ch.bandwidth, w0=ch.ref_gain, alpha=ch.pathloss_exp, s2=ch.noise_power,
        p_dev=float(np.max(s.p_dev_max)), p_uav=float(np.max(uav.p_max)), slot_len=uav.slot_len,
        spacing=GRID["spacing"])


@pytest.fixture
def toy():
    return toy_scenario()


@pytest.fixture(scope="session")
def small_random():
    return random_scenario(3, GeneratorConfig(n_devices=3, n_slots=14))


def pytest_terminal_summary(terminalreporter):
    """Print one line per acceptance criterion when that module ran."""
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.LINES):
        terminalreporter.write_line(module.LINES[number])
