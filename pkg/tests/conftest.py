import math

import numpy as np
import pytest

from beamfuse.phased_array import ArrayGeometry, beam
from beamfuse.scene import Path
from beamfuse.waveform import SPEED_OF_LIGHT, ChirpConfig, FrameConfig


def single_path(range_m: float, velocity_mps: float = 0.0, amplitude: float = 1.0, phase: float = 0.0) -> Path:
    return Path(amplitude, phase, 2 * range_m / SPEED_OF_LIGHT, velocity_mps, 0.0)


def one_beam_frame(chirps: int = 40) -> FrameConfig:
    return FrameConfig(chirps_per_frame=chirps, beams_per_frame=1, chirps_per_beam=chirps)


@pytest.fixture
def reference_config():
    return ChirpConfig(), FrameConfig()


@pytest.fixture
def geom():
    cfg = ChirpConfig()
    return ArrayGeometry.awr1843(cfg.wavelength_m)


# acceptance criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"ACCEPTANCE {number:2d} {'PASS' if passed else 'FAIL'}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{n:2d} {'PASS' if ok else 'FAIL'}  {detail}")
