"""FMCW chirp/frame parameterisation and the analytic range/Doppler relations.

Conventions used throughout the package:

* ``chirp_duration_s`` is the chirp repetition interval *of one beam*. Beams
  are interleaved chirp by chirp, so one interval holds one chirp of every
  beam and the Doppler FFT of a beam runs over ``chirps_per_beam`` chirps
  spaced ``chirp_duration_s`` apart.
* The valid ramp is the ADC window, ``adc_samples / adc_rate_sps``; the slope
  is defined so that slope * window == bandwidth.
* IF samples are complex, so all ``adc_samples`` range bins are usable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .configio import dataclass_from_dict, read_structured
from .errors import InvalidConfigError

SPEED_OF_LIGHT = 299_792_458.0

# Reference AWR1843 setup: 77-80.68 GHz sweep, 256 samples at 5 Msps,
# 40 chirps per beam. The per-beam chirp interval is chosen so the Doppler
# bin is 0.028 m/s.
AWR1843_BANDWIDTH_HZ = 3.61847e9
AWR1843_CARRIER_HZ = 77e9
AWR1843_ADC_SAMPLES = 256
AWR1843_ADC_RATE_SPS = 5e6
AWR1843_CHIRP_INTERVAL_S = 1.738e-3


@dataclass(frozen=True)
class ChirpConfig:
    bandwidth_hz: float = AWR1843_BANDWIDTH_HZ
    slope_hz_per_s: float | None = None
    chirp_duration_s: float = AWR1843_CHIRP_INTERVAL_S
    carrier_hz: float = AWR1843_CARRIER_HZ
    adc_samples: int = AWR1843_ADC_SAMPLES
    adc_rate_sps: float = AWR1843_ADC_RATE_SPS

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise InvalidConfigError("bandwidth_hz must be positive")
        if self.adc_samples < 1 or self.adc_rate_sps <= 0:
            raise InvalidConfigError("ADC geometry must be positive")
        if self.carrier_hz <= 0:
            raise InvalidConfigError("carrier_hz must be positive")
        if self.sweep_time_s > self.chirp_duration_s * (1 + 1e-12):
            raise InvalidConfigError(
                f"ADC window {self.sweep_time_s:.3e}s exceeds chirp duration {self.chirp_duration_s:.3e}s"
            )
        if self.slope_hz_per_s is None:
            object.__setattr__(self, "slope_hz_per_s", self.bandwidth_hz / self.sweep_time_s)
        if self.slope_hz_per_s <= 0:
            raise InvalidConfigError("slope_hz_per_s must be positive")
        if abs(self.slope_hz_per_s * self.sweep_time_s - self.bandwidth_hz) > 1e-9 * self.bandwidth_hz:
            raise InvalidConfigError("slope * sweep time must equal bandwidth")

    @property
    def sweep_time_s(self) -> float:
        return self.adc_samples / self.adc_rate_sps

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @classmethod
    def from_dict(cls, data) -> "ChirpConfig":
        return dataclass_from_dict(cls, data)


@dataclass(frozen=True)
class FrameConfig:
    chirps_per_frame: int = 160
    # 14 fps: 40 chirps of 1.738 ms fit in one period and 3 s spans 42 frames
    frame_rate_fps: float = 14.0
    beams_per_frame: int = 4
    chirps_per_beam: int = 40

    def __post_init__(self):
        if min(self.chirps_per_frame, self.beams_per_frame, self.chirps_per_beam) < 1:
            raise InvalidConfigError("frame counts must be positive")
        if self.beams_per_frame * self.chirps_per_beam != self.chirps_per_frame:
            raise InvalidConfigError("beams_per_frame * chirps_per_beam != chirps_per_frame")
        if self.frame_rate_fps <= 0:
            raise InvalidConfigError("frame_rate_fps must be positive")

    @property
    def frame_period_s(self) -> float:
        return 1.0 / self.frame_rate_fps

    def check_timing(self, chirp: ChirpConfig) -> None:
        """Raise if one frame's chirps do not fit in the frame period."""
        active = self.chirps_per_beam * chirp.chirp_duration_s
        if active > self.frame_period_s * (1 + 1e-12):
            raise InvalidConfigError(
                f"frame needs {active * 1e3:.2f} ms of chirps but the period is {self.frame_period_s * 1e3:.2f} ms"
            )

    @classmethod
    def from_dict(cls, data) -> "FrameConfig":
        return dataclass_from_dict(cls, data)


def range_resolution(cfg: ChirpConfig | float) -> float:
    """c / 2B. Accepts a config or a bare bandwidth in Hz."""
    bandwidth = getattr(cfg, "bandwidth_hz", cfg)
    if not bandwidth > 0:
        raise InvalidConfigError("bandwidth must be positive")
    return SPEED_OF_LIGHT / (2.0 * bandwidth)


def doppler_velocity(delta_phase_rad, cfg: ChirpConfig):
    """Radial velocity from the chirp-to-chirp phase step: lambda * dphi / (4 pi Tc)."""
    return cfg.wavelength_m * np.asarray(delta_phase_rad) / (4.0 * math.pi * cfg.chirp_duration_s)


def beat_frequency_to_range(delta_f_hz, cfg: ChirpConfig):
    if not cfg.slope_hz_per_s > 0:
        raise InvalidConfigError("slope must be positive")
    tau = np.asarray(delta_f_hz) / cfg.slope_hz_per_s
    return SPEED_OF_LIGHT * tau / 2.0


def range_bin_hz(cfg: ChirpConfig) -> float:
    """Beat-frequency spacing of the range FFT."""
    return cfg.adc_rate_sps / cfg.adc_samples


def doppler_resolution(cfg: ChirpConfig, chirps_per_beam: int) -> float:
    """Velocity width of one Doppler FFT bin."""
    return cfg.wavelength_m / (2.0 * chirps_per_beam * cfg.chirp_duration_s)


def max_unambiguous_velocity(cfg: ChirpConfig) -> float:
    return cfg.wavelength_m / (4.0 * cfg.chirp_duration_s)


def fold_velocity(v, cfg: ChirpConfig):
    """Alias a velocity into the unambiguous interval [-vmax, vmax)."""
    vmax = max_unambiguous_velocity(cfg)
    return np.mod(np.asarray(v) + vmax, 2 * vmax) - vmax


def range_axis(cfg: ChirpConfig) -> np.ndarray:
    return np.arange(cfg.adc_samples) * range_resolution(cfg)


def doppler_axis(cfg: ChirpConfig, chirps_per_beam: int) -> np.ndarray:
    """Velocities of the fft-shifted Doppler bins."""
    k = np.arange(chirps_per_beam) - chirps_per_beam // 2
    return k * doppler_resolution(cfg, chirps_per_beam)


@dataclass(frozen=True)
class RadarConfig:
    chirp: ChirpConfig = field(default_factory=ChirpConfig)
    frame: FrameConfig = field(default_factory=FrameConfig)

    @classmethod
    def from_dict(cls, data) -> "RadarConfig":
        data = data or {}
        extra = set(data) - {"chirp", "frame"}
        if extra:
            raise InvalidConfigError(f"unknown radar config sections: {sorted(extra)}")
        return cls(ChirpConfig.from_dict(data.get("chirp")), FrameConfig.from_dict(data.get("frame")))


def load_radar_config(path: str | Path) -> RadarConfig:
    """Read ``[chirp]`` and ``[frame]`` tables (SI units) from TOML/JSON."""
    data = read_structured(path)
    return RadarConfig.from_dict({k: data[k] for k in ("chirp", "frame") if k in data})
