"""Tx steering vectors, 6-bit phase-shifter words and far-field patterns for a linear array.

The pattern is the array factor of the element offsets multiplied by an
element field factor ``cos(phi) ** element_exponent``. The default exponent
of 0.5 is the projected-aperture (obliquity) factor. With isotropic elements
(exponent 0) every grating lobe of a lambda-spaced array has exactly the
main-lobe height, so lobe dominance would be decided by rounding noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, SteeringDomainError

PHASE_STEPS = 64
PHASE_STEP_RAD = 2 * math.pi / PHASE_STEPS  # 5.625 degrees
DEFAULT_ELEMENT_EXPONENT = 0.5


@dataclass(frozen=True)
class ArrayGeometry:
    element_offsets_m: tuple[float, ...]
    wavelength_m: float
    element_exponent: float = DEFAULT_ELEMENT_EXPONENT

    def __post_init__(self):
        offsets = tuple(float(d) for d in self.element_offsets_m)
        object.__setattr__(self, "element_offsets_m", offsets)
        if not offsets or offsets[0] != 0.0:
            raise InvalidConfigError("element offsets must start at 0")
        if any(b <= a for a, b in zip(offsets, offsets[1:])):
            raise InvalidConfigError("element offsets must be strictly increasing")
        if self.wavelength_m <= 0:
            raise InvalidConfigError("wavelength must be positive")
        if self.element_exponent < 0:
            raise InvalidConfigError("element_exponent must be >= 0")

    @property
    def n_elements(self) -> int:
        return len(self.element_offsets_m)

    @property
    def offsets_in_wavelengths(self) -> np.ndarray:
        return np.asarray(self.element_offsets_m) / self.wavelength_m

    @classmethod
    def awr1843(cls, wavelength_m: float, **kw) -> "ArrayGeometry":
        """Three Tx elements spaced one wavelength apart."""
        return cls((0.0, wavelength_m, 2 * wavelength_m), wavelength_m, **kw)

    @classmethod
    def uniform(cls, n: int, spacing_wavelengths: float, wavelength_m: float, **kw) -> "ArrayGeometry":
        return cls(tuple(i * spacing_wavelengths * wavelength_m for i in range(n)), wavelength_m, **kw)


@dataclass(frozen=True)
class SteeringVector:
    steer_angle_rad: float
    phases_rad: tuple[float, ...]
    quantized_steps: tuple[int, ...] | None = None

    @property
    def steer_angle_deg(self) -> float:
        return math.degrees(self.steer_angle_rad)

    def effective_phases(self) -> np.ndarray:
        """Phases actually applied: the quantized words when present."""
        if self.quantized_steps is not None:
            return np.asarray(self.quantized_steps, dtype=float) * PHASE_STEP_RAD
        return np.asarray(self.phases_rad, dtype=float)


def steering_phases(geom: ArrayGeometry, theta_rad: float) -> SteeringVector:
    """Per-element phase shifts 2*pi*(d_n/lambda)*sin(theta), reduced mod 2*pi."""
    if not abs(theta_rad) < math.pi / 2:
        raise SteeringDomainError(f"steering angle {math.degrees(theta_rad):.2f} deg outside (-90, 90)")
    cycles = geom.offsets_in_wavelengths * math.sin(theta_rad)
    # rounding to 1e-12 cycles absorbs the ulp error of sin() so that
    # e.g. sin(30 deg) lands exactly on half a cycle
    frac = np.mod(np.round(cycles, 12), 1.0)
    return SteeringVector(float(theta_rad), tuple(float(p) for p in 2 * math.pi * frac))


def quantize_phases(sv: SteeringVector) -> SteeringVector:
    """Map each phase to the nearest 5.625 degree word of the 64-step shifter."""
    phases = np.mod(np.asarray(sv.phases_rad, dtype=float), 2 * math.pi)
    words = np.mod(np.rint(phases / PHASE_STEP_RAD).astype(int), PHASE_STEPS)
    return SteeringVector(sv.steer_angle_rad, sv.phases_rad, tuple(int(w) for w in words))


def beam(geom: ArrayGeometry, theta_deg: float, quantized: bool = True) -> SteeringVector:
    sv = steering_phases(geom, math.radians(theta_deg))
    return quantize_phases(sv) if quantized else sv


def quantization_error_rad(sv: SteeringVector) -> np.ndarray:
    """Wrapped per-element difference between ideal and quantized phases."""
    if sv.quantized_steps is None:
        return np.zeros(len(sv.phases_rad))
    diff = sv.effective_phases() - np.asarray(sv.phases_rad)
    return np.abs(np.angle(np.exp(1j * diff)))


def element_factor(geom: ArrayGeometry, angles_rad) -> np.ndarray:
    c = np.clip(np.cos(np.asarray(angles_rad, dtype=float)), 0.0, None)
    if geom.element_exponent == 0:
        return np.ones_like(c)
    return c**geom.element_exponent


def array_gain(geom: ArrayGeometry, sv: SteeringVector, angles_rad) -> np.ndarray:
    """Un-normalised field gain (coherent peak of an isotropic array is 1)."""
    angles = np.asarray(angles_rad, dtype=float)
    d = geom.offsets_in_wavelengths
    arg = 2 * math.pi * np.multiply.outer(np.sin(angles), d) - sv.effective_phases()
    af = np.abs(np.exp(1j * arg).sum(axis=-1)) / geom.n_elements
    return af * element_factor(geom, angles)


def array_pattern(geom: ArrayGeometry, sv: SteeringVector, angles_rad) -> np.ndarray:
    """Field pattern normalised so that its maximum over ``angles_rad`` is 1."""
    g = array_gain(geom, sv, angles_rad)
    peak = g.max()
    return g / peak if peak > 0 else g


def default_angle_grid(step_deg: float = 0.5) -> np.ndarray:
    """Angles in degrees over [-90, 90]."""
    n = int(round(180.0 / step_deg))
    return np.linspace(-90.0, 90.0, n + 1)


def main_lobe_mask(geom: ArrayGeometry, theta_rad: float, angles_rad) -> np.ndarray:
    """Angles between the first nulls around ``theta`` (in sine space)."""
    s = np.sin(np.asarray(angles_rad, dtype=float))
    if geom.n_elements < 2:
        return np.ones_like(s, dtype=bool)
    aperture = geom.n_elements * float(np.mean(np.diff(geom.offsets_in_wavelengths)))
    return np.abs(s - math.sin(theta_rad)) < 1.0 / aperture


def main_lobe_dominates(geom: ArrayGeometry, sv: SteeringVector, angles_deg=None, rtol: float = 1e-9) -> bool:
    """True when the main lobe reaches the global maximum of the pattern (ties count)."""
    if angles_deg is None:
        angles_deg = default_angle_grid()
    angles = np.radians(angles_deg)
    g = array_pattern(geom, sv, angles)
    lobe = main_lobe_mask(geom, sv.steer_angle_rad, angles)
    return bool(lobe.any() and g[lobe].max() >= 1.0 - rtol)


def global_maxima_deg(geom: ArrayGeometry, sv: SteeringVector, angles_deg=None, rtol: float = 1e-9) -> np.ndarray:
    """All grid angles attaining the pattern maximum."""
    if angles_deg is None:
        angles_deg = default_angle_grid()
    angles_deg = np.asarray(angles_deg, dtype=float)
    g = array_pattern(geom, sv, np.radians(angles_deg))
    return angles_deg[g >= 1.0 - rtol]


def usable_steering_range(geom: ArrayGeometry, step_deg: float = 5.0, quantized: bool = True,
                          grid_step_deg: float = 0.5) -> list[float]:
    """Scan angles in (-90, 90) whose main lobe is not beaten by a side or grating lobe."""
    n = 90.0 / step_deg
    if abs(n - round(n)) > 1e-9:
        raise InvalidConfigError("step_deg must divide 90")
    n = int(round(n))
    grid = default_angle_grid(grid_step_deg)
    usable = []
    for k in range(-n + 1, n):
        theta = k * step_deg
        if main_lobe_dominates(geom, beam(geom, theta, quantized), grid):
            usable.append(float(theta))
    return usable


def pattern_table(geom: ArrayGeometry, steer_deg, angles_deg=None, quantized: bool = True) -> dict:
    """{steer angle: normalised gain array} over a common angle grid."""
    if angles_deg is None:
        angles_deg = default_angle_grid()
    rad = np.radians(angles_deg)
    return {float(t): array_pattern(geom, beam(geom, t, quantized), rad) for t in steer_deg}
