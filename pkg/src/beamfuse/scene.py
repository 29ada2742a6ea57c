"""Multipath echo synthesis for scatterer scenes under steered Tx beams.

Geometry is 2-D: x across boresight, y along boresight, radar at the origin.
Each path contributes a dechirped IF tone

    A * exp(j * (phase + 2*pi*S*tau*t + 4*pi*v*n*Tc/lambda))

for fast-time sample ``t`` and chirp index ``n``. ``v`` is half the rate of
change of the round-trip length, so a receding point target has ``v > 0``
and lands in a positive Doppler bin. Beams are treated as simultaneous
within one chirp slot.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import SceneError
from .phased_array import ArrayGeometry, SteeringVector, array_gain
from .waveform import SPEED_OF_LIGHT, ChirpConfig, FrameConfig

GESTURE_LABELS = ("G1", "G2", "G3", "G4", "G5", "G6")


@dataclass(frozen=True)
class Scatterer:
    range_m: float
    azimuth_deg: float
    rcs_dbsm: float = -35.0
    radial_velocity_mps: float = 0.0
    cross_velocity_mps: float = 0.0

    def __post_init__(self):
        if not self.range_m > 0:
            raise SceneError("scatterer range must be positive")
        if not abs(self.azimuth_deg) < 90:
            raise SceneError("scatterer azimuth must lie in (-90, 90) degrees")


@dataclass(frozen=True)
class Path:
    attenuation: float
    phase_rad: float
    delay_s: float
    velocity_mps: float = 0.0
    departure_deg: float = 0.0

    def __post_init__(self):
        if self.attenuation < 0 or self.delay_s < 0:
            raise SceneError("attenuation and delay must be non-negative")


@dataclass(frozen=True)
class BounceSpec:
    max_bounces: int = 1
    coupling: float = 1.0

    def __post_init__(self):
        if self.max_bounces not in (0, 1):
            raise SceneError("only direct (0) and one-bounce (1) paths are modelled")


@dataclass
class PathSet:
    """Column arrays of the paths seen by one beam."""

    attenuation: np.ndarray
    phase_rad: np.ndarray
    delay_s: np.ndarray
    velocity_mps: np.ndarray
    departure_deg: np.ndarray
    arrival_deg: np.ndarray | None = None

    def __len__(self):
        return len(self.delay_s)

    def to_paths(self) -> list[Path]:
        return [Path(float(a), float(p), float(d), float(v), float(t)) for a, p, d, v, t in
                zip(self.attenuation, self.phase_rad, self.delay_s, self.velocity_mps, self.departure_deg)]

    @classmethod
    def from_paths(cls, paths) -> "PathSet":
        if isinstance(paths, PathSet):
            return paths
        cols = np.array([[p.attenuation, p.phase_rad, p.delay_s, p.velocity_mps, p.departure_deg]
                         for p in paths], dtype=float).reshape(-1, 5)
        return cls(*(cols[:, i].copy() for i in range(5)))

    @classmethod
    def concat(cls, sets) -> "PathSet":
        sets = [cls.from_paths(s) for s in sets]
        return cls(*(np.concatenate([getattr(s, f) for s in sets]) for f in
                     ("attenuation", "phase_rad", "delay_s", "velocity_mps", "departure_deg")))

    def arrivals(self) -> np.ndarray:
        return self.departure_deg if self.arrival_deg is None else self.arrival_deg

    def scaled(self, k: float) -> "PathSet":
        return PathSet(self.attenuation * k, self.phase_rad, self.delay_s, self.velocity_mps,
                       self.departure_deg, self.arrival_deg)


def _scene_arrays(scene):
    r = np.array([s.range_m for s in scene], dtype=float)
    az = np.radians([s.azimuth_deg for s in scene])
    rcs = 10.0 ** (np.array([s.rcs_dbsm for s in scene], dtype=float) / 10.0)
    vr = np.array([s.radial_velocity_mps for s in scene], dtype=float)
    vc = np.array([s.cross_velocity_mps for s in scene], dtype=float)
    pos = np.stack([r * np.sin(az), r * np.cos(az)], axis=1)
    # radial unit (sin, cos), cross unit along increasing azimuth (cos, -sin)
    vel = vr[:, None] * np.stack([np.sin(az), np.cos(az)], 1) + vc[:, None] * np.stack([np.cos(az), -np.sin(az)], 1)
    return r, az, rcs, vr, pos, vel


def path_set(scene, beam: SteeringVector, geom: ArrayGeometry, bounce: BounceSpec = BounceSpec()) -> PathSet:
    """Vectorised form of :func:`enumerate_paths`."""
    if len(scene) == 0:
        raise SceneError("scene has no scatterers")
    lam = geom.wavelength_m
    r, az, rcs, vr, pos, vel = _scene_arrays(scene)
    gain = array_gain(geom, beam, az)
    amp = np.sqrt(rcs)

    length = [2 * r]
    rate = [2 * vr]
    att = [gain * amp / r**2]
    dep = [az]
    arr = [az]
    if bounce.max_bounces >= 1 and len(scene) > 1:
        i, j = np.nonzero(~np.eye(len(scene), dtype=bool))
        sep = pos[i] - pos[j]
        dij = np.maximum(np.hypot(sep[:, 0], sep[:, 1]), 1e-9)
        length.append(r[i] + dij + r[j])
        rate.append(vr[i] + np.einsum("kx,kx->k", sep, vel[i] - vel[j]) / dij + vr[j])
        att.append(bounce.coupling * gain[i] * amp[i] * amp[j] / (r[i] * dij * r[j]))
        dep.append(az[i])
        arr.append(az[j])
    length = np.concatenate(length)
    return PathSet(
        attenuation=np.concatenate(att),
        phase_rad=2 * math.pi * np.mod(length / lam, 1.0),
        delay_s=length / SPEED_OF_LIGHT,
        velocity_mps=np.concatenate(rate) / 2,
        departure_deg=np.degrees(np.concatenate(dep)),
        arrival_deg=np.degrees(np.concatenate(arr)),
    )


def enumerate_paths(scene, beam: SteeringVector, geom: ArrayGeometry, bounce: BounceSpec = BounceSpec()) -> list[Path]:
    """Direct paths for every scatterer, then one-bounce paths for every ordered pair.

    Tx gain is applied at the departure azimuth only (first leg).
    """
    return path_set(scene, beam, geom, bounce).to_paths()


@dataclass
class RawFrame:
    """Complex ADC cube, axes (samples, chirps, beams)."""

    data: np.ndarray
    discarded: int = 0
    noise_power: float = 0.0


def _beam_cube(ps: PathSet, cfg: ChirpConfig, chirps: int, rx_phase=None) -> tuple[np.ndarray, int]:
    fb = cfg.slope_hz_per_s * ps.delay_s
    ok = fb < cfg.adc_rate_sps
    dropped = int((~ok).sum())
    t = np.arange(cfg.adc_samples) / cfg.adc_rate_sps
    n = np.arange(chirps)
    fast = np.exp(2j * math.pi * np.outer(fb[ok], t))
    slow_arg = ps.phase_rad[ok, None] + (4 * math.pi * cfg.chirp_duration_s / cfg.wavelength_m) * np.outer(ps.velocity_mps[ok], n)
    if rx_phase is not None:
        slow_arg = slow_arg + rx_phase[ok, None]
    slow = ps.attenuation[ok, None] * np.exp(1j * slow_arg)
    return fast.T @ slow, dropped


def rx_channel_cube(paths, cfg: ChirpConfig, chirps: int, n_rx: int = 4,
                    rx_spacing_wavelengths: float = 0.5) -> np.ndarray:
    """Noiseless cube (samples, chirps, rx) for a uniform Rx array.

    Rx element ``k`` sees an extra phase 2*pi*k*d*sin(arrival azimuth).
    """
    ps = PathSet.from_paths(paths)
    s = np.sin(np.radians(ps.arrivals()))
    out = np.empty((cfg.adc_samples, chirps, n_rx), dtype=complex)
    for k in range(n_rx):
        out[:, :, k], _ = _beam_cube(ps, cfg, chirps, 2 * math.pi * k * rx_spacing_wavelengths * s)
    return out


def noiseless_frame(paths_per_beam, cfg: ChirpConfig, frame: FrameConfig) -> RawFrame:
    if len(paths_per_beam) != frame.beams_per_frame:
        raise SceneError(f"expected {frame.beams_per_frame} beams, got {len(paths_per_beam)}")
    out = np.zeros((cfg.adc_samples, frame.chirps_per_beam, frame.beams_per_frame), dtype=complex)
    dropped = 0
    for b, paths in enumerate(paths_per_beam):
        cube, d = _beam_cube(PathSet.from_paths(paths), cfg, frame.chirps_per_beam)
        out[:, :, b] = cube
        dropped += d
    if dropped:
        warnings.warn(f"{dropped} path(s) beyond the unambiguous beat frequency were discarded", stacklevel=3)
    return RawFrame(out, dropped)


def complex_noise(shape, power: float, rng: np.random.Generator) -> np.ndarray:
    """Circular complex Gaussian with E|n|^2 = power."""
    s = math.sqrt(power / 2)
    return s * rng.standard_normal(shape) + 1j * s * rng.standard_normal(shape)


def noise_power_for(signal: np.ndarray, snr_db: float) -> float:
    return float(np.mean(np.abs(signal) ** 2)) / 10 ** (snr_db / 10)


def synthesize_frame(paths_per_beam, cfg: ChirpConfig, frame: FrameConfig, snr_db: float | None = None,
                     rng: np.random.Generator | None = None, noise_power: float | None = None) -> RawFrame:
    """One frame: sum of path tones per beam, plus noise.

    Noise power is either given directly or derived from ``snr_db`` against the
    mean signal power of the whole cube (all beams), so beam-to-beam gain
    differences survive. With neither, the frame is noiseless.
    """
    raw = noiseless_frame(paths_per_beam, cfg, frame)
    if noise_power is None and snr_db is not None:
        noise_power = noise_power_for(raw.data, snr_db)
    if noise_power:
        if rng is None:
            raise SceneError("an explicit rng is required for noisy synthesis")
        raw.data = raw.data + complex_noise(raw.data.shape, noise_power, rng)
        raw.noise_power = noise_power
    return raw


# --------------------------------------------------------------------------
# Gesture scripts


@dataclass
class GestureScript:
    label: int
    frames: list[tuple[Scatterer, ...]]
    duration_s: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.label < len(GESTURE_LABELS):
            raise SceneError(f"label must be in 0..{len(GESTURE_LABELS) - 1}")

    @property
    def name(self) -> str:
        return GESTURE_LABELS[self.label]


@dataclass(frozen=True)
class SceneParams:
    """Scene and nuisance ranges used when scripting a gesture."""

    subject_range_m: float = 1.5
    subject_azimuth_deg: float = 0.0
    range_jitter_m: float = 0.1
    speed_jitter: float = 0.15
    amplitude_jitter: float = 0.2
    duration_s: tuple[float, float] = (3.0, 6.0)
    hand_rcs_dbsm: float = -20.0
    torso_rcs_dbsm: float = -10.0
    # torso sits this far behind the hands
    torso_offset_m: float = 0.28
    # static reflectors fixed in the room: (range m, azimuth deg, rcs dBsm)
    reflectors: tuple[tuple[float, float, float], ...] = ((1.65, 18.0, 0.0), (1.55, -20.0, 0.0))
    # torso sway keeps the torso from being perfectly static
    sway_m: float = 0.0005


# Each hand point: (hand, radial amp m, cross amp m, freq Hz, phase rad, envelope)
# hand 0 = right, 1 = left; envelope "on", "first", "second" (halves) or "circle"
_TEMPLATES = {
    0: [(0, 0.010, 0.000, 3.0, 0.0, "on")],
    1: [(0, 0.045, 0.000, 1.2, 0.0, "on")],
    2: [(0, 0.020, 0.000, 2.0, 0.0, "on"), (1, 0.020, 0.000, 2.0, math.pi, "on")],
    3: [(0, 0.030, 0.000, 1.5, 0.0, "on"), (1, 0.030, 0.000, 1.5, 0.0, "on")],
    4: [(0, 0.020, 0.020, 2.5, 0.0, "circle")],
    5: [(1, 0.030, 0.000, 2.0, 0.0, "first"), (0, 0.030, 0.000, 2.0, 0.0, "second")],
}

# (radial, cross) offsets of each hand from the gesture centre, metres
_HAND_OFFSETS = {0: (0.0, 0.06), 1: (0.06, -0.06)}


def _envelope(kind: str, t: np.ndarray, duration: float) -> np.ndarray:
    if kind == "first":
        return (t < duration / 2).astype(float)
    if kind == "second":
        return (t >= duration / 2).astype(float)
    return np.ones_like(t)


def gesture_script(label: int, rng: np.random.Generator, frame_rate_fps: float,
                   params: SceneParams = SceneParams()) -> GestureScript:
    """Script a stylised hand gesture as oscillating scatterers in front of a torso.

    ``params.subject_range_m`` is the range of the gesture centre (the hands).
    """
    if label not in _TEMPLATES:
        raise SceneError(f"unknown gesture label {label}")
    lo, hi = params.duration_s
    duration = float(rng.uniform(lo, hi))
    n_frames = max(2, int(round(duration * frame_rate_fps)))
    t = np.arange(n_frames) / frame_rate_fps
    subj_r = params.subject_range_m + rng.uniform(-params.range_jitter_m, params.range_jitter_m)
    subj_az = math.radians(params.subject_azimuth_deg)
    u_r = np.array([math.sin(subj_az), math.cos(subj_az)])
    u_x = np.array([math.cos(subj_az), -math.sin(subj_az)])
    centre = subj_r * u_r
    torso = centre + params.torso_offset_m * u_r
    speed = 1 + rng.uniform(-params.speed_jitter, params.speed_jitter)
    global_phase = rng.uniform(0, 2 * math.pi)

    tracks = []  # (pos (T,2), vel (T,2), rcs)
    sway_f = rng.uniform(0.2, 0.4)
    sway = params.sway_m * np.sin(2 * math.pi * sway_f * t)
    dsway = params.sway_m * 2 * math.pi * sway_f * np.cos(2 * math.pi * sway_f * t)
    tracks.append((torso + np.outer(sway, u_r), np.outer(dsway, u_r), params.torso_rcs_dbsm))

    moving = {0: False, 1: False}
    for hand, a_r, a_x, f, ph, env in _TEMPLATES[label]:
        amp = 1 + rng.uniform(-params.amplitude_jitter, params.amplitude_jitter)
        w = 2 * math.pi * f * speed
        phase = w * t + ph + global_phase
        e = _envelope(env, t, duration)
        dr = amp * a_r * np.sin(phase) * e
        vr = amp * a_r * w * np.cos(phase) * e
        if env == "circle":
            dx = amp * a_x * np.cos(phase)
            vx = -amp * a_x * w * np.sin(phase)
        else:
            dx = amp * a_x * np.sin(phase + math.pi / 2) * e
            vx = amp * a_x * w * np.cos(phase + math.pi / 2) * e
        off_r, off_x = _HAND_OFFSETS[hand]
        base = centre + off_r * u_r + off_x * u_x
        pos = base + np.outer(dr + sway, u_r) + np.outer(dx, u_x)
        vel = np.outer(vr + dsway, u_r) + np.outer(vx, u_x)
        tracks.append((pos, vel, params.hand_rcs_dbsm))
        moving[hand] = True
    for hand, still in moving.items():
        if not still:
            off_r, off_x = _HAND_OFFSETS[hand]
            base = centre + off_r * u_r + off_x * u_x
            tracks.append((base + np.outer(sway, u_r), np.outer(dsway, u_r), params.hand_rcs_dbsm))

    frames = []
    for k in range(n_frames):
        scat = [_polar_scatterer(p[k], v[k], rcs) for p, v, rcs in tracks]
        scat += [Scatterer(r, az, rcs) for r, az, rcs in params.reflectors]
        frames.append(tuple(scat))
    meta = {"subject_range_m": subj_r, "speed": speed}
    return GestureScript(label, frames, duration, meta)


def _polar_scatterer(p, v, rcs_dbsm) -> Scatterer:
    r = float(np.hypot(p[0], p[1]))
    az = math.atan2(p[0], p[1])
    u_r = np.array([math.sin(az), math.cos(az)])
    u_x = np.array([math.cos(az), -math.sin(az)])
    return Scatterer(r, math.degrees(az), rcs_dbsm, float(v @ u_r), float(v @ u_x))


def simulate_gesture(script: GestureScript, beams, geom: ArrayGeometry, cfg: ChirpConfig, frame: FrameConfig,
                     snr_db: float | None, rng: np.random.Generator,
                     bounce: BounceSpec = BounceSpec()) -> np.ndarray:
    """Raw capture with axes (frames, samples, chirps, beams).

    One noise power is used for the whole capture, set from ``snr_db`` against
    the capture's mean signal power.
    """
    if len(beams) != frame.beams_per_frame:
        raise SceneError("beam list length must equal beams_per_frame")
    cube = np.empty((len(script.frames), cfg.adc_samples, frame.chirps_per_beam, len(beams)), dtype=complex)
    for k, scene in enumerate(script.frames):
        per_beam = [path_set(scene, b, geom, bounce) for b in beams]
        cube[k] = noiseless_frame(per_beam, cfg, frame).data
    if snr_db is not None:
        power = noise_power_for(cube, snr_db)
        cube += complex_noise(cube.shape, power, rng)
    return cube
