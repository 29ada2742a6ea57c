"""Raw ADC cubes to normalised Range-Doppler-Matrix sequences, plus CFAR, AoA and MRC.

FFTs are unnormalised with a rectangular window, so a single on-grid tone
of amplitude A produces a peak of A * samples * chirps and
sum|RDM|^2 == samples * chirps * sum|ADC|^2.

Pipeline order: FFTs, range gate, background removal (complex mean
subtraction, then magnitude), min-max normalisation, time undersampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidConfigError, ShapeError
from .waveform import ChirpConfig, FrameConfig, doppler_resolution, range_resolution

_EDGE_TOL = 1e-9


@dataclass
class Rdm:
    """Magnitude map of one beam, axes (range, Doppler)."""

    values: np.ndarray
    range_bin_m: float
    doppler_bin_mps: float


@dataclass
class RdmSequence:
    """Tensor with axes (range bins, Doppler bins, Tx beams, time steps)."""

    tensor: np.ndarray
    beam_angles_deg: tuple[float, ...]
    range_bin_m: float
    doppler_bin_mps: float
    range_offset: int = 0
    label: int | None = None

    def __post_init__(self):
        if self.tensor.ndim != 4:
            raise ShapeError(f"RDM sequence must be 4-D, got shape {self.tensor.shape}")
        self.beam_angles_deg = tuple(float(a) for a in self.beam_angles_deg)
        if self.tensor.shape[2] != len(self.beam_angles_deg):
            raise ShapeError("beam axis length does not match beam_angles_deg")

    @property
    def shape(self):
        return self.tensor.shape

    @property
    def n_beams(self) -> int:
        return self.tensor.shape[2]

    @property
    def n_steps(self) -> int:
        return self.tensor.shape[3]

    def range_m(self) -> np.ndarray:
        return (self.range_offset + np.arange(self.tensor.shape[0])) * self.range_bin_m

    def with_tensor(self, tensor, **kw) -> "RdmSequence":
        return replace(self, tensor=tensor, **kw)

    def select_beams(self, indices) -> "RdmSequence":
        indices = list(indices)
        return replace(self, tensor=self.tensor[:, :, indices, :],
                       beam_angles_deg=tuple(self.beam_angles_deg[i] for i in indices))

    def beam_rdm(self, beam: int, step: int) -> Rdm:
        return Rdm(np.abs(self.tensor[:, :, beam, step]), self.range_bin_m, self.doppler_bin_mps)


def range_doppler_fft(raw) -> np.ndarray:
    """Complex RDM per beam: (samples, chirps, beams) -> (range, Doppler, beams).

    The Doppler axis is fft-shifted, zero velocity at index chirps // 2.
    Leading axes (e.g. frames) are carried through.
    """
    data = getattr(raw, "data", raw)
    data = np.asarray(data)
    if data.ndim < 3:
        raise ShapeError("raw cube needs (samples, chirps, beams) axes")
    if data.shape[-2] < 2:
        raise ShapeError("at least two chirps per beam are required for a Doppler FFT")
    spectrum = np.fft.fft(data, axis=-3)
    spectrum = np.fft.fft(spectrum, axis=-2)
    return np.fft.fftshift(spectrum, axes=-2)


def capture_to_sequence(capture: np.ndarray, cfg: ChirpConfig, frame: FrameConfig, beam_angles_deg,
                        label: int | None = None) -> RdmSequence:
    """Raw capture (frames, samples, chirps, beams) to a complex RDM sequence."""
    spectrum = range_doppler_fft(capture)
    return RdmSequence(np.moveaxis(spectrum, 0, -1), tuple(beam_angles_deg), range_resolution(cfg),
                       doppler_resolution(cfg, frame.chirps_per_beam), 0, label)


def gate_bins(n_bins: int, range_bin_m: float, center_m: float, half_width_m: float, offset: int = 0) -> np.ndarray:
    r = (offset + np.arange(n_bins)) * range_bin_m
    lo, hi = center_m - half_width_m, center_m + half_width_m
    return np.nonzero((r >= lo - _EDGE_TOL) & (r <= hi + _EDGE_TOL))[0]


def range_gate(seq: RdmSequence, center_m: float, half_width_m: float) -> RdmSequence:
    """Keep the range bins whose range falls in [center - half, center + half]."""
    if half_width_m < 0:
        raise InvalidConfigError("half_width_m must be non-negative")
    keep = gate_bins(seq.tensor.shape[0], seq.range_bin_m, center_m, half_width_m, seq.range_offset)
    if keep.size == 0:
        raise InvalidConfigError(f"range gate {center_m}+/-{half_width_m} m selects no bins")
    return seq.with_tensor(seq.tensor[keep[0]:keep[-1] + 1], range_offset=seq.range_offset + int(keep[0]))


def background_remove(seq: RdmSequence) -> RdmSequence:
    """Subtract each cell's mean over time, keep the magnitude."""
    if seq.n_steps < 2:
        raise ShapeError("background removal needs at least two time steps")
    x = seq.tensor
    return seq.with_tensor(np.abs(x - x.mean(axis=3, keepdims=True)))


def normalize(seq: RdmSequence) -> RdmSequence:
    """Min-max scale the whole tensor to [0, 1]; a constant tensor maps to zeros."""
    x = np.abs(seq.tensor) if np.iscomplexobj(seq.tensor) else seq.tensor
    if x.size == 0:
        raise ShapeError("cannot normalise an empty tensor")
    lo, hi = x.min(), x.max()
    if hi <= lo:
        return seq.with_tensor(np.zeros_like(x, dtype=float))
    return seq.with_tensor((x - lo) / (hi - lo))


def undersample_indices(n_steps: int, target: int) -> np.ndarray:
    if not 1 <= target <= n_steps:
        raise InvalidConfigError(f"cannot undersample {n_steps} steps to {target}")
    if target == 1:
        return np.array([0])
    return np.rint(np.arange(target) * (n_steps - 1) / (target - 1)).astype(int)


def undersample_time(seq: RdmSequence, target_steps: int) -> RdmSequence:
    idx = undersample_indices(seq.n_steps, target_steps)
    return seq.with_tensor(seq.tensor[..., idx])


@dataclass(frozen=True)
class PipelineConfig:
    gate_center_m: float = 1.5
    gate_half_width_m: float = 0.3
    target_steps: int = 42


def process_capture(capture: np.ndarray, cfg: ChirpConfig, frame: FrameConfig, beam_angles_deg,
                    pipe: PipelineConfig = PipelineConfig(), label: int | None = None) -> RdmSequence:
    """Full pipeline for one gesture capture (frames, samples, chirps, beams)."""
    seq = capture_to_sequence(capture, cfg, frame, beam_angles_deg, label)
    seq = range_gate(seq, pipe.gate_center_m, pipe.gate_half_width_m)
    seq = background_remove(seq)
    seq = normalize(seq)
    return undersample_time(seq, pipe.target_steps)


# --------------------------------------------------------------------------
# detection utilities


def ca_cfar_alpha(n_train: int, pfa: float) -> float:
    """Threshold factor of cell-averaging CFAR for square-law detected exponential noise."""
    return n_train * (pfa ** (-1.0 / n_train) - 1.0)


def cfar_ca_floor(profile, train: int = 8, guard: int = 2, pfa: float = 1e-3):
    """Cell-averaging CFAR over a power profile.

    Returns ``(floor, detections)``: the per-bin mean of the training cells
    (guard cells excluded, one-sided at the edges) and the boolean mask
    ``profile > alpha * floor``. Complex input is square-law detected first.
    """
    p = np.asarray(profile)
    p = np.abs(p) ** 2 if np.iscomplexobj(p) else p.astype(float)
    n = p.size
    if n <= 2 * (train + guard):
        raise InvalidConfigError("profile too short for the CFAR window")
    csum = np.concatenate([[0.0], np.cumsum(p)])
    idx = np.arange(n)

    def window_sum(lo, hi):
        lo = np.clip(lo, 0, n)
        hi = np.clip(hi, 0, n)
        return csum[hi] - csum[lo], hi - lo

    ls, lc = window_sum(idx - guard - train, idx - guard)
    rs, rc = window_sum(idx + guard + 1, idx + guard + 1 + train)
    count = lc + rc
    floor = (ls + rs) / count
    alpha = np.array([ca_cfar_alpha(int(c), pfa) for c in count])
    return floor, p > alpha * floor


def detection_clusters(mask) -> list[tuple[int, int]]:
    """Contiguous runs of True as inclusive (start, stop) index pairs."""
    m = np.asarray(mask, dtype=int)
    edges = np.diff(np.concatenate([[0], m, [0]]))
    starts = np.nonzero(edges == 1)[0]
    stops = np.nonzero(edges == -1)[0] - 1
    return list(zip(starts.tolist(), stops.tolist()))


def aoa_estimate(values, rx_spacing_wavelengths: float = 0.5, method: str = "fft", n_fft: int = 4096) -> float:
    """Azimuth in degrees from the phase progression across Rx channels."""
    x = np.asarray(values, dtype=complex).ravel()
    if x.size < 2:
        raise ShapeError("AoA needs at least two Rx channels")
    d = rx_spacing_wavelengths
    if method == "phase" or x.size == 2:
        dphi = np.angle(np.vdot(x[:-1], x[1:]))
    elif method == "fft":
        spectrum = np.fft.fft(x, n_fft)
        dphi = 2 * math.pi * np.fft.fftfreq(n_fft)[int(np.argmax(np.abs(spectrum)))]
    else:
        raise InvalidConfigError(f"unknown AoA method {method!r}")
    s = np.clip(dphi / (2 * math.pi * d), -1.0, 1.0)
    return math.degrees(math.asin(s))


def mrc_weights(seq: RdmSequence) -> np.ndarray:
    """Per-beam weights proportional to each beam's total power, summing to 1."""
    x = np.abs(seq.tensor)
    power = (x**2).sum(axis=(0, 1, 3))
    total = power.sum()
    if total <= 0:
        return np.full(seq.n_beams, 1.0 / seq.n_beams)
    return power / total


def mrc_combine(seq: RdmSequence) -> RdmSequence:
    """Collapse the beam axis into one power-weighted map per time step."""
    if seq.n_beams < 2:
        raise ShapeError("MRC needs at least two beams")
    w = mrc_weights(seq)
    combined = np.einsum("rdbt,b->rdt", seq.tensor, w)[:, :, None, :]
    return seq.with_tensor(combined, beam_angles_deg=(float(np.dot(w, seq.beam_angles_deg)),))
