"""Range/Doppler shift plus noise augmentation of RDM sequences.

One (velocity, distance) pair is drawn per gesture and applied to every beam
and time step, so the beams stay mutually consistent. Physical shifts are
rounded to whole bins; cells shifted past an edge are dropped and vacated
cells are zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .configio import dataclass_from_dict
from .dataset import Dataset
from .errors import InvalidConfigError, ShapeError
from .rdm import RdmSequence


@dataclass(frozen=True)
class AugmentConfig:
    distance_range_m: tuple[float, float] = (-0.369, 0.369)
    velocity_range_mps: tuple[float, float] = (-0.14, 0.14)
    noise_sigma: float = 0.01
    factor: int = 15
    clamp: bool = True

    def __post_init__(self):
        for name in ("distance_range_m", "velocity_range_mps"):
            lo, hi = getattr(self, name)
            if lo > hi or abs(lo + hi) > 1e-12:
                raise InvalidConfigError(f"{name} must be an interval symmetric about 0")
        if self.noise_sigma < 0:
            raise InvalidConfigError("noise_sigma must be >= 0")
        if self.factor < 0:
            raise InvalidConfigError("factor must be >= 0")

    @classmethod
    def from_dict(cls, data) -> "AugmentConfig":
        return dataclass_from_dict(cls, data)


def shift_axis(x: np.ndarray, shift: int, axis: int) -> np.ndarray:
    """Shift towards higher indices by ``shift`` (negative: lower), zero filling."""
    n = x.shape[axis]
    if abs(shift) >= n:
        raise ShapeError(f"shift {shift} is not smaller than axis length {n}")
    if shift == 0:
        return x.copy()
    out = np.zeros_like(x)
    src = [slice(None)] * x.ndim
    dst = [slice(None)] * x.ndim
    if shift > 0:
        src[axis], dst[axis] = slice(0, n - shift), slice(shift, n)
    else:
        src[axis], dst[axis] = slice(-shift, n), slice(0, n + shift)
    out[tuple(dst)] = x[tuple(src)]
    return out


def bin_shifts(velocity_mps: float, distance_m: float, doppler_bin_mps: float, range_bin_m: float) -> tuple[int, int]:
    return int(np.rint(velocity_mps / doppler_bin_mps)), int(np.rint(distance_m / range_bin_m))


def shift_tensor(x: np.ndarray, range_shift: int, doppler_shift: int) -> np.ndarray:
    """Shift a (range, Doppler, ...) tensor along its first two axes."""
    return shift_axis(shift_axis(x, range_shift, 0), doppler_shift, 1)


def augment_gesture(seq: RdmSequence, cfg: AugmentConfig, rng: np.random.Generator | int,
                    draws: tuple[float, float] | None = None) -> RdmSequence:
    """One augmented copy of ``seq``.

    ``draws`` = (velocity m/s, distance m) overrides the random draw.
    """
    rng = np.random.default_rng(rng)
    if draws is None:
        a = rng.uniform(*cfg.velocity_range_mps)
        b = rng.uniform(*cfg.distance_range_m)
    else:
        a, b = draws
    d_shift, r_shift = bin_shifts(a, b, seq.doppler_bin_mps, seq.range_bin_m)
    x = shift_tensor(np.asarray(seq.tensor, dtype=float), r_shift, d_shift)
    if cfg.noise_sigma > 0:
        x = x + rng.normal(0.0, cfg.noise_sigma, size=x.shape)
    if cfg.clamp:
        x = np.clip(x, 0.0, 1.0)
    return seq.with_tensor(x)


def augment_dataset(ds: Dataset, cfg: AugmentConfig, seed: int) -> Dataset:
    """Originals followed by ``cfg.factor`` augmented copies of every sample.

    Copy ``c`` of sample ``i`` uses its own RNG stream keyed on (seed, i, c).
    Copies get negative sample ids so they never collide with captured ones.
    """
    if cfg.factor == 0 or len(ds) == 0:
        return ds.subset(np.arange(len(ds)))
    n = len(ds)
    xs = [ds.x]
    next_id = 1
    new_ids, src_ids, seeds = [ds.sample_ids], [ds.source_ids], [ds.seeds]
    for c in range(1, cfg.factor + 1):
        block = np.empty_like(ds.x)
        for i in range(n):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i, c)))
            block[i] = augment_gesture(ds.sequence(i), cfg, rng).tensor
        xs.append(block)
        new_ids.append(-np.arange(next_id, next_id + n, dtype=np.int64))
        next_id += n
        src_ids.append(ds.source_ids.copy())
        seeds.append(ds.seeds.copy())
    out = Dataset(np.concatenate(xs), np.tile(ds.labels, cfg.factor + 1), ds.beam_angles_deg, ds.range_bin_m,
                  ds.doppler_bin_mps, ds.range_offset, np.concatenate(new_ids), np.concatenate(src_ids),
                  np.concatenate(seeds), dict(ds.meta))
    return out
