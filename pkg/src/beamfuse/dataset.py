"""In-memory labelled RDM-sequence dataset."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ShapeError
from .rdm import RdmSequence


@dataclass
class Dataset:
    """Stack of RDM sequences, ``x`` has axes (sample, range, Doppler, beam, time).

    ``source_ids`` equals ``sample_ids`` for captured samples; augmented
    copies carry negative sample ids and point back at their source.
    """

    x: np.ndarray
    labels: np.ndarray
    beam_angles_deg: tuple[float, ...]
    range_bin_m: float
    doppler_bin_mps: float
    range_offset: int = 0
    sample_ids: np.ndarray | None = None
    source_ids: np.ndarray | None = None
    seeds: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.x.shape[0]
        if self.x.ndim != 5:
            raise ShapeError(f"dataset tensor must be 5-D, got {self.x.shape}")
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(n)
        if self.sample_ids is None:
            self.sample_ids = np.arange(n, dtype=np.int64)
        if self.source_ids is None:
            self.source_ids = np.asarray(self.sample_ids, dtype=np.int64).copy()
        if self.seeds is None:
            self.seeds = np.zeros(n, dtype=np.uint64)
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64).reshape(n)
        self.source_ids = np.asarray(self.source_ids, dtype=np.int64).reshape(n)
        self.seeds = np.asarray(self.seeds, dtype=np.uint64).reshape(n)
        self.beam_angles_deg = tuple(float(a) for a in self.beam_angles_deg)
        if self.x.shape[3] != len(self.beam_angles_deg):
            raise ShapeError("beam axis does not match beam_angles_deg")

    def __len__(self):
        return self.x.shape[0]

    @property
    def is_augmented(self) -> np.ndarray:
        return self.sample_ids != self.source_ids

    def sequence(self, i: int) -> RdmSequence:
        return RdmSequence(self.x[i], self.beam_angles_deg, self.range_bin_m, self.doppler_bin_mps,
                           self.range_offset, int(self.labels[i]))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, x=self.x[idx], labels=self.labels[idx], sample_ids=self.sample_ids[idx],
                       source_ids=self.source_ids[idx], seeds=self.seeds[idx], meta=dict(self.meta))

    def select_beams(self, beams) -> "Dataset":
        beams = list(beams)
        return replace(self, x=self.x[:, :, :, beams, :],
                       beam_angles_deg=tuple(self.beam_angles_deg[b] for b in beams), meta=dict(self.meta))

    def beam_indices(self, angles_deg) -> list[int]:
        out = []
        for a in angles_deg:
            hits = [i for i, b in enumerate(self.beam_angles_deg) if abs(b - a) < 1e-9]
            if not hits:
                raise ShapeError(f"beam {a} deg not present; have {self.beam_angles_deg}")
            out.append(hits[0])
        return out

    @classmethod
    def from_sequences(cls, seqs: list[RdmSequence], sample_ids=None, seeds=None, **kw) -> "Dataset":
        if not seqs:
            raise ShapeError("no sequences given")
        first = seqs[0]
        x = np.stack([s.tensor for s in seqs])
        labels = [s.label if s.label is not None else -1 for s in seqs]
        return cls(x, labels, first.beam_angles_deg, first.range_bin_m, first.doppler_bin_mps,
                   first.range_offset, sample_ids=sample_ids, seeds=seeds, **kw)

    @classmethod
    def concat(cls, parts: list["Dataset"]) -> "Dataset":
        first = parts[0]
        return replace(first, x=np.concatenate([p.x for p in parts]),
                       labels=np.concatenate([p.labels for p in parts]),
                       sample_ids=np.concatenate([p.sample_ids for p in parts]),
                       source_ids=np.concatenate([p.source_ids for p in parts]),
                       seeds=np.concatenate([p.seeds for p in parts]), meta=dict(first.meta))


def stratified_folds(labels, k: int, seed: int) -> list[np.ndarray]:
    """Split indices into ``k`` folds with classes spread evenly; deterministic in ``seed``."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    offset = 0
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        idx = idx[rng.permutation(idx.size)]
        for j, i in enumerate(idx):
            folds[(j + offset) % k].append(int(i))
        offset += idx.size
    return [np.sort(np.array(f, dtype=np.int64)) for f in folds]
