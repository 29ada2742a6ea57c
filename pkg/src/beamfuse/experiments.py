"""Experiment plans, dataset generation, cross-validation and the four studies.

Every study returns CSV text (rows sorted, floats printed with ``%.10g``)
so that reruns from the same plan are byte-identical.
"""

from __future__ import annotations

import dataclasses
import hashlib
import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .augment import AugmentConfig, augment_dataset
from .configio import dataclass_from_dict, dump_json, read_structured, to_jsonable
from .dataset import Dataset, stratified_folds
from .errors import InvalidConfigError
from .nn.model import BeamFusionNet, ModelConfig
from .nn.train import TrainConfig, accuracy, stratified_split, train
from .phased_array import ArrayGeometry, beam, usable_steering_range
from .rdm import PipelineConfig, mrc_combine, process_capture
from .scene import GESTURE_LABELS, BounceSpec, SceneParams, gesture_script, simulate_gesture
from .waveform import ChirpConfig, FrameConfig

# Reduced radar for desk-scale studies: same sweep bandwidth (4.14 cm bins),
# 64 samples at 1.25 Msps (2.65 m max range), 16 chirps per beam.
TOY_CHIRP = ChirpConfig(adc_samples=64, adc_rate_sps=1.25e6)
TOY_FRAME = FrameConfig(chirps_per_frame=64, chirps_per_beam=16)

# Range shifts scaled to the 15-bin window: at most 18% of it (about 2.6
# bins). The velocity bound already spans 2 of 16 Doppler bins.
TOY_AUGMENT = AugmentConfig(distance_range_m=(-0.1085, 0.1085), velocity_range_mps=(-0.14, 0.14), factor=0)

TOY_MODEL = {"attention_layers": 1, "heads": 8, "conv_filters": (4, 8, 16), "latent_dim": 32, "lstm_hidden": 32}
TOY_TRAIN = {"lr": 1e-3, "max_epochs": 40, "patience": 8}

ABLATION_KNOBS = {
    "attention_layers": ("attention_layers", (0, 1, 2, 3, 4, 5)),
    "conv_layers": ("conv_filters", tuple(tuple(4 * 2**i for i in range(n)) for n in range(1, 6))),
    "lstm_layers": ("lstm_layers", (1, 2, 3, 4)),
    "dropout": ("dropout", (0.1, 0.2, 0.3, 0.4, 0.5)),
}


@dataclass(frozen=True)
class ExperimentPlan:
    scenario: str = "default"
    seed: int = 0
    beam_angles_deg: tuple[float, ...] = (-15.0, 0.0, 15.0, 30.0)
    # subject azimuths; the default sits between the 0 and 15 degree beams
    orientations_deg: tuple[float, ...] = (7.5,)
    distances_m: tuple[float, ...] = (1.5,)
    reps: int = 30
    n_classes: int = 6
    snr_db: float = 5.0
    folds: int = 5
    # beam subsets for the beam study; empty means singles, aligned pairs and all beams
    beam_sets: tuple[tuple[float, ...], ...] = ()
    augment_factors: tuple[int, ...] = (0, 3, 6, 9, 12, 15, 18, 21)
    augment: AugmentConfig = TOY_AUGMENT
    # augmented training draws epochs of the original training-set size so
    # every factor gets the same step and validation budget
    augment_equal_budget: bool = True
    chirp: ChirpConfig = TOY_CHIRP
    frame: FrameConfig = TOY_FRAME
    scene: SceneParams = SceneParams()
    pipeline: PipelineConfig = PipelineConfig(target_steps=10)
    bounce: BounceSpec = BounceSpec()
    model: dict = field(default_factory=lambda: dict(TOY_MODEL))
    train: dict = field(default_factory=lambda: dict(TOY_TRAIN))

    def __post_init__(self):
        if self.reps < 0 or not 1 <= self.n_classes <= len(GESTURE_LABELS):
            raise InvalidConfigError("need reps >= 0 and 1 <= n_classes <= 6")
        if self.folds < 2:
            raise InvalidConfigError("folds must be >= 2")
        if len(self.beam_angles_deg) != self.frame.beams_per_frame:
            raise InvalidConfigError("beam_angles_deg must list one angle per beam slot in the frame")
        self.frame.check_timing(self.chirp)
        usable = usable_steering_range(self.geometry())
        referenced = set(self.beam_angles_deg).union(*map(set, self.beam_sets)) if self.beam_sets else set(self.beam_angles_deg)
        bad = sorted(a for a in referenced if not any(abs(a - u) < 1e-9 for u in usable))
        if bad:
            raise InvalidConfigError(f"beam angles {bad} outside usable steering range {usable[0]}..{usable[-1]}")
        for s in self.beam_sets:
            if not set(s) <= set(self.beam_angles_deg):
                raise InvalidConfigError(f"beam set {s} uses angles that are not captured")
        ModelConfig.from_dict({"range_bins": 1, "doppler_bins": 1, "n_beams": 1, "heads": 1, **self.model,
                               "attention_layers": 0})
        TrainConfig.from_dict(self.train)

    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry.awr1843(self.chirp.wavelength_m)

    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict(self.train)

    def with_overrides(self, **kw) -> "ExperimentPlan":
        return dataclasses.replace(self, **kw)

    @classmethod
    def from_dict(cls, data) -> "ExperimentPlan":
        data = dict(data or {})
        nested = {"augment": AugmentConfig, "chirp": ChirpConfig, "frame": FrameConfig, "scene": SceneParams,
                  "pipeline": PipelineConfig, "bounce": BounceSpec}
        for key, typ in nested.items():
            if key in data and isinstance(data[key], dict):
                data[key] = dataclass_from_dict(typ, data[key])
        for key in ("model", "train"):
            if key in data:
                data[key] = {k: tuple(v) if isinstance(v, list) else v for k, v in data[key].items()}
        return dataclass_from_dict(cls, data)


def load_plan(path: str | Path | None, seed: int | None = None) -> ExperimentPlan:
    """Read a plan from TOML/JSON; a run manifest (``{"plan": ...}``) is accepted as well."""
    data = read_structured(path) if path else {}
    if "plan" in data:
        data = data["plan"]
    plan = ExperimentPlan.from_dict(data)
    return plan.with_overrides(seed=seed) if seed is not None else plan


def manifest(plan: ExperimentPlan, command: str, outputs: dict[str, bytes] | None = None) -> dict:
    return {
        "command": command,
        "version": __version__,
        "plan": to_jsonable(plan),
        "outputs": {k: hashlib.sha256(v).hexdigest() for k, v in sorted((outputs or {}).items())},
    }


def write_outputs(out_dir: str | Path, plan: ExperimentPlan, command: str, files: dict[str, bytes]) -> Path:
    """Write ``files`` into ``out_dir`` plus a ``manifest.json`` describing the run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, data in files.items():
        (out / name).write_bytes(data)
    dump_json(manifest(plan, command, files), out / "manifest.json")
    return out


# -- dataset generation --------------------------------------------------------


def sample_seed(plan_seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(plan_seed, spawn_key=key).generate_state(1, np.uint64)[0])


def generate_dataset(plan: ExperimentPlan, log: Callable[[str], None] | None = None) -> Dataset:
    """Simulate and process every (class, orientation, distance, repetition) cell of ``plan``."""
    geom = plan.geometry()
    beams = [beam(geom, a) for a in plan.beam_angles_deg]
    seqs, seeds, meta_rows = [], [], []
    for c in range(plan.n_classes):
        for oi, orient in enumerate(plan.orientations_deg):
            for di, dist in enumerate(plan.distances_m):
                scene = dataclasses.replace(plan.scene, subject_azimuth_deg=orient, subject_range_m=dist)
                for rep in range(plan.reps):
                    seed = sample_seed(plan.seed, c, oi, di, rep)
                    rng = np.random.default_rng(seed)
                    script = gesture_script(c, rng, plan.frame.frame_rate_fps, scene)
                    cap = simulate_gesture(script, beams, geom, plan.chirp, plan.frame, plan.snr_db, rng, plan.bounce)
                    pipe = dataclasses.replace(plan.pipeline, gate_center_m=dist)
                    seqs.append(process_capture(cap, plan.chirp, plan.frame, plan.beam_angles_deg, pipe, label=c))
                    seeds.append(seed)
                    meta_rows.append([orient, dist])
        if log:
            log(f"class {GESTURE_LABELS[c]}: {len(seqs)} samples")
    if not seqs:
        return _empty_dataset(plan)
    ds = Dataset.from_sequences(seqs, seeds=np.array(seeds, dtype=np.uint64))
    ds.meta = {"scenario": plan.scenario, "orientation_distance": meta_rows, "snr_db": plan.snr_db}
    return ds


def _empty_dataset(plan: ExperimentPlan) -> Dataset:
    from .rdm import gate_bins
    from .waveform import doppler_resolution, range_resolution

    rbin = range_resolution(plan.chirp)
    bins = gate_bins(plan.chirp.adc_samples, rbin, plan.pipeline.gate_center_m, plan.pipeline.gate_half_width_m)
    shape = (0, len(bins), plan.frame.chirps_per_beam, len(plan.beam_angles_deg), plan.pipeline.target_steps)
    return Dataset(np.zeros(shape), np.zeros(0, dtype=np.int64), plan.beam_angles_deg, rbin,
                   doppler_resolution(plan.chirp, plan.frame.chirps_per_beam), int(bins[0]) if len(bins) else 0,
                   meta={"scenario": plan.scenario})


# -- cross-validation ----------------------------------------------------------


def mrc_tensor(ds: Dataset) -> np.ndarray:
    """Per-sample MRC over the beam axis, giving (n, range, Doppler, 1, time)."""
    out = np.empty(ds.x.shape[:3] + (1,) + ds.x.shape[4:])
    for i in range(len(ds)):
        out[i] = mrc_combine(ds.sequence(i)).tensor
    return out


@dataclass
class FoldResult:
    fold: int
    accuracy: float
    n_test: int
    train_ids: np.ndarray
    test_ids: np.ndarray


def model_config_for(x_shape, plan: ExperimentPlan, overrides: dict | None = None) -> ModelConfig:
    _, r, d, b, _ = x_shape
    return ModelConfig.from_dict({**plan.model, **(overrides or {}), "range_bins": r, "doppler_bins": d,
                                  "n_beams": b, "n_classes": plan.n_classes})


def cross_validate(ds: Dataset, plan: ExperimentPlan, *, beams: tuple[float, ...] | None = None,
                   combine: str = "learned", augment_factor: int = 0, model_overrides: dict | None = None,
                   cell: tuple = (), log=None) -> list[FoldResult]:
    """Stratified k-fold train/evaluate of one configuration.

    The validation split comes from the training folds, and augmentation is
    applied to the remaining training samples only. ``cell`` is mixed into the
    model/augmentation seeds so distinct configurations get distinct streams.
    """
    if ds.is_augmented.any():
        raise InvalidConfigError("cross-validation expects an un-augmented dataset")
    if beams is not None:
        ds = ds.select_beams(ds.beam_indices(beams))
    folds = stratified_folds(ds.labels, plan.folds, plan.seed)
    tcfg = plan.train_config()
    results = []
    for f, test_idx in enumerate(folds):
        pool = np.setdiff1d(np.arange(len(ds)), test_idx)
        keep, hold = stratified_split(ds.labels[pool], tcfg.val_fraction, sample_seed(plan.seed, 1, f))
        tr, va, te = ds.subset(pool[keep]), ds.subset(pool[hold]), ds.subset(test_idx)
        fold_cfg = tcfg
        if augment_factor:
            if plan.augment_equal_budget:
                fold_cfg = budget_for_factor(tcfg, len(tr))
            aug = dataclasses.replace(plan.augment, factor=augment_factor)
            tr = augment_dataset(tr, aug, sample_seed(plan.seed, 2, f, augment_factor))
        audit_split(tr, va, te)
        xs = [tr.x, va.x, te.x]
        if combine == "mrc":
            xs = [mrc_tensor(d) for d in (tr, va, te)]
        elif combine != "learned":
            raise InvalidConfigError(f"unknown combine mode {combine!r}")
        mcfg = model_config_for(xs[0].shape, plan, model_overrides)
        model_seed = sample_seed(plan.seed, 3, f, *[_stable_int(c) for c in cell])
        model = BeamFusionNet(mcfg, seed=model_seed)
        train(model, xs[0], tr.labels, xs[1], va.labels, fold_cfg, model_seed, log=log)
        acc = accuracy(model, xs[2], te.labels)
        results.append(FoldResult(f, acc, len(te), tr.sample_ids.copy(), te.sample_ids.copy()))
    return results


def budget_for_factor(cfg: TrainConfig, n_original: int) -> TrainConfig:
    """Keep epochs at the un-augmented training-set size.

    Augmented training then gets the same number of gradient steps and
    validation checks as factor 0, drawing from the larger pool.
    """
    return dataclasses.replace(cfg, epoch_samples=n_original)


def _stable_int(value) -> int:
    return int.from_bytes(hashlib.sha256(repr(value).encode()).digest()[:4], "little")


def audit_split(train_ds: Dataset, val_ds: Dataset, test_ds: Dataset) -> None:
    """Raise if a training sample, or the source of an augmented one, is also evaluated."""
    train_src = set(train_ds.source_ids.tolist())
    for other in (val_ds, test_ds):
        if train_src & set(other.source_ids.tolist()):
            raise InvalidConfigError("training samples leak into evaluation folds")


# -- studies -----------------------------------------------------------------


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in sorted(rows, key=lambda r: tuple(str(v) for v in r)):
        w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row])
    return buf.getvalue().encode()


def _set_name(beams) -> str:
    return "+".join(f"{a:g}" for a in beams)


def default_beam_sets(plan: ExperimentPlan, orientation_deg: float = 0.0) -> list[tuple[float, ...]]:
    """Singles, pairs containing the beam aligned with the subject, and all beams."""
    angles = list(plan.beam_angles_deg)
    aligned = min(angles, key=lambda a: abs(a - orientation_deg))
    sets = [(a,) for a in angles]
    sets += [tuple(sorted((aligned, a))) for a in angles if a != aligned]
    sets.append(tuple(angles))
    return sets


def pair_policy(beams, aligned: float, step: float = 15.0) -> str:
    if len(beams) != 2 or aligned not in beams:
        return ""
    other = beams[0] if beams[1] == aligned else beams[1]
    return "adjacent" if abs(abs(other - aligned) - step) < 1e-9 else "other"


def summarize(rows, key_cols: int) -> list[tuple]:
    """Mean and sample std of the last column grouped by the first ``key_cols`` columns."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault(tuple(r[:key_cols]), []).append(r[-1])
    out = []
    for k, v in groups.items():
        a = np.array(v)
        out.append(k + (float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0))
    return out


def run_beam_study(ds: Dataset, plan: ExperimentPlan, log=None) -> dict[str, bytes]:
    orientation = plan.orientations_deg[0] if plan.orientations_deg else 0.0
    sets = [tuple(s) for s in plan.beam_sets] or default_beam_sets(plan, orientation)
    aligned = min(plan.beam_angles_deg, key=lambda a: abs(a - orientation))
    rows = []
    for s in sets:
        for r in cross_validate(ds, plan, beams=s, log=log):
            rows.append((_set_name(s), len(s), pair_policy(s, aligned), r.fold, r.accuracy))
    summary = summarize(rows, 3)
    return {"beam_folds.csv": csv_bytes(("beams", "n_beams", "policy", "fold", "accuracy"), rows),
            "beam_summary.csv": csv_bytes(("beams", "n_beams", "policy", "mean_accuracy", "std_accuracy"), summary)}


def run_augmentation_sweep(ds: Dataset, plan: ExperimentPlan, factors=None, log=None) -> dict[str, bytes]:
    factors = sorted(set(plan.augment_factors if factors is None else factors) | {0})
    rows = []
    for fac in factors:
        for r in cross_validate(ds, plan, augment_factor=fac, log=log):
            rows.append((fac, r.fold, r.accuracy))
    return {"augment_folds.csv": csv_bytes(("factor", "fold", "accuracy"), rows),
            "augment_summary.csv": csv_bytes(("factor", "mean_accuracy", "std_accuracy"), summarize(rows, 1))}


def run_mrc_comparison(ds: Dataset, plan: ExperimentPlan, log=None) -> dict[str, bytes]:
    if ds.x.shape[3] < 2:
        raise InvalidConfigError("MRC comparison needs at least two beams")
    learned = cross_validate(ds, plan, combine="learned", log=log)
    mrc = cross_validate(ds, plan, combine="mrc", log=log)
    rows = [(a.fold, a.accuracy, b.accuracy, a.accuracy - b.accuracy) for a, b in zip(learned, mrc)]
    diffs = np.array([r[3] for r in rows])
    half = _t95(len(diffs)) * diffs.std(ddof=1) / math.sqrt(len(diffs)) if len(diffs) > 1 else 0.0
    summary = [("learned", float(np.mean([r[1] for r in rows]))), ("mrc", float(np.mean([r[2] for r in rows]))),
               ("diff_mean", float(diffs.mean())), ("diff_ci95_low", float(diffs.mean() - half)),
               ("diff_ci95_high", float(diffs.mean() + half))]
    return {"mrc_folds.csv": csv_bytes(("fold", "learned_accuracy", "mrc_accuracy", "difference"), rows),
            "mrc_summary.csv": csv_bytes(("metric", "value"), summary)}


def _t95(n: int) -> float:
    """Two-sided 95% Student-t quantile for n - 1 degrees of freedom."""
    from scipy.stats import t

    return float(t.ppf(0.975, n - 1))


def run_ablation(ds: Dataset, plan: ExperimentPlan, knob: str, values=None, log=None) -> dict[str, bytes]:
    if knob not in ABLATION_KNOBS:
        raise InvalidConfigError(f"unknown ablation knob {knob!r}; choose from {sorted(ABLATION_KNOBS)}")
    field_name, default_values = ABLATION_KNOBS[knob]
    values = default_values if values is None else values
    rows = []
    for v in values:
        for r in cross_validate(ds, plan, model_overrides={field_name: v}, log=log):
            label = len(v) if knob == "conv_layers" else v
            rows.append((knob, label, r.fold, r.accuracy))
    return {f"ablation_{knob}_folds.csv": csv_bytes(("knob", "value", "fold", "accuracy"), rows),
            f"ablation_{knob}_summary.csv": csv_bytes(("knob", "value", "mean_accuracy", "std_accuracy"),
                                                 summarize(rows, 2))}


def read_csv_rows(data: bytes) -> list[dict]:
    return list(csv.DictReader(io.StringIO(data.decode())))
