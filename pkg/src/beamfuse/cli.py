"""Command-line entry point: ``beamfuse <command> [options]``.

Every command writes its outputs and a ``manifest.json`` into ``--out``.
Passing that manifest back as ``--config`` reruns the command with the same
plan and seed. Failures print ``{"error": <category>, "message": ...}`` to
stderr and exit with a nonzero status.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, augment_dataset
from .dataset import Dataset
from .errors import BeamfuseError, InvalidConfigError, UsageError
from .experiments import (ABLATION_KNOBS, cross_validate, generate_dataset, load_plan, model_config_for,
                          run_ablation, run_augmentation_sweep, run_beam_study, run_mrc_comparison, sample_seed,
                          write_outputs, csv_bytes)
from .formats import (capture_bytes, checkpoint_bytes, dataset_bytes, read_capture, read_checkpoint,
                      read_dataset)
from .nn.model import BeamFusionNet, ModelConfig
from .nn.train import accuracy, stratified_split, train
from .phased_array import beam, default_angle_grid, pattern_table
from .rdm import process_capture
from .scene import GESTURE_LABELS, gesture_script, simulate_gesture


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _dataset_for(args, plan) -> Dataset:
    if getattr(args, "dataset", None):
        return read_dataset(args.dataset)
    return generate_dataset(plan, log=_log if args.verbose else None)


# -- commands ------------------------------------------------------------------


def cmd_simulate(args, plan):
    if args.raw is None:
        ds = generate_dataset(plan, log=_log if args.verbose else None)
        return {"dataset.bmxd": dataset_bytes(ds)}
    # raw captures of the requested class, one file each
    label = GESTURE_LABELS.index(args.raw) if args.raw in GESTURE_LABELS else int(args.raw)
    geom = plan.geometry()
    beams = [beam(geom, a) for a in plan.beam_angles_deg]
    files = {}
    for rep in range(args.count):
        seed = sample_seed(plan.seed, label, 0, 0, rep)
        rng = np.random.default_rng(seed)
        script = gesture_script(label, rng, plan.frame.frame_rate_fps, plan.scene)
        cap = simulate_gesture(script, beams, geom, plan.chirp, plan.frame, plan.snr_db, rng, plan.bounce)
        header = {"label": label, "seed": seed, "beam_angles_deg": plan.beam_angles_deg,
                  "chirp": plan.chirp, "frame": plan.frame}
        files[f"capture_{GESTURE_LABELS[label]}_{rep:03d}.bmxr"] = capture_bytes(cap, header)
    return files


def cmd_process(args, plan):
    seqs, seeds = [], []
    for path in args.captures:
        cap, header = read_capture(path)
        angles = tuple(header.get("beam_angles_deg", plan.beam_angles_deg))
        seqs.append(process_capture(cap, plan.chirp, plan.frame, angles, plan.pipeline, label=header.get("label")))
        seeds.append(int(header.get("seed", 0)))
    if not seqs:
        raise UsageError("no captures given")
    ds = Dataset.from_sequences(seqs, seeds=np.array(seeds, dtype=np.uint64))
    return {"dataset.bmxd": dataset_bytes(ds)}


def cmd_beampattern(args, plan):
    grid = default_angle_grid(args.grid_step)
    files = {}
    for steer, gain in pattern_table(plan.geometry(), args.steer, grid, quantized=not args.ideal).items():
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("angle_deg", "normalized_gain"))
        w.writerows((f"{a:g}", f"{g:.10g}") for a, g in zip(grid, gain))
        files[f"beampattern_{steer:g}.csv"] = buf.getvalue().encode()
    return files


def cmd_augment(args, plan):
    ds = read_dataset(args.dataset)
    cfg = AugmentConfig(**{**vars(plan.augment), "factor": args.factor})
    return {"augmented.bmxd": dataset_bytes(augment_dataset(ds, cfg, plan.seed))}


def cmd_train(args, plan):
    ds = _dataset_for(args, plan)
    tcfg = plan.train_config()
    keep, hold = stratified_split(ds.labels, tcfg.val_fraction, sample_seed(plan.seed, 1))
    tr, va = ds.subset(keep), ds.subset(hold)
    if plan.augment.factor:
        tr = augment_dataset(tr, plan.augment, sample_seed(plan.seed, 2))
    mcfg = model_config_for(ds.x.shape, plan)
    model = BeamFusionNet(mcfg, seed=sample_seed(plan.seed, 3))
    result = train(model, tr.x, tr.labels, va.x, va.labels, tcfg, sample_seed(plan.seed, 3),
                   log=_log if args.verbose else None)
    return {"checkpoint.bmxc": checkpoint_bytes(result.params, vars(mcfg)),
            "metrics.csv": result.history_csv().encode()}


def cmd_eval(args, plan):
    ds = _dataset_for(args, plan)
    if args.checkpoint:
        params, cfg = read_checkpoint(args.checkpoint)
        cfg = {k: tuple(v) if isinstance(v, list) else v for k, v in cfg.items()}
        model = BeamFusionNet(ModelConfig(**cfg), params)
        acc = accuracy(model, ds.x, ds.labels)
        return {"eval.csv": csv_bytes(("metric", "value"), [("accuracy", acc), ("n_samples", len(ds))])}
    rows = [(r.fold, r.accuracy) for r in cross_validate(ds, plan, log=_log if args.verbose else None)]
    acc = np.array([r[1] for r in rows])
    summary = [("mean_accuracy", float(acc.mean())), ("std_accuracy", float(acc.std(ddof=1)))]
    return {"eval_folds.csv": csv_bytes(("fold", "accuracy"), rows), "eval_summary.csv": csv_bytes(("metric", "value"), summary)}


def cmd_study(args, plan):
    ds = _dataset_for(args, plan)
    log = _log if args.verbose else None
    if args.study == "beams":
        return run_beam_study(ds, plan, log=log)
    if args.study == "augment":
        return run_augmentation_sweep(ds, plan, args.factors, log=log)
    if args.study == "mrc":
        return run_mrc_comparison(ds, plan, log=log)
    if args.knob is None:
        raise UsageError(f"study ablation needs --knob ({', '.join(sorted(ABLATION_KNOBS))})")
    values = None
    if args.values:
        values = [json.loads(v) for v in args.values]
        values = [tuple(v) if isinstance(v, list) else v for v in values]
    return run_ablation(ds, plan, args.knob, values, log=log)


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="TOML/JSON plan or a previous run manifest")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the plan seed (u64)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = _Parser(prog="beamfuse", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="simulate a labelled RDM dataset or raw captures")
    s.add_argument("--raw", metavar="LABEL", help="write raw captures of one gesture class instead")
    s.add_argument("--count", type=int, default=1, help="number of raw captures")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("beampattern", parents=[common], help="normalised array pattern per steering angle")
    s.add_argument("--steer", type=float, nargs="+", default=[-30.0, -15.0, 0.0, 15.0, 30.0])
    s.add_argument("--grid-step", type=float, default=0.5)
    s.add_argument("--ideal", action="store_true", help="unquantised phases")
    s.set_defaults(func=cmd_beampattern)

    s = sub.add_parser("process", parents=[common], help="raw captures -> RDM dataset")
    s.add_argument("captures", nargs="+")
    s.set_defaults(func=cmd_process)

    s = sub.add_parser("augment", parents=[common], help="augment a dataset file")
    s.add_argument("dataset")
    s.add_argument("--factor", type=int, default=15)
    s.set_defaults(func=cmd_augment)

    for name, func, text in (("train", cmd_train, "train one model"),
                             ("eval", cmd_eval, "evaluate a checkpoint or cross-validate")):
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("--dataset", help="dataset file (default: simulate from the plan)")
        if name == "eval":
            s.add_argument("--checkpoint")
        s.set_defaults(func=func)

    s = sub.add_parser("study", parents=[common], help="run a study")
    s.add_argument("study", choices=("beams", "augment", "mrc", "ablation"))
    s.add_argument("--dataset")
    s.add_argument("--factors", type=int, nargs="+")
    s.add_argument("--knob", choices=sorted(ABLATION_KNOBS))
    s.add_argument("--values", nargs="+", help="JSON values for the ablation knob")
    s.set_defaults(func=cmd_study)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        for key, default in (("config", None), ("seed", None), ("out", "out"), ("verbose", False)):
            if not hasattr(args, key):
                setattr(args, key, default)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise InvalidConfigError("--seed must be an unsigned 64-bit integer")
        plan = load_plan(args.config, args.seed)
        files = args.func(args, plan)
        command = " ".join(x for x in (args.command, getattr(args, "study", None)) if x)
        out = write_outputs(args.out, plan, command, files)
        for name in sorted(files):
            print(Path(out) / name)
        return 0
    except BeamfuseError as exc:
        err, code = {"error": exc.category, "message": str(exc)}, 2 if isinstance(exc, UsageError) else 1
    except OSError as exc:
        err, code = {"error": "io", "message": str(exc)}, 1
    print(json.dumps(err), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
