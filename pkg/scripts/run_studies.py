"""Run the beam, augmentation and MRC studies on one simulated dataset.

Each study writes its CSVs and a manifest into its own subdirectory of
``--out``; ``beamfuse study <name> --config <dir>/manifest.json`` reruns it.

    python3 scripts/run_studies.py --out out/studies
    python3 scripts/run_studies.py --studies beams mrc --reps 20
"""

import argparse
import sys
import time
from pathlib import Path

from beamfuse.experiments import (generate_dataset, load_plan, read_csv_rows, run_ablation, run_augmentation_sweep,
                                  run_beam_study, run_mrc_comparison, write_outputs)
from beamfuse.formats import dataset_bytes


def log(msg):
    print(msg, file=sys.stderr, flush=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="plan file (TOML/JSON) or a previous manifest")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--reps", type=int, help="override repetitions per class")
    ap.add_argument("--snr-db", type=float, help="override the scenario SNR")
    ap.add_argument("--studies", nargs="+", default=["beams", "augment", "mrc"],
                    choices=["beams", "augment", "mrc", "ablation"])
    ap.add_argument("--knob", default="attention_layers", help="ablation knob")
    ap.add_argument("--out", default="out/studies")
    ap.add_argument("-v", "--verbose", action="store_true", help="log every training epoch")
    args = ap.parse_args()

    plan = load_plan(args.config, args.seed)
    overrides = {k: v for k, v in (("reps", args.reps), ("snr_db", args.snr_db)) if v is not None}
    plan = plan.with_overrides(**overrides)
    out = Path(args.out)

    t0 = time.time()
    ds = generate_dataset(plan, log=log)
    write_outputs(out / "dataset", plan, "simulate", {"dataset.bmxd": dataset_bytes(ds)})
    log(f"dataset {ds.x.shape} in {time.time() - t0:.0f} s")

    epoch_log = log if args.verbose else None
    runners = {
        "beams": lambda: run_beam_study(ds, plan, log=epoch_log),
        "augment": lambda: run_augmentation_sweep(ds, plan, log=epoch_log),
        "mrc": lambda: run_mrc_comparison(ds, plan, log=epoch_log),
        "ablation": lambda: run_ablation(ds, plan, args.knob, log=epoch_log),
    }
    for name in args.studies:
        t0 = time.time()
        files = runners[name]()
        write_outputs(out / name, plan, f"study {name}", files)
        log(f"study {name} finished in {(time.time() - t0) / 60:.1f} min")
        for fname in sorted(files):
            if fname.endswith("summary.csv"):
                print(f"== {name}: {fname}")
                for row in read_csv_rows(files[fname]):
                    print("  " + ", ".join(f"{k}={v}" for k, v in row.items()))


if __name__ == "__main__":
    main()
