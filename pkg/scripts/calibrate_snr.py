"""Cross-validated accuracy of chosen beam sets across scenario SNRs.

Used to pick the default scenario SNR: the best single beam should sit well
above chance but clear of the ceiling so beam fusion has room to help.

    python3 scripts/calibrate_snr.py --snr 20 10 0 --sets 0 15 0,15 -15,0,15,30
"""

import argparse
import time

import numpy as np

from beamfuse.experiments import cross_validate, generate_dataset, load_plan


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--snr", type=float, nargs="+", default=[20.0, 10.0, 0.0])
    ap.add_argument("--reps", type=int)
    ap.add_argument("--sets", nargs="+", default=["0", "15", "0,15", "-15,0,15,30"],
                    help="comma-separated beam angles per set")
    args = ap.parse_args()

    base = load_plan(args.config, args.seed)
    if args.reps is not None:
        base = base.with_overrides(reps=args.reps)
    sets = [tuple(float(a) for a in s.split(",")) for s in args.sets]
    print("snr_db,beams,mean_accuracy,fold_accuracies,seconds")
    for snr in args.snr:
        plan = base.with_overrides(snr_db=snr)
        ds = generate_dataset(plan)
        for s in sets:
            t0 = time.time()
            acc = [r.accuracy for r in cross_validate(ds, plan, beams=s)]
            folds = " ".join(f"{a:.3f}" for a in acc)
            print(f"{snr:g},{'+'.join(f'{a:g}' for a in s)},{np.mean(acc):.4f},{folds},{time.time() - t0:.0f}",
                  flush=True)


if __name__ == "__main__":
    main()
