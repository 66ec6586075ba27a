"""Train every variant on one preset and print a results-table block.

    python scripts/run_table.py configs/closed_rooms.ini --variants nocomm clustercomm latentcomm
"""
import argparse
import json
import logging
import os

from clustercomm.config import load_config
from clustercomm.experiment import (compare, emit_curves, format_report, random_baseline,
                                    run_experiment)

ALL = ["nocomm", "latentcomm", "clustercomm", "spherical", "centroidcomm"]


def main():
    p = argparse.ArgumentParser()
    p.add_argument("config")
    p.add_argument("--variants", nargs="+", default=ALL)
    p.add_argument("--out", default="runs")
    p.add_argument("--steps", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--random-episodes", type=int, default=1000)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    base = load_config(args.config).replace(out_dir=args.out)
    if args.steps is not None:
        base = base.replace(total_steps=args.steps)
    bundles = []
    for v in args.variants:
        bundle = run_experiment(base.replace(variant=v), workers=args.workers)
        bundles.append(bundle)
        print(bundle.table_row(), flush=True)
        emit_curves(bundle, os.path.join(args.out, "curves", f"{base.env}_{v}"))
    report = compare(bundles)
    print(format_report(report))
    rnd = random_baseline(base, args.random_episodes)
    print(f"Random & {base.env} & {rnd.avg_reward:.2f} & {rnd.success_rate:.2f} & {rnd.avg_steps:.2f}")
    with open(os.path.join(args.out, f"report_{base.env}.json"), "w") as fh:
        json.dump(report, fh, indent=2)


if __name__ == "__main__":
    main()
