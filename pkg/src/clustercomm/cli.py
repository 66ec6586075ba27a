"""Command line entry point: ``clustercomm <train|evaluate|baseline|compare|curves|render>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ExperimentConfig, load_config
from .evaluation import Checkpoint, evaluate, fresh_agents, render_episode, write_message_trace
from .experiment import (ResultBundle, compare, emit_curves, final_eval_seed, format_report,
                         random_baseline, run_experiment)


def _config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig(
        env=args.env or "closed_rooms")
    changes = {}
    if args.config and args.env:
        changes["env"] = args.env
        changes["k"] = None  # back to the new env's default
    if args.variant:
        changes["variant"] = args.variant
    if args.seed is not None:
        changes["seeds"] = [args.seed]
    if args.out:
        changes["out_dir"] = args.out
    if getattr(args, "episodes", None):
        changes["eval_episodes"] = args.episodes
    if getattr(args, "steps", None) is not None:
        changes["total_steps"] = args.steps
    if getattr(args, "n_agents", None):
        changes["n_agents"] = args.n_agents
    return cfg.replace(**changes)


def cmd_train(args):
    cfg = _config_from_args(args)
    bundle = run_experiment(cfg, workers=args.workers)
    for r in bundle.results:
        print(f"seed {r.seed}: {json.dumps(r.metrics)}" + (" (reused)" if r.reused else ""))
    for seed, err in bundle.failures.items():
        print(f"seed {seed} FAILED: {err}", file=sys.stderr)
    print("Algorithm & Env & Rew. & Succ. & Steps")
    print(bundle.table_row())
    return 0 if not bundle.failures else 1


def cmd_evaluate(args):
    ckpt = Checkpoint.load(args.checkpoint)
    seed = final_eval_seed(ckpt.seed) if args.seed is None else args.seed
    trace = [] if args.messages else None
    m = evaluate(ckpt.agents, ckpt.config, args.episodes or ckpt.config.eval_episodes, seed=seed,
                 index_mode=args.index_mode, trace=trace)
    if trace is not None:
        write_message_trace(trace, args.messages)
    print(json.dumps(m.summary(), indent=2))
    return 0


def cmd_baseline(args):
    cfg = _config_from_args(args)
    m = random_baseline(cfg, args.episodes or cfg.eval_episodes, seed=args.seed or 0)
    print(json.dumps({"env": cfg.env, "n_agents": cfg.n_agents, **m.summary()}, indent=2))
    return 0


def cmd_compare(args):
    bundles = [ResultBundle.load(p) for p in args.bundles]
    report = compare(bundles, metric=args.metric)
    print(format_report(report))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2)
    return 0


def cmd_curves(args):
    bundle = ResultBundle.load(args.bundle)
    for path in emit_curves(bundle, args.out or "curves"):
        print(path)
    return 0


def cmd_render(args):
    if args.checkpoint:
        ckpt = Checkpoint.load(args.checkpoint)
        agents, cfg = ckpt.agents, ckpt.config
    else:
        cfg = _config_from_args(args).replace(variant="random")
        agents = fresh_agents(cfg, 0)
    for frame in render_episode(agents, cfg, seed=args.seed or 0, index_mode=args.index_mode):
        print(frame)
        print()
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="clustercomm", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI experiment config")
        sp.add_argument("--env")
        sp.add_argument("--variant")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--episodes", type=int)
        sp.add_argument("--n-agents", type=int)

    sp = sub.add_parser("train", help="train + evaluate every configured seed")
    common(sp)
    sp.add_argument("--steps", type=int, help="override total env steps")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="evaluate a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--episodes", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--index-mode", action="store_true",
                    help="centroidcomm: send indices, decode with exchanged centroid tables")
    sp.add_argument("--messages", help="write a per-step message trace CSV here")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("baseline", help="uniform-random policy metrics")
    common(sp)
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("compare", help="rank result bundles with bootstrap CIs")
    sp.add_argument("bundles", nargs="+")
    sp.add_argument("--metric", default="success_rate",
                    choices=["success_rate", "avg_reward", "avg_steps"])
    sp.add_argument("--out", help="write the JSON report here")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("curves", help="export learning curves (CSV + gnuplot .dat)")
    sp.add_argument("bundle")
    sp.add_argument("--out", help="output path prefix")
    sp.set_defaults(func=cmd_curves)

    sp = sub.add_parser("render", help="ASCII replay of one episode")
    common(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--index-mode", action="store_true")
    sp.set_defaults(func=cmd_render)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
