"""Multi-seed experiments, result tables, comparisons and learning-curve export."""
from __future__ import annotations

import csv
import json
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .comm import Variant
from .config import ExperimentConfig
from .evaluation import Checkpoint, EvalMetrics, evaluate, fresh_agents
from .train import CurvePoint, read_curve, train

log = logging.getLogger(__name__)


def final_eval_seed(seed: int) -> int:
    return int(np.random.SeedSequence([int(seed), 0xE7A1]).generate_state(1)[0])


@dataclass
class SeedResult:
    seed: int
    metrics: dict
    curve: List[CurvePoint]
    path: Optional[str] = None
    reused: bool = False


@dataclass
class ResultBundle:
    config: ExperimentConfig
    results: List[SeedResult] = field(default_factory=list)
    failures: Dict[int, str] = field(default_factory=dict)

    @property
    def label(self) -> str:
        return Variant.parse(self.config.variant).display

    def aggregate(self) -> dict:
        out = {"seeds": [r.seed for r in self.results]}
        for key in ("avg_reward", "success_rate", "avg_steps"):
            vals = np.array([r.metrics[key] for r in self.results], dtype=np.float64)
            out[key] = float(vals.mean()) if len(vals) else float("nan")
            out[key + "_std"] = float(vals.std()) if len(vals) else float("nan")
        return out

    def table_row(self) -> str:
        a = self.aggregate()
        return (f"{self.label} & {self.config.env} & {a['avg_reward']:.2f} & "
                f"{a['success_rate']:.2f} & {a['avg_steps']:.2f}")

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(),
                "results": [{"seed": r.seed, "metrics": r.metrics, "path": r.path,
                             "curve": [p.row() for p in r.curve]} for r in self.results],
                "failures": {str(k): v for k, v in self.failures.items()},
                "aggregate": self.aggregate()}

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "ResultBundle":
        with open(path) as fh:
            d = json.load(fh)
        results = [SeedResult(r["seed"], r["metrics"], [CurvePoint(*row) for row in r["curve"]],
                              r.get("path")) for r in d["results"]]
        return cls(ExperimentConfig.from_dict(d["config"]), results,
                   {int(k): v for k, v in d.get("failures", {}).items()})


def bundle_dir(cfg: ExperimentConfig) -> str:
    return os.path.join(cfg.out_dir, f"{cfg.env}-{cfg.variant}-{cfg.content_hash(None)}")


def run_dir(cfg: ExperimentConfig, seed: int) -> str:
    return os.path.join(bundle_dir(cfg), f"seed_{seed}")


def run_seed(cfg: ExperimentConfig, seed: int, persist: bool = True) -> SeedResult:
    """Train and evaluate one seed, reusing a completed run with the same content hash."""
    path = run_dir(cfg, seed) if persist else None
    metrics_path = None if path is None else os.path.join(path, "metrics.json")
    if metrics_path and os.path.exists(metrics_path):
        with open(metrics_path) as fh:
            saved = json.load(fh)
        if saved.get("config_hash") == cfg.content_hash(seed):
            return SeedResult(seed, saved["metrics"], read_curve(os.path.join(path, "curve.csv")),
                              path, reused=True)
    art = train(cfg, seed, out_dir=path)
    metrics = evaluate(art.agents, cfg, cfg.eval_episodes, seed=final_eval_seed(seed))
    summary = metrics.summary()
    if metrics_path:
        with open(metrics_path, "w") as fh:
            json.dump({"config_hash": cfg.content_hash(seed), "seed": seed, "metrics": summary,
                       "env_steps": art.env_steps}, fh, indent=2, sort_keys=True)
    return SeedResult(seed, summary, art.curve, path)


def _run_seed_safe(args):
    cfg, seed, persist = args
    try:
        return seed, run_seed(cfg, seed, persist), None
    except Exception as exc:  # isolate per-seed failures
        log.exception("seed %d failed", seed)
        return seed, None, f"{type(exc).__name__}: {exc}"


def run_experiment(cfg: ExperimentConfig, workers: int = 1, persist: bool = True) -> ResultBundle:
    """Train + evaluate every seed in ``cfg.seeds`` and aggregate the results."""
    jobs = [(cfg, s, persist) for s in cfg.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_seed_safe, jobs))
    else:
        outcomes = [_run_seed_safe(j) for j in jobs]
    bundle = ResultBundle(cfg)
    for seed, result, err in outcomes:
        if err is None:
            bundle.results.append(result)
        else:
            bundle.failures[seed] = err
    if persist:
        root = bundle_dir(cfg)
        os.makedirs(root, exist_ok=True)
        bundle.save(os.path.join(root, "bundle.json"))
    return bundle


def random_baseline(cfg: ExperimentConfig, episodes: int, seed: int = 0) -> EvalMetrics:
    """Uniform-random actions for every agent."""
    cfg = cfg.replace(variant="random")
    return evaluate(fresh_agents(cfg, seed), cfg, episodes, seed=seed)


def evaluate_checkpoint(path, episodes, seed=None, **kwargs) -> EvalMetrics:
    ckpt = Checkpoint.load(path)
    seed = final_eval_seed(ckpt.seed) if seed is None else seed
    return evaluate(ckpt.agents, ckpt.config, episodes, seed=seed, **kwargs)


# --- comparison ----------------------------------------------------------------

def bootstrap_diff_ci(a, b, resamples=1000, level=0.95, rng=None):
    """Percentile bootstrap CI of ``mean(a) - mean(b)``, resampling seeds."""
    rng = np.random.default_rng(0) if rng is None else rng
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    ia = rng.integers(len(a), size=(resamples, len(a)))
    ib = rng.integers(len(b), size=(resamples, len(b)))
    diffs = a[ia].mean(axis=1) - b[ib].mean(axis=1)
    lo, hi = np.quantile(diffs, [(1 - level) / 2, 1 - (1 - level) / 2])
    return float(lo), float(hi)


def compare(bundles: Sequence[ResultBundle], metric: str = "success_rate", resamples: int = 1000,
            seed: int = 0) -> dict:
    """Rank bundles by ``metric`` and report pairwise mean differences with bootstrap CIs."""
    if not bundles:
        raise ValueError("nothing to compare")
    envs = {(b.config.env, b.config.n_agents) for b in bundles}
    if len(envs) > 1:
        raise ValueError(f"bundles come from different environments: {sorted(map(str, envs))}")
    report = {"env": bundles[0].config.env, "metric": metric, "warnings": [], "ranking": [],
              "pairwise": []}
    values = []
    for b in bundles:
        vals = [r.metrics[metric] for r in b.results]
        values.append(vals)
        if len(vals) < 2:
            msg = f"{b.label}: {len(vals)} seed(s); bootstrap CI is degenerate"
            report["warnings"].append(msg)
            warnings.warn(msg)
    order = sorted(range(len(bundles)), key=lambda i: -np.mean(values[i]) if values[i] else np.inf)
    for i in order:
        agg = bundles[i].aggregate()
        report["ranking"].append({"variant": bundles[i].label, "mean": agg[metric],
                                  "std": agg[metric + "_std"], "seeds": len(values[i]),
                                  "avg_reward": agg["avg_reward"],
                                  "success_rate": agg["success_rate"],
                                  "avg_steps": agg["avg_steps"]})
    rng = np.random.default_rng(seed)
    for x in range(len(order)):
        for y in range(x + 1, len(order)):
            i, j = order[x], order[y]
            if not values[i] or not values[j]:
                continue
            lo, hi = bootstrap_diff_ci(values[i], values[j], resamples, rng=rng)
            report["pairwise"].append({"a": bundles[i].label, "b": bundles[j].label,
                                       "diff": float(np.mean(values[i]) - np.mean(values[j])),
                                       "ci_low": lo, "ci_high": hi,
                                       "excludes_zero": bool(lo > 0 or hi < 0)})
    return report


def format_report(report: dict) -> str:
    lines = [f"{report['env']} ({report['metric']})",
             f"{'Algorithm':<24}{'Rew.':>8}{'Succ.':>8}{'Steps':>8}{'seeds':>7}"]
    for r in report["ranking"]:
        lines.append(f"{r['variant']:<24}{r['avg_reward']:>8.2f}{r['success_rate']:>8.2f}"
                     f"{r['avg_steps']:>8.2f}{r['seeds']:>7d}")
    for p in report["pairwise"]:
        lines.append(f"{p['a']} - {p['b']}: {p['diff']:+.3f} "
                     f"[{p['ci_low']:+.3f}, {p['ci_high']:+.3f}]")
    lines.extend(f"warning: {w}" for w in report["warnings"])
    return "\n".join(lines)


# --- learning curves -----------------------------------------------------------

METRICS = ("mean_eval_reward", "success_rate", "mean_steps")


def curve_table(bundle: ResultBundle):
    """Rows aligned on the snapshots every seed has; returns ``(header, rows)``."""
    seeds = [r.seed for r in bundle.results]
    header = ["env_steps"]
    for m in METRICS:
        header += [f"{m}_seed{s}" for s in seeds] + [f"{m}_mean", f"{m}_std"]
    if not bundle.results:
        return header, []
    by_seed = [{p.env_steps: p for p in r.curve} for r in bundle.results]
    axis = sorted(set.intersection(*(set(d) for d in by_seed)))
    rows = []
    for x in axis:
        row = [x]
        for m in METRICS:
            vals = [getattr(d[x], m) for d in by_seed]
            row += vals + [float(np.mean(vals)), float(np.std(vals))]
        rows.append(row)
    return header, rows


def emit_curves(bundle: ResultBundle, prefix: str) -> List[str]:
    """Write ``<prefix>.csv`` (per-seed columns plus mean/std), ``<prefix>_seeds.csv``
    (long format) and ``<prefix>.dat`` (whitespace separated, for gnuplot)."""
    header, rows = curve_table(bundle)
    d = os.path.dirname(prefix)
    if d:
        os.makedirs(d, exist_ok=True)
    paths = [prefix + ".csv", prefix + "_seeds.csv", prefix + ".dat"]
    with open(paths[0], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "env_steps", *METRICS])
        for r in bundle.results:
            for p in r.curve:
                w.writerow([r.seed, *p.row()])
    with open(paths[2], "w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    return paths
