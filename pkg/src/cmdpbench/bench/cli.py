"""Command-line driver: ``cmdpbench --suite Goal_Point_8Hazards --algo trpo,cpo``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from ..algos import ALGORITHMS, ConstraintConfig, TrustRegionConfig
from ..env_suite.config import WorldConfig, _coerce, parse_overrides
from .metrics import emit_summary
from .plot import METRICS, emit_plot
from .runner import FULL_EPOCHS, FULL_STEPS, RunConfig, run_experiment
from .suite import SuiteError, parse_suite

RUN_KEYS = {"gamma": float, "lam": float, "value_iters": int, "value_lr": float}


def _field_types(cls) -> dict:
    return {f.name: f.type for f in dataclasses.fields(cls)}


def split_overrides(values: dict) -> tuple[dict, dict, dict, dict]:
    """Route ``key=value`` pairs to the world, trust-region, constraint or run
    settings. Unknown keys raise ``KeyError``."""
    world, tr, cons, run = {}, {}, {}, {}
    targets = ((_field_types(WorldConfig), world), (_field_types(TrustRegionConfig), tr),
               (_field_types(ConstraintConfig), cons), (RUN_KEYS, run))
    for key, raw in values.items():
        for types, dest in targets:
            if key in types:
                dest[key] = _coerce(types[key], raw)
                break
        else:
            raise KeyError(f"unknown config key {key!r}")
    for key in ("robot_kind", "task_kind", "constraint_kind", "constraint_count"):
        if key in world:
            raise KeyError(f"{key} comes from --suite, not --config")
    return world, tr, cons, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmdpbench", description=__doc__)
    p.add_argument("--suite", required=True, help="e.g. Goal_Point_8Hazards")
    p.add_argument("--algo", default="trpo",
                   help="comma-separated list from: " + ",".join(ALGORITHMS))
    p.add_argument("--epochs", type=int, default=None, help="epochs N (default 30)")
    p.add_argument("--steps", type=int, default=None, help="steps per epoch B (default 4000)")
    p.add_argument("--seeds", default="0,1", help="comma-separated seeds")
    p.add_argument("--out", default="runs", help="output directory")
    p.add_argument("--config", default=None, help="file of key=value overrides")
    p.add_argument("--plot", action="store_true", help="write reward/cost/cost_rate SVGs")
    p.add_argument("--full-scale", action="store_true",
                   help=f"N={FULL_EPOCHS}, B={FULL_STEPS} unless --epochs/--steps given")
    p.add_argument("--step-log", action="store_true", help="also write per-step reward/cost logs")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s")
    try:
        suite = parse_suite(args.suite)
        algos = [a.strip() for a in args.algo.split(",") if a.strip()]
        unknown = [a for a in algos if a not in ALGORITHMS]
        if not algos or unknown:
            raise ValueError(f"unknown algorithm(s) {unknown}; choose from {list(ALGORITHMS)}")
        seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip())
        overrides = parse_overrides(Path(args.config).read_text()) if args.config else {}
        world, tr, cons, run = split_overrides(overrides)
        epochs = args.epochs or (FULL_EPOCHS if args.full_scale else 30)
        steps = args.steps or (FULL_STEPS if args.full_scale else 4000)
        configs = [RunConfig(suite, a, epochs, steps, seeds, Path(args.out),
                             trust_region=TrustRegionConfig(**tr),
                             constraint=ConstraintConfig(**cons),
                             world_overrides=world, step_log=args.step_log, **run)
                   for a in algos]
    except (SuiteError, ValueError, KeyError, OSError) as exc:
        print(f"cmdpbench: error: {exc}", file=sys.stderr)
        return 2

    failed = False
    results = {}
    for cfg in configs:
        per_seed = run_experiment(cfg)
        for r in per_seed:
            if r.failed:
                failed = True
                print(f"{cfg.algorithm} seed {r.seed} failed:\n{r.error}", file=sys.stderr)
        results[cfg.algorithm] = [r.rows for r in per_seed if not r.failed and r.rows]

    out = Path(args.out) / str(suite)
    complete = {a: rows for a, rows in results.items() if len(rows) == len(seeds)}
    if complete:
        table = emit_summary(complete, out / "summary.csv", expected_seeds=len(seeds))
        for algo, jr, mc, rho in table:
            print(f"{algo:10s} J_r={jr:.4f} M_c={mc:.4f} rho_c={rho:.6f}")
    if args.plot:
        paths = [c.csv_path(s) for c in configs for s in seeds if c.csv_path(s).exists()]
        for metric in METRICS:
            emit_plot(paths, metric, out / f"{metric}.svg", title=f"{suite} {metric}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
