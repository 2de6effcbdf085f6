"""Command-line front end.

Subcommands: estimate (one streaming trajectory), rates (Monte Carlo rate
experiment), oracle (batch ground truth), check (assumption checks), gen
(frozen dataset CSV).  Every command reads one strict config file, writes
its primary output atomically (temp file + rename, so failures leave
nothing behind), and drops a manifest with timestamps and provenance next
to it.  Primary outputs are byte-identical across reruns with the same
config and seed; only manifests carry timestamps.

Exit codes: 0 success, 2 config error, 3 runtime abort (non-finite iterate
or too many failed replicates), 4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone

from . import __version__, harness, kernels
from .assumptions import run_all_checks
from .config import (build_experiment, build_objective, build_schedule,
                     build_spec, parse_file)
from .datagen import freeze, write_dataset_csv
from .errors import (ConfigError, DimensionMismatch, NoConvergence,
                     NonFiniteInput, NonFiniteIterate, TooManyFailures)
from .estimator import DEFAULT_CLIP_RADIUS
from .oracle import ground_truth


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)


def _threads(args) -> int:
    env = os.environ.get("ASGD_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"ASGD_THREADS must be an integer, got {env!r}") from None
    if args.threads is not None:
        return max(1, args.threads)
    return os.cpu_count() or 1


def _write_manifest(path, command: str, cfg_hash: str, outputs, threads: int,
                    started: str) -> None:
    doc = {
        "command": command,
        "argv": sys.argv[1:] if sys.argv else [],
        "config_hash": cfg_hash,
        "version": __version__,
        "backend": kernels.BACKEND_NAME,
        "threads": threads,
        "started": started,
        "finished": _now(),
        "outputs": [os.fspath(p) for p in outputs],
    }
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _require_label_match(objective, spec) -> None:
    if objective.labeled != spec.labeled:
        raise ConfigError("objective and distribution disagree about labels")


def cmd_estimate(args) -> int:
    cfg = parse_file(args.config)
    objective = build_objective(cfg)
    spec = build_spec(cfg, objective.dim)
    _require_label_match(objective, spec)
    schedule = build_schedule(cfg)
    n = args.n if args.n is not None else cfg.require("experiment.n_max")
    if n < 1:
        raise ConfigError("n must be >= 1")
    seed = args.seed if args.seed is not None else cfg.get("experiment.seed", 0)
    clip = cfg.get("experiment.clip_radius", DEFAULT_CLIP_RADIUS)
    started = _now()
    z, zbar = harness.stream_run(objective, spec, schedule, seed, 0, n, clip)
    doc = {
        "n": int(n),
        "seed": int(seed),
        "z": [float(v) for v in z],
        "zbar": [float(v) for v in zbar],
        "config_hash": cfg.hash,
    }
    out = args.out
    _atomic_write(out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _write_manifest(out + ".manifest.json", "estimate", cfg.hash, [out],
                    _threads(args), started)
    return 0


def cmd_rates(args) -> int:
    cfg = parse_file(args.config)
    exp = build_experiment(cfg)
    if args.seed is not None:
        exp.seed = args.seed
    started = _now()
    report = harness.rate_experiment(exp, threads=_threads(args))
    os.makedirs(args.out_dir, exist_ok=True)
    rates_path = os.path.join(args.out_dir, "rates.json")
    csv_path = os.path.join(args.out_dir, "moments.csv")
    _atomic_write(rates_path, report.to_json())
    _atomic_write(csv_path, report.moments_csv())
    _write_manifest(os.path.join(args.out_dir, "manifest.json"), "rates",
                    cfg.hash, [rates_path, csv_path], _threads(args), started)
    return 0


def cmd_oracle(args) -> int:
    cfg = parse_file(args.config)
    objective = build_objective(cfg)
    spec = build_spec(cfg, objective.dim)
    _require_label_match(objective, spec)
    n_oracle = cfg.get("oracle.n", cfg.get("ground_truth.n_oracle", 10 ** 6))
    seed = args.seed if args.seed is not None else cfg.get("experiment.seed", 0)
    started = _now()
    gt = ground_truth(objective, spec, "empirical", n_oracle=n_oracle, seed=seed,
                      tol=cfg.get("oracle.tol", 1e-10),
                      max_iter=cfg.get("oracle.max_iter", 10 ** 5))
    out = args.out
    _atomic_write(out, gt.oracle.to_json(config_hash=cfg.hash, n_oracle=int(n_oracle),
                                         seed=int(seed)))
    _write_manifest(out + ".manifest.json", "oracle", cfg.hash, [out],
                    _threads(args), started)
    return 0


def cmd_check(args) -> int:
    cfg = parse_file(args.config)
    objective = build_objective(cfg)
    spec = build_spec(cfg, objective.dim)
    _require_label_match(objective, spec)
    seed = args.seed if args.seed is not None else cfg.get("experiment.seed", 0)
    mode = cfg.get("ground_truth.mode", "analytic")
    started = _now()
    gt = ground_truth(objective, spec, mode,
                      n_oracle=cfg.get("ground_truth.n_oracle", 10 ** 6),
                      seed=seed, tol=cfg.get("ground_truth.tol", 1e-10))
    report = run_all_checks(
        objective, spec, gt.m,
        radius=cfg.get("check.radius", 1.0),
        n_probes=cfg.get("check.probes", 24),
        n_mc=cfg.get("check.n_mc", 10 ** 5),
        seed=seed,
        moment_orders=cfg.get("check.moments", (1,)),
    )
    out = args.out
    _atomic_write(out, report.to_json(config_hash=cfg.hash,
                                      ground_truth=gt.provenance()))
    _write_manifest(out + ".manifest.json", "check", cfg.hash, [out],
                    _threads(args), started)
    return 0


def cmd_gen(args) -> int:
    cfg = parse_file(args.config)
    objective_present = "objective.kind" in cfg
    if "distribution.family" not in cfg:
        raise ConfigError("gen needs a distribution section")
    dim = cfg.get("objective.dim")
    if dim is None and objective_present:
        dim = build_objective(cfg).dim
    if dim is None:
        center = cfg.get("distribution.center")
        teacher = cfg.get("distribution.teacher")
        if center is not None:
            dim = center.shape[0]
        elif teacher is not None:
            dim = teacher.shape[0]
        else:
            raise ConfigError("cannot infer dimension: set objective.dim or distribution.center")
    spec = build_spec(cfg, int(dim))
    n = args.n if args.n is not None else cfg.get("gen.n")
    if n is None:
        raise ConfigError("set gen.n or pass --n")
    seed = args.seed if args.seed is not None else cfg.get("experiment.seed", 0)
    started = _now()
    ds = freeze(spec, int(n), int(seed))
    out = args.out
    tmp = out + ".tmp"
    write_dataset_csv(ds, tmp)
    os.replace(tmp, out)
    _write_manifest(out + ".manifest.json", "gen", cfg.hash, [out],
                    _threads(args), started)
    return 0


def _parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="asgd",
        description="Averaged stochastic gradient estimators: run, verify rates, "
                    "cross-check against batch oracles.")
    top.add_argument("--version", action="version", version=f"asgd {__version__}")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("config", help="path to a config file")
        p.add_argument("--seed", type=int, default=None, help="override experiment.seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (ASGD_THREADS env overrides; default: all cores)")
        if out_default is not None:
            p.add_argument("--out", default=out_default, help="output file path")

    p = sub.add_parser("estimate", help="run one streaming trajectory")
    common(p, "estimate.json")
    p.add_argument("--n", type=int, default=None, help="override experiment.n_max")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("rates", help="Monte Carlo rate experiment")
    common(p, None)
    p.add_argument("--out-dir", default=".", help="directory for rates.json/moments.csv")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("oracle", help="batch ground-truth solve on a frozen dataset")
    common(p, "oracle.json")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("check", help="strong-convexity / remainder / moment checks")
    common(p, "check.json")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("gen", help="freeze a dataset to CSV")
    common(p, "dataset.csv")
    p.add_argument("--n", type=int, default=None, help="number of rows")
    p.set_defaults(func=cmd_gen)
    return top


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, DimensionMismatch, NonFiniteInput) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (NonFiniteIterate, TooManyFailures) as e:
        print(f"runtime abort: {e}", file=sys.stderr)
        return 3
    except NoConvergence as e:
        print(f"did not converge: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
