"""Command-line entry point.

Subcommands: sample, verify, dynamics, diagnose. Each takes --config and
optional --seed / --out / --jobs overrides (GCL_JOBS supplies the jobs
default). Exit codes: 0 success, 1 verification failure, 2 configuration
error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .clusters import diagnose, sample_cluster_process, sample_marked_ensemble
from .dynamics import check_invariance, run_dynamics
from .fileio import (
    read_ensemble_csv,
    read_json,
    read_marked_ensemble_csv,
    write_ensemble_csv,
    write_json,
    write_marked_csv,
    write_marked_ensemble_csv,
    write_trajectory_csv,
)
from .identities import (
    check_correlation_projection,
    check_gnz,
    check_ibp,
    check_laplace_projection,
    check_quasi_invariance,
    describe_params,
)
from .runconfig import ConfigError, RunConfig, load_config
from .sampler import sample_gibbs

GROUND_FILE = "ground_ensemble.csv"
MARKED_FILE = "marked_ensemble.csv"
METADATA_FILE = "metadata.json"


def _out_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_sample(cfg: RunConfig, jobs: int) -> int:
    out = _out_dir(cfg)
    ensemble, stats = sample_gibbs(cfg.gibbs, return_stats=True)
    write_ensemble_csv(out / GROUND_FILE, ensemble)
    meta = {
        "config": cfg.describe(),
        "seed": cfg.gibbs.seed,
        "n_samples": cfg.gibbs.n_samples,
        "acceptance_rates": stats["acceptance_rates"],
        "proposals": stats["proposals"],
        "mean_count": stats["mean_count"],
        "count_trace": stats["count_trace"],
        "notices": stats.get("notices", []),
    }
    if cfg.law is not None:
        rng = np.random.default_rng([cfg.gibbs.seed, 1])
        _, marked = sample_marked_ensemble(cfg.gibbs, cfg.law, rng)
        write_marked_ensemble_csv(out / MARKED_FILE, marked)
        meta["marked_samples"] = len(marked)
    write_json(out / METADATA_FILE, meta)
    print(f"wrote {out / GROUND_FILE}" + (f" and {out / MARKED_FILE}" if cfg.law else ""))
    return 0


def _run_task(args):
    cfg, task, index = args
    rng = np.random.default_rng([cfg.gibbs.seed, 100 + index])
    tol = cfg.tol_sigma
    out = Path(cfg.output_dir)
    if task.identity == "gnz":
        n_meta = read_json(out / METADATA_FILE).get("n_samples")
        ensemble = read_ensemble_csv(out / GROUND_FILE, cfg.window, n_samples=n_meta)
        return check_gnz(
            ensemble, cfg.potential, cfg.theta, task.objects["H"], rng,
            tol_sigma=tol, n_inner=task.objects["n_inner"],
        )
    if task.identity == "laplace":
        return check_laplace_projection(
            cfg.gibbs, cfg.law, task.objects["f"],
            task.objects["n_outer"], task.objects["n_inner"], rng, tol_sigma=tol,
        )
    meta = read_json(out / METADATA_FILE)
    marked = read_marked_ensemble_csv(
        out / MARKED_FILE, cfg.window, n_samples=meta.get("marked_samples")
    )
    if task.identity == "correlation":
        o = task.objects
        return check_correlation_projection(
            marked, o["b1"], o["b2"], o["a1"], o["a2"], cfg.law, tol_sigma=tol
        )
    if task.identity == "quasi_invariance":
        return check_quasi_invariance(
            marked, task.objects["phi"], task.objects["F"], cfg.law, tol_sigma=tol
        )
    return check_ibp(marked, task.objects["v"], task.objects["F"], cfg.law, tol_sigma=tol)


def _require_ensembles(cfg: RunConfig) -> str | None:
    out = Path(cfg.output_dir)
    needs_ground = any(t.identity == "gnz" for t in cfg.verify_tasks)
    needs_marked = any(
        t.identity in ("correlation", "quasi_invariance", "ibp") for t in cfg.verify_tasks
    )
    if (needs_ground or needs_marked) and not (out / METADATA_FILE).exists():
        return f"no run metadata in {out}; run the sample command first"
    if needs_ground and not (out / GROUND_FILE).exists():
        return f"missing {out / GROUND_FILE}; run the sample command first"
    if needs_marked and not (out / MARKED_FILE).exists():
        return f"missing {out / MARKED_FILE}; run the sample command first"
    return None


def _print_table(reports) -> None:
    header = f"{'identity':<32} {'lhs':>12} {'rhs':>12} {'z':>8} {'n':>7}  verdict"
    print(header)
    print("-" * len(header))
    for r in reports:
        print(
            f"{r.identity:<32} {r.lhs:>12.6g} {r.rhs:>12.6g} "
            f"{r.z:>8.2f} {r.n:>7d}  {'pass' if r.verdict else 'FAIL'}"
        )


def cmd_verify(cfg: RunConfig, jobs: int) -> int:
    out = _out_dir(cfg)
    missing = _require_ensembles(cfg)
    if missing is not None:
        print(missing, file=sys.stderr)
        return 2
    work = [(cfg, task, i) for i, task in enumerate(cfg.verify_tasks)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_task, work))
    else:
        reports = [_run_task(w) for w in work]
    write_json(out / "verify_report.json", [r.to_dict() for r in reports])
    _print_table(reports)
    return 0 if all(r.verdict for r in reports) else 1


def cmd_dynamics(cfg: RunConfig, jobs: int) -> int:
    if cfg.dynamics is None:
        print("config has no dynamics block", file=sys.stderr)
        return 2
    out = _out_dir(cfg)
    block = cfg.dynamics
    rng = np.random.default_rng([cfg.gibbs.seed, 2])
    _, initial, _ = sample_cluster_process(cfg.gibbs, cfg.law, rng)
    summary, final = run_dynamics(initial, block.params, bumps=block.bumps, rng=rng)
    write_trajectory_csv(out / "trajectory.csv", summary)
    write_marked_csv(out / "final_marked.csv", final)
    report = check_invariance(
        block.params, block.n_replicas, cfg.gibbs,
        rng=np.random.default_rng([cfg.gibbs.seed, 3]), tol_sigma=cfg.tol_sigma,
    )
    write_json(out / "dynamics_report.json", report.to_dict())
    _print_table([report])
    if report.extras.get("discretization_bias"):
        print("note: discretization bias flagged; reduce dt", file=sys.stderr)
    return 0 if report.verdict else 1


def cmd_diagnose(cfg: RunConfig, jobs: int) -> int:
    if cfg.diagnose is None:
        print("config has no diagnose block", file=sys.stderr)
        return 2
    out = _out_dir(cfg)
    rng = np.random.default_rng([cfg.gibbs.seed, 4])
    report = diagnose(cfg.law, cfg.theta, cfg.diagnose.region, cfg.diagnose.n_mc, rng=rng)
    payload = dataclasses.asdict(report)
    payload["region"] = describe_params(cfg.diagnose.region)
    write_json(out / "diagnostics.json", payload)
    for name in ("flag_a_i", "flag_a_ii", "flag_b_i", "flag_b_ii"):
        print(f"{name}: {getattr(report, name)}")
    print(f"sigma_zb: {report.sigma_zb:.6g} +- {report.sigma_zb_se:.6g}")
    return 0 if report.passed() else 1


_COMMANDS = {
    "sample": cmd_sample,
    "verify": cmd_verify,
    "dynamics": cmd_dynamics,
    "diagnose": cmd_diagnose,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcl", description="Gibbs cluster process sampling and verification"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument(
            "--jobs", type=int, default=None,
            help="worker processes for independent tasks (default: GCL_JOBS or 1)",
        )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.jobs is not None:
        jobs = args.jobs
    else:
        jobs = int(os.environ.get("GCL_JOBS", "1") or "1")
    if jobs < 1:
        print("--jobs must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](cfg, jobs)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except RuntimeError as e:
        print(f"runtime abort: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
