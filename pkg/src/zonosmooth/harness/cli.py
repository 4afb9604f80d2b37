"""Command-line entry point.

Subcommands
-----------
filter        posterior ranges only: diameters.csv, mse.csv, hulls_trial0.csv
smooth        posterior and smoothed ranges (same files, smoothed columns filled)
compare-rts   smooth plus the tuned RTS baseline: adds mse_rts and rts_grid.csv
oracle-check  exact ranges vs the grid oracle on trial 0: oracle_check.csv
tune-rts      RTS variance grid search only: rts_grid.csv

Exit status is 0 on success, 1 when a check fails (containment violation,
oracle mismatch), 2 on configuration errors and 3 on inconsistent data.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from ..errors import InconsistentDataError
from .config import FULL_SCALE_TRIALS, ConfigError, ExperimentConfig, load_config
from .experiment import run_experiment, run_oracle_check, run_rts_tuning, write_oracle_outputs, write_outputs
from ..rts import write_grid_csv

log = logging.getLogger("zonosmooth")

COMMANDS = ("filter", "smooth", "compare-rts", "oracle-check", "tune-rts")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zonosmooth", description="Set-membership filtering and smoothing experiments.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "filter": "run the set-membership filter over seeded trials",
        "smooth": "run filter and smoother over seeded trials",
        "compare-rts": "smooth and compare with the RTS baseline",
        "oracle-check": "compare exact ranges with the grid oracle on trial 0",
        "tune-rts": "grid-search the RTS noise variances",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name], description=helps[name])
        sp.add_argument("--config", metavar="PATH", help="JSON or key = value config file")
        sp.add_argument("--trials", type=int, metavar="N", help="number of trials")
        sp.add_argument("--seed", type=int, metavar="S", help="base seed")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        sp.add_argument("--horizon", type=int, metavar="T", help="last time step")
        sp.add_argument("--full-scale", action="store_true", help=f"run {FULL_SCALE_TRIALS} trials")
        sp.add_argument("--workers", type=int, metavar="W", help="worker processes")
        sp.add_argument("-v", "--verbose", action="store_true", help="log progress")
        if name == "compare-rts":
            sp.add_argument("--fixed-rts", action="store_true",
                            help="use the configured (q, r) instead of tuning on the grid")
        if name == "oracle-check":
            sp.add_argument("--delta", type=float, metavar="D", help="oracle cell width")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    trials = FULL_SCALE_TRIALS if args.full_scale else args.trials
    over = dict(seed=args.seed, out=args.out, horizon=args.horizon, workers=args.workers)
    if args.command == "tune-rts":
        over["rts_trials"] = trials
    else:
        over["trials"] = trials
    if getattr(args, "delta", None) is not None:
        over["oracle_delta"] = args.delta
    return cfg.with_overrides(**over)


def _progress(done, total):
    log.info("trial %d/%d", done, total)


def _report_run(rec, command) -> int:
    T = rec.horizon
    print(f"{command}: {rec.trials} trials, T = {T}, seed = {rec.config.seed}")
    f = rec.avg_diam_filt
    print(f"  mean filtered diameter   {np.mean(f):.6g}")
    if rec.smoothed:
        s = rec.avg_diam_smooth
        print(f"  mean smoothed diameter   {np.mean(s):.6g}")
        print(f"  mse (smoothed centre)    {rec.mse_sms()[1]:.6g}")
    print(f"  mse (filtered centre)    {rec.mse_smf()[1]:.6g}")
    if rec.rts_estimates is not None:
        q, r = rec.rts_params
        print(f"  mse (RTS, q={q:g}, r={r:g})  {rec.mse_rts()[1]:.6g}")
    bad = rec.violations()
    if rec.contained_filt is not None:
        print(f"  containment violations   {len(bad)}")
    for kind, t, k in bad[:10]:
        print(f"    {kind} range misses x_k at trial {t}, k = {k} (seed {rec.config.seed})")
    return 1 if bad else 0


def _run(args) -> int:
    cfg = _config(args)
    t0 = time.perf_counter()
    if args.command in ("filter", "smooth", "compare-rts"):
        rts = args.command == "compare-rts"
        if rts and not args.fixed_rts:
            cfg = cfg.with_overrides(rts_tune=True)
        rec = run_experiment(cfg, smooth=args.command != "filter", rts=rts, progress=_progress)
        paths = write_outputs(rec, cfg.out)
        status = _report_run(rec, args.command)
    elif args.command == "oracle-check":
        rep = run_oracle_check(cfg)
        paths = write_oracle_outputs(rep, cfg.out)
        gap = rep.max_face_gap / rep.delta
        unc = int(rep.uncontained_smooth.sum())
        print(f"oracle-check: T = {cfg.horizon}, delta = {rep.delta:g}, seed = {cfg.seed}")
        print(f"  smoothed hull gap        {gap:.3f} cells")
        print(f"  filtered hull gap        {rep.max_face_gap_filt / rep.delta:.3f} cells")
        print(f"  uncontained centres      {unc} smoothed, {int(rep.uncontained_filt.sum())} filtered")
        # scalar cell images creep outward by up to a cell, so only the hull gap is judged there
        status = 0 if gap <= 2.0 and (cfg.system == "scalar" or unc == 0) else 1
    else:
        res = run_rts_tuning(cfg)
        cfg.out.mkdir(parents=True, exist_ok=True)
        paths = {"rts_grid": write_grid_csv(res, cfg.out / "rts_grid.csv")}
        at = res.mse_at(cfg.rts_q, cfg.rts_r)
        print(f"tune-rts: {cfg.rts_trials} trials, T = {cfg.horizon}, seed = {cfg.seed}")
        print(f"  best (q, r) = ({res.q:g}, {res.r:g}), mse {res.best_mse:.6g}")
        print(f"  at (q, r) = ({cfg.rts_q:g}, {cfg.rts_r:g}): mse {at:.6g}, ratio {at / res.best_mse:.4f}")
        status = 0
    for name, path in paths.items():
        print(f"  wrote {path}")
    log.info("done in %.1f s", time.perf_counter() - t0)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InconsistentDataError as exc:
        print(f"inconsistent data: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
