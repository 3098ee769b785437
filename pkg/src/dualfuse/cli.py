"""Command-line entry point: ``dualfuse {simulate,fuse,analyze-observability,report}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import fileio, pipeline
from .ekf import FilterConfig
from .errors import DualFuseError
from .models import ImuSample, StateEstimate
from .observability import DUAL, SINGLE, alignment_angle, mro_reduced_rank_check, numeric_rank, observability_matrix
from .quat import random_quat
from .sim import TrajectorySpec, make_rng

log = logging.getLogger("dualfuse")

EXIT_OK = 0
EXIT_DIVERGED = 1
EXIT_INPUT = 2


def filter_config(rc: fileio.RunConfig, no_adapt: bool = False, single: int | None = None) -> FilterConfig:
    return FilterConfig(
        noise=rc.noise(),
        geom=rc.geometry(),
        window_w=rc.window_w,
        imu_rate=rc.imu_rate,
        gps_rate=rc.gps_rate,
        r_floor=rc.r_floor,
        adapt_enabled=rc.adapt and not no_adapt,
        r_init=rc.r_init,
        min_adapt_samples=rc.min_adapt_samples,
        antennas=(single,) if single else (1, 2),
        process_noise=rc.process_noise,
        r_estimator=rc.r_estimator,
    )


def scenario(rc: fileio.RunConfig) -> pipeline.Scenario:
    return pipeline.Scenario(
        trajectory=TrajectorySpec(kind=rc.trajectory, duration=rc.duration, seed=rc.seed),
        imu_rate=rc.imu_rate,
        gps_rate=rc.gps_rate,
        gps_sigma=rc.gps_sigma,
        bias_true=tuple(rc.bias),
    )


def _load(args) -> fileio.RunConfig:
    rc = fileio.load_config(args.config) if args.config else fileio.RunConfig()
    if args.seed is not None:
        rc.seed = args.seed
    return rc


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _summary_dict(report: pipeline.RunReport) -> dict:
    d = asdict(report.summary)
    d["diverged"] = report.diverged
    d["message"] = report.message
    return d


def _print_summary(d: dict) -> None:
    for k in sorted(d):
        v = d[k]
        print(f"{k:24s} {v:.6g}" if isinstance(v, float) else f"{k:24s} {v}")


def cmd_simulate(args) -> int:
    rc = _load(args)
    cfg = filter_config(rc, args.no_adapt, args.single_antenna)
    sc = scenario(rc)
    out = _outdir(args)
    truth, imu, gps = pipeline.simulate(sc, cfg, rc.seed)
    fileio.write_imu_log(out / "imu.csv", imu)
    fileio.write_gps_log(out / "gps.csv", gps)
    fileio.write_truth_log(out / "truth.csv", truth, sc.bias_true)
    print(f"wrote {len(imu)} IMU samples, {len(gps)} GPS fixes and truth to {out}")
    if args.runs > 1:
        seeds = range(rc.seed, rc.seed + args.runs)
        workers = min(args.runs, os.cpu_count() or 1)
        reports = pipeline.monte_carlo(sc, cfg, seeds, workers=workers)
        agg = pipeline.aggregate(reports)
        agg["seeds"] = list(seeds)
        fileio.write_json(out / "montecarlo.json", agg)
        _print_summary({k: v for k, v in agg.items() if k != "seeds"})
        if agg["diverged"]:
            return EXIT_DIVERGED
    return EXIT_OK


def cmd_fuse(args) -> int:
    if not args.imu or not args.gps:
        raise DualFuseError("fuse needs --imu and --gps")
    rc = _load(args)
    cfg = filter_config(rc, args.no_adapt, args.single_antenna)
    imu = fileio.parse_imu_log(args.imu)
    gps = fileio.parse_gps_log(args.gps)
    truth = bias = None
    if args.truth:
        truth = fileio.parse_truth_log(args.truth)
        bias = truth.b[0]
    report = pipeline.run_filter(imu, gps, cfg, truth=truth, bias_true=bias)
    out = _outdir(args)
    fileio.write_epoch_log(out / "epochs.csv", report.epochs)
    summary = _summary_dict(report)
    fileio.write_json(out / "summary.json", summary)
    _print_summary(summary)
    if report.diverged:
        print(report.message, file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _random_states(rng, n):
    for _ in range(n):
        x = StateEstimate(random_quat(rng), rng.normal(size=3), rng.normal(size=3), 0.01 * rng.normal(size=3))
        u = ImuSample(0.0, 0.1 * rng.normal(size=3), rng.normal(size=3) + np.array([0.0, 0.0, 9.81]))
        yield x, u


def cmd_analyze(args) -> int:
    rc = _load(args)
    geom = rc.geometry()
    mode = SINGLE if args.single_antenna else DUAL
    if args.single_antenna == 2:
        # single mode keeps the first antenna's rows
        geom = type(geom)(geom.e2, geom.e1, geom.g)
    result = {"mode": mode}
    if args.imu and args.gps:
        cfg = filter_config(rc, args.no_adapt, args.single_antenna)
        report = pipeline.run_filter(fileio.parse_imu_log(args.imu), fileio.parse_gps_log(args.gps), cfg)
        ranks = np.array([e.rank for e in report.epochs])
        theta = np.array([e.theta for e in report.epochs])
        result.update(
            source="logs",
            epochs=len(ranks),
            full_rank_epochs=int(np.count_nonzero(ranks == 12)),
            min_rank=int(ranks.min()) if ranks.size else 0,
            theta_min=float(theta.min()) if theta.size else float("nan"),
            low_theta_epochs=int(np.count_nonzero(theta < cfg.theta_warn)),
        )
    else:
        rng = make_rng(rc.seed, 3)
        ranks, thetas, mro = [], [], []
        for x, u in _random_states(rng, args.samples):
            ranks.append(numeric_rank(observability_matrix(x, u, geom, mode)))
            thetas.append(alignment_angle(geom, u.u_a))
            if mode == DUAL:
                mro.append(mro_reduced_rank_check(x, u, geom))
        result.update(
            source="random states",
            samples=args.samples,
            rank_counts={str(r): int(c) for r, c in zip(*np.unique(ranks, return_counts=True))},
            theta_min=float(np.min(thetas)),
        )
        if mro:
            result["mro_rank_equivalent"] = int(sum(mro))
    if args.out:
        fileio.write_json(_outdir(args) / "observability.json", result)
    _print_summary({k: v for k, v in result.items() if not isinstance(v, dict)})
    for k, v in result.items():
        if isinstance(v, dict):
            print(f"{k:24s} {v}")
    return EXIT_OK


def cmd_report(args) -> int:
    cols = fileio.parse_epoch_log(args.epochs)
    bias_norm = None
    if args.truth:
        bias_norm = float(np.linalg.norm(fileio.parse_truth_log(args.truth).b[0]))
    summary = pipeline.summarize_columns(cols, bias_norm)
    d = asdict(summary)
    if args.out:
        fileio.write_json(_outdir(args) / "report.json", d)
    _print_summary(d)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--no-adapt", action="store_true", help="keep R fixed at r_init")
    common.add_argument("--single-antenna", type=int, choices=(1, 2), help="use only this antenna after alignment")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dualfuse", description="Dual-antenna GPS/IMU attitude and position fusion.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="write synthetic IMU, GPS and truth logs")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--runs", type=int, default=1, help="also run an N-seed Monte Carlo and aggregate it")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fuse", parents=[common], help="run the filter over IMU and GPS logs")
    f.add_argument("--imu", required=True)
    f.add_argument("--gps", required=True)
    f.add_argument("--truth", help="truth log for error statistics")
    f.add_argument("--out", required=True, help="output directory")
    f.set_defaults(func=cmd_fuse)

    a = sub.add_parser("analyze-observability", parents=[common], help="rank of the observability matrix")
    a.add_argument("--imu")
    a.add_argument("--gps")
    a.add_argument("--samples", type=int, default=100, help="random states when no logs are given")
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("report", help="summarize a per-epoch log written by fuse")
    r.add_argument("epochs", help="epochs.csv")
    r.add_argument("--truth", help="truth log, for the relative bias error")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.ERROR,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if getattr(args, "runs", 1) < 1:
        print("error: --runs must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except DualFuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
