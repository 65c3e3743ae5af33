"""Command-line entry point: ``ddenoise <command> [flags]``.

Exit codes: 0 success, 1 validation failure, 2 I/O error, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import theory
from .output import SvgStyle, emit_csv, emit_svg, fmt, write_text
from .simulate import baseline_regression_trial
from .sweep import (data_scaling_sweep, default_mu_grid, default_sigma_grid, find_peak,
                    joint_grid_search, joint_optimum_curve, parameter_scaling_sweep, sigma_sweep,
                    training_error_curve)
from .validation import GATES, Scale, run_gate

__all__ = ["Job", "UsageError", "parse_args", "run", "main"]

EXIT_OK, EXIT_FAIL, EXIT_IO, EXIT_USAGE = 0, 1, 2, 64
OUT_DIR_ENV = "DDENOISE_OUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class Job:
    command: str
    seed: int
    threads: int
    out_dir: Path
    params: dict = field(default_factory=dict)

    def __getattr__(self, name: str):
        try:
            return self.__dict__["params"][name]
        except KeyError:
            raise AttributeError(name) from None

    def path(self, value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.out_dir / p


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON file of flag values; flags on the command line win")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="trial-level worker threads")
    p.add_argument("--out-dir", default=None,
                   help=f"directory for relative output paths (default ${OUT_DIR_ENV} or .)")


def _c_grid_flags(p: argparse.ArgumentParser, c_min: float, c_max: float, points: int) -> None:
    p.add_argument("--c-min", type=float, default=c_min)
    p.add_argument("--c-max", type=float, default=c_max)
    p.add_argument("--points", type=int, default=points)


def _sweep_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--d", type=int, default=1000)
    p.add_argument("--n-trn", type=int, default=1000, help="fixed N_trn for parameter scaling")
    p.add_argument("--n-tst", type=int, default=1000)
    p.add_argument("--scaling", choices=("data", "parameter"), default="data")
    p.add_argument("--signal-scale", type=float, default=1.0,
                   help="sigma_trn^2 = signal_scale * N_trn")
    _c_grid_flags(p, 0.05, 2.0, 101)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--svg", help="SVG output path")
    p.add_argument("--log-y", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="ddenoise", description="Ridge-regularized rank-one denoising: theory and simulation.")
    sub = top.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("theory-sweep", help="closed-form risk along a c grid")
    _sweep_flags(p)
    _common(p)

    p = sub.add_parser("mc-sweep", help="closed form plus Monte Carlo along a c grid")
    _sweep_flags(p)
    p.add_argument("--trials", type=int, default=100)
    _common(p)

    p = sub.add_parser("peak", help="locate the under-parameterized peak (sigma_trn^2 = d/c)")
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--d", type=int, default=1000)
    p.add_argument("--n-tst", type=int, default=1000)
    _c_grid_flags(p, 0.005, 0.995, 2001)
    _common(p)

    p = sub.add_parser("optimal-sigma", help="optimal sigma_trn^2 and the brute-force scan")
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--d", type=int, default=1000)
    p.add_argument("--n-tst", type=int, default=1000)
    p.add_argument("--sigma-tst", type=float, default=None, help="default sqrt(N_tst)")
    p.add_argument("--scan-points", type=int, default=10000)
    p.add_argument("--scan-max", type=float, default=20.0, help="scan upper end in units of N_trn")
    p.add_argument("--out", help="CSV of the sigma^2 scan")
    p.add_argument("--svg")
    _common(p)

    p = sub.add_parser("joint-grid", help="grid search over mu and sigma_trn/sqrt(N_trn)")
    p.add_argument("--c", type=float, default=None, help="single c; otherwise a c grid")
    p.add_argument("--d", type=int, default=1000)
    p.add_argument("--n-tst", type=int, default=1000)
    p.add_argument("--mu-points", type=int, default=201)
    p.add_argument("--sigma-points", type=int, default=200)
    _c_grid_flags(p, 0.1, 2.0, 20)
    p.add_argument("--out", help="CSV: full grid for a single c, else optimum per c")
    p.add_argument("--svg")
    _common(p)

    p = sub.add_parser("training-curve", help="training error and its third derivative")
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--d", type=int, default=1000)
    p.add_argument("--n-tst", type=int, default=1000)
    p.add_argument("--signal-scale", type=float, default=1.0)
    p.add_argument("--total", action="store_true", help="use the total rather than per-sample error")
    p.add_argument("--refine", type=int, default=4)
    _c_grid_flags(p, 0.01, 0.99, 99)
    p.add_argument("--out", help="CSV of the curve")
    p.add_argument("--d3-out", help="CSV of coordinate,third_derivative")
    _common(p)

    p = sub.add_parser("baseline", help="isotropic least-squares excess risk, MC vs closed form")
    p.add_argument("--d", type=int, default=200)
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--trials", type=int, default=500)
    _common(p)

    p = sub.add_parser("validate", help="run the acceptance gates")
    p.add_argument("--gate", action="append", choices=list(GATES), default=None)
    p.add_argument("--scale", choices=("desk", "quick"), default="desk")
    p.add_argument("--no-files", action="store_true", help="do not write gate CSV files")
    _common(p)
    return top


def _config_defaults(path: str, parser: argparse.ArgumentParser) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise UsageError(f"config {path} must hold a flat JSON object")
    known = {a.dest for a in parser._actions}
    out = {}
    for k, v in raw.items():
        dest = k.lstrip("-").replace("-", "_")
        if dest not in known or dest in ("config", "help"):
            raise UsageError(f"config {path}: unknown key {k!r}")
        out[dest] = v
    return out


def _subparser(top: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for a in top._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices[name]
    raise AssertionError("no subcommands")


_REQUIRED = {
    "theory-sweep": ("mu",),
    "mc-sweep": ("mu",),
    "peak": ("mu",),
    "optimal-sigma": ("c", "mu"),
    "training-curve": ("mu",),
}


def _check(job: Job) -> None:
    c = job.command
    if job.threads < 1:
        raise UsageError("--threads must be at least 1")
    if not 0 <= job.seed < 2**64:
        raise UsageError("--seed must fit in 64 unsigned bits")
    prm = job.params
    for key in _REQUIRED.get(c, ()):
        if prm.get(key) is None:
            raise UsageError(f"{c} needs --{key.replace('_', '-')} (flag or config key)")
    if "points" in prm:
        if prm["points"] < 1:
            raise UsageError("--points must be at least 1")
        if not 0 < prm["c_min"] <= prm["c_max"]:
            raise UsageError("need 0 < --c-min <= --c-max")
    if c == "mc-sweep" and prm["trials"] < 2:
        raise UsageError("--trials must be at least 2 (standard errors need two trials)")
    if c == "baseline" and prm["trials"] < 2:
        raise UsageError("--trials must be at least 2")
    if c in ("peak", "training-curve") and prm["c_max"] >= 1:
        raise UsageError(f"{c} is defined on c < 1; lower --c-max")
    if c == "training-curve" and prm["points"] < 5:
        raise UsageError("training-curve needs at least 5 points")
    if c == "optimal-sigma" and not 0 < prm["c"] < 1:
        raise UsageError("optimal-sigma is defined for 0 < c < 1")
    for key in ("d", "n_trn", "n_tst"):
        if key in prm and prm[key] is not None and prm[key] < 1:
            raise UsageError(f"--{key.replace('_', '-')} must be positive")
    if "mu" in prm and prm["mu"] is not None and prm["mu"] < 0:
        raise UsageError("--mu must be nonnegative")
    if c == "baseline":
        n = round(prm["d"] / prm["c"])
        if n == prm["d"]:
            raise UsageError("baseline diverges at c = 1")


def parse_args(argv: list[str] | None = None) -> Job:
    """Resolve flags over config-file values over defaults."""
    argv = list(sys.argv[1:] if argv is None else argv)
    top = build_parser()
    ns = top.parse_args(argv)
    if ns.config:
        sp = _subparser(top, ns.command)
        sp.set_defaults(**_config_defaults(ns.config, sp))
        ns = top.parse_args(argv)
    prm = {k: v for k, v in vars(ns).items() if k not in ("command", "seed", "threads", "out_dir", "config")}
    out_dir = Path(ns.out_dir or os.environ.get(OUT_DIR_ENV) or ".")
    job = Job(command=ns.command, seed=ns.seed, threads=ns.threads, out_dir=out_dir, params=prm)
    _check(job)
    return job


def _grid(job: Job) -> np.ndarray:
    return np.linspace(job.c_min, job.c_max, job.points)


def _emit(curve, job: Job, out: str | None, svg: str | None, log_y: bool = False,
          title: str | None = None) -> None:
    if out:
        path = job.path(out)
        emit_csv(curve, path)
        print(f"wrote {path}")
    if svg:
        path = job.path(svg)
        emit_svg(curve, path, SvgStyle(log_y=log_y, title=title))
        print(f"wrote {path}")


def _cmd_sweep(job: Job, mc: bool) -> int:
    trials = job.trials if mc else None
    if job.scaling == "data":
        cv = data_scaling_sweep(job.mu, job.d, _grid(job), n_tst=job.n_tst,
                                signal_scale=job.signal_scale, mc_trials=trials, seed=job.seed,
                                threads=job.threads)
    else:
        cv = parameter_scaling_sweep(job.mu, job.n_trn, _grid(job), n_tst=job.n_tst,
                                     signal_scale=job.signal_scale, mc_trials=trials,
                                     seed=job.seed, threads=job.threads)
    print(f"{len(cv)} grid points ({job.scaling} scaling, mu={job.mu:g})")
    if len(cv) >= 3:
        pk = find_peak(cv)
        print("risk peak: " + ("none (maximum on the grid boundary)" if pk is None else
                               f"c={pk.location:.6g} interior={pk.interior} "
                               f"estimate={pk.estimate:.6g}"))
    frac = cv.agreement_fraction()
    if frac is not None:
        print(f"MC within 3 stderr at {frac:.1%} of points")
    _emit(cv, job, job.out, job.svg, job.log_y, f"mu={job.mu:g}")
    return EXIT_OK


def _cmd_peak(job: Job) -> int:
    mu, d = job.mu, job.d
    cv = data_scaling_sweep(mu, d, _grid(job), n_tst=job.n_tst, snap=False)
    if len(cv) < 3:
        raise UsageError("peak needs at least 3 grid points")
    pk = find_peak(cv, objective=lambda c: theory.risk_at(c, mu, d / c, d, job.n_tst, job.n_tst))
    est = theory.peak_location_estimate(mu)
    if pk is None:
        print(f"no interior peak (grid maximum on the boundary); estimate 1/(mu^2+1)={fmt(est)}")
        return EXIT_OK
    print(f"grid_peak={fmt(pk.location)} value={fmt(pk.value)} interior={pk.interior} "
          f"ties={pk.n_tied} resolution={fmt(pk.grid_resolution)}")
    if pk.refined_location is not None:
        print(f"refined_peak={fmt(pk.refined_location)} value={fmt(pk.refined_value)}")
    print(f"estimate={fmt(est)}")
    return EXIT_OK


def _cmd_optimal_sigma(job: Job) -> int:
    c, mu, d, nt = job.c, job.mu, job.d, job.n_tst
    st = math.sqrt(nt) if job.sigma_tst is None else job.sigma_tst
    n_trn = d / c
    grid = job.scan_max * n_trn * np.arange(1, job.scan_points + 1) / job.scan_points
    cv = sigma_sweep(c, mu, d, grid, n_tst=nt, sigma_tst_sq=st * st)
    scan = grid[int(np.argmin(cv.values()))]
    s = theory.optimal_sigma_sq(c, mu, d, nt, st)
    print("optimal_sigma_sq=" + ("none (no interior optimum)" if s is None else fmt(s)))
    print(f"scan_argmin={fmt(float(scan))} cell={fmt(float(grid[1] - grid[0]))}")
    if s is not None:
        print(f"risk_at_optimum={fmt(theory.risk_at(c, mu, s, d, st * st, nt))}")
    _emit(cv, job, job.out, job.svg, title=f"c={c:g} mu={mu:g}")
    return EXIT_OK


def _cmd_joint(job: Job) -> int:
    mus = default_mu_grid(job.mu_points)
    sig = default_sigma_grid(job.sigma_points)
    if job.c is not None:
        r = joint_grid_search(job.c, job.d, mus, sig, n_tst=job.n_tst)
        print(f"mu_opt={fmt(r.mu_opt)} sigma_opt={fmt(r.sigma_opt)} risk_opt={fmt(r.risk_opt)} "
              f"sigma_at_top={r.sigma_at_top}")
        if job.out:
            lines = ["mu,sigma_over_sqrt_n_trn,theory_risk,seed"]
            for i, mu in enumerate(r.mu_grid):
                for j, s in enumerate(r.sigma_grid):
                    lines.append(f"{fmt(float(mu))},{fmt(float(s))},{fmt(float(r.risk_grid[i, j]))},"
                                 f"{job.seed}")
            path = job.path(job.out)
            write_text(path, "\n".join(lines) + "\n")
            print(f"wrote {path}")
        return EXIT_OK
    cv, results = joint_optimum_curve(job.d, _grid(job), mus, sig, n_tst=job.n_tst)
    for p, r in zip(cv.points, results):
        print(f"c={fmt(p.coordinate)} mu_opt={fmt(r.mu_opt)} sigma_opt={fmt(r.sigma_opt)} "
              f"risk_opt={fmt(r.risk_opt)}")
    _emit(cv, job, job.out, job.svg, title="jointly optimal regularizers")
    return EXIT_OK


def _cmd_training(job: Job) -> int:
    cv = training_error_curve(job.mu, job.d, _grid(job), signal_scale=job.signal_scale,
                              n_tst=job.n_tst, refine=job.refine, per_sample=not job.total)
    mins = cv.notes["d3_minima"]
    print("third-derivative local minima: " + (", ".join(fmt(m) for m in mins) or "none"))
    print(f"peak estimate 1/(mu^2+1)={fmt(cv.notes['peak_estimate'])}")
    _emit(cv, job, job.out, None)
    if job.d3_out:
        lines = ["coordinate,third_derivative,seed"]
        for p, v in zip(cv.points, cv.columns["third_derivative"]):
            lines.append(f"{fmt(p.coordinate)},{fmt(v)},{job.seed}")
        path = job.path(job.d3_out)
        write_text(path, "\n".join(lines) + "\n")
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_baseline(job: Job) -> int:
    d = job.d
    n = round(d / job.c)
    xs = [baseline_regression_trial(d, n, job.seed, i) for i in range(job.trials)]
    m = math.fsum(xs) / len(xs)
    se = float(np.std(xs, ddof=1)) / math.sqrt(len(xs))
    th = theory.baseline_regression_risk(d / n)
    print(f"d={d} n_trn={n} c={fmt(d / n)} mc_mean={fmt(m)} mc_stderr={fmt(se)} theory={fmt(th)}")
    return EXIT_OK


def _cmd_validate(job: Job) -> int:
    from .output import curve_to_csv

    scale = Scale.desk() if job.scale == "desk" else Scale.quick()
    names = job.gate or list(GATES)
    all_ok = True
    report = []
    if not job.no_files:
        job.out_dir.mkdir(parents=True, exist_ok=True)
    for name in names:
        res = run_gate(name, scale, job.seed, job.threads)
        all_ok = all_ok and res.passed
        text = res.report()
        print(text, flush=True)
        report.append(text)
        if not job.no_files:
            for key, cv in res.curves.items():
                write_text(job.out_dir / f"validate_{name}_{key}.csv", curve_to_csv(cv))
    n_pass = sum(line.startswith("[PASS]") for line in report)
    summary = f"{n_pass}/{len(report)} gates passed (seed={job.seed}, scale={job.scale})"
    print(summary)
    if not job.no_files:
        write_text(job.out_dir / "validate_report.txt", "\n".join(report + [summary]) + "\n")
    return EXIT_OK if all_ok else EXIT_FAIL


_DISPATCH = {
    "theory-sweep": lambda s: _cmd_sweep(s, mc=False),
    "mc-sweep": lambda s: _cmd_sweep(s, mc=True),
    "peak": _cmd_peak,
    "optimal-sigma": _cmd_optimal_sigma,
    "joint-grid": _cmd_joint,
    "training-curve": _cmd_training,
    "baseline": _cmd_baseline,
    "validate": _cmd_validate,
}


def run(job: Job) -> int:
    print(f"# ddenoise {job.command} seed={job.seed} threads={job.threads}")
    return _DISPATCH[job.command](job)


def main(argv: list[str] | None = None) -> int:
    try:
        job = parse_args(argv)
        return run(job)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        where = f" ({exc.filename})" if getattr(exc, "filename", None) else ""
        print(f"I/O error{where}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, theory.OutOfScopeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
