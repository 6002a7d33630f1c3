"""Configuration-driven command line front end.

Reads a strict JSON experiment config, runs the requested experiment and
writes CSV tables (the contract), an SVG plot per experiment (convenience)
and a manifest sufficient to re-run the experiment exactly.

Exit codes: 0 success, 1 usage/config/IO error, 2 experiment-level failure.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import active_backend
from .msq import ConvergenceStudy, run_study, slope_fit
from .problems import REGISTRY, estimate_coercivity_constant, estimate_monotonicity_constant, get_problem
from .rps import (
    ExperimentError,
    PullbackConfig,
    initial_condition_coupling,
    periodicity_check,
    pullback_limit,
)
from .schemes import SchemeConfig, StepBoundParams, admissible_stepsize, estimate_beta, simulate
from .noise import derive_seed, sample_grid

__all__ = ["ConfigError", "parse_config", "run", "main"]


class ConfigError(ValueError):
    """Invalid experiment config; carries the full list of violations."""

    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


_COMMANDS = ("simulate", "pullback", "periodicity", "coupling", "converge", "validate")

_NUM = (int, float)

# per-command block schemas: key -> (types, required)
_BLOCK_SCHEMAS = {
    "simulate": {
        "t0": (_NUM, True), "T": (_NUM, True), "h": (_NUM, True),
        "kind": (str, True), "gamma": (_NUM, True), "xi": (_NUM, True),
        "stride": (int, False),
    },
    "pullback": {
        "k_list": (list, True), "t_lo": (_NUM, True), "t_hi": (_NUM, True),
        "h": (_NUM, True), "kind": (str, True), "gamma": (_NUM, True),
        "xi": ((int, float, list), True), "samples": (int, True),
    },
    "periodicity": {
        "k": (int, True), "t_lo": (_NUM, True), "t_hi": (_NUM, True),
        "h": (_NUM, True), "kind": (str, True), "gamma": (_NUM, True),
        "xi": (_NUM, True), "samples": (int, True), "shifts": (int, False),
        "depth_k": (int, False),
    },
    "coupling": {
        "k": (int, True), "t_hi": (_NUM, True), "h": (_NUM, True),
        "kind": (str, True), "gamma": (_NUM, True),
        "xi": (_NUM, True), "eta": (_NUM, True), "samples": (int, True),
    },
    "converge": {
        "schemes": (list, True), "h": (list, True), "h_ref": (_NUM, True),
        "t0": (_NUM, True), "T": (_NUM, True), "samples": (int, True),
        "xi": (_NUM, True), "gamma": (_NUM, True),
        "reference": (str, True), "oracle_b": (_NUM, False),
        "error_time": (str, False),
    },
    "validate": {
        "h": (_NUM, True), "gamma": (_NUM, False), "q": (_NUM, False),
        "p_star": (_NUM, False), "n": (int, False), "radius": (_NUM, False),
    },
}

_TOP_SCHEMA = {
    "command": (str, True),
    "problem": (str, True),
    "problem_params": (dict, False),
    "seed": (int, True),
    "out": (str, False),
}


def _check_block(block, schema, prefix, violations):
    for key in block:
        if key not in schema:
            violations.append(f"unknown key {prefix}{key!r}")
    for key, (types, required) in schema.items():
        if key not in block:
            if required:
                violations.append(f"missing required key {prefix}{key!r}")
            continue
        val = block[key]
        if isinstance(val, bool) or not isinstance(val, types):
            violations.append(f"{prefix}{key!r} has wrong type {type(val).__name__}")


def parse_config(text):
    """Parse and validate a JSON experiment config; raises ConfigError with
    every violation found, not just the first."""
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"JSON syntax error at line {exc.lineno} column {exc.colno}: {exc.msg}"])
    violations = []
    if not isinstance(cfg, dict):
        raise ConfigError(["top-level config must be a JSON object"])

    command = cfg.get("command")
    if command not in _COMMANDS:
        violations.append(f"'command' must be one of {list(_COMMANDS)}, got {command!r}")
        raise ConfigError(violations)

    schema = dict(_TOP_SCHEMA)
    schema[command] = (dict, True)
    _check_block(cfg, schema, "", violations)

    block = cfg.get(command)
    if isinstance(block, dict):
        _check_block(block, _BLOCK_SCHEMAS[command], f"{command}.", violations)

    if cfg.get("problem") is not None and cfg["problem"] not in REGISTRY:
        violations.append(f"unknown problem label {cfg['problem']!r}")

    # semantic checks that need the problem
    if not violations:
        problem = get_problem(cfg["problem"], **cfg.get("problem_params", {}))
        if command in ("pullback", "periodicity", "coupling"):
            h = block["h"]
            n = problem.tau / h
            if abs(n - round(n)) > 1e-9 * max(round(n), 1):
                violations.append(
                    f"period tau={problem.tau} is not an integer multiple of h={h}")
        if command == "converge":
            for h in block["h"]:
                f = h / block["h_ref"]
                if abs(f - round(f)) > 1e-9 * max(round(f), 1):
                    violations.append(f"h={h} is not an integer multiple of h_ref={block['h_ref']}")
    if violations:
        raise ConfigError(violations)
    return cfg


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_manifest(out_dir, cfg, seed, threads):
    manifest = {
        "config": cfg,
        "config_sha256": hashlib.sha256(
            json.dumps(cfg, sort_keys=True).encode()).hexdigest(),
        "seed": seed,
        "threads_note": "thread count affects speed only, never results",
        "backend": active_backend(),
        "package_version": __version__,
        "numpy_version": np.__version__,
    }
    with open(Path(out_dir) / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _plot(out_path, draw):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6, 4))
    draw(ax)
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _run_simulate(problem, block, seed, out_dir, threads):
    config = SchemeConfig(kind=block["kind"], h=block["h"], gamma=block["gamma"])
    grid = sample_grid(seed, block["t0"], block["T"], block["h"], m=problem.m)
    traj = simulate(problem, config, grid.view(), block["xi"],
                    store_stride=block.get("stride"))
    rows = [(float(t), float(v[0])) for t, v in zip(traj.times, traj.values)]
    _write_csv(Path(out_dir) / "trajectory.csv", ["t", "x"], rows)
    _plot(Path(out_dir) / "trajectory.svg",
          lambda ax: (ax.plot(traj.times, traj.values[:, 0]),
                      ax.set_xlabel("t"), ax.set_ylabel("x")))
    return 0


def _run_pullback(problem, block, seed, out_dir, threads):
    scheme = SchemeConfig(kind=block["kind"], h=block["h"], gamma=block["gamma"])
    xi = block["xi"]
    xi_list = xi if isinstance(xi, list) else [xi]
    cfg = PullbackConfig(problem=problem, scheme=scheme, k_list=block["k_list"],
                         t_lo=block["t_lo"], t_hi=block["t_hi"],
                         xi_list=xi_list, master_seed=seed)
    report = pullback_limit(cfg, block["samples"], threads=threads)
    rows = []
    for a, k in enumerate(report.k_list):
        for t, mean, var in zip(report.window_times, report.window_mean[a],
                                report.window_var[a]):
            rows.append((k, float(t), float(mean), float(var)))
    _write_csv(Path(out_dir) / "pullback.csv", ["k", "t", "value_mean", "value_var"], rows)
    _write_csv(Path(out_dir) / "pullback_dk.csv", ["k_lo", "k_hi", "d", "d_se"],
               [(report.k_list[a], report.k_list[a + 1], float(report.cauchy[a]),
                 float(report.cauchy_se[a])) for a in range(len(report.k_list) - 1)])

    def draw(ax):
        for a, k in enumerate(report.k_list):
            ax.plot(report.window_times, report.window_mean[a], label=f"k={k}")
        ax.set_xlabel("t")
        ax.set_ylabel("mean state")
        ax.legend()

    _plot(Path(out_dir) / "pullback.svg", draw)
    return 0


def _run_periodicity(problem, block, seed, out_dir, threads):
    scheme = SchemeConfig(kind=block["kind"], h=block["h"], gamma=block["gamma"])
    k = block["k"]
    cfg = PullbackConfig(problem=problem, scheme=scheme, k_list=[k],
                         t_lo=block["t_lo"], t_hi=block["t_hi"],
                         xi_list=[block["xi"]], master_seed=seed)
    report = periodicity_check(cfg, block["samples"], shifts=block.get("shifts", 1),
                               threads=threads)
    rows = [(float(t), float(o), float(s), float(r))
            for t, o, s, r in zip(report.times, report.original_mean,
                                  report.shifted_mean, report.residual_per_t)]
    _write_csv(Path(out_dir) / "periodicity.csv", ["t", "original", "shifted", "residual"], rows)

    def draw(ax):
        ax.plot(report.times, report.original_mean, label="window")
        ax.plot(report.times, report.shifted_mean, "--", label="shifted window")
        ax.set_xlabel("t")
        ax.legend()

    _plot(Path(out_dir) / "periodicity.svg", draw)
    return 0


def _run_coupling(problem, block, seed, out_dir, threads):
    scheme = SchemeConfig(kind=block["kind"], h=block["h"], gamma=block["gamma"])
    cfg = PullbackConfig(problem=problem, scheme=scheme, k_list=[block["k"]],
                         t_lo=block["t_hi"] - scheme.h, t_hi=block["t_hi"],
                         xi_list=[block["xi"]], master_seed=seed)
    report = initial_condition_coupling(cfg, block["xi"], block["eta"],
                                        block["samples"], threads=threads)
    rows = [(float(t), float(v)) for t, v in zip(report.times, report.msq)]
    _write_csv(Path(out_dir) / "coupling.csv", ["t", "msq_diff"], rows)

    def draw(ax):
        pos = report.msq > 0
        ax.semilogy(report.times[pos], report.msq[pos])
        ax.set_xlabel("t")
        ax.set_ylabel("mean-square difference")

    _plot(Path(out_dir) / "coupling.svg", draw)
    return 0


def _run_converge(problem, block, seed, out_dir, threads):
    study = ConvergenceStudy(
        problem=problem, scheme_kinds=block["schemes"], h_list=block["h"],
        h_ref=block["h_ref"], t0=block["t0"], T=block["T"],
        samples=block["samples"], master_seed=seed, xi=block["xi"],
        gamma=block["gamma"], reference=block["reference"],
        oracle_b=block.get("oracle_b", 0.0),
        error_time=block.get("error_time", "endpoint"),
    )
    table = run_study(study, threads=threads)
    _write_csv(Path(out_dir) / "errors.csv", ["scheme", "h", "e_h", "stderr", "failures"],
               [(r.scheme, float(r.h), float(r.e_h), float(r.stderr), r.failures)
                for r in table.rows])
    fits = slope_fit(table, include_failed=True)
    _write_csv(Path(out_dir) / "slope.csv", ["scheme", "slope", "ci_lo", "ci_hi"],
               [(f.scheme, float(f.slope), float(f.ci[0]), float(f.ci[1]))
                for f in fits.values()])

    def draw(ax):
        for kind in study.scheme_kinds:
            rows = table.rows_for(kind)
            ax.loglog([r.h for r in rows], [r.e_h for r in rows], "o-", label=kind)
        hs = np.array(sorted(block["h"]))
        anchor = min(r.e_h for r in table.rows if r.e_h > 0)
        ax.loglog(hs, anchor * (hs / hs[0]), "k--", lw=0.8, label="slope 1")
        ax.loglog(hs, anchor * np.sqrt(hs / hs[0]), "k:", lw=0.8, label="slope 1/2")
        ax.set_xlabel("h")
        ax.set_ylabel("e_h")
        ax.legend()

    _plot(Path(out_dir) / "errors.svg", draw)
    return 0


def _run_validate(problem, block, seed, out_dir, threads):
    n = block.get("n", 10**5)
    radius = block.get("radius", 10.0)
    q = block.get("q", 1.0)
    gamma = block.get("gamma", problem.gamma)
    h = block["h"]
    mono = estimate_monotonicity_constant(problem, q=q, n=n, radius=radius, seed=seed)
    coer = estimate_coercivity_constant(problem, p_star=block.get("p_star"),
                                       n=n, radius=radius, seed=seed)
    beta_f, beta_L = estimate_beta(problem, h, gamma=gamma, n=min(n, 10**4),
                                   radius=radius, seed=seed)
    window = admissible_stepsize(StepBoundParams(
        lambda_1=problem.linear.lambda_1, lambda_d=problem.linear.lambda_d,
        K2=mono.K2_hat, beta_f=beta_f, beta_L=beta_L, gamma=gamma, q=q,
    ))
    quantities = [
        ("lambda_1", problem.linear.lambda_1),
        ("lambda_d", problem.linear.lambda_d),
        ("K1_hat", coer.K1_hat),
        ("K2_hat", mono.K2_hat),
        ("beta_f_hat", beta_f),
        ("beta_L_hat", beta_L),
        ("h_max_advisory", window.h_max),
        ("window_vacuous", int(window.vacuous)),
    ]
    for name, value in quantities:
        print(f"{name} = {value}")
    if not window.vacuous and h > window.h_max:
        print(f"warning: h={h} exceeds the advisory window h_max={window.h_max}")
    elif window.vacuous:
        print("warning: the advisory stepsize window is vacuous for the estimated constants")
    _write_csv(Path(out_dir) / "validate.csv", ["quantity", "value"],
               [(name, float(value)) for name, value in quantities])
    return 0


_RUNNERS = {
    "simulate": _run_simulate,
    "pullback": _run_pullback,
    "periodicity": _run_periodicity,
    "coupling": _run_coupling,
    "converge": _run_converge,
    "validate": _run_validate,
}


def run(cfg, out_dir=None, seed=None, threads=1):
    """Execute a parsed config; returns the process exit status."""
    command = cfg["command"]
    seed = cfg["seed"] if seed is None else seed
    out_dir = cfg.get("out", ".") if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    problem = get_problem(cfg["problem"], **cfg.get("problem_params", {}))
    try:
        status = _RUNNERS[command](problem, cfg[command], seed, out_dir, threads)
    except ExperimentError as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 2
    _write_manifest(out_dir, cfg, seed, threads)
    return status


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="rps-sim",
        description="Projected Milstein experiments for random periodic solutions of SDEs",
    )
    parser.add_argument("--config", required=True, help="path to a JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (speed only; results are identical)")
    args = parser.parse_args(argv)

    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("RPS_SIM_THREADS", "1"))

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return 1
    try:
        return run(cfg, out_dir=args.out, seed=args.seed, threads=threads)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
