"""Command-line entry point: simulate, sweep, refine, lowerbound.

Configuration comes from an optional flat key=value file plus flags, flags
winning; the effective configuration is echoed to output_dir/config.resolved
so any run can be reproduced exactly from its own artifacts. All tabular
output is CSV; a plain-text report carries invariant checks and fit lines.

Exit codes: 0 success, 2 configuration error, 3 invariant violation,
4 refinement solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .driver import (
    MODES,
    REPORT_COLUMNS,
    RunConfig,
    evaluate_report,
    report_rows,
    run_trials,
    summary_columns,
    summary_rows,
)
from .lowerbound import (
    build_instance,
    new_task_angle_stats,
    sample_complexity_ledger,
)
from .refinement import dump_solution, refine

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_SOLVER = 4

ENV_OUTPUT_DIR = "LLLSIM_OUTPUT_DIR"


class CliError(Exception):
    """A configuration problem; maps to exit code 2."""


class MissingKeyError(CliError):
    """Required key absent from both config file and flags."""


def _cast(key: str, val: str, typ):
    try:
        if typ is bool:
            low = val.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {val!r}")
        return typ(val)
    except ValueError as exc:
        raise CliError(f"bad value for {key!r}: {exc}") from exc


def _read_config_file(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from exc
    values = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise CliError(f"{path}:{ln}: expected key=value, got {raw!r}")
        key, val = key.strip(), val.strip()
        if key in values:
            raise CliError(f"{path}:{ln}: duplicate key {key!r}")
        values[key] = val
    return values


def _resolve(args: argparse.Namespace, keys: dict) -> dict:
    """File values under flag overrides, every key checked and typed."""
    merged = {}
    if getattr(args, "config", None) is not None:
        for key, val in _read_config_file(args.config).items():
            if key not in keys:
                raise CliError(f"unknown config key {key!r}")
            merged[key] = _cast(key, val, keys[key])
    for key in keys:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            merged[key] = flag_val
    return merged


def _require(merged: dict, *names: str) -> None:
    missing = [n for n in names if n not in merged]
    if missing:
        raise MissingKeyError("missing required key(s): " + ", ".join(missing))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(float(v))  # builtin repr round-trips; numpy repr does not
    return str(v)


def _output_dir(merged: dict) -> Path:
    name = merged.get("output_dir") or os.environ.get(ENV_OUTPUT_DIR) or "lllsim-out"
    out = Path(name)
    out.mkdir(parents=True, exist_ok=True)
    merged["output_dir"] = str(out)
    return out


def _echo_config(out_dir: Path, merged: dict) -> None:
    lines = [f"{key}={_fmt(merged[key])}" for key in sorted(merged)]
    (out_dir / "config.resolved").write_text("\n".join(lines) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


_RUN_KEYS = {
    "d": int,
    "k": int,
    "m": int,
    "N": int,
    "epsilon": float,
    "epsilon_acc": float,
    "acc_constant": float,
    "c_s": float,
    "seed": int,
    "trials": int,
    "mode": str,
    "check_mode": str,
    "refine_every": str,
    "r_max": int,
    "sdp_tol": float,
    "sdp_max_iters": int,
}
_COMMON_KEYS = {"output_dir": str, "jobs": int}
_SWEEP_KEYS = {"d_grid": str, "epsilon_grid": str}

_CONFIG_FIELDS = (
    "d",
    "k",
    "m",
    "N",
    "epsilon",
    "epsilon_acc",
    "acc_constant",
    "c_s",
    "seed",
    "trials",
    "check_mode",
    "refine_every",
    "r_max",
    "sdp_tol",
    "sdp_max_iters",
)


def _base_config(merged: dict, mode: str) -> RunConfig:
    kwargs = {k: merged[k] for k in _CONFIG_FIELDS if k in merged}
    try:
        return RunConfig(mode=mode, **kwargs)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _echoable(merged: dict, cfg: RunConfig, mode: str) -> dict:
    out = dict(merged)
    for key in _CONFIG_FIELDS:
        val = getattr(cfg, key)
        if val is not None:
            out[key] = val
    out["mode"] = mode
    out.setdefault("jobs", 1)
    return out


def _check_invariants(cfg: RunConfig, reports) -> list:
    """Structural per-run checks; returns problem descriptions."""
    problems = []
    for i, r in enumerate(reports):
        tag = f"{cfg.mode} trial {i}"
        if int(r.samples_cum_curve[-1]) != r.samples_total:
            problems.append(f"{tag}: cumulative samples disagree with total")
        if (
            cfg.mode in ("basic", "rr")
            and cfg.check_mode == "oracle"
            and not r.error_contract_ok
        ):
            problems.append(f"{tag}: per-task error above epsilon")
        if cfg.mode == "basic" and np.any(np.diff(r.feature_dim_curve) < 0):
            problems.append(f"{tag}: feature dimension decreased")
        if cfg.mode == "rr":
            cap = 2 * cfg.k - 1
            if cfg.refine_every == "threshold":
                cap = max(cap, cfg.r_max)
            if int(r.feature_dim_curve.max()) > cap:
                problems.append(f"{tag}: feature dimension exceeded {cap}")
    return problems


def _mode_report_lines(cfg: RunConfig, reports, problems) -> list:
    n = len(reports)
    final_acc = [float(r.accuracy_curve[-1]) for r in reports]
    final_min = [float(r.min_accuracy_curve[-1]) for r in reports]
    final_dim = [int(r.feature_dim_curve[-1]) for r in reports]
    final_ang = [float(r.angle_curve[-1]) for r in reports]
    events = [len(r.new_feature_events) for r in reports]
    trend = sum(1 for r in reports if r.angle_curve[-1] <= r.angle_curve[0])
    conv = sum(1 for r in reports if r.refinement_converged)
    lines = [
        f"[{cfg.mode}] trials={n}",
        f"  new-feature events: mean={np.mean(events):.2f} max={max(events)}",
        f"  final feature dim: mean={np.mean(final_dim):.2f} max={max(final_dim)}",
        f"  final avg accuracy: mean={np.mean(final_acc):.4f} min={min(final_acc):.4f}",
        f"  final min accuracy: min={min(final_min):.4f}",
        f"  final subspace angle: mean={np.mean(final_ang):.4f}",
        f"  samples_total: mean={np.mean([r.samples_total for r in reports]):.1f}",
        f"  angle final<=initial: {trend}/{n} trials",
        f"  refinement converged: {conv}/{n} trials",
        f"  wall time: {sum(r.wall_time for r in reports):.2f} s",
        "  invariants: " + ("PASS" if not problems else "FAIL"),
    ]
    lines.extend(f"    {p}" for p in problems)
    return lines


def _cmd_simulate(args: argparse.Namespace) -> int:
    merged = _resolve(args, {**_RUN_KEYS, **_COMMON_KEYS})
    _require(merged, "d", "k", "m")
    mode_req = merged.get("mode", "basic")
    if mode_req not in MODES + ("all",):
        raise CliError(f"mode must be one of {MODES + ('all',)}, got {mode_req!r}")
    jobs = merged.get("jobs", 1)
    out_dir = _output_dir(merged)
    base = _base_config(merged, mode="basic")
    modes = MODES if mode_req == "all" else (mode_req,)

    all_rows = []
    report_lines = []
    problems = []
    converged = True
    for mode in modes:
        cfg = replace(base, mode=mode)
        try:
            reports = run_trials(cfg, jobs=jobs)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
        for trial, rep in enumerate(reports):
            all_rows.extend(report_rows(rep, trial))
        table = evaluate_report(reports)
        _write_csv(
            out_dir / f"summary_{mode}.csv", summary_columns(table), summary_rows(table)
        )
        mode_problems = _check_invariants(cfg, reports)
        problems.extend(mode_problems)
        converged = converged and all(r.refinement_converged for r in reports)
        report_lines.extend(_mode_report_lines(cfg, reports, mode_problems))

    _write_csv(out_dir / "runs.csv", REPORT_COLUMNS, all_rows)
    _echo_config(out_dir, _echoable(merged, base, mode_req))

    if problems:
        code = EXIT_INVARIANT
    elif not converged:
        code = EXIT_SOLVER
    else:
        code = EXIT_OK
    report_lines.append(f"exit code: {code}")
    (out_dir / "report.txt").write_text("\n".join(report_lines) + "\n")
    print("\n".join(report_lines))
    return code


def _parse_grid(text: str, typ, name: str) -> list:
    vals = [v for v in (piece.strip() for piece in text.split(",")) if v]
    if not vals:
        raise CliError(f"{name} is empty")
    return [_cast(name, v, typ) for v in vals]


def _fit_line(xs, ys) -> tuple:
    slope, intercept = np.polyfit(np.asarray(xs, float), np.asarray(ys, float), 1)
    pred = slope * np.asarray(xs, float) + intercept
    resid = np.asarray(ys, float) - pred
    total = np.asarray(ys, float) - np.mean(ys)
    ss_tot = float(total @ total)
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _cmd_sweep(args: argparse.Namespace) -> int:
    merged = _resolve(args, {**_RUN_KEYS, **_COMMON_KEYS, **_SWEEP_KEYS})
    _require(merged, "k", "m")
    mode = merged.get("mode", "basic")
    if mode not in MODES:
        raise CliError(f"sweep mode must be one of {MODES}, got {mode!r}")
    d_grid = (
        _parse_grid(merged["d_grid"], int, "d_grid") if "d_grid" in merged else []
    )
    eps_grid = (
        _parse_grid(merged["epsilon_grid"], float, "epsilon_grid")
        if "epsilon_grid" in merged
        else []
    )
    if not d_grid and not eps_grid:
        raise CliError("sweep needs d_grid and/or epsilon_grid")
    if eps_grid and "d" not in merged:
        raise CliError("epsilon_grid sweep needs d")
    jobs = merged.get("jobs", 1)
    out_dir = _output_dir(merged)

    rows = []
    lines = []
    problems = []
    converged = True

    def run_point(cfg: RunConfig) -> float:
        nonlocal converged
        try:
            reports = run_trials(cfg, jobs=jobs)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
        problems.extend(_check_invariants(cfg, reports))
        converged = converged and all(r.refinement_converged for r in reports)
        totals = [r.samples_total for r in reports]
        return float(np.mean(totals)), float(np.std(totals))

    base_merged = dict(merged)
    if d_grid:
        means = []
        for d in d_grid:
            point = dict(base_merged, d=d)
            cfg = _base_config(point, mode=mode)
            mean, std = run_point(cfg)
            means.append(mean)
            rows.append(["d", d, cfg.trials, mean, std])
        if len(d_grid) >= 2:
            slope, intercept, r2 = _fit_line(d_grid, means)
            lines.append(
                f"fit samples_total ~ slope*d + b: slope={slope:.2f} "
                f"intercept={intercept:.1f} R2={r2:.6f}"
            )
        else:
            lines.append("d fit skipped (single grid point)")
    if eps_grid:
        emeans = []
        for eps in eps_grid:
            point = dict(base_merged, epsilon=eps)
            point.pop("epsilon_acc", None)  # rescale with each grid point
            cfg = _base_config(point, mode=mode)
            mean, std = run_point(cfg)
            emeans.append(mean)
            rows.append(["epsilon", eps, cfg.trials, mean, std])
        if len(eps_grid) >= 2:
            slope, intercept, r2 = _fit_line([1.0 / e for e in eps_grid], emeans)
            lines.append(
                f"fit samples_total ~ slope/epsilon + b: slope={slope:.2f} "
                f"intercept={intercept:.1f} R2={r2:.6f}"
            )
            order = np.argsort(eps_grid)[::-1]  # decreasing epsilon
            sorted_means = np.asarray(emeans)[order]
            mono = bool(np.all(np.diff(sorted_means) > 0))
            lines.append(
                "samples_total increases as epsilon decreases: "
                + ("yes" if mono else "no")
            )
        else:
            lines.append("epsilon fit skipped (single grid point)")

    _write_csv(
        out_dir / "sweep.csv",
        ("axis", "value", "trials", "mean_samples_total", "std_samples_total"),
        rows,
    )
    echo = dict(merged)
    if d_grid:
        echo["d_grid"] = ",".join(str(d) for d in d_grid)
    if eps_grid:
        echo["epsilon_grid"] = ",".join(repr(e) for e in eps_grid)
    echo.setdefault("jobs", 1)
    echo["mode"] = mode
    _echo_config(out_dir, echo)

    if problems:
        code = EXIT_INVARIANT
    elif not converged:
        code = EXIT_SOLVER
    else:
        code = EXIT_OK
    lines.extend(["invariants: " + ("PASS" if not problems else "FAIL")])
    lines.extend(f"  {p}" for p in problems)
    lines.append(f"exit code: {code}")
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return code


_REFINE_KEYS = {
    "input": str,
    "k": int,
    "tol": float,
    "max_iters": int,
    "c": int,
    "trim": bool,
    "eps_acc": float,
    "dump": str,
}


def _cmd_refine(args: argparse.Namespace) -> int:
    merged = _resolve(args, {**_REFINE_KEYS, **{"output_dir": str}})
    _require(merged, "input", "k")
    out_dir = _output_dir(merged)
    try:
        W = np.loadtxt(merged["input"], ndmin=2)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot parse feature file {merged['input']}: {exc}") from exc
    if W.size == 0:
        raise CliError("feature file is empty")
    if not np.all(np.isfinite(W)):
        raise CliError("feature file contains non-finite values")
    n, d = W.shape
    k = merged["k"]
    if not (1 <= k < d):
        raise CliError(f"need 1 <= k < d, got k={k}, d={d}")
    norms = np.linalg.norm(W, axis=1)
    if np.any(norms < 1e-12):
        raise CliError("feature file contains a zero row")
    off = np.abs(norms - 1.0) > 1e-8
    if np.any(off):
        print(
            f"warning: normalized {int(off.sum())} non-unit feature rows",
            file=sys.stderr,
        )
        W = W / norms[:, None]

    V, cert, sol = refine(
        list(W),
        k,
        eps_acc=merged.get("eps_acc", 1.0),
        c=merged.get("c", 2),
        tol=merged.get("tol", 1e-4),
        max_iters=merged.get("max_iters"),
        trim=merged.get("trim", True),
        full_output=True,
    )
    basis_path = out_dir / "refined_basis.txt"
    np.savetxt(basis_path, V.basis.T, fmt="%.17g")
    if "dump" in merged:
        dump_path = Path(merged["dump"])
        if not dump_path.is_absolute():
            dump_path = out_dir / dump_path
        dump_solution(sol, dump_path)
    _echo_config(out_dir, merged)

    lines = [
        f"t_star={sol.t:.6f}",
        f"gap={sol.gap:.6g}",
        f"iterations={sol.iterations}",
        f"converged={'yes' if sol.converged else 'no'}",
        f"rounded_dim={cert.dims}",
        f"max_distance={cert.max_distance:.6f}",
        f"approx_bound={cert.approx_bound:.6f}",
        f"basis_file={basis_path}",
    ]
    print("\n".join(lines))
    return EXIT_OK


_LB_KEYS = {
    "k": int,
    "eps": float,
    "eps_vector": str,
    "eps_target": float,
    "n_random": int,
    "trials": int,
    "subset": str,
    "seed": int,
}


def _cmd_lowerbound(args: argparse.Namespace) -> int:
    merged = _resolve(args, {**_LB_KEYS, **{"output_dir": str}})
    _require(merged, "k")
    k = merged["k"]
    out_dir = _output_dir(merged)
    if "eps_vector" in merged:
        eps_vec = _parse_grid(merged["eps_vector"], float, "eps_vector")
        if len(eps_vec) != k:
            raise CliError(f"eps_vector must have {k} entries")
    else:
        eps_vec = [merged.get("eps", 0.1)] * k
    subset = (
        _parse_grid(merged["subset"], int, "subset") if "subset" in merged else None
    )
    n_random = merged.get("n_random", 0)
    trials = merged.get("trials")
    if trials is None and n_random == 0:
        trials = 200  # sensible default sample of fresh combination tasks
    try:
        instance = build_instance(k, n_random, merged.get("seed", 0), eps_vec, subset=subset)
        stats = new_task_angle_stats(instance, trials=trials)
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    _write_csv(
        out_dir / "angles.csv",
        ("task_index", "angle", "threshold", "exceeds"),
        [
            [i, float(a), float(stats.threshold), int(a >= stats.threshold)]
            for i, a in enumerate(stats.angles)
        ],
    )

    eps_target = merged.get("eps_target", 0.1)
    uniform = [eps_target / math.sqrt(k)] * k
    ledger_rows = []
    for name, alloc in (("instance", eps_vec), ("uniform", uniform)):
        rep = sample_complexity_ledger(instance, eps_target, alloc)
        ledger_rows.append(
            [
                name,
                float(rep.basis_cost),
                float(rep.new_task_cost),
                float(rep.total),
                int(rep.feasible),
                float(rep.holder_bound),
                int(rep.holder_ok),
            ]
        )
    _write_csv(
        out_dir / "ledger.csv",
        (
            "allocation",
            "basis_cost",
            "new_task_cost",
            "total",
            "feasible",
            "holder_bound",
            "holder_ok",
        ),
        ledger_rows,
    )
    _echo_config(out_dir, merged)

    lines = [
        f"tasks={stats.angles.size}",
        f"threshold={stats.threshold:.6f}",
        f"fraction_exceeding={stats.fraction_exceeding:.4f}",
        f"bound={stats.bound:.4f}",
    ]
    print("\n".join(lines))
    return EXIT_OK


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key=value config file")
    sub.add_argument("-o", "--output-dir", dest="output_dir", help="artifact directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lllsim",
        description="Lifelong learning of linear representations: simulator and analysis tools",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="run lifelong-learning trials")
    _add_common(sim)
    sim.add_argument("--d", type=int)
    sim.add_argument("--k", type=int)
    sim.add_argument("--m", type=int)
    sim.add_argument("--N", type=int)
    sim.add_argument("--epsilon", type=float)
    sim.add_argument("--epsilon-acc", dest="epsilon_acc", type=float)
    sim.add_argument("--acc-constant", dest="acc_constant", type=float)
    sim.add_argument("--c-s", dest="c_s", type=float)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--trials", type=int)
    sim.add_argument("--mode", choices=MODES + ("all",))
    sim.add_argument("--check-mode", dest="check_mode", choices=("oracle", "montecarlo"))
    sim.add_argument(
        "--refine-every", dest="refine_every", choices=("on_new_feature", "threshold")
    )
    sim.add_argument("--r-max", dest="r_max", type=int)
    sim.add_argument("--sdp-tol", dest="sdp_tol", type=float)
    sim.add_argument("--sdp-max-iters", dest="sdp_max_iters", type=int)
    sim.add_argument("--jobs", type=int)
    sim.set_defaults(func=_cmd_simulate, parser=sim)

    sw = subs.add_parser("sweep", help="sample-complexity scaling sweeps")
    _add_common(sw)
    sw.add_argument("--d-grid", dest="d_grid", help="comma-separated dimensions")
    sw.add_argument(
        "--epsilon-grid", dest="epsilon_grid", help="comma-separated accuracies"
    )
    sw.add_argument("--d", type=int)
    sw.add_argument("--k", type=int)
    sw.add_argument("--m", type=int)
    sw.add_argument("--N", type=int)
    sw.add_argument("--epsilon", type=float)
    sw.add_argument("--seed", type=int)
    sw.add_argument("--trials", type=int)
    sw.add_argument("--mode", choices=MODES)
    sw.add_argument("--acc-constant", dest="acc_constant", type=float)
    sw.add_argument("--c-s", dest="c_s", type=float)
    sw.add_argument("--jobs", type=int)
    sw.set_defaults(func=_cmd_sweep, parser=sw)

    rf = subs.add_parser("refine", help="run the refinement solver on a feature file")
    _add_common(rf)
    rf.add_argument("--input", help="one whitespace-separated vector per line")
    rf.add_argument("--k", type=int)
    rf.add_argument("--tol", type=float)
    rf.add_argument("--max-iters", dest="max_iters", type=int)
    rf.add_argument("--c", type=int)
    rf.add_argument("--no-trim", dest="trim", action="store_false", default=None)
    rf.add_argument("--eps-acc", dest="eps_acc", type=float)
    rf.add_argument("--dump", help="write a solver state dump to this file")
    rf.set_defaults(func=_cmd_refine, parser=rf)

    lb = subs.add_parser("lowerbound", help="adversarial lower-bound harness")
    _add_common(lb)
    lb.add_argument("--k", type=int)
    lb.add_argument("--eps", type=float, help="equal per-coordinate accuracy")
    lb.add_argument(
        "--eps-vector", dest="eps_vector", help="comma-separated per-coordinate accuracies"
    )
    lb.add_argument("--eps-target", dest="eps_target", type=float)
    lb.add_argument("--n-random", dest="n_random", type=int)
    lb.add_argument("--trials", type=int)
    lb.add_argument("--subset", help="comma-separated coordinate subset")
    lb.add_argument("--seed", type=int)
    lb.set_defaults(func=_cmd_lowerbound, parser=lb)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MissingKeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        getattr(args, "parser", parser).print_usage(sys.stderr)
        return EXIT_CONFIG
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
