"""Command line front end: ``myopic run``, ``myopic bounds`` and ``myopic sweep``.

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from decimal import ROUND_DOWN, ROUND_HALF_EVEN, Decimal
from pathlib import Path

import numpy as np

from .analysis import (
    BoundInputs,
    epsilon_for_budget,
    first_bad_time,
    oracle_gap_trace,
    reach_time,
    select_parameters,
    suboptimality_bound,
)
from .config import SWEEP_PARAMS, ConfigError, ExperimentConfig, UnknownNameError, load_config
from .controller import ControllerDivergence, run_controller

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4


def fmt17(x) -> str:
    return f"{float(x):.17g}"


def sig6(x: float) -> float:
    """Round to 6 significant digits for human-facing summaries."""
    return float(f"{x:.6g}") if math.isfinite(x) else x


def fixed6(x: float, rounding=ROUND_HALF_EVEN) -> str:
    """Six significant digits in plain decimal notation, trailing zeros dropped."""
    d = Decimal(repr(float(x)))
    if d == 0:
        return "0"
    q = d.quantize(Decimal(1).scaleb(d.adjusted() - 5), rounding=rounding)
    text = format(q, "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text


# ---------------------------------------------------------------------------
# running one experiment


@dataclass
class RunResult:
    status: str
    exit_code: int
    summary: dict


def _write_trajectory(path, traj, stride):
    n, m = traj.states.shape[1], traj.controls.shape[1]
    idx = np.arange(0, len(traj), stride)
    if idx[-1] != len(traj) - 1:
        idx = np.append(idx, len(traj) - 1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)])
        for k in idx:
            w.writerow([fmt17(traj.times[k])] + [fmt17(v) for v in traj.states[k]] + [fmt17(v) for v in traj.controls[k]])


def _write_cycles(path, records, space, n, m, gaps=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["cycle", "t0"] + [f"x_anchor{i + 1}" for i in range(n)] + [f"u_star{i + 1}" for i in range(m)]
        header.append("goodness")
        if gaps is not None:
            header.append("gap")
        w.writerow(header)
        for i, rec in enumerate(records):
            row = [str(rec.cycle_index), fmt17(rec.anchor_time)]
            row += [fmt17(v) for v in rec.anchor_state]
            row += [fmt17(v) for v in space.denormalize(rec.chosen_control)]
            row.append(fmt17(rec.chosen_goodness))
            if gaps is not None:
                row.append(fmt17(gaps[i]))
            w.writerow(row)


def _bound_for(cfg: ExperimentConfig):
    L = cfg.lipschitz if cfg.lipschitz is not None else cfg.goodness.lipschitz
    M0, M1 = cfg.plant.bound_norm, cfg.plant.bound_lipschitz
    if cfg.cycle.decoupled or L is None or not (math.isfinite(M0) and math.isfinite(M1)):
        return None
    return suboptimality_bound(BoundInputs(L, M0, M1, cfg.plant.input_dim, cfg.cycle.epsilon, cfg.cycle.delta))


def settling_metrics(traj) -> dict:
    """Per-state max |x_i| and range over the second half of the run."""
    late = traj.states[traj.times >= traj.times[0] + 0.5 * traj.duration]
    out = {}
    for i in range(late.shape[1]):
        out[f"late_max_abs_x{i + 1}"] = float(np.max(np.abs(late[:, i])))
        out[f"late_range_x{i + 1}"] = float(np.ptp(late[:, i]))
    return out


def _summarize(cfg, traj, records, status, gaps=None, bound=None, tol=None):
    summary = {
        "config": cfg.name,
        "status": status,
        "seed": cfg.seed,
        "mode": "decoupled" if cfg.cycle.decoupled else "coupled",
        "epsilon": cfg.cycle.epsilon,
        "delta": cfg.cycle.delta,
        "learn_window": cfg.cycle.learn_window,
        "cycle_period": cfg.cycle.cycle_period,
        "t_end": cfg.t_end,
        "final_time": traj.final_time,
        "final_state": traj.final_state.tolist(),
        "cycles": len(records),
    }
    summary.update(settling_metrics(traj))
    for name in cfg.first_bad_time:
        summary[f"first_bad_time[{name}]"] = first_bad_time(traj, cfg.regions[name])
    for name in cfg.reach_time:
        summary[f"reach_time[{name}]"] = reach_time(traj, cfg.regions[name])
    if gaps is not None:
        summary["max_gap"] = float(gaps.max()) if gaps.size else 0.0
        summary["min_gap"] = float(gaps.min()) if gaps.size else 0.0
        summary["oracle_tolerance"] = tol
    if bound is not None:
        summary["suboptimality_bound"] = bound
    return summary


def _round_summary(obj):
    if isinstance(obj, float):
        return sig6(obj)
    if isinstance(obj, list):
        return [_round_summary(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _round_summary(v) for k, v in obj.items()}
    return obj


def execute(cfg: ExperimentConfig, out_dir: Path) -> RunResult:
    """Run one configured experiment and write its three output files."""
    status, code = "ok", EXIT_OK
    try:
        traj, records = run_controller(cfg.plant, cfg.x0, cfg.goodness, cfg.cycle, cfg.t_end, cfg.space)
    except ControllerDivergence as err:
        traj, records = err.trajectory, err.records
        status, code = f"diverged at t={sig6(err.time)}", EXIT_DIVERGED
    gaps = bound = tol = None
    if cfg.gap_trace and records:
        bound = _bound_for(cfg)
        trace = oracle_gap_trace(cfg.plant, records, traj, cfg.goodness, cfg.oracle_grid, cfg.space, bound,
                                 delta=None if cfg.cycle.decoupled else cfg.cycle.delta)
        gaps, tol = trace.gaps, trace.tolerance
    summary = _summarize(cfg, traj, records, status, gaps, bound, tol)

    out_dir.mkdir(parents=True, exist_ok=True)
    _write_trajectory(out_dir / cfg.trajectory_file, traj, cfg.stride)
    _write_cycles(out_dir / cfg.cycles_file, records, cfg.space, cfg.plant.state_dim, cfg.plant.input_dim, gaps)
    with open(out_dir / cfg.summary_file, "w") as fh:
        json.dump(_round_summary(summary), fh, indent=2)
        fh.write("\n")
    return RunResult(status, code, summary)


def _load(path, overrides):
    """``(config, None)`` or ``(None, exit_code)`` with the error printed."""
    try:
        return load_config(path, overrides), None
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return None, EXIT_IO
    except UnknownNameError as err:
        print(f"error: unknown name: {err}", file=sys.stderr)
        return None, EXIT_CONFIG
    except ConfigError as err:
        print(f"error: invalid config: {err}", file=sys.stderr)
        return None, EXIT_CONFIG
    except OSError as err:
        print(f"error: cannot read config: {err}", file=sys.stderr)
        return None, EXIT_IO


def cmd_run(config_path, overrides=None, out_dir=None) -> int:
    cfg, code = _load(config_path, overrides)
    if cfg is None:
        return code
    try:
        result = execute(cfg, Path(out_dir) if out_dir else cfg.out_dir)
    except OSError as err:
        print(f"error: cannot write output: {err}", file=sys.stderr)
        return EXIT_IO
    print(f"{cfg.name}: {result.status}, {result.summary['cycles']} cycles, final state "
          + ", ".join(fixed6(v) for v in result.summary["final_state"]))
    return result.exit_code


# ---------------------------------------------------------------------------
# bounds


def cmd_bounds(L, M0, M1, m, epsilon=None, delta=None, eta=None) -> int:
    if eta is not None:
        if epsilon is not None or delta is not None:
            print("error: give either --eta or --epsilon/--delta, not both", file=sys.stderr)
            return EXIT_CONFIG
        try:
            _, d = select_parameters(L, M0, M1, m, eta)
        except ValueError as err:
            print(f"error: {err}", file=sys.stderr)
            return EXIT_CONFIG
        # round delta down first, then spend the remaining budget on epsilon
        d_text = fixed6(d, ROUND_DOWN)
        e_text = fixed6(epsilon_for_budget(L, M0, M1, m, float(d_text), eta), ROUND_DOWN)
        print(f"epsilon {e_text}")
        print(f"delta {d_text}")
        return EXIT_OK
    if epsilon is None or delta is None:
        print("error: bound mode needs --epsilon and --delta (or --eta for selection)", file=sys.stderr)
        return EXIT_CONFIG
    try:
        value = suboptimality_bound(BoundInputs(L, M0, M1, m, epsilon, delta))
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"bound {fixed6(value)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def _sweep_row(args):
    # workers reload the file: plants and goodness functions hold closures
    config_path, overrides, param, value, out_dir = args
    row = {"param": param, "value": value}
    try:
        cfg = load_config(config_path, overrides).with_param(param, value)
        result = execute(cfg, out_dir)
    except ConfigError as err:
        row.update(status=f"config error: {err}", exit_code=EXIT_CONFIG)
        return row
    except OSError as err:
        row.update(status=f"io error: {err}", exit_code=EXIT_IO)
        return row
    s = result.summary
    row.update(status=result.status, exit_code=result.exit_code, final_time=s["final_time"],
               max_gap=s.get("max_gap"))
    row.update({k: v for k, v in s.items() if k.startswith("late_")})
    return row


def cmd_sweep(config_path, param, values, overrides=None, out_dir=None, jobs=1) -> int:
    if not values:
        print("error: sweep needs at least one value", file=sys.stderr)
        return EXIT_CONFIG
    if param not in SWEEP_PARAMS:
        print(f"error: cannot sweep {param!r}; choose from {', '.join(SWEEP_PARAMS)}", file=sys.stderr)
        return EXIT_CONFIG
    cfg, code = _load(config_path, overrides)
    if cfg is None:
        return code
    root = Path(out_dir) if out_dir else cfg.out_dir
    tasks = [(config_path, overrides, param, v, root / f"{param}={v:.6g}") for v in values]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_row, tasks))
    else:
        rows = [_sweep_row(t) for t in tasks]

    keys = ["param", "value", "status", "exit_code", "final_time", "max_gap"]
    keys += sorted({k for r in rows for k in r if k.startswith("late_")})
    try:
        root.mkdir(parents=True, exist_ok=True)
        with open(root / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(keys)
            for r in rows:
                w.writerow(["" if r.get(k) is None else fmt17(r[k]) if isinstance(r[k], float) else r[k] for k in keys])
    except OSError as err:
        print(f"error: cannot write output: {err}", file=sys.stderr)
        return EXIT_IO
    for r in rows:
        print(f"{param}={r['value']:.6g}: {r['status']}")
    return max(r["exit_code"] for r in rows)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="myopic", description="Myopic learn-control experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("config", help="experiment file, or the name of a bundled config")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config entry (repeatable)")
        sp.add_argument("--out", help="output directory (overrides [output] dir)")

    run = sub.add_parser("run", help="run one experiment")
    add_common(run)

    b = sub.add_parser("bounds", help="evaluate the suboptimality bound or select (epsilon, delta)")
    b.add_argument("--L", type=float, required=True)
    b.add_argument("--M0", type=float, required=True)
    b.add_argument("--M1", type=float, required=True)
    b.add_argument("--m", type=int, required=True)
    b.add_argument("--epsilon", type=float)
    b.add_argument("--delta", type=float)
    b.add_argument("--eta", type=float, help="target bound; switches to selection mode")

    sw = sub.add_parser("sweep", help="run one experiment per parameter value")
    add_common(sw)
    sw.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sw.add_argument("--values", type=float, nargs="*", default=[])
    sw.add_argument("--jobs", type=int, default=1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.overrides, args.out)
    if args.command == "bounds":
        return cmd_bounds(args.L, args.M0, args.M1, args.m, args.epsilon, args.delta, args.eta)
    return cmd_sweep(args.config, args.param, args.values, args.overrides, args.out, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
