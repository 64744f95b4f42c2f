"""Command-line front end.

Subcommands: `simulate` runs closed-loop scenarios and writes trace +
metrics files, `optimize` solves a trajectory problem, `verify` checks
stability diagnostics on a finished trace, `report` renders the SVG
panels, `validate` checks config files without running anything.

Exit codes: 0 on success, 1 on any validation error (bad flags, bad
config, bad trace file), 2 when a run diverges or fails to converge.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor

from .config import (ConfigError, load_scenario, load_trajectory_problem,
                     read_json)
from .report import render_svg
from .sim import metrics_to_dict, read_trace_csv, run_scenario
from .stability import verification_report
from .trajectory import optimize_trajectory, save_curve, trajectory_to_csv

__all__ = ["main"]

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_CONVERGED = 2


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit 2; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="emla-lab",
                     description="EMLA closed-loop simulation workbench")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", help="run one or more scenarios")
    p.add_argument("configs", nargs="+", metavar="config.json")
    p.add_argument("--out", default=".", metavar="DIR",
                   help="output directory (default: current)")
    p.add_argument("--seed", type=int, default=None,
                   help="override every seeded input in the config")

    p = sub.add_parser("optimize", help="solve a trajectory problem")
    p.add_argument("config", metavar="traj-config.json")
    p.add_argument("--out", default=".", metavar="DIR")

    p = sub.add_parser("verify", help="stability diagnostics on a trace")
    p.add_argument("trace", metavar="trace.csv")
    p.add_argument("config", metavar="config.json")
    p.add_argument("--out", default=None, metavar="report.json",
                   help="also write the JSON report to a file")

    p = sub.add_parser("report", help="render SVG panels from a trace")
    p.add_argument("trace", metavar="trace.csv")
    p.add_argument("--svg", default=None, metavar="out.svg",
                   help="output path (default: trace name with .svg)")

    p = sub.add_parser("validate", help="check config files")
    p.add_argument("configs", nargs="+", metavar="config.json")
    return parser


def _safe_name(name: str) -> str:
    out = re.sub(r"[^A-Za-z0-9._-]+", "_", name).strip("._")
    return out or "scenario"


def _thread_cap(n_tasks: int) -> int:
    raw = os.environ.get("EMLA_LAB_THREADS", "")
    try:
        cap = int(raw)
    except ValueError:
        cap = os.cpu_count() or 1
    if cap < 1:
        cap = 1
    return max(1, min(n_tasks, cap))


def _summary_line(name: str, m) -> str:
    conv = ("never" if not math.isfinite(m.convergence_speed)
            else f"{m.convergence_speed:.4f} s")
    return (f"{name}: pos_err={m.pos_error:.4e} m "
            f"vel_err={m.vel_error:.4e} m/s "
            f"torque_effort={m.torque_effort:.4f} N m "
            f"conv_speed={conv}")


def _write_json(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _cmd_simulate(args) -> int:
    scenarios = []
    for path in args.configs:
        try:
            cfg = load_scenario(path, seed=args.seed)
        except ConfigError as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            return EXIT_INVALID
        except OSError as exc:
            print(f"{path}: {exc.strerror or exc}", file=sys.stderr)
            return EXIT_INVALID
        scenarios.append(cfg)

    os.makedirs(args.out, exist_ok=True)
    seen: dict[str, int] = {}
    names = []
    for cfg in scenarios:
        base = _safe_name(cfg.name)
        k = seen.get(base, 0)
        seen[base] = k + 1
        names.append(base if k == 0 else f"{base}_{k}")

    with ThreadPoolExecutor(_thread_cap(len(scenarios))) as pool:
        results = list(pool.map(run_scenario, scenarios))

    from .sim import trace_to_csv
    status = EXIT_OK
    for name, res in zip(names, results):
        trace_path = os.path.join(args.out, f"{name}_trace.csv")
        metrics_path = os.path.join(args.out, f"{name}_metrics.json")
        trace_to_csv(res.trace, trace_path)
        doc = metrics_to_dict(res.metrics)
        doc["name"] = name
        doc["backend"] = res.backend
        _write_json(doc, metrics_path)
        print(_summary_line(name, res.metrics))
        if res.diverged:
            print(f"{name}: diverged (state guard tripped)",
                  file=sys.stderr)
            status = EXIT_NOT_CONVERGED
        elif not res.metrics.converged:
            print(f"{name}: did not converge within "
                  f"{res.metrics.threshold:.3e} m", file=sys.stderr)
            status = EXIT_NOT_CONVERGED
    return status


def _cmd_optimize(args) -> int:
    try:
        cons, oracle, solver, name = load_trajectory_problem(args.config)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"{args.config}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INVALID

    try:
        curve, rep = optimize_trajectory(
            cons, oracle,
            degree=solver["degree"], num_ctrl=solver["num_ctrl"],
            per_joint=solver["per_joint"],
            optimize_horizon=solver["optimize_horizon"])
    except ValueError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_INVALID

    os.makedirs(args.out, exist_ok=True)
    base = _safe_name(name)
    save_curve(curve, os.path.join(args.out, f"{base}_curve.json"))
    trajectory_to_csv(curve, os.path.join(args.out,
                                          f"{base}_trajectory.csv"))
    _write_json(rep, os.path.join(args.out, f"{base}_report.json"))
    print(f"{base}: cost={rep['final_cost']:.6g} "
          f"t_final={rep['t_final']:.4f} s "
          f"max_violation={rep['max_violation']:.3e} "
          f"iterations={rep['iterations']}")
    if not rep["converged"]:
        print(f"{base}: solver did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


_VERIFY_COLUMNS = ("t", "x1", "x2", "x1hat", "x2hat")


def _cmd_verify(args) -> int:
    try:
        trace = read_trace_csv(args.trace)
    except (ValueError, OSError) as exc:
        print(f"{args.trace}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    missing = [c for c in _VERIFY_COLUMNS if c not in trace]
    if missing:
        print(f"{args.trace}: missing columns: " + ", ".join(missing),
              file=sys.stderr)
        return EXIT_INVALID
    if trace["t"].shape[0] < 8:
        print(f"{args.trace}: trace too short to fit envelopes",
              file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = load_scenario(args.config)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"{args.config}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INVALID

    # trace rows may be strided; take the sample interval from the file
    dt = float(trace["t"][1] - trace["t"][0])
    rep = verification_report(trace, cfg.observer, cfg.gains, dt,
                              scenario=cfg.name)
    text = json.dumps(rep, indent=1, sort_keys=True)
    print(text)
    if args.out is not None:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    if not rep["passed"]:
        print(f"{cfg.name}: verification failed", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_report(args) -> int:
    try:
        trace = read_trace_csv(args.trace)
    except (ValueError, OSError) as exc:
        print(f"{args.trace}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        svg = render_svg(trace)
    except ValueError as exc:
        print(f"{args.trace}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = args.svg
    if out is None:
        out = os.path.splitext(args.trace)[0] + ".svg"
    with open(out, "w") as fh:
        fh.write(svg)
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    status = EXIT_OK
    for path in args.configs:
        try:
            doc = read_json(path)
            if isinstance(doc, dict) and "constraints" in doc:
                base = os.path.dirname(os.path.abspath(path))
                from .config import trajectory_problem_from_dict
                trajectory_problem_from_dict(doc, base_dir=base)
            else:
                from .config import scenario_from_dict
                base = os.path.dirname(os.path.abspath(path))
                scenario_from_dict(doc, base_dir=base)
        except ConfigError as exc:
            print(f"{path}: {exc}")
            status = EXIT_INVALID
        except OSError as exc:
            print(f"{path}: {exc.strerror or exc}")
            status = EXIT_INVALID
        else:
            print(f"{path}: ok")
    return status


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "optimize": _cmd_optimize,
        "verify": _cmd_verify,
        "report": _cmd_report,
        "validate": _cmd_validate,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
