"""Command-line entry point: run, resume, export, list-functions."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

from .objectives import REGISTRY, ObjectiveError
from .optimize import ConfigError
from .runconfig import EXAMPLE, OUTPUT_FILES, build, load_document, objective_from_spec
from .space import design_table, stars
from .spot import (
    LOG_LEVELS,
    FitAbort,
    RunState,
    Spot,
    StateError,
    best,
    grid_slice,
    importance,
    load_state,
    progress_series,
    save_state,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_OBJECTIVE = 3

log = logging.getLogger("spotkit")


def _setup_logging(level: int):
    env = os.environ.get("SPOTKIT_LOG")
    if env:
        level = LOG_LEVELS.get(env.upper(), None) if not env.isdigit() else int(env)
        if level is None:
            level = logging.WARNING
    logging.basicConfig(level=level or logging.NOTSET, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    log.setLevel(level or logging.NOTSET)


def progress_csv(state: RunState) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["evals", "best_y"])
    for n, b in progress_series(state):
        w.writerow([n, repr(float(b))])
    return buf.getvalue()


def results_summary(state: RunState) -> dict:
    out = {
        "status": state.status,
        "error": state.error,
        "success_count": state.success_count,
        "n_calls": state.n_calls,
        "iterations": state.iteration,
    }
    if state.success_count:
        out["best"] = best(state)
    if state.model is not None:
        imp = importance(state)
        out["importance"] = dict(zip(state.space.names, [float(v) for v in imp]))
        out["model"] = {"theta": state.model.theta.tolist(), "negLnLike": state.model.negLnLike, "Lambda": state.model.Lambda}
    return out


def _write_outputs(state: RunState, out_dir: Path, state_path: Path) -> None:
    save_state(state, state_path)
    (out_dir / OUTPUT_FILES["progress"]).write_text(progress_csv(state))
    (out_dir / OUTPUT_FILES["results"]).write_text(json.dumps(results_summary(state), indent=2) + "\n")


def _drive(spot: Spot, out_dir: Path, state_path: Path) -> int:
    try:
        spot.run(save_path=state_path)
    except ObjectiveError as exc:
        log.error("objective failure: %s", exc)
        _write_outputs(spot.state, out_dir, state_path)
        return EXIT_OBJECTIVE
    except FitAbort as exc:
        log.error("%s", exc)
        _write_outputs(spot.state, out_dir, state_path)
        return EXIT_ERROR
    finally:
        close = getattr(spot.objective, "close", None)
        if close is not None:
            close()
    _write_outputs(spot.state, out_dir, state_path)
    b = best(spot.state) if spot.state.success_count else None
    if b is not None:
        print(f"success_count: {spot.state.success_count}")
        print(f"min y: {b['y_min']!r}  at x = {b['x_natural']}")
        if "y_mean_min" in b:
            print(f"min mean y: {b['y_mean_min']!r}  at x = {b['x_mean_natural']}")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        doc = load_document(args.config, args.set)
        setup = build(doc, base_dir=Path(args.config).parent)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _setup_logging(setup.config.log_level)
    setup.output_dir.mkdir(parents=True, exist_ok=True)
    log_path = setup.output_dir / OUTPUT_FILES["log"]
    log_path.write_text("")
    state = RunState(config=setup.config, space=setup.space, objective=setup.objective)
    spot = Spot(state, objective_from_spec(setup.objective), workers=args.workers, log_path=log_path)
    return _drive(spot, setup.output_dir, setup.output_dir / OUTPUT_FILES["state"])


def cmd_resume(args) -> int:
    try:
        state = load_state(args.state)
    except StateError as exc:
        print(f"state error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if state.objective is None:
        print("state error: state carries no objective description", file=sys.stderr)
        return EXIT_CONFIG
    cfg = state.config
    try:
        if args.add_evals is not None:
            if args.add_evals < 0:
                raise ConfigError("--add-evals must be >= 0")
            cfg.fun_evals = cfg.fun_evals + args.add_evals
        if args.add_time is not None:
            if args.add_time <= 0:
                raise ConfigError("--add-time must be > 0")
            cfg.max_time_seconds = float(args.add_time)
            if args.add_evals is None:
                cfg.fun_evals = math.inf
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _setup_logging(cfg.log_level)
    out_dir = Path(args.state).parent
    spot = Spot(state, objective_from_spec(state.objective), workers=args.workers, log_path=out_dir / OUTPUT_FILES["log"])
    return _drive(spot, out_dir, Path(args.state))


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_export(args) -> int:
    try:
        state = load_state(args.state)
    except StateError as exc:
        print(f"state error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    kind = args.kind
    try:
        if kind == "progress":
            _emit(progress_csv(state), args.out)
        elif kind == "grid":
            if args.i is None or args.j is None:
                raise ValueError("grid export needs --i and --j")
            g = grid_slice(state, args.i, args.j, args.res)
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["xi", "xj", "mean", "std"])
            for a, xi in enumerate(g["xi"]):
                for b, xj in enumerate(g["xj"]):
                    w.writerow([repr(float(xi)), repr(float(xj)), repr(float(g["mean"][a, b])), repr(float(g["std"][a, b]))])
            _emit(buf.getvalue(), args.out)
        elif kind == "importance":
            imp = importance(state)
            doc = {
                "variables": [
                    {"name": n, "importance": float(v), "stars": stars(float(v))}
                    for n, v in zip(state.space.names, imp)
                ]
            }
            _emit(json.dumps(doc, indent=2) + "\n", args.out)
        elif kind == "design-table":
            tuned = best(state)["x_coded"] if state.success_count else None
            imp = importance(state) if state.model is not None else None
            _emit(design_table(state.space, tuned, imp) + "\n", args.out)
    except (ValueError, StateError) as exc:
        print(f"export error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_list_functions(args) -> int:
    print(list_functions())
    return EXIT_OK


def list_functions() -> str:
    lines = []
    for name in sorted(REGISTRY):
        info = REGISTRY[name]
        if info.fun is None and name != "fun_random_error":
            lines.append(f"{name:18s} dim=?    formula unavailable (not specified by source)")
        else:
            lines.append(f"{name:18s} dim={info.dim:4s} {info.formula}")
    return "\n".join(lines)


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spotkit", description="Surrogate-model-based sequential optimization.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a TOML config")
    r.add_argument("--config", required=True)
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config value (dotted path)")
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("resume", help="continue a saved run")
    s.add_argument("--state", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--add-evals", type=int)
    g.add_argument("--add-time", type=float)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_resume)

    e = sub.add_parser("export", help="export data from a saved run")
    e.add_argument("--state", required=True)
    e.add_argument("--kind", required=True, choices=["progress", "grid", "importance", "design-table"])
    e.add_argument("--i", type=int)
    e.add_argument("--j", type=int)
    e.add_argument("--res", type=int, default=50)
    e.add_argument("--out")
    e.set_defaults(func=cmd_export)

    lf = sub.add_parser("list-functions", help="list builtin objectives")
    lf.set_defaults(func=cmd_list_functions)

    ex = sub.add_parser("example-config", help="print an annotated example config")
    ex.set_defaults(func=lambda a: print(EXAMPLE, end="") or EXIT_OK)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
