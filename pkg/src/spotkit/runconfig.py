"""Run-config files (TOML) and objective construction for the CLI."""

from __future__ import annotations

import copy
from dataclasses import dataclass, fields
from pathlib import Path

import tomli

from .kriging import KrigingConfig
from .objectives import REGISTRY, ExternalObjective, FunControl, make_objective
from .optimize import ConfigError, OptimizerConfig
from .space import SearchSpace, SpaceError
from .spot import SpotConfig

SECTIONS = {"spot", "design", "surrogate", "optimizer", "fun_control", "objective", "space", "output"}
OUTPUT_FILES = {
    "state": "state.json",
    "log": "run_log.jsonl",
    "progress": "progress.csv",
    "results": "results.json",
}

EXAMPLE = """\
# spotkit run configuration
[spot]
fun_evals = 25            # successful evaluations; "inf" to run on time only
max_time_seconds = inf    # wall-clock budget of one session
noise = false             # fit a nugget and report mean-based results
tolerance_x = 0.0         # min coded distance of new points to the archive
infill_criterion = "y"    # y | s | ei
n_points = 1
fun_repeats = 1
ocba_delta = 0
seed = 123
log_level = 50

[design]
init_size = 10
repeats = 1

[surrogate]
n_theta = 1               # 1 = isotropic, k = one theta per variable
min_theta = -3.0
max_theta = 3.0
cod_type = "norm"

[optimizer]
name = "differential_evolution"   # or multistart_local
max_iter = 1000

[fun_control]
sigma = 0.0               # additive Gaussian noise sd
# seed defaults to spot.seed

[objective]
builtin = "fun_sphere"
# external = { command = ["python", "my_objective.py"], timeout = 30.0 }

[[space]]
name = "x0"
type = "num"
lower = -1.0
upper = 1.0

[output]
dir = "runs/sphere"
"""


def parse_value(text: str):
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``dotted.key=value`` strings; values use TOML syntax, else string."""
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ConfigError(f"empty key in override {item!r}")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {p} is not a table")
        node[parts[-1]] = parse_value(raw.strip())
    return doc


def load_document(path, overrides=()) -> dict:
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return apply_overrides(doc, overrides)


def _take(section: dict, cls, name: str) -> dict:
    allowed = {f.name for f in fields(cls)}
    extra = set(section) - allowed
    if extra:
        raise ConfigError(f"[{name}] unknown keys: {sorted(extra)}")
    return dict(section)


@dataclass
class RunSetup:
    config: SpotConfig
    space: SearchSpace
    objective: dict
    output_dir: Path


def build(doc: dict, base_dir=".") -> RunSetup:
    unknown = set(doc) - SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    spot = dict(doc.get("spot", {}))
    design = dict(doc.get("design", {}))
    extra = set(design) - {"init_size", "repeats"}
    if extra:
        raise ConfigError(f"[design] unknown keys: {sorted(extra)}")
    if "init_size" in design:
        spot["init_size"] = design["init_size"]
    if "repeats" in design:
        spot["design_repeats"] = design["repeats"]
    for key in ("fun_evals", "max_time_seconds"):
        if isinstance(spot.get(key), str):
            spot[key] = float(spot[key])
    allowed = {f.name for f in fields(SpotConfig)} - {"surrogate", "optimizer"}
    extra = set(spot) - allowed
    if extra:
        raise ConfigError(f"[spot] unknown keys: {sorted(extra)}")
    try:
        surrogate = KrigingConfig(**_take(doc.get("surrogate", {}), KrigingConfig, "surrogate"))
        optimizer = OptimizerConfig(**_take(doc.get("optimizer", {}), OptimizerConfig, "optimizer"))
        config = SpotConfig(**spot, surrogate=surrogate, optimizer=optimizer)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    obj = dict(doc.get("objective", {}))
    if ("builtin" in obj) == ("external" in obj):
        raise ConfigError("[objective] needs exactly one of 'builtin' or 'external'")
    fc = dict(doc.get("fun_control", {}))
    fc.setdefault("seed", config.seed)
    try:
        FunControl(**fc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[fun_control] {exc}") from exc

    if "builtin" in obj:
        name = obj["builtin"]
        if name not in REGISTRY:
            raise ConfigError(f"unknown builtin objective {name!r}")
        spec = {"builtin": name, "fun_control": fc}
    else:
        ext = obj["external"]
        cmd = ext.get("command")
        if isinstance(cmd, str):
            cmd = [cmd]
        if not cmd:
            raise ConfigError("[objective.external] needs a command")
        cmd = list(cmd) + list(ext.get("args", []))
        spec = {
            "external": {"command": cmd, "timeout": float(ext.get("timeout", 30.0)), "cwd": str(Path(base_dir).resolve())}
        }

    try:
        if "space" in doc:
            space = SearchSpace.from_list(doc["space"])
        elif "builtin" in obj and REGISTRY[obj["builtin"]].bounds is not None:
            lo, hi = REGISTRY[obj["builtin"]].bounds
            dim = int(obj.get("dim", len(lo)))
            if len(lo) == 1 and dim > 1:
                lo, hi = lo * dim, hi * dim
            space = SearchSpace.from_bounds(lo, hi)
        else:
            raise ConfigError("config needs a [[space]] list")
    except SpaceError as exc:
        raise ConfigError(str(exc)) from exc

    out = doc.get("output", {})
    out_dir = Path(base_dir) / out.get("dir", "spot_run")
    return RunSetup(config, space, spec, out_dir)


def objective_from_spec(spec: dict):
    if "builtin" in spec:
        return make_objective(spec["builtin"], FunControl(**spec.get("fun_control", {})))
    ext = spec["external"]
    return ExternalObjective(ext["command"], ext.get("timeout", 30.0), ext.get("cwd"))
