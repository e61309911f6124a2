"""Typed search spaces and the coded <-> natural value mapping.

Variables live in a *coded* space (plain reals, optionally integer-valued)
which is what the design generator and the surrogate optimizer see.  The
objective receives *natural* values obtained through :func:`transform_value`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

VAR_TYPES = ("num", "int", "factor")
TRANSFORMS = ("none", "power_2_int", "power_10", "none_to_None")

_TYPE_ALIASES = {"float": "num", "num": "num", "int": "int", "factor": "factor"}
_TRANSFORM_ALIASES = {
    None: "none",
    "none": "none",
    "None": "none",
    "power_2_int": "power_2_int",
    "transform_power_2_int": "power_2_int",
    "power_10": "power_10",
    "transform_power_10": "power_10",
    "none_to_None": "none_to_None",
    "transform_none_to_None": "none_to_None",
}
_TRANSFORM_LABELS = {
    "none": "None",
    "power_2_int": "transform_power_2_int",
    "power_10": "transform_power_10",
    "none_to_None": "transform_none_to_None",
}

# (upper limit inclusive, stars); anything above the last limit gets "***"
STAR_THRESHOLDS = ((0.1, ""), (1.0, "."), (50.0, "*"), (95.0, "**"))


class SpaceError(ValueError):
    """Invalid variable definition or out-of-domain coded value."""


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


@dataclass(frozen=True)
class VariableSpec:
    name: str
    var_type: str = "num"
    lower: float = 0.0
    upper: float = 1.0
    default: float | None = None
    transform: str = "none"
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name or not str(self.name).isidentifier():
            raise SpaceError(f"invalid variable name {self.name!r}")
        try:
            object.__setattr__(self, "var_type", _TYPE_ALIASES[self.var_type])
        except KeyError:
            raise SpaceError(f"{self.name}: unknown type {self.var_type!r}") from None
        try:
            object.__setattr__(self, "transform", _TRANSFORM_ALIASES[self.transform])
        except KeyError:
            raise SpaceError(f"{self.name}: unknown transform {self.transform!r}") from None
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        object.__setattr__(self, "levels", tuple(self.levels))
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise SpaceError(f"{self.name}: bounds must be finite")
        if self.lower > self.upper:
            raise SpaceError(f"{self.name}: lower {self.lower} > upper {self.upper}")
        if self.var_type in ("int", "factor"):
            if not (self.lower.is_integer() and self.upper.is_integer()):
                raise SpaceError(f"{self.name}: {self.var_type} bounds must be integers")
        if self.var_type == "factor":
            n = len(self.levels)
            if n == 0:
                raise SpaceError(f"{self.name}: factor variable needs levels")
            if self.lower < 0 or self.upper > n - 1:
                raise SpaceError(
                    f"{self.name}: factor bounds [{self.lower}, {self.upper}] "
                    f"outside level codes [0, {n - 1}]"
                )
        elif self.levels:
            raise SpaceError(f"{self.name}: levels are only allowed for factor variables")
        if self.transform == "none_to_None" and self.var_type != "factor":
            raise SpaceError(f"{self.name}: none_to_None applies to factors only")
        if self.transform in ("power_2_int", "power_10") and self.var_type == "factor":
            raise SpaceError(f"{self.name}: numeric transform on a factor variable")
        default = self.lower if self.default is None else float(self.default)
        object.__setattr__(self, "default", default)

    @property
    def active(self) -> bool:
        return self.lower < self.upper

    @property
    def is_discrete(self) -> bool:
        return self.var_type in ("int", "factor")

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "type": self.var_type,
            "lower": self.lower,
            "upper": self.upper,
            "default": self.default,
            "transform": self.transform,
        }
        if self.levels:
            d["levels"] = list(self.levels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VariableSpec":
        known = {"name", "type", "var_type", "lower", "upper", "default", "transform", "levels"}
        extra = set(d) - known
        if extra:
            raise SpaceError(f"unknown variable fields: {sorted(extra)}")
        levels = d.get("levels", ())
        default = d.get("default")
        if isinstance(default, str) and levels:
            # default given as a level name, as in hyper-dict files
            if default not in levels:
                raise SpaceError(f"{d.get('name')}: default {default!r} not among levels")
            default = levels.index(default)
        return cls(
            name=d["name"],
            var_type=d.get("type", d.get("var_type", "num")),
            lower=d["lower"],
            upper=d["upper"],
            default=default,
            transform=d.get("transform", "none"),
            levels=tuple(levels),
        )


def transform_value(spec: VariableSpec, coded: float) -> Any:
    """Map one coded value to the natural value handed to the objective.

    Integer and factor codes are rounded half-up first.  Factor codes index
    directly into ``spec.levels``.
    """
    coded = float(coded)
    if not math.isfinite(coded):
        raise SpaceError(f"{spec.name}: non-finite coded value {coded}")
    if spec.var_type == "factor":
        idx = round_half_up(coded)
        if idx < 0 or idx >= len(spec.levels):
            raise SpaceError(
                f"{spec.name}: factor code {idx} outside levels 0..{len(spec.levels) - 1}"
            )
        level = spec.levels[idx]
        if spec.transform == "none_to_None" and level == "None":
            return None
        return level
    if spec.var_type == "int":
        coded = float(round_half_up(coded))
    if spec.transform == "power_2_int":
        return int(2 ** round_half_up(coded))
    if spec.transform == "power_10":
        return 10.0**coded
    if spec.var_type == "int":
        return int(coded)
    return coded


@dataclass(frozen=True)
class SearchSpace:
    variables: tuple[VariableSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if not self.variables:
            raise SpaceError("search space needs at least one variable")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise SpaceError(f"duplicate variable names in {names}")

    @classmethod
    def from_bounds(cls, lower: Sequence[float], upper: Sequence[float], prefix: str = "x") -> "SearchSpace":
        if len(lower) != len(upper):
            raise SpaceError("lower and upper have different lengths")
        return cls(tuple(VariableSpec(f"{prefix}{i}", "num", lo, up) for i, (lo, up) in enumerate(zip(lower, upper))))

    @classmethod
    def from_list(cls, items: Sequence[dict]) -> "SearchSpace":
        return cls(tuple(VariableSpec.from_dict(d) for d in items))

    def to_list(self) -> list[dict]:
        return [v.to_dict() for v in self.variables]

    @property
    def k(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def var_types(self) -> list[str]:
        return [v.var_type for v in self.variables]

    def defaults(self) -> np.ndarray:
        return np.array([v.default for v in self.variables], dtype=float)

    def to_natural(self, coded: Sequence[float]) -> list:
        if len(coded) != self.k:
            raise SpaceError(f"expected {self.k} coded values, got {len(coded)}")
        return [transform_value(v, c) for v, c in zip(self.variables, coded)]

    def repair(self, coded: Sequence[float]) -> np.ndarray:
        """Clip into bounds and snap integer/factor coordinates to codes."""
        lower, upper = bounds_vectors(self)
        x = np.clip(np.asarray(coded, dtype=float), lower, upper)
        for j, v in enumerate(self.variables):
            if v.is_discrete:
                x[j] = float(round_half_up(x[j]))
        return x


def bounds_vectors(space: SearchSpace) -> tuple[np.ndarray, np.ndarray]:
    lower = np.array([v.lower for v in space.variables], dtype=float)
    upper = np.array([v.upper for v in space.variables], dtype=float)
    return lower, upper


def stars(importance: float) -> str:
    for limit, mark in STAR_THRESHOLDS:
        if importance <= limit:
            return mark
    return "***"


def _fmt_num(value: float) -> str:
    return repr(float(value))


def _fmt_default(v: VariableSpec) -> str:
    if v.var_type == "factor":
        idx = round_half_up(v.default)
        if 0 <= idx < len(v.levels):
            return str(v.levels[idx])
    if v.var_type == "int":
        return str(round_half_up(v.default))
    return _fmt_num(v.default)


def design_table(
    space: SearchSpace,
    tuned: Sequence[float] | None = None,
    importance: Sequence[float] | None = None,
) -> str:
    """Render the space as a pipe-delimited table.

    Columns are name, type, default, lower, upper[, tuned], transform
    [, importance, stars].  Numeric columns are right-aligned.
    """
    k = space.k
    if tuned is not None and len(tuned) != k:
        raise SpaceError(f"tuned has length {len(tuned)}, expected {k}")
    if importance is not None and len(importance) != k:
        raise SpaceError(f"importance has length {len(importance)}, expected {k}")

    header = ["name", "type", "default", "lower", "upper"]
    numeric = {"lower", "upper"}
    if tuned is not None:
        header.append("tuned")
        numeric.add("tuned")
    header.append("transform")
    if importance is not None:
        header += ["importance", "stars"]
        numeric.add("importance")

    rows = []
    for j, v in enumerate(space.variables):
        row = [
            v.name,
            "float" if v.var_type == "num" else v.var_type,
            _fmt_default(v),
            _fmt_num(v.lower),
            _fmt_num(v.upper),
        ]
        if tuned is not None:
            row.append(_fmt_num(tuned[j]))
        row.append(_TRANSFORM_LABELS[v.transform])
        if importance is not None:
            row += [f"{float(importance[j]):.2f}", stars(float(importance[j]))]
        rows.append(row)

    widths = [max(len(h), *(len(r[c]) for r in rows)) for c, h in enumerate(header)]

    def line(cells, align_right):
        out = []
        for c, cell in enumerate(cells):
            w = widths[c]
            out.append(cell.rjust(w) if align_right[c] else cell.ljust(w))
        return "| " + " | ".join(out) + " |"

    left = [False] * len(header)
    right = [h in numeric for h in header]
    lines = [line(header, left), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    lines += [line(r, right) for r in rows]
    return "\n".join(lines)
