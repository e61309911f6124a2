"""Seeded Latin-hypercube designs and named, serializable random streams."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Stable ids for the named substreams derived from one run seed.
STREAMS = {
    "design": 1,
    "noise": 2,
    "optimizer": 3,
    "replacement": 4,
    "failure": 5,
    "model": 6,
}
RNG_NAME = "philox4x64-numpy-v1"
_EDGE = 1e-7


def stream(seed: int, name: str, *counter: int) -> np.random.Generator:
    """Generator for substream ``name`` of ``seed``, optionally keyed by counters.

    Counter keys give independent per-event streams (e.g. one per evaluation
    index) so results do not depend on call scheduling.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, STREAMS[name], *map(int, counter)])
    return np.random.Generator(np.random.Philox(ss))


def rng_state(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return {
        "generator": RNG_NAME,
        "counter": [int(c) for c in state["state"]["counter"]],
        "key": [int(c) for c in state["state"]["key"]],
        "buffer": [int(c) for c in state["buffer"]],
        "buffer_pos": int(state["buffer_pos"]),
        "has_uint32": int(state["has_uint32"]),
        "uinteger": int(state["uinteger"]),
    }


def rng_from_state(d: dict) -> np.random.Generator:
    if d.get("generator") != RNG_NAME:
        raise ValueError(f"unsupported generator {d.get('generator')!r}")
    bg = np.random.Philox()
    bg.state = {
        "bit_generator": "Philox",
        "state": {
            "counter": np.array(d["counter"], dtype=np.uint64),
            "key": np.array(d["key"], dtype=np.uint64),
        },
        "buffer": np.array(d["buffer"], dtype=np.uint64),
        "buffer_pos": d["buffer_pos"],
        "has_uint32": d["has_uint32"],
        "uinteger": d["uinteger"],
    }
    return np.random.Generator(bg)


@dataclass
class DesignMatrix:
    points: np.ndarray
    repeats: int = 1

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[0] < 1 or self.points.shape[1] < 1:
            raise ValueError("design needs n >= 1 and k >= 1")
        if self.repeats < 1:
            raise ValueError("repeats must be positive")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def k(self) -> int:
        return self.points.shape[1]


def lhd_unit(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube on [0, 1]^k: one point per 1/n stratum in each column."""
    if n < 1:
        raise ValueError(f"design size must be >= 1, got {n}")
    if k < 1:
        raise ValueError(f"dimension must be >= 1, got {k}")
    # keep points off stratum edges so rescaling cannot push them across
    jitter = _EDGE + (1.0 - 2 * _EDGE) * rng.random((n, k))
    perms = np.column_stack([rng.permutation(n) for _ in range(k)])
    return (perms + jitter) / n


def lhd(n: int, lower, upper, seed: int, repeats: int = 1) -> DesignMatrix:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or lower.ndim != 1:
        raise ValueError("lower and upper must be 1-d vectors of equal length")
    unit = lhd_unit(n, lower.size, stream(seed, "design"))
    points = lower + unit * (upper - lower)
    # guard against lower + 1.0*(upper-lower) rounding past upper
    points = np.clip(points, lower, upper)
    return DesignMatrix(points, repeats)


def random_point(lower, upper, rng: np.random.Generator) -> np.ndarray:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    u = rng.random(lower.size)
    return np.where(lower == upper, lower, np.clip(lower + u * (upper - lower), lower, upper))
