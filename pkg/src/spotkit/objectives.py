"""Analytic test objectives, noise and failure wrappers, external objectives.

Every objective used by the optimizer follows one calling convention:
``f(x, index=None) -> float`` where ``x`` is a natural-space vector and
``index`` is the global evaluation counter.  Stochastic wrappers key their
random draws on ``index`` so evaluation order and parallelism do not matter;
when ``index`` is omitted an internal call counter is used instead.
"""

from __future__ import annotations

import itertools
import json
import math
import os
import select
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .sampling import stream


class ObjectiveError(RuntimeError):
    """The objective broke the evaluation contract."""


class FormulaUnavailable(ObjectiveError):
    pass


@dataclass(frozen=True)
class FunControl:
    sigma: float = 0.0
    seed: int = 123
    p_fail: float = 0.1

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0.0 <= self.p_fail <= 1.0:
            raise ValueError("p_fail must lie in [0, 1]")


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def fun_sphere(x) -> float:
    x = _vec(x)
    return float(np.sum(x**2))


BRANIN_A = 1.0
BRANIN_B = 5.1 / (4 * math.pi**2)
BRANIN_C = 5 / math.pi
BRANIN_R = 6.0
BRANIN_S = 10.0
BRANIN_T = 1 / (8 * math.pi)


def fun_branin(x) -> float:
    x = _vec(x)
    if x.size != 2:
        raise ValueError(f"fun_branin takes 2 inputs, got {x.size}")
    x1, x2 = x
    return float(
        BRANIN_A * (x2 - BRANIN_B * x1**2 + BRANIN_C * x1 - BRANIN_R) ** 2
        + BRANIN_S * (1 - BRANIN_T) * math.cos(x1)
        + BRANIN_S
    )


def fun_runge(x) -> float:
    x = _vec(x)
    return float(1.0 / (1.0 + np.sum(x**2)))


def fun_cubed(x) -> float:
    x = _vec(x)
    return float(np.sum(x**3))


def fun_forrester(x) -> float:
    x = _vec(x)
    if x.size != 1:
        raise ValueError(f"fun_forrester takes 1 input, got {x.size}")
    v = x[0]
    return float((6 * v - 2) ** 2 * math.sin(12 * v - 4))


def fun_xsin(x) -> float:
    x = _vec(x)
    if x.size != 1:
        raise ValueError(f"fun_xsin takes 1 input, got {x.size}")
    return float(x[0] * math.sin(x[0]))


def _unavailable(name):
    def f(x, index=None):
        raise FormulaUnavailable(f"{name}: formula not specified by source")

    f.__name__ = name
    return f


@dataclass(frozen=True)
class FunctionInfo:
    name: str
    fun: Callable | None
    dim: str
    formula: str
    bounds: tuple[tuple[float, ...], tuple[float, ...]] | None = None


REGISTRY: dict[str, FunctionInfo] = {
    info.name: info
    for info in [
        FunctionInfo("fun_sphere", fun_sphere, "any", "sum_i x_i^2", ((-1.0,), (1.0,))),
        FunctionInfo(
            "fun_branin",
            fun_branin,
            "2",
            "a(x2 - b x1^2 + c x1 - r)^2 + s(1 - t)cos(x1) + s",
            ((-5.0, 0.0), (10.0, 15.0)),
        ),
        FunctionInfo("fun_runge", fun_runge, "any", "1 / (1 + sum_i x_i^2)", ((-5.0,), (5.0,))),
        FunctionInfo("fun_cubed", fun_cubed, "any", "sum_i x_i^3", ((-1.0,), (1.0,))),
        FunctionInfo("fun_forrester", fun_forrester, "1", "(6x - 2)^2 sin(12x - 4)", ((0.0,), (1.0,))),
        FunctionInfo("fun_xsin", fun_xsin, "1", "x sin(x)", ((0.0,), (10.0,))),
        FunctionInfo("fun_random_error", None, "1", "NaN with probability p_fail, else x", ((-1.0,), (1.0,))),
    ]
}
for _name in ("fun_sin_cos", "fun_wingwt", "fun_linear", "fun_branin_factor"):
    REGISTRY[_name] = FunctionInfo(_name, None, "?", "formula unavailable")


class _Counter:
    def __init__(self):
        self._it = itertools.count()
        self._lock = threading.Lock()

    def next(self, index):
        if index is not None:
            return int(index)
        with self._lock:
            return next(self._it)


def with_noise(f: Callable, ctrl: FunControl) -> Callable:
    """Add N(0, sigma^2) noise drawn from a substream keyed by evaluation index."""
    counter = _Counter()

    def noisy(x, index=None):
        i = counter.next(index)
        y = float(f(x))
        if ctrl.sigma == 0:
            return y
        return y + ctrl.sigma * float(stream(ctrl.seed, "noise", i).standard_normal())

    noisy.__name__ = getattr(f, "__name__", "objective")
    return noisy


def fun_random_error(ctrl: FunControl | None = None) -> Callable:
    """Identity payload on 1-d input that fails (NaN) with probability ``p_fail``."""
    ctrl = ctrl or FunControl()
    counter = _Counter()

    def f(x, index=None):
        i = counter.next(index)
        x = _vec(x)
        if x.size != 1:
            raise ValueError(f"fun_random_error takes 1 input, got {x.size}")
        if float(stream(ctrl.seed, "failure", i).random()) < ctrl.p_fail:
            return math.nan
        return float(x[0])

    f.__name__ = "fun_random_error"
    return f


def make_objective(name: str, ctrl: FunControl | None = None) -> Callable:
    """Builtin objective by name, wrapped with the noise stream from ``ctrl``."""
    ctrl = ctrl or FunControl()
    info = REGISTRY.get(name)
    if info is None:
        raise KeyError(f"unknown objective {name!r}; available: {sorted(REGISTRY)}")
    if name == "fun_random_error":
        return fun_random_error(ctrl)
    if info.fun is None:
        return _unavailable(name)
    return with_noise(info.fun, ctrl)


def evaluate_rows(f: Callable, X) -> np.ndarray:
    """Row-wise evaluation of ``f`` over a matrix of natural points."""
    return np.array([f(row) for row in np.atleast_2d(np.asarray(X, dtype=float))], dtype=float)


class ExternalObjective:
    """Objective served by a child process over JSON lines.

    The parent writes ``{"x": [...]}`` per evaluation and expects one line
    ``{"y": number}`` back (``"nan"`` or null marks a failure).  A reply that
    misses the timeout counts as a failure and the child is restarted.
    Malformed replies or a dead child raise :class:`ObjectiveError`.
    """

    def __init__(self, command: Sequence[str], timeout: float = 30.0, cwd: str | None = None):
        if not command:
            raise ValueError("external objective needs a command")
        self.command = list(command)
        self.timeout = float(timeout)
        self.cwd = cwd
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()
        self._buf = b""

    def _start(self):
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            cwd=self.cwd,
            env=dict(os.environ, PYTHONUNBUFFERED="1"),
        )
        self._buf = b""

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=1.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
            self._proc = None

    def _kill(self):
        if self._proc is not None:
            self._proc.kill()
            self._proc.wait()
            self._proc = None

    def _readline(self, deadline: float) -> bytes | None:
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buf:
            left = deadline - time.monotonic()
            if left <= 0:
                return None
            ready, _, _ = select.select([fd], [], [], left)
            if not ready:
                return None
            chunk = os.read(fd, 65536)
            if not chunk:
                raise ObjectiveError(f"external objective exited (code {self._proc.poll()})")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def __call__(self, x, index=None) -> float:
        with self._lock:
            if self._proc is None or self._proc.poll() is not None:
                self._start()
            payload = json.dumps({"x": [v if isinstance(v, (str, type(None))) else float(v) for v in x]})
            try:
                self._proc.stdin.write(payload.encode() + b"\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ObjectiveError(f"cannot write to external objective: {exc}") from exc
            line = self._readline(time.monotonic() + self.timeout)
            if line is None:
                self._kill()
                return math.nan
            try:
                y = json.loads(line)["y"]
            except (ValueError, KeyError, TypeError) as exc:
                raise ObjectiveError(f"malformed reply from external objective: {line[:200]!r}") from exc
            if y is None or (isinstance(y, str) and y.lower() == "nan"):
                return math.nan
            if not isinstance(y, (int, float)) or isinstance(y, bool):
                raise ObjectiveError(f"external objective returned non-numeric y: {y!r}")
            return float(y)

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass
