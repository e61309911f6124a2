"""The sequential optimization loop, its resumable state, and result analysis.

A run is a queue of pending evaluations.  The initial design fills the queue;
whenever it drains and budget remains, the surrogate is refit and the next
infill points (and optional OCBA replications) are queued.  Because the queue
lives in the state, stopping at any budget and resuming later replays the
same evaluations an uninterrupted run would make.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import ocba as ocba_mod
from .kriging import KrigingConfig, KrigingError, KrigingModel, fit
from .objectives import ObjectiveError
from .optimize import CRITERIA, ConfigError, OptimizerConfig, suggest
from .sampling import lhd, random_point, rng_from_state, rng_state, stream
from .space import SearchSpace, bounds_vectors

SCHEMA_VERSION = 1
LOG_LEVELS = {"NOTSET": 0, "DEBUG": 10, "INFO": 20, "WARNING": 30, "ERROR": 40, "CRITICAL": 50}

logger = logging.getLogger("spotkit")


class StateError(RuntimeError):
    pass


class FitAbort(RuntimeError):
    pass


def _level(value) -> int:
    if isinstance(value, str):
        if value.upper() not in LOG_LEVELS:
            raise ConfigError(f"unknown log level {value!r}")
        return LOG_LEVELS[value.upper()]
    if int(value) not in LOG_LEVELS.values():
        raise ConfigError(f"log level must be one of {sorted(LOG_LEVELS.values())}")
    return int(value)


@dataclass
class SpotConfig:
    fun_evals: float = 15
    max_time_seconds: float = math.inf
    noise: bool = False
    tolerance_x: float = 0.0
    infill_criterion: str = "y"
    n_points: int = 1
    fun_repeats: int = 1
    ocba_delta: int = 0
    seed: int = 123
    init_size: int = 10
    design_repeats: int = 1
    surrogate: KrigingConfig = field(default_factory=KrigingConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    log_level: int = 50

    def __post_init__(self):
        if isinstance(self.surrogate, dict):
            self.surrogate = KrigingConfig(**self.surrogate)
        if isinstance(self.optimizer, dict):
            self.optimizer = OptimizerConfig(**self.optimizer)
        self.log_level = _level(self.log_level)
        self.validate()

    def validate(self):
        fe, mt = float(self.fun_evals), float(self.max_time_seconds)
        if math.isinf(fe) and math.isinf(mt):
            raise ConfigError("at least one of fun_evals and max_time_seconds must be finite")
        if math.isnan(fe) or fe < 1 or (math.isfinite(fe) and not fe.is_integer()):
            raise ConfigError(f"fun_evals must be a positive integer or inf, got {self.fun_evals}")
        if not mt > 0:
            raise ConfigError("max_time_seconds must be > 0")
        if self.tolerance_x < 0:
            raise ConfigError("tolerance_x must be >= 0")
        if self.infill_criterion == "all":
            raise ConfigError('infill criterion "all" is not supported; use "y", "s" or "ei"')
        if self.infill_criterion not in CRITERIA:
            raise ConfigError(f"unknown infill criterion {self.infill_criterion!r}")
        for name in ("n_points", "fun_repeats", "init_size", "design_repeats"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.ocba_delta < 0:
            raise ConfigError("ocba_delta must be >= 0")
        if self.ocba_delta > 0:
            if not self.noise:
                raise ConfigError("ocba_delta > 0 requires noise = true")
            if self.fun_repeats < 2 and self.design_repeats < 2:
                raise ConfigError("ocba_delta > 0 requires fun_repeats >= 2 or design_repeats >= 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("fun_evals", "max_time_seconds"):
            v = float(d[key])
            d[key] = "inf" if math.isinf(v) else int(v) if key == "fun_evals" else v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SpotConfig":
        d = dict(d)
        for key in ("fun_evals", "max_time_seconds"):
            if key in d and isinstance(d[key], str):
                d[key] = float(d[key])
        return cls(**d)


@dataclass
class ArchiveEntry:
    x_coded: list[float]
    x_natural: list
    replicate_ys: list[float] = field(default_factory=list)
    n_failed: int = 0

    @property
    def n_success(self) -> int:
        return len(self.replicate_ys)

    @property
    def mean(self) -> float:
        return float(np.mean(self.replicate_ys)) if self.replicate_ys else math.nan


@dataclass
class EvalArchive:
    entries: list[ArchiveEntry] = field(default_factory=list)

    def __post_init__(self):
        self._index = {tuple(e.x_coded): i for i, e in enumerate(self.entries)}

    @property
    def success_count(self) -> int:
        return sum(e.n_success for e in self.entries)

    def record(self, x_coded, x_natural, y: float) -> ArchiveEntry:
        key = tuple(float(v) for v in x_coded)
        i = self._index.get(key)
        if i is None:
            i = len(self.entries)
            self.entries.append(ArchiveEntry(list(key), list(x_natural)))
            self._index[key] = i
        entry = self.entries[i]
        if math.isfinite(y):
            entry.replicate_ys.append(float(y))
        else:
            entry.n_failed += 1
        return entry

    def coded_matrix(self) -> np.ndarray:
        return np.array([e.x_coded for e in self.entries], dtype=float)

    def training_data(self, replicates: bool) -> tuple[np.ndarray, np.ndarray]:
        """All finite replicates, or one row per entry holding its mean."""
        X, y = [], []
        for e in self.entries:
            if not e.replicate_ys:
                continue
            if replicates:
                for v in e.replicate_ys:
                    X.append(e.x_coded)
                    y.append(v)
            else:
                X.append(e.x_coded)
                y.append(e.mean)
        return np.array(X, dtype=float), np.array(y, dtype=float)


@dataclass
class RunState:
    config: SpotConfig
    space: SearchSpace
    archive: EvalArchive = field(default_factory=EvalArchive)
    model: KrigingModel | None = None
    progress: list[tuple[int, float]] = field(default_factory=list)
    rng: np.random.Generator | None = None
    n_calls: int = 0
    iteration: int = 0
    init_attempts: int = 0
    initialized: bool = False
    pending: list[dict] = field(default_factory=list)
    status: str = "new"
    error: str | None = None
    objective: dict | None = None  # how to rebuild the objective on resume

    def __post_init__(self):
        if self.rng is None:
            self.rng = stream(self.config.seed, "replacement")

    @property
    def success_count(self) -> int:
        return self.archive.success_count

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "space": self.space.to_list(),
            "objective": self.objective,
            "archive": [
                {
                    "x_coded": e.x_coded,
                    "x_natural": e.x_natural,
                    "replicate_ys": e.replicate_ys,
                    "n_failed": e.n_failed,
                }
                for e in self.archive.entries
            ],
            "model": None if self.model is None else self.model.to_dict(),
            "progress": [[int(n), float(b)] for n, b in self.progress],
            "rng_streams": {"replacement": rng_state(self.rng)},
            "counters": {
                "n_calls": self.n_calls,
                "iteration": self.iteration,
                "init_attempts": self.init_attempts,
                "initialized": self.initialized,
            },
            "pending": self.pending,
            "best": best(self) if self.success_count else None,
            "status": self.status,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunState":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise StateError(f"unsupported state schema_version {version!r} (expected {SCHEMA_VERSION})")
        try:
            archive = EvalArchive([ArchiveEntry(**e) for e in d["archive"]])
            counters = d["counters"]
            return cls(
                config=SpotConfig.from_dict(d["config"]),
                space=SearchSpace.from_list(d["space"]),
                archive=archive,
                model=None if d["model"] is None else KrigingModel.from_dict(d["model"]),
                progress=[(int(n), float(b)) for n, b in d["progress"]],
                rng=rng_from_state(d["rng_streams"]["replacement"]),
                n_calls=int(counters["n_calls"]),
                iteration=int(counters["iteration"]),
                init_attempts=int(counters["init_attempts"]),
                initialized=bool(counters["initialized"]),
                pending=list(d["pending"]),
                status=d.get("status", "new"),
                error=d.get("error"),
                objective=d.get("objective"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise StateError(f"malformed state document: {exc}") from exc


def dumps_state(state: RunState) -> str:
    return json.dumps(state.to_dict(), indent=1, allow_nan=False) + "\n"


def save_state(state: RunState, path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dumps_state(state))
    tmp.replace(path)


def load_state(path) -> RunState:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise StateError(f"cannot read state file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise StateError("state file is not a JSON object")
    return RunState.from_dict(doc)


def _py(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


class Spot:
    """Drive a :class:`RunState` forward against an objective.

    ``objective(x_natural, index)`` returns a float; NaN (or any non-finite
    value) marks a failed evaluation that does not consume budget.
    """

    def __init__(
        self,
        state: RunState,
        objective: Callable,
        workers: int = 1,
        log_path=None,
    ):
        self.state = state
        self.objective = objective
        self.workers = max(1, int(workers))
        self.log_path = Path(log_path) if log_path is not None else None
        self._t0 = time.monotonic()
        self._consecutive_failures = 0
        self.lower, self.upper = bounds_vectors(state.space)
        logger.setLevel(state.config.log_level or logging.NOTSET)

    @classmethod
    def new(cls, config: SpotConfig, space: SearchSpace, objective: Callable, **kw) -> "Spot":
        return cls(RunState(config=config, space=space), objective, **kw)

    # -- queue handling ---------------------------------------------------

    def _enqueue_init(self):
        st, cfg = self.state, self.state.config
        design = lhd(cfg.init_size, self.lower, self.upper, cfg.seed, cfg.design_repeats)
        for row in design.points:
            x = st.space.repair(row).tolist()
            for _ in range(design.repeats):
                st.pending.append({"phase": "init", "x": x, "iter": 0, "replaced": False})
        st.init_attempts = len(st.pending)
        st.initialized = True

    def _fit(self) -> KrigingModel:
        st, cfg = self.state, self.state.config
        X, y = st.archive.training_data(replicates=cfg.noise)
        scfg = KrigingConfig(**{**asdict(cfg.surrogate), "noise": cfg.surrogate.noise or cfg.noise, "var_type": st.space.var_types})
        last = None
        for attempt in range(2):
            try:
                return fit(X, y, scfg, seed=stream(cfg.seed, "model", st.iteration, attempt), bounds=(self.lower, self.upper))
            except KrigingError as exc:
                last = exc
                logger.warning("surrogate fit failed (attempt %d): %s", attempt + 1, exc)
        raise FitAbort(f"surrogate fit failed twice: {last}")

    def _plan_iteration(self):
        st, cfg = self.state, self.state.config
        st.iteration += 1
        st.model = self._fit()
        sug = suggest(
            st.model,
            cfg.infill_criterion,
            self.lower,
            self.upper,
            n_points=cfg.n_points,
            tolerance_x=cfg.tolerance_x,
            archive_X=st.archive.coded_matrix(),
            config=cfg.optimizer,
            rng=st.rng,
            seed=stream(cfg.seed, "optimizer", st.iteration),
            repair=st.space.repair,
        )
        for x, replaced in zip(sug.X, sug.replaced):
            for _ in range(cfg.fun_repeats):
                st.pending.append({"phase": "infill", "x": x.tolist(), "iter": st.iteration, "replaced": bool(replaced)})
        if cfg.ocba_delta > 0:
            st.pending.append({"phase": "ocba_plan", "iter": st.iteration})

    def _plan_ocba(self, item):
        st, cfg = self.state, self.state.config
        cand = [e for e in st.archive.entries if e.n_success >= 2]
        if len(cand) < 2:
            logger.info("ocba skipped: fewer than two replicated designs")
            return
        means = [e.mean for e in cand]
        variances = [float(np.var(e.replicate_ys, ddof=1)) for e in cand]
        counts = [e.n_success for e in cand]
        extra = ocba_mod.allocate(means, variances, counts, cfg.ocba_delta)
        new = []
        for e, n in zip(cand, extra):
            new += [{"phase": "ocba", "x": list(e.x_coded), "iter": item["iter"], "replaced": False}] * int(n)
        st.pending[0:0] = new

    # -- evaluation --------------------------------------------------------

    def _call(self, x_natural, index) -> float:
        try:
            y = self.objective(x_natural, index)
        except ObjectiveError:
            raise
        except Exception as exc:
            raise ObjectiveError(f"objective raised {type(exc).__name__}: {exc}") from exc
        try:
            y = float(y)
        except (TypeError, ValueError) as exc:
            raise ObjectiveError(f"objective returned non-numeric value {y!r}") from exc
        return y

    def _evaluate(self, batch: list[dict]) -> list[float]:
        st = self.state
        args = []
        for item in batch:
            args.append((st.space.to_natural(item["x"]), st.n_calls))
            st.n_calls += 1
        if self.workers == 1 or len(batch) == 1:
            return [self._call(x, i) for x, i in args]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(lambda a: self._call(*a), args))

    def _absorb(self, item: dict, index: int, y: float, log) -> None:
        st, cfg = self.state, self.state.config
        x_nat = [_py(v) for v in st.space.to_natural(item["x"])]
        st.archive.record(item["x"], x_nat, y)
        ok = math.isfinite(y)
        if ok:
            self._consecutive_failures = 0
            prev = st.progress[-1][1] if st.progress else math.inf
            st.progress.append((st.success_count, min(prev, y)))
        else:
            self._consecutive_failures += 1
            if item["phase"] == "init" and st.init_attempts < 10 * cfg.init_size:
                x = st.space.repair(random_point(self.lower, self.upper, st.rng)).tolist()
                st.pending.append({"phase": "init", "x": x, "iter": 0, "replaced": True})
                st.init_attempts += 1
        if log is not None:
            rec = {
                "iter": item["iter"],
                "phase": item["phase"],
                "x_coded": item["x"],
                "x_natural": x_nat,
                "y": y if ok else None,
                "success": ok,
                "best_y": st.progress[-1][1] if st.progress else None,
                "elapsed_s": round(time.monotonic() - self._t0, 6),
                "index": index,
            }
            if item.get("replaced"):
                rec["random_replacement"] = True
            log.write(json.dumps(rec) + "\n")
        logger.debug("eval %d phase=%s y=%s", index, item["phase"], y)

    def _check_init_outcome(self):
        st = self.state
        if st.initialized and not any(p["phase"] == "init" for p in st.pending):
            n_ok = sum(1 for e in st.archive.entries if e.n_success)
            need = max(3, st.space.k + 1)
            if n_ok < need and st.success_count < st.config.fun_evals:
                raise ObjectiveError(
                    f"initial design produced only {n_ok} successful points (need {need})"
                )

    def run(self, save_path=None) -> RunState:
        """Advance until the evaluation or time budget is spent.

        On an objective-protocol error or a failed surrogate fit the state is
        marked ``aborted`` (and saved when ``save_path`` is given) before the
        exception propagates.
        """
        st, cfg = self.state, self.state.config
        self._t0 = time.monotonic()
        log = open(self.log_path, "a") if self.log_path is not None else None
        st.status = "running"
        try:
            if not st.initialized:
                self._enqueue_init()
            while True:
                remaining = cfg.fun_evals - st.success_count
                if remaining <= 0:
                    break
                if time.monotonic() - self._t0 >= cfg.max_time_seconds:
                    break
                if not st.pending:
                    self._check_init_outcome()
                    self._plan_iteration()
                    continue
                if st.pending[0]["phase"] == "ocba_plan":
                    self._plan_ocba(st.pending.pop(0))
                    continue
                limit = self.workers if math.isinf(remaining) else min(self.workers, int(remaining))
                batch = []
                while st.pending and len(batch) < limit and st.pending[0]["phase"] != "ocba_plan":
                    batch.append(st.pending.pop(0))
                first = st.n_calls
                ys = self._evaluate(batch)
                for off, (item, y) in enumerate(zip(batch, ys)):
                    self._absorb(item, first + off, y, log)
                if self._consecutive_failures > max(100, 10 * cfg.init_size):
                    raise ObjectiveError(f"{self._consecutive_failures} consecutive failed evaluations")
            st.status = "done"
        except (ObjectiveError, FitAbort) as exc:
            st.status = "aborted"
            st.error = str(exc)
            if save_path is not None:
                save_state(st, save_path)
            raise
        finally:
            if log is not None:
                log.close()
        if save_path is not None:
            save_state(st, save_path)
        return st


def run(config: SpotConfig, objective: Callable, space: SearchSpace, workers: int = 1) -> RunState:
    return Spot.new(config, space, objective, workers=workers).run()


def best(state: RunState) -> dict:
    """Best raw observation, plus the best per-point mean for noisy runs."""
    entries = [e for e in state.archive.entries if e.replicate_ys]
    if not entries:
        raise StateError("no successful evaluations yet")
    e_min = min(entries, key=lambda e: min(e.replicate_ys))
    out = {
        "x_coded": list(e_min.x_coded),
        "x_natural": list(e_min.x_natural),
        "y_min": float(min(e_min.replicate_ys)),
    }
    if state.config.noise:
        e_mean = min(entries, key=lambda e: e.mean)
        out["x_mean_natural"] = list(e_mean.x_natural)
        out["x_mean_coded"] = list(e_mean.x_coded)
        out["y_mean_min"] = e_mean.mean
    return out


def importance(state: RunState) -> np.ndarray:
    """Per-variable activity as a percentage of the most active one."""
    if state.model is None:
        raise StateError("no surrogate fitted yet")
    k = state.space.k
    theta = np.asarray(state.model.theta, dtype=float)
    if theta.size == 1:
        return np.full(k, 100.0)
    return 100.0 * 10.0 ** (theta - theta.max())


def progress_series(state: RunState) -> list[tuple[int, float]]:
    return list(state.progress)


def grid_slice(state: RunState, i: int, j: int, resolution: int = 50, fixed=None) -> dict:
    """Surrogate mean/std on a grid over variables ``i`` and ``j``.

    Other coordinates are held at ``fixed`` (coded), defaulting to the best
    point found so far.
    """
    if state.model is None:
        raise StateError("no surrogate fitted yet")
    k = state.space.k
    if not (0 <= i < k and 0 <= j < k) or i == j:
        raise ValueError(f"need two distinct dimensions in 0..{k - 1}, got i={i}, j={j}")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    lower, upper = bounds_vectors(state.space)
    base = np.asarray(best(state)["x_coded"] if fixed is None else fixed, dtype=float)
    xi = np.linspace(lower[i], upper[i], resolution)
    xj = np.linspace(lower[j], upper[j], resolution)
    GI, GJ = np.meshgrid(xi, xj, indexing="ij")
    pts = np.tile(base, (resolution * resolution, 1))
    pts[:, i] = GI.ravel()
    pts[:, j] = GJ.ravel()
    mean, std, _ = state.model.predict(pts)
    return {
        "xi": xi,
        "xj": xj,
        "mean": mean.reshape(resolution, resolution),
        "std": std.reshape(resolution, resolution),
    }
