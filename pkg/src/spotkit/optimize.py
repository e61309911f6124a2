"""Bounded global optimizers for the surrogate and infill-point suggestion.

Both optimizers accept *vectorized* objectives (``(m, d) -> (m,)``) so a whole
DE generation or a coordinate sweep costs one call; scalar objectives are
wrapped row by row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .sampling import lhd_unit, random_point

OPTIMIZERS = ("differential_evolution", "multistart_local")
CRITERIA = ("y", "s", "ei")


class ConfigError(ValueError):
    pass


@dataclass
class OptimizerConfig:
    name: str = "differential_evolution"
    max_iter: int = 1000
    population: int | None = None  # default 10 * k, capped at 100
    seed: int = 123
    crossover: float = 0.7
    tol: float = 0.01
    atol: float = 1e-12
    n_starts: int = 16

    def __post_init__(self):
        if self.name not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.name!r}; choose from {OPTIMIZERS}")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.population is not None and self.population < 4:
            raise ConfigError("differential evolution needs population >= 4")

    def population_size(self, d: int) -> int:
        if self.population is not None:
            return int(self.population)
        return max(4, min(100, 10 * d))


class DEResult(NamedTuple):
    x: np.ndarray
    fun: float
    population: np.ndarray
    population_fun: np.ndarray
    nit: int
    nfev: int


def reflect(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Fold values back into [lower, upper] by mirror reflection at the walls."""
    width = upper - lower
    safe = np.where(width > 0, width, 1.0)
    y = np.mod(x - lower, 2 * safe)
    y = np.where(y > safe, 2 * safe - y, y)
    out = np.where(width > 0, lower + y, lower)
    return np.clip(out, lower, upper)


def _as_batch(objective: Callable, vectorized: bool) -> Callable[[np.ndarray], np.ndarray]:
    if vectorized:
        def batch(X):
            return np.asarray(objective(X), dtype=float).reshape(-1)
    else:
        def batch(X):
            return np.array([float(objective(row)) for row in X])

    def safe(X):
        f = batch(X)
        return np.where(np.isnan(f), np.inf, f)

    return safe


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def de_minimize(objective, lower, upper, config: OptimizerConfig | None = None, *, vectorized=False, seed=None) -> DEResult:
    """rand/1/bin differential evolution with per-generation dithered F."""
    config = config or OptimizerConfig()
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d = lower.size
    rng = _rng(config.seed if seed is None else seed)
    f_batch = _as_batch(objective, vectorized)

    span = np.where(upper > lower, upper - lower, 1.0)
    P = config.population_size(d)
    pop = lower + lhd_unit(P, d, rng) * (upper - lower)
    fit = f_batch(pop)
    nfev = P
    rows = np.arange(P)
    nit = 0
    for nit in range(1, config.max_iter + 1):
        F = rng.uniform(0.5, 1.0)
        keys = rng.random((P, P))
        keys[rows, rows] = np.inf
        r = np.argsort(keys, axis=1)[:, :3]
        mutant = pop[r[:, 0]] + F * (pop[r[:, 1]] - pop[r[:, 2]])
        cross = rng.random((P, d)) < config.crossover
        cross[rows, rng.integers(d, size=P)] = True
        trial = reflect(np.where(cross, mutant, pop), lower, upper)
        f_trial = f_batch(trial)
        nfev += P
        better = f_trial <= fit
        pop[better] = trial[better]
        fit[better] = f_trial[better]
        if np.all(np.isfinite(fit)):
            if np.std(fit) <= config.atol + config.tol * abs(np.mean(fit)):
                break
            if np.all(np.ptp(pop, axis=0) <= 1e-12 * span):
                break
    best = int(np.argmin(fit))
    return DEResult(pop[best].copy(), float(fit[best]), pop, fit, nit, nfev)


def differential_evolution(objective, bounds, config: OptimizerConfig | None = None, *, vectorized=False, seed=None):
    """Minimize ``objective`` over the box ``bounds = (lower, upper)``.

    Returns ``(x_best, f_best)``.
    """
    res = de_minimize(objective, bounds[0], bounds[1], config, vectorized=vectorized, seed=seed)
    return res.x, res.fun


def multistart_minimize(objective, lower, upper, config: OptimizerConfig | None = None, *, vectorized=False, seed=None) -> DEResult:
    """LHD multistart, each start refined by bounded coordinate descent.

    The step per coordinate starts at a quarter of the span and is halved
    after a sweep without improvement; a start stops once all its steps
    drop below 1e-8 of the span.  ``max_iter`` bounds the number of sweeps.
    """
    config = config or OptimizerConfig(name="multistart_local")
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d = lower.size
    span = upper - lower
    rng = _rng(config.seed if seed is None else seed)
    f_batch = _as_batch(objective, vectorized)

    S = config.n_starts
    X = lower + lhd_unit(S, d, rng) * span
    fx = f_batch(X)
    nfev = S
    step = np.tile(0.25 * span, (S, 1))
    stop = 1e-8 * np.where(span > 0, span, 1.0)
    nit = 0
    for nit in range(1, config.max_iter + 1):
        active = np.any(step >= stop, axis=1)
        if not active.any():
            break
        improved = np.zeros(S, dtype=bool)
        for j in range(d):
            if span[j] == 0:
                continue
            plus = X.copy()
            minus = X.copy()
            plus[:, j] = np.minimum(X[:, j] + step[:, j], upper[j])
            minus[:, j] = np.maximum(X[:, j] - step[:, j], lower[j])
            fp = f_batch(plus)
            fm = f_batch(minus)
            nfev += 2 * S
            use_plus = (fp < fx) & (fp <= fm) & active
            use_minus = (fm < fx) & ~use_plus & active
            X[use_plus] = plus[use_plus]
            fx[use_plus] = fp[use_plus]
            X[use_minus] = minus[use_minus]
            fx[use_minus] = fm[use_minus]
            improved |= use_plus | use_minus
        step[~improved] *= 0.5
    best = int(np.argmin(fx))
    return DEResult(X[best].copy(), float(fx[best]), X, fx, nit, nfev)


def minimize(objective, lower, upper, config: OptimizerConfig | None = None, *, vectorized=False, seed=None) -> DEResult:
    config = config or OptimizerConfig()
    if config.name == "multistart_local":
        return multistart_minimize(objective, lower, upper, config, vectorized=vectorized, seed=seed)
    return de_minimize(objective, lower, upper, config, vectorized=vectorized, seed=seed)


class Suggestion(NamedTuple):
    X: np.ndarray
    replaced: np.ndarray  # True where a random point stands in for the optimizer's pick


def criterion_function(model, criterion: str) -> Callable[[np.ndarray], np.ndarray]:
    if criterion == "all":
        raise ConfigError('infill criterion "all" is not supported; use "y", "s" or "ei"')
    if criterion not in CRITERIA:
        raise ConfigError(f"unknown infill criterion {criterion!r}; choose from {CRITERIA}")

    def surface(X):
        mean, std, neg_ei = model.predict(X)
        if criterion == "y":
            return mean
        if criterion == "s":
            return -std
        return neg_ei

    return surface


def _min_dist(x: np.ndarray, others: np.ndarray) -> float:
    if len(others) == 0:
        return np.inf
    return float(np.min(np.linalg.norm(others - x, axis=1)))


def suggest(
    model,
    criterion: str,
    lower,
    upper,
    n_points: int = 1,
    tolerance_x: float = 0.0,
    archive_X=None,
    config: OptimizerConfig | None = None,
    rng: np.random.Generator | None = None,
    seed=None,
    repair: Callable[[np.ndarray], np.ndarray] | None = None,
) -> Suggestion:
    """Optimize the infill criterion on ``model`` and pick ``n_points`` candidates.

    ``rng`` feeds replacement draws; ``seed`` (int or Generator) drives the
    optimizer.  Candidates within ``tolerance_x`` of an archived point are
    swapped for random points and flagged.
    """
    if n_points < 1:
        raise ConfigError("n_points must be >= 1")
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rng = rng if rng is not None else np.random.default_rng(0)
    repair = repair or (lambda x: x)
    archive = np.empty((0, lower.size)) if archive_X is None else np.atleast_2d(np.asarray(archive_X, dtype=float))

    res = minimize(criterion_function(model, criterion), lower, upper, config, vectorized=True, seed=seed)

    order = np.argsort(res.population_fun, kind="stable")
    chosen: list[np.ndarray] = []
    replaced: list[bool] = []
    for idx in order:
        if len(chosen) == n_points:
            break
        x = repair(res.population[idx].copy())
        if chosen and _min_dist(x, np.array(chosen)) < tolerance_x:
            continue
        chosen.append(x)
        replaced.append(False)
    while len(chosen) < n_points:
        chosen.append(repair(random_point(lower, upper, rng)))
        replaced.append(True)

    if tolerance_x > 0:
        for i, x in enumerate(chosen):
            if _min_dist(x, archive) <= tolerance_x:
                chosen[i] = repair(random_point(lower, upper, rng))
                replaced[i] = True
    return Suggestion(np.array(chosen), np.array(replaced))


def suggest_new_X(model, criterion, lower, upper, n_points=1, tolerance_x=0.0, archive_X=None, config=None, rng=None, seed=None) -> np.ndarray:
    """Infill points as an ``(n_points, k)`` array; see :func:`suggest`."""
    return suggest(model, criterion, lower, upper, n_points, tolerance_x, archive_X, config, rng, seed).X
