"""End-to-end acceptance checks, one test per numbered criterion.

Each test records a PASS/FAIL line that is printed in the pytest summary.
"""

import itertools
import math
import time

import numpy as np

from conftest import record
from spotkit.cli import main
from spotkit.kriging import KrigingConfig, fit, neg_ln_like
from spotkit.objectives import FunControl, fun_branin, make_objective
from spotkit.ocba import allocate, apcs
from spotkit.sampling import lhd
from spotkit.space import SearchSpace, VariableSpec, design_table, transform_value
from spotkit.spot import SpotConfig, importance, run

from test_kriging import SCHONLAU_X, SCHONLAU_Y, dense_nll, random_instance

SEEDS = range(10)


def sweep(objective_name, space, fun_evals, init_size):
    ys = []
    t0 = time.perf_counter()
    for seed in SEEDS:
        cfg = SpotConfig(fun_evals=fun_evals, init_size=init_size, seed=seed, infill_criterion="y")
        st = run(cfg, make_objective(objective_name, FunControl(seed=seed)), space)
        ys.append(min(b for _, b in st.progress))
    return np.array(ys), time.perf_counter() - t0


def test_01_branin_convergence():
    ys, secs = sweep("fun_branin", SearchSpace.from_bounds([-5, 0], [10, 15]), 20, 10)
    ok = np.sum(ys <= 0.45) >= 7 and np.all(ys <= 1.5) and secs <= 30
    detail = f"{np.sum(ys <= 0.45)}/10 seeds <= 0.45, worst {ys.max():.4f}, {secs:.1f}s"
    assert record(1, ok, detail), detail


def test_02_sphere_convergence():
    ys, secs = sweep("fun_sphere", SearchSpace.from_bounds([-1], [1]), 25, 10)
    ok = np.sum(ys <= 1e-4) >= 8 and secs <= 10
    detail = f"{np.sum(ys <= 1e-4)}/10 seeds <= 1e-4, median {np.median(ys):.2e}, {secs:.1f}s"
    assert record(2, ok, detail), detail


def test_03_branin_minima():
    vals = [fun_branin(x) for x in [(-math.pi, 12.275), (math.pi, 2.275), (9.42478, 2.475)]]
    err = max(abs(v - 0.397887) for v in vals)
    assert record(3, err <= 1e-4, f"max |f - 0.397887| = {err:.2e}"), vals


def test_04_schonlau_fit():
    m = fit(SCHONLAU_X, SCHONLAU_Y, KrigingConfig(), seed=0)
    ok = abs(m.negLnLike - 1.20788) <= 0.05 and abs(m.theta[0] - 1.09276) <= 0.15
    detail = f"negLnLike {m.negLnLike:.5f}, theta {m.theta[0]:.5f} (inputs scaled to [0,1])"
    assert record(4, ok, detail), detail


def test_05_nugget_dominance():
    rng = np.random.default_rng(123)
    X = rng.uniform(-1, 1, size=(10, 1))
    y = X[:, 0] ** 2 + rng.normal(0, 2, size=10)
    plain = fit(X, y, KrigingConfig(noise=False), seed=0)
    noisy = fit(X, y, KrigingConfig(noise=True), seed=0)
    ok = noisy.negLnLike <= plain.negLnLike and noisy.Lambda > 0
    detail = f"nugget {noisy.negLnLike:.3f} vs plain {plain.negLnLike:.3f}, Lambda {noisy.Lambda:.3g}"
    assert record(5, ok, detail), detail


def test_06_nan_handling():
    t0 = time.perf_counter()
    cfg = SpotConfig(fun_evals=30, init_size=20, seed=123)
    st = run(cfg, make_objective("fun_random_error", FunControl(seed=123)), SearchSpace.from_bounds([-1], [1]))
    secs = time.perf_counter() - t0
    ok = st.success_count == 30 and secs <= 5
    detail = f"success_count {st.success_count} after {st.n_calls} calls, {secs:.2f}s"
    assert record(6, ok, detail), detail


def test_07_interpolation():
    rng = np.random.default_rng(7)
    worst_mean = worst_std = 0.0
    ei_zero = True
    for i in range(50):
        n, k = int(rng.integers(3, 13)), int(rng.integers(1, 5))
        X = rng.uniform(-3, 3, size=(n, k))
        y = np.cos(X).sum(axis=1) + 0.1 * X[:, 0] ** 3
        m = fit(X, y, KrigingConfig(n_theta=int(rng.choice([1, k]))), seed=i)
        mean, std, nei = m.predict(X)
        worst_mean = max(worst_mean, float(np.max(np.abs(mean - y))))
        worst_std = max(worst_std, float(np.max(std)))
        ei_zero &= bool(np.all(nei == 0.0))
    ok = worst_mean <= 1e-6 and worst_std <= 1e-6 and ei_zero
    detail = f"max|mean-y| {worst_mean:.1e}, max std {worst_std:.1e}, EI==0: {ei_zero}"
    assert record(7, ok, detail), detail


def test_08_likelihood_oracle():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(100):
        X, y, theta, p, lam = random_instance(rng, n_max=8)
        worst = max(worst, abs(neg_ln_like(X, y, theta, p, lam) - dense_nll(X, y, theta, p, lam)))
    assert record(8, worst <= 1e-8, f"max deviation from dense-inverse oracle {worst:.1e}"), worst


def one_per_stratum(points, lower, upper):
    n = points.shape[0]
    for j in range(points.shape[1]):
        counts, _ = np.histogram(points[:, j], bins=np.linspace(lower[j], upper[j], n + 1))
        if not np.all(counts == 1):
            return False
    return True


def test_09_lhs_stratification():
    rng = np.random.default_rng(9)
    bad = 0
    for _ in range(1000):
        n, k, seed = int(rng.integers(1, 40)), int(rng.integers(1, 8)), int(rng.integers(0, 2**31))
        lower = rng.uniform(-10, 0, size=k)
        upper = lower + rng.uniform(0.1, 10, size=k)
        pts = lhd(n, lower, upper, seed).points
        bad += not one_per_stratum(pts, lower, upper)
        if not np.array_equal(pts.tobytes(), lhd(n, lower, upper, seed).points.tobytes()):
            bad += 1
    assert record(9, bad == 0, f"{1000 - bad}/1000 triples stratified and reproducible"), bad


OCBA_GAPS = [(0.5, 1), (0.5, 2), (1, 1), (1, 2), (1, 3), (2, 3), (0.25, 0.5), (2, 2), (3, 4)]
OCBA_VARS = list(itertools.product([0.25, 1.0, 4.0], repeat=3))
OCBA_COUNTS = [(2, 2, 2), (5, 5, 5), (2, 5, 3), (3, 2, 5)]


def test_10_ocba():
    rng = np.random.default_rng(10)
    conserved = 0
    for _ in range(1000):
        m = int(rng.integers(2, 10))
        delta = int(rng.integers(1, 200))
        out = allocate(rng.normal(size=m), rng.exponential(size=m), rng.integers(0, 20, size=m), delta)
        conserved += out.sum() == delta and np.all(out >= 0)

    allocs = [np.array((i, j, 10 - i - j)) for i in range(11) for j in range(11 - i)]
    total = fails = 0
    worst = 0.0
    for (d1, d2), v, c in itertools.product(OCBA_GAPS, OCBA_VARS, OCBA_COUNTS):
        m, v, c = np.array([0.0, d1, d2]), np.array(v), np.array(c)
        best = max(apcs(m, v, c + a) for a in allocs)
        ours = apcs(m, v, c + allocate(m, v, c, 10))
        gap = (best - ours) / abs(best)
        total += 1
        fails += gap > 0.05
        worst = max(worst, gap)
    ok = conserved == 1000 and fails == 0
    detail = (
        f"conservation {conserved}/1000; PCS within 5% of brute force on "
        f"{total - fails}/{total} 3-design instances (worst gap {100 * worst:.1f}%)"
    )
    assert record(10, ok, detail), detail


CLI_CFG = """
[spot]
fun_evals = {evals}
seed = {seed}
[design]
init_size = 10
[fun_control]
sigma = 0.05
[objective]
builtin = "fun_branin"
[output]
dir = "{out}"
"""


def _cli_run(tmp_path, seed, evals, out, workers=1):
    cfg = tmp_path / f"{out}.toml"
    cfg.write_text(CLI_CFG.format(evals=evals, seed=seed, out=out))
    assert main(["run", "--config", str(cfg), "--workers", str(workers)]) == 0
    return tmp_path / out / "state.json"


def test_11_determinism_and_resume(tmp_path):
    same = 0
    for seed in range(5):
        full = _cli_run(tmp_path, seed, 25, f"full{seed}")
        part = _cli_run(tmp_path, seed, 10, f"part{seed}")
        assert main(["resume", "--state", str(part), "--add-evals", "15"]) == 0
        same += full.read_bytes() == part.read_bytes()
    w1 = _cli_run(tmp_path, 0, 25, "w1", workers=1)
    w4 = _cli_run(tmp_path, 0, 25, "w4", workers=4)
    workers_same = w1.read_bytes() == w4.read_bytes()
    ok = same == 5 and workers_same
    detail = f"resume identical {same}/5 seeds, workers 1 vs 4 identical: {workers_same}"
    assert record(11, ok, detail), detail


def test_12_transforms_and_table():
    spec = VariableSpec("batch_size", "int", 1, 6, transform="transform_power_2_int")
    v5, v4 = transform_value(spec, 5), transform_value(spec, 4)
    header = design_table(SearchSpace((spec,))).splitlines()[0]
    cells = [c.strip() for c in header.strip().strip("|").split("|")]
    ok = v5 == 32 and v4 == 16 and cells == ["name", "type", "default", "lower", "upper", "transform"]
    detail = f"power_2_int(5)={v5}, power_2_int(4)={v4}, header {header.strip()}"
    assert record(12, ok, detail), detail


def test_13_anisotropy():
    space = SearchSpace.from_bounds([-1, -1], [1, 1])
    cfg = dict(fun_evals=20, init_size=10, seed=123, surrogate=KrigingConfig(n_theta=2))
    st = run(SpotConfig(**cfg), make_objective("fun_sphere"), space)
    both = importance(st)

    def inert(x, index=None):
        return float(x[0] ** 2)

    cfg["surrogate"] = KrigingConfig(n_theta=2)
    st2 = run(SpotConfig(**cfg), inert, space)
    one = importance(st2)
    ok = st.model.theta.size == 2 and np.all(both >= 50) and one[1] < 20
    detail = (
        f"sphere theta {np.round(st.model.theta, 4).tolist()} importance {np.round(both, 1).tolist()}; "
        f"inert dim importance {one[1]:.2f}"
    )
    assert record(13, ok, detail), detail
