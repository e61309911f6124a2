"""Gaussian-correlation Kriging with maximum-likelihood hyperparameters.

Correlation between two points is ``exp(-sum_d 10**theta_d * |dx_d|**p_d)``;
factor dimensions use a 0/1 mismatch distance instead of ``|dx_d|``.
theta is handled on a log10 scale throughout.  A small jitter is part of the
kernel at zero distance, which keeps noise-free models exact interpolators.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtr

from .optimize import OptimizerConfig, minimize

JITTER_START = 1e-10
JITTER_MAX = 1e-4
SIGMA2_FLOOR = 1e-300
LOG_LAMBDA_BOUNDS = (-9.0, 0.0)
P_BOUNDS = (1.0, 2.0)
# predictive variance (relative to sigma2) below this is treated as zero
REL_VAR_FLOOR = 1e-12


class KrigingError(Exception):
    pass


class KrigingFitError(KrigingError):
    pass


class KrigingNumericError(KrigingError, ArithmeticError):
    pass


@dataclass
class KrigingConfig:
    noise: bool = False
    n_theta: int = 1
    min_theta: float = -3.0
    max_theta: float = 3.0
    n_p: int = 1
    optim_p: bool = False
    cod_type: str = "norm"
    use_cod_y: bool = False
    model_fun_evals: int = 1000
    model_optimizer: str = "differential_evolution"
    var_type: list[str] | None = None

    def __post_init__(self):
        if not self.min_theta < self.max_theta:
            raise ValueError("min_theta must be < max_theta")
        if self.cod_type not in ("norm", "none"):
            raise ValueError(f"unknown cod_type {self.cod_type!r}")
        if self.n_theta < 1 or self.n_p < 1:
            raise ValueError("n_theta and n_p must be >= 1")
        if self.model_fun_evals < 1:
            raise ValueError("model_fun_evals must be >= 1")

    def check_dim(self, k: int) -> None:
        if self.n_theta not in (1, k):
            raise ValueError(f"n_theta must be 1 or k={k}, got {self.n_theta}")
        if self.n_p not in (1, k):
            raise ValueError(f"n_p must be 1 or k={k}, got {self.n_p}")
        if self.var_type is not None and len(self.var_type) != k:
            raise ValueError(f"var_type has {len(self.var_type)} entries for k={k}")


def _factor_mask(var_type, k: int) -> np.ndarray:
    if var_type is None:
        return np.zeros(k, dtype=bool)
    return np.array([t == "factor" for t in var_type], dtype=bool)


def pairwise_distances(A: np.ndarray, B: np.ndarray, factor: np.ndarray | None = None) -> np.ndarray:
    """Per-dimension distances, shape ``(len(A), len(B), k)``."""
    D = np.abs(A[:, None, :] - B[None, :, :])
    if factor is not None and factor.any():
        D[..., factor] = (np.rint(A[:, None, factor]) != np.rint(B[None, :, factor])).astype(float)
    return D


def code_inputs(X, cod_bounds: np.ndarray, cod_type: str, factor: np.ndarray) -> np.ndarray:
    """Scale non-factor columns to [0, 1] over ``cod_bounds`` (``norm``) or pass through."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if cod_type == "none":
        return X.copy()
    lo, hi = cod_bounds[:, 0], cod_bounds[:, 1]
    span = np.where(hi > lo, hi - lo, 1.0)
    return np.where(factor, X, (X - lo) / span)


def _broadcast(v, k: int) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return np.broadcast_to(v, (k,)) if v.size == 1 else v


def _corr_from_distances(D: np.ndarray, theta: np.ndarray, p: np.ndarray) -> np.ndarray:
    """``D``: (..., k) distances, ``theta``/``p``: (batch, k) -> (batch, ...)."""
    extra = D.ndim - 1
    shape = (theta.shape[0],) + (1,) * extra + (theta.shape[1],)
    w = 10.0 ** theta.reshape(shape)
    pe = p.reshape(shape)
    return np.exp(-np.sum(w * D[None] ** pe, axis=-1))


def build_correlation(X, theta, p=2.0, Lambda=0.0, var_type=None, jitter=JITTER_START) -> np.ndarray:
    """Correlation matrix of the rows of ``X`` (already in coded units)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, k = X.shape
    theta = _broadcast(theta, k)
    p = _broadcast(p, k)
    if not np.all(np.isfinite(theta)):
        raise KrigingNumericError("theta must be finite")
    if Lambda < 0:
        raise KrigingNumericError("Lambda must be >= 0")
    D = pairwise_distances(X, X, _factor_mask(var_type, k))
    R = _corr_from_distances(D, theta[None], p[None])[0]
    R[np.diag_indices(n)] = 1.0 + Lambda + jitter
    if not np.all(np.isfinite(R)):
        raise KrigingNumericError("non-finite correlation entries")
    return R


def _cholesky_batch(R: np.ndarray, base_diag: np.ndarray):
    """Cholesky of each matrix in ``R`` with escalating jitter.

    ``base_diag`` is the diagonal without jitter (1 + Lambda) per batch
    member.  Returns (L, jitter, ok) where failed members have ok=False.
    """
    B, n, _ = R.shape
    idx = np.arange(n)
    try:
        R[:, idx, idx] = base_diag[:, None] + JITTER_START
        return np.linalg.cholesky(R), np.full(B, JITTER_START), np.ones(B, dtype=bool)
    except np.linalg.LinAlgError:
        pass
    L = np.zeros_like(R)
    jit = np.full(B, np.nan)
    ok = np.zeros(B, dtype=bool)
    for b in range(B):
        eps = JITTER_START
        while eps <= JITTER_MAX * (1 + 1e-9):
            R[b, idx, idx] = base_diag[b] + eps
            try:
                L[b] = np.linalg.cholesky(R[b])
                jit[b] = eps
                ok[b] = True
                break
            except np.linalg.LinAlgError:
                eps *= 10.0
    return L, jit, ok


def _likelihood_terms(L: np.ndarray, y: np.ndarray):
    """mu, sigma2 and ln det R from batched Cholesky factors."""
    B, n, _ = L.shape
    rhs = np.stack([np.ones(n), y], axis=1)
    Z = np.linalg.solve(L, np.broadcast_to(rhs, (B, n, 2)))  # L^{-1} [1, y]
    u, w = Z[..., 0], Z[..., 1]
    uu = np.sum(u * u, axis=1)
    mu = np.sum(u * w, axis=1) / uu
    resid = w - mu[:, None] * u
    sigma2 = np.sum(resid * resid, axis=1) / n
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1)
    return mu, sigma2, logdet


def _nll_batch(D: np.ndarray, y: np.ndarray, theta: np.ndarray, p: np.ndarray, lam: np.ndarray) -> np.ndarray:
    n = y.size
    R = _corr_from_distances(D, theta, p)
    L, _, ok = _cholesky_batch(R, 1.0 + lam)
    out = np.full(theta.shape[0], np.inf)
    if ok.any():
        mu, sigma2, logdet = _likelihood_terms(L[ok], y)
        out[ok] = 0.5 * n * np.log(np.maximum(sigma2, SIGMA2_FLOOR)) + 0.5 * logdet
    return out


def neg_ln_like(X, y, theta, p=2.0, Lambda=0.0, var_type=None) -> float:
    """Concentrated negative log-likelihood of data ``(X, y)``.

    ``X`` is taken as-is (no normalization).  Returns ``inf`` when the
    correlation matrix stays indefinite after the maximum jitter.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    k = X.shape[1]
    D = pairwise_distances(X, X, _factor_mask(var_type, k))
    return float(
        _nll_batch(D, y, _broadcast(theta, k)[None], _broadcast(p, k)[None], np.array([float(Lambda)]))[0]
    )


@dataclass
class KrigingModel:
    X: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    p: np.ndarray
    Lambda: float | None
    mu_hat: float
    sigma2_hat: float
    chol: np.ndarray
    negLnLike: float
    cod_bounds: np.ndarray  # (k, 2) min/max used to scale inputs
    var_type: list[str] | None = None
    cod_type: str = "norm"
    y_scale: tuple[float, float] = (0.0, 1.0)  # (offset, scale) when use_cod_y
    jitter: float = JITTER_START
    p_fitted: bool = False
    _Xn: np.ndarray = field(init=False, repr=False)
    _alpha: np.ndarray = field(init=False, repr=False)
    _u: np.ndarray = field(init=False, repr=False)
    _Linv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float))
        self.cod_bounds = np.asarray(self.cod_bounds, dtype=float).reshape(-1, 2)
        self._factor = _factor_mask(self.var_type, self.k)
        self._Xn = self.code_X(self.X)
        yc = self._code_y(self.y)
        n = self.n
        ones = np.ones(n)
        self._Linv = solve_triangular(self.chol, np.eye(n), lower=True)
        self._u = self._Linv @ ones
        w = self._Linv @ (yc - self.mu_hat)
        self._alpha = solve_triangular(self.chol.T, w, lower=False)
        self._oRo = float(self._u @ self._u)
        self._w = (10.0 ** _broadcast(self.theta, self.k)).copy()
        self._pk = _broadcast(self.p, self.k).copy()
        self._y_min = float(np.min(self.y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def log(self) -> dict:
        return {
            "negLnLike": np.array([self.negLnLike]),
            "theta": self.theta.copy(),
            "p": self.p.copy() if self.p_fitted else [],
            "Lambda": [] if self.Lambda is None else np.array([self.Lambda]),
        }

    def code_X(self, X) -> np.ndarray:
        return code_inputs(X, self.cod_bounds, self.cod_type, self._factor)

    def _code_y(self, y):
        off, scale = self.y_scale
        return (np.asarray(y, dtype=float) - off) / scale

    def predict(self, X):
        """Mean, standard deviation and negative expected improvement.

        Accepts a single point (returns floats) or an ``(m, k)`` matrix
        (returns arrays).  Improvement is measured against the smallest
        training target.
        """
        X_arr = np.asarray(X, dtype=float)
        single = X_arr.ndim == 1
        Xq = np.atleast_2d(X_arr)
        if Xq.shape[1] != self.k:
            raise ValueError(f"expected points of dimension {self.k}, got {Xq.shape[1]}")
        Xqn = self.code_X(Xq)
        D = pairwise_distances(Xqn, self._Xn, self._factor)
        if np.all(self._pk == 2.0):
            r = np.exp(-(D * D) @ self._w)
        else:
            r = np.exp(-(D**self._pk) @ self._w)
        same = np.all(D == 0.0, axis=2)
        r = r + self.jitter * same
        off, scale = self.y_scale
        mean_c = self.mu_hat + r @ self._alpha
        V = self._Linv @ r.T
        rRr = np.sum(V * V, axis=0)
        oRr = self._u @ V
        rel = 1.0 + self.jitter - rRr + (1.0 - oRr) ** 2 / self._oRo
        rel = np.where(rel < REL_VAR_FLOOR, 0.0, rel)
        std = np.sqrt(self.sigma2_hat * rel) * scale
        mean = off + scale * mean_c

        imp = self._y_min - mean
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(std > 0, imp / np.where(std > 0, std, 1.0), 0.0)
        ei = np.where(std > 0, imp * ndtr(z) + std * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi), 0.0)
        neg_ei = -np.maximum(ei, 0.0)
        if single:
            return float(mean[0]), float(std[0]), float(neg_ei[0])
        return mean, std, neg_ei

    def to_dict(self) -> dict:
        return {
            "X": self.X.tolist(),
            "y": self.y.tolist(),
            "theta": self.theta.tolist(),
            "p": self.p.tolist(),
            "Lambda": self.Lambda,
            "mu_hat": self.mu_hat,
            "sigma2_hat": self.sigma2_hat,
            "cod_bounds": self.cod_bounds.tolist(),
            "cod_type": self.cod_type,
            "y_scale": list(self.y_scale),
            "var_type": self.var_type,
            "jitter": self.jitter,
            "p_fitted": self.p_fitted,
            "negLnLike": self.negLnLike,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "KrigingModel":
        """Rebuild a model; the Cholesky factor is recomputed from the stored fields."""
        X = np.atleast_2d(np.asarray(d["X"], dtype=float))
        factor = _factor_mask(d.get("var_type"), X.shape[1])
        Xn = code_inputs(X, np.asarray(d["cod_bounds"], dtype=float).reshape(-1, 2), d.get("cod_type", "norm"), factor)
        lam = d.get("Lambda") or 0.0
        R = build_correlation(Xn, d["theta"], d["p"], lam, d.get("var_type"), jitter=d.get("jitter", JITTER_START))
        chol = np.linalg.cholesky(R)
        return cls(
            X=X,
            y=d["y"],
            theta=d["theta"],
            p=d["p"],
            Lambda=d.get("Lambda"),
            mu_hat=d["mu_hat"],
            sigma2_hat=d["sigma2_hat"],
            chol=chol,
            negLnLike=d["negLnLike"],
            cod_bounds=d["cod_bounds"],
            var_type=d.get("var_type"),
            cod_type=d.get("cod_type", "norm"),
            y_scale=tuple(d.get("y_scale", (0.0, 1.0))),
            jitter=d.get("jitter", JITTER_START),
            p_fitted=bool(d.get("p_fitted", False)),
        )


def fit(X, y, config: KrigingConfig | None = None, seed=0, bounds=None) -> KrigingModel:
    """Fit theta (and optionally p and the nugget) by maximum likelihood.

    Rows with non-finite ``y`` are dropped.  ``bounds`` (lower, upper) sets the
    input scaling for ``cod_type="norm"``; by default the data range is used.
    """
    config = config or KrigingConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.size:
        raise KrigingFitError(f"X has {X.shape[0]} rows but y has {y.size} values")
    keep = np.isfinite(y)
    X, y = X[keep], y[keep]
    n, k = X.shape
    config.check_dim(k)
    if n < 2:
        raise KrigingFitError(f"need at least 2 finite observations, got {n}")
    if not np.all(np.isfinite(X)):
        raise KrigingFitError("X contains non-finite entries")
    if not config.noise and np.all(X == X[0]):
        raise KrigingFitError("all input rows are identical; fit with noise=True")

    if bounds is None:
        cod_bounds = np.column_stack([X.min(axis=0), X.max(axis=0)])
    else:
        cod_bounds = np.column_stack([np.asarray(bounds[0], float), np.asarray(bounds[1], float)])
    if config.use_cod_y:
        lo, hi = float(y.min()), float(y.max())
        y_scale = (lo, hi - lo if hi > lo else 1.0)
    else:
        y_scale = (0.0, 1.0)

    factor = _factor_mask(config.var_type, k)
    Xn = code_inputs(X, cod_bounds, config.cod_type, factor)
    yc = (y - y_scale[0]) / y_scale[1]
    D = pairwise_distances(Xn, Xn, factor)

    nt, npp = config.n_theta, (config.n_p if config.optim_p else 0)
    lower = [config.min_theta] * nt + [P_BOUNDS[0]] * npp
    upper = [config.max_theta] * nt + [P_BOUNDS[1]] * npp
    if config.noise:
        lower.append(LOG_LAMBDA_BOUNDS[0])
        upper.append(LOG_LAMBDA_BOUNDS[1])

    def unpack(P):
        P = np.atleast_2d(P)
        theta = np.broadcast_to(P[:, :nt], (P.shape[0], k)) if nt == 1 else P[:, :nt]
        if npp:
            pp = P[:, nt:nt + npp]
            p = np.broadcast_to(pp, (P.shape[0], k)) if npp == 1 else pp
        else:
            p = np.full((P.shape[0], k), 2.0)
        lam = 10.0 ** P[:, -1] if config.noise else np.zeros(P.shape[0])
        return np.ascontiguousarray(theta), np.ascontiguousarray(p), lam

    def objective(P):
        return _nll_batch(D, yc, *unpack(P))

    d = len(lower)
    pop = max(4, min(100, 10 * d))
    opt_cfg = OptimizerConfig(
        name=config.model_optimizer,
        max_iter=max(1, config.model_fun_evals // pop),
        population=pop,
    )
    res = minimize(objective, np.array(lower), np.array(upper), opt_cfg, vectorized=True, seed=seed)
    if not np.isfinite(res.fun):
        raise KrigingFitError("likelihood is infinite everywhere; correlation matrix not factorizable")

    theta_b, p_b, lam_b = unpack(res.x[None])
    R = _corr_from_distances(D, theta_b, p_b)
    L, jit, ok = _cholesky_batch(R, 1.0 + lam_b)
    mu, sigma2, _ = _likelihood_terms(L, yc)
    return KrigingModel(
        X=X,
        y=y,
        theta=res.x[:nt].copy(),
        p=res.x[nt:nt + npp].copy() if npp else np.full(config.n_p, 2.0),
        Lambda=float(lam_b[0]) if config.noise else None,
        mu_hat=float(mu[0]),
        sigma2_hat=float(max(sigma2[0], 0.0)),
        chol=L[0],
        negLnLike=float(res.fun),
        cod_bounds=cod_bounds,
        var_type=list(config.var_type) if config.var_type is not None else None,
        cod_type=config.cod_type,
        y_scale=y_scale,
        jitter=float(jit[0]),
        p_fitted=bool(npp),
    )
