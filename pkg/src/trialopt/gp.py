"""Gaussian process regression with per-observation noise.

The kernel is the squared exponential written as
``sigma * exp(-sum_j (x_j - x'_j)^2 / lambda_j^2)``: sigma enters linearly as
a variance and the exponent carries no 1/2 factor. Inputs are expected in the
unit cube, so the hyperparameter search bounds are dimension-free. The prior
mean is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .sobol import _sobol_raw

_LOG2PI = math.log(2.0 * math.pi)

# log10 search box for hyperparameters (inputs normalized to the unit cube)
_LOG_SIGMA_BOUNDS = (-6.0, 2.0)
_LOG_LENGTH_BOUNDS = (-2.0, 1.0)
_N_STARTS = 8
_N_DESCENTS = 3  # only the most promising starts get a full local search
_MAX_SWEEPS = 8
_JITTERS = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


class GpConditioningError(RuntimeError):
    """K + Delta could not be factorized even after jitter escalation."""


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential hyperparameters: process variance and lengthscales."""

    sigma: float
    lengthscales: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "lengthscales", tuple(float(v) for v in self.lengthscales)
        )
        if self.sigma <= 0 or any(l <= 0 for l in self.lengthscales):
            raise ValueError("kernel parameters must be strictly positive")


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float


@dataclass(frozen=True)
class GpModel:
    """A fitted model: training data, hyperparameters and cached factorization.

    ``chol`` is the lower Cholesky factor of K + Delta (+ jitter I) and
    ``alpha`` solves (K + Delta) alpha = y. Immutable; safe for concurrent
    prediction.
    """

    inputs: np.ndarray
    targets: np.ndarray
    noise_diag: np.ndarray
    params: KernelParams
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0

    @property
    def n_train(self) -> int:
        return self.inputs.shape[0]


def kernel(x: Sequence[float], y: Sequence[float], params: KernelParams) -> float:
    """Covariance between two points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ls = np.asarray(params.lengthscales, dtype=float)
    return float(params.sigma * np.exp(-np.sum(((x - y) / ls) ** 2)))


def kernel_matrix(X: np.ndarray, Y: np.ndarray, params: KernelParams) -> np.ndarray:
    """Cross-covariance matrix between two point sets of shape (n, D), (m, D)."""
    ls = np.asarray(params.lengthscales, dtype=float)
    d2 = ((X[:, None, :] - Y[None, :, :]) / ls) ** 2
    return params.sigma * np.exp(-d2.sum(axis=-1))


def _factorize(K: np.ndarray, noise_diag: np.ndarray, sigma: float):
    """Cholesky of K + Delta with escalating jitter; returns (L, jitter)."""
    n = K.shape[0]
    base = K + np.diag(noise_diag)
    for jit in _JITTERS:
        try:
            L = cholesky(base + jit * sigma * np.eye(n), lower=True)
            return L, jit
        except np.linalg.LinAlgError:
            continue
    raise GpConditioningError(
        f"covariance matrix of size {n} not positive definite after jitter "
        f"escalation to {_JITTERS[-1]:g}*sigma"
    )


def build_model(
    inputs: np.ndarray,
    targets: np.ndarray,
    noise_diag: np.ndarray,
    params: KernelParams,
) -> GpModel:
    """Assemble a GpModel, factorizing K + Delta once for reuse."""
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).reshape(-1)
    d = np.asarray(noise_diag, dtype=float).reshape(-1)
    if X.shape[0] != y.size or y.size != d.size:
        raise ValueError("inputs, targets and noise_diag sizes disagree")
    if X.shape[0] == 0:
        empty = np.empty((0, 0))
        return GpModel(X, y, d, params, empty, np.empty(0))
    K = kernel_matrix(X, X, params)
    L, jit = _factorize(K, d, params.sigma)
    alpha = cho_solve((L, True), y)
    return GpModel(X, y, d, params, L, alpha, jit)


def gp_predict_many(model: GpModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at each row of X (shape (m, D))."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    prior_var = model.params.sigma
    if model.n_train == 0:
        m = X.shape[0]
        return np.zeros(m), np.full(m, prior_var)
    k_star = kernel_matrix(model.inputs, X, model.params)
    mean = k_star.T @ model.alpha
    v = solve_triangular(model.chol, k_star, lower=True)
    var = prior_var - np.einsum("ij,ij->j", v, v)
    return mean, np.maximum(var, 0.0)


def gp_predict(model: GpModel, x: Sequence[float]) -> Prediction:
    """Posterior at a single point, via the cached factorization."""
    mean, var = gp_predict_many(model, np.asarray(x, dtype=float).reshape(1, -1))
    return Prediction(mean=float(mean[0]), variance=float(var[0]))


def log_marginal_likelihood(
    inputs: np.ndarray,
    targets: np.ndarray,
    noise_diag: np.ndarray,
    params: KernelParams,
) -> float:
    """log p(y | X, theta) = -1/2 y'(K+D)^-1 y - 1/2 log|K+D| - (n/2) log 2pi."""
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).reshape(-1)
    d = np.asarray(noise_diag, dtype=float).reshape(-1)
    K = kernel_matrix(X, X, params)
    L, _ = _factorize(K, d, params.sigma)
    z = solve_triangular(L, y, lower=True)
    return float(-0.5 * z @ z - np.log(np.diag(L)).sum() - 0.5 * y.size * _LOG2PI)


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(fun, lo: float, hi: float, tol: float = 1e-3):
    """Golden-section minimum of a 1-D function on [lo, hi]."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fun(d)
    return (c, fc) if fc < fd else (d, fd)


def fit_hyperparameters(
    inputs: np.ndarray,
    targets: np.ndarray,
    noise_diag: np.ndarray,
    extra_starts: Sequence[KernelParams] = (),
) -> KernelParams:
    """Maximum-likelihood hyperparameters by multi-start bounded local search.

    Starts from a Sobol design over log-parameter space (plus any
    ``extra_starts``, e.g. the previous fit) and descends the negative log
    marginal likelihood one coordinate at a time with golden-section line
    searches. Returns the best parameters found; raises GpConditioningError
    if every start fails to factorize.
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).reshape(-1)
    noise = np.asarray(noise_diag, dtype=float).reshape(-1)
    n, ndim = X.shape
    if n < 2:
        raise ValueError("need at least 2 observations to fit hyperparameters")

    lb = np.array([_LOG_SIGMA_BOUNDS[0]] + [_LOG_LENGTH_BOUNDS[0]] * ndim)
    ub = np.array([_LOG_SIGMA_BOUNDS[1]] + [_LOG_LENGTH_BOUNDS[1]] * ndim)

    def nll(theta: np.ndarray) -> float:
        params = KernelParams(10.0 ** theta[0], tuple(10.0 ** theta[1:]))
        try:
            return -log_marginal_likelihood(X, y, noise, params)
        except GpConditioningError:
            return math.inf

    starts = [lb + u * (ub - lb) for u in _sobol_raw(ndim + 1, _N_STARTS)]
    n_warm = len(extra_starts)
    for params in extra_starts:
        theta = np.log10([params.sigma, *params.lengthscales])
        starts.append(np.clip(theta, lb, ub))

    # rank all starts by raw likelihood; descend only from the best few
    # (warm starts always descend)
    scored = [(nll(np.asarray(t, dtype=float)), i) for i, t in enumerate(starts)]
    warm_idx = set(range(len(starts) - n_warm, len(starts)))
    chosen = {i for _, i in sorted(scored)[:_N_DESCENTS]} | warm_idx

    best_theta = None
    best_val = math.inf
    for idx in sorted(chosen):
        theta = np.array(starts[idx], dtype=float)
        val = scored[idx][0]
        for _ in range(_MAX_SWEEPS):
            before = val
            for j in range(ndim + 1):
                def line(v, j=j):
                    trial = theta.copy()
                    trial[j] = v
                    return nll(trial)

                vj, fj = _golden_min(line, lb[j], ub[j])
                if fj < val:
                    theta[j] = vj
                    val = fj
            if before - val < 1e-9 * (1.0 + abs(val)):
                break
        if val < best_val:
            best_val = val
            best_theta = theta.copy()

    if best_theta is None or not math.isfinite(best_val):
        raise GpConditioningError("every hyperparameter start failed to factorize")
    return KernelParams(10.0 ** best_theta[0], tuple(10.0 ** best_theta[1:]))
