"""Subset-of-data hyperparameter tuning with a first-order input-noise correction.

Input noise is folded into the output noise through the slope of the
posterior mean: point i gets noise variance ``sigma_n^2 + s_i^T Sigma_x s_i``.
Slopes are held fixed while the marginal likelihood is optimized, then
recomputed from the new posterior, for a few fixed-point rounds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize

from .errors import InputError, NumericalError
from .gp_core import GaussianBelief, InducingSet, exact_gp_posterior
from .kernels import Hyperparameters, as_points, kernel_matrix

logger = logging.getLogger(__name__)

_PENALTY = 1e10
_LOG2PI = np.log(2.0 * np.pi)


@dataclass
class TuneConfig:
    subset_size: int = 200
    restarts: int = 3
    max_fixed_point_iters: int = 3
    seed: int = 0
    tune_sigma_x: bool = True
    maxiter: int = 300
    gtol: float = 1e-6
    ftol: float = 1e-10

    def __post_init__(self):
        if self.subset_size < 10:
            raise InputError("subset_size must be at least 10")
        if self.restarts < 1 or self.max_fixed_point_iters < 1:
            raise InputError("restarts and max_fixed_point_iters must be at least 1")


@dataclass
class TuneResult:
    hyp: Hyperparameters
    objective: float
    slopes: np.ndarray
    history: list[float] = field(default_factory=list)
    subset: np.ndarray | None = None


def nigp_noise(hyp: Hyperparameters, slopes: np.ndarray) -> np.ndarray:
    return hyp.sigma_n_sq + np.sum(np.asarray(slopes) ** 2 * hyp.sigma_x_diag, axis=1)


def nigp_neg_log_marginal(hyp: Hyperparameters, X, y, slopes=None) -> float:
    """Negative log marginal likelihood with slope-augmented noise.

    Returns a large finite penalty when the covariance is not positive definite.
    """
    X = as_points(X, hyp)
    y = np.asarray(y, dtype=float).ravel()
    slopes = np.zeros_like(X) if slopes is None else np.asarray(slopes, dtype=float)
    A = kernel_matrix(X, X, hyp) + np.diag(nigp_noise(hyp, slopes))
    try:
        L = cho_factor(A, lower=True)
    except LinAlgError:
        return _PENALTY
    beta = cho_solve(L, y)
    return float(0.5 * y @ beta + np.sum(np.log(np.diag(L[0]))) + 0.5 * len(y) * _LOG2PI)


def posterior_mean_slopes(hyp: Hyperparameters, X, y, noise=None) -> np.ndarray:
    """Gradient of the exact-GP posterior mean at each training input, shape (n, d)."""
    X = as_points(X, hyp)
    y = np.asarray(y, dtype=float).ravel()
    noise = np.full(len(y), hyp.sigma_n_sq) if noise is None else noise
    K = kernel_matrix(X, X, hyp)
    try:
        beta = cho_solve(cho_factor(K + np.diag(noise), lower=True), y)
    except LinAlgError as exc:
        raise NumericalError(f"slope computation failed: {exc}") from exc
    diff = (X[None, :, :] - X[:, None, :]) / hyp.lambda_diag  # [i, j] = (x_j - x_i) / lambda
    return np.einsum("ij,ijd,j->id", K, diff, beta)


class _Objective:
    """Objective over log-parameters with frozen slopes, with analytic gradient."""

    def __init__(self, X, y, slopes, sigma_x_fixed=None):
        self.X, self.y, self.slopes = X, y, slopes
        self.d = X.shape[1]
        self.sigma_x_fixed = sigma_x_fixed
        self.sqdiff = (X[:, None, :] - X[None, :, :]) ** 2

    def unpack(self, theta) -> Hyperparameters:
        d = self.d
        sx = self.sigma_x_fixed if self.sigma_x_fixed is not None else np.exp(theta[d + 2 :])
        return Hyperparameters(np.exp(theta[0]), np.exp(theta[1 : d + 1]), np.exp(theta[d + 1]), sx)

    def pack(self, hyp: Hyperparameters) -> np.ndarray:
        parts = [[np.log(hyp.alpha_sq)], np.log(hyp.lambda_diag), [np.log(hyp.sigma_n_sq)]]
        if self.sigma_x_fixed is None:
            parts.append(np.log(np.maximum(hyp.sigma_x_diag, 1e-300)))
        return np.concatenate(parts)

    def __call__(self, theta):
        with np.errstate(over="ignore", under="ignore"):
            hyp = self.unpack(theta)
            lam = hyp.lambda_diag
            K = hyp.alpha_sq * np.exp(-0.5 * np.sum(self.sqdiff / lam, axis=2))
        slope_terms = self.slopes**2 * hyp.sigma_x_diag
        A = K + np.diag(hyp.sigma_n_sq + slope_terms.sum(axis=1))
        try:
            L = cho_factor(A, lower=True)
        except (LinAlgError, ValueError):
            return _PENALTY, np.zeros_like(theta)
        beta = cho_solve(L, self.y)
        f = 0.5 * self.y @ beta + np.sum(np.log(np.diag(L[0]))) + 0.5 * len(self.y) * _LOG2PI
        W = cho_solve(L, np.eye(len(self.y))) - np.outer(beta, beta)
        grad = [0.5 * np.sum(W * K)]
        for j in range(self.d):
            grad.append(0.5 * np.sum(W * K * (0.5 * self.sqdiff[:, :, j] / lam[j])))
        grad.append(0.5 * np.trace(W) * hyp.sigma_n_sq)
        if self.sigma_x_fixed is None:
            dW = np.diag(W)
            grad.extend(0.5 * dW @ slope_terms)
        return float(f), np.array(grad)


def _initial_guesses(X, y, cfg: TuneConfig, rng):
    d = X.shape[1]
    var_y = max(float(np.var(y)), 1e-12)
    var_x = np.maximum(np.var(X, axis=0), 1e-12)
    base = Hyperparameters(var_y, var_x / 4.0, var_y / 20.0, var_x / 400.0)
    yield base
    for _ in range(cfg.restarts - 1):
        z = rng.normal(0.0, 1.0, size=2 * d + 2)
        yield Hyperparameters(
            base.alpha_sq * np.exp(z[0]),
            base.lambda_diag * np.exp(z[1 : d + 1]),
            base.sigma_n_sq * np.exp(z[d + 1]),
            base.sigma_x_diag * np.exp(z[d + 2 :]),
        )


def _bounds(X, y, tune_sigma_x: bool):
    d = X.shape[1]
    var_y = max(float(np.var(y)), 1e-12)
    var_x = np.maximum(np.var(X, axis=0), 1e-12)
    lv = np.log(var_y)
    b = [(lv - 10, lv + 10)]
    b += [(np.log(v) - 12, np.log(v) + 8) for v in var_x]
    b += [(lv - 18, lv + 2)]
    if tune_sigma_x:
        b += [(np.log(v) - 25, np.log(v) + 1) for v in var_x]
    return b


def _optimize(obj: _Objective, hyp0: Hyperparameters, bounds, cfg: TuneConfig):
    theta0 = np.clip(obj.pack(hyp0), [lo for lo, _ in bounds], [hi for _, hi in bounds])
    res = minimize(
        obj, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
        options={"maxiter": cfg.maxiter, "gtol": cfg.gtol, "ftol": cfg.ftol},
    )
    return obj.unpack(res.x), float(res.fun)


def tune(X, y, cfg: TuneConfig | None = None, sigma_x=None) -> TuneResult:
    """Tune on a random subset of the data, keeping fixed-point history.

    ``sigma_x`` fixes the input noise instead of tuning it (zeros give plain
    maximum-likelihood tuning).
    """
    cfg = cfg or TuneConfig()
    X = np.asarray(X, dtype=float)
    X = X.reshape(-1, 1) if X.ndim == 1 else X
    y = np.asarray(y, dtype=float).ravel()
    if len(X) != len(y) or len(y) < 2:
        raise InputError("X and y must have the same length (at least 2)")
    rng = np.random.default_rng(cfg.seed)
    subset = None
    if len(y) > cfg.subset_size:
        subset = np.sort(rng.choice(len(y), cfg.subset_size, replace=False))
        X, y = X[subset], y[subset]
    tune_sx = cfg.tune_sigma_x and sigma_x is None
    fixed = None
    if not tune_sx:
        fixed = np.zeros(X.shape[1]) if sigma_x is None else np.broadcast_to(np.asarray(sigma_x, float), (X.shape[1],)).copy()
    bounds = _bounds(X, y, tune_sx)

    best = None
    for hyp0 in _initial_guesses(X, y, cfg, rng):
        slopes = np.zeros_like(X)
        hyp, history = hyp0, []
        try:
            for _ in range(cfg.max_fixed_point_iters):
                obj = _Objective(X, y, slopes, fixed)
                hyp, f = _optimize(obj, hyp, bounds, cfg)
                history.append(f)
                if not np.any(hyp.sigma_x_diag > 0):
                    break
                slopes = posterior_mean_slopes(hyp, X, y, nigp_noise(hyp, slopes))
            f = nigp_neg_log_marginal(hyp, X, y, slopes)
        except (NumericalError, InputError, FloatingPointError) as exc:
            logger.debug("restart failed: %s", exc)
            continue
        if not np.isfinite(f) or f >= _PENALTY:
            continue
        if best is None or f < best.objective:
            best = TuneResult(hyp, f, slopes, history, subset)
    if best is None:
        raise NumericalError("hyperparameter optimization failed on every restart")
    return best


def tune_sod(X, y, cfg: TuneConfig | None = None) -> Hyperparameters:
    """Hyperparameters (including input noise) tuned on a random data subset."""
    return tune(X, y, cfg).hyp


def nigp_slopes(X, y, hyp: Hyperparameters, iters: int = 2) -> np.ndarray:
    X = as_points(X, hyp)
    slopes = np.zeros_like(X)
    for _ in range(iters):
        slopes = posterior_mean_slopes(hyp, X, y, nigp_noise(hyp, slopes))
    return slopes


def nigp_predict(X, y, hyp: Hyperparameters, Xstar, slopes=None) -> GaussianBelief:
    """Exact GP prediction with slope-corrected per-point noise."""
    X = as_points(X, hyp)
    if slopes is None:
        slopes = nigp_slopes(X, y, hyp)
    return exact_gp_posterior(X, y, Xstar, hyp, noise=nigp_noise(hyp, slopes))


def nigp_inducing_set(X, y, hyp: Hyperparameters, Xu, slopes=None) -> InducingSet:
    """Inducing belief initialized from the NIGP posterior at ``Xu``."""
    post = nigp_predict(X, y, hyp, Xu, slopes)
    ind = InducingSet(Xu, hyp)
    # the posterior at Xu lacks the prior's jitter; add it so Sigma_uu <= Kuu holds
    return ind.with_belief(post.mean, post.cov + hyp.jitter * np.eye(ind.n_u))
