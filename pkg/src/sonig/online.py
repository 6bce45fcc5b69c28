"""Online FITC: one-point prediction/update and inducing-set changes."""

from __future__ import annotations

import numpy as np

from .errors import InputError
from .gp_core import InducingSet, symmetrize
from .kernels import as_point, as_points, kernel_matrix

DEFAULT_ADD_THRESHOLD = 1.0


def online_predict_point(ind: InducingSet, x_plus):
    """Prior-predictive moments at a single new input.

    Returns
    -------
    mu_plus : float
    sigma_pp : float
        Variance of f(x_plus) given the current belief.
    sigma_u_plus : ndarray, shape (n_u,)
        Covariance between f_u and f(x_plus), ``Sigma_uu Kuu^{-1} K_u+``.
    """
    x_plus = as_point(x_plus, ind.hyp)
    k = kernel_matrix(ind.Xu, x_plus[None, :], ind.hyp)[:, 0]
    kinv = ind.solve(k)
    mu_plus = ind.prior_mean + kinv @ (ind.mean - ind.prior_mean)
    sigma_u_plus = ind.cov @ kinv
    sigma_pp = ind.hyp.alpha_sq - kinv @ (k - sigma_u_plus)
    return float(mu_plus), float(sigma_pp), sigma_u_plus


def online_update(ind: InducingSet, x_plus, y_plus: float, sigma_meas_sq: float) -> InducingSet:
    """Condition the inducing belief on a measurement at a known input."""
    if not sigma_meas_sq > 0:
        raise InputError("sigma_meas_sq must be positive")
    mu_plus, sigma_pp, s = online_predict_point(ind, x_plus)
    P = sigma_pp + sigma_meas_sq
    mean = ind.mean + s * ((float(y_plus) - mu_plus) / P)
    cov = symmetrize(ind.cov - np.outer(s, s) / P)
    return ind.with_belief(mean, cov)


def _normalized_sq_dist(A: np.ndarray, B: np.ndarray, lambda_diag: np.ndarray) -> np.ndarray:
    diff = A[:, None, :] - B[None, :, :]
    return np.sum(diff**2 / lambda_diag, axis=2)


def nearest_normalized_distance(ind: InducingSet, x) -> float:
    """min_i (x - x_ui)^T Lambda^{-1} (x - x_ui)."""
    x = as_point(x, ind.hyp)
    return float(np.min(_normalized_sq_dist(x[None, :], ind.Xu, ind.hyp.lambda_diag)))


def add_inducing_points(ind: InducingSet, Xu_new, tol: float = 1e-9) -> InducingSet:
    """Extend the inducing set, giving the new points their implied belief.

    The new values are predicted from the current belief, so predictions made
    with the expanded set are the same as before the addition.
    """
    hyp = ind.hyp
    Xu_new = as_points(Xu_new, hyp)
    if Xu_new.shape[0] == 0:
        raise InputError("no inducing points to add")
    if np.any(_normalized_sq_dist(Xu_new, ind.Xu, hyp.lambda_diag) < tol):
        raise InputError("new inducing point duplicates an existing one")
    within = _normalized_sq_dist(Xu_new, Xu_new, hyp.lambda_diag)
    if np.any(within[~np.eye(len(Xu_new), dtype=bool)] < tol):
        raise InputError("duplicate points among the new inducing points")

    K_nu = kernel_matrix(Xu_new, ind.Xu, hyp)
    T = ind.solve(K_nu.T).T  # K_{u+u} Kuu^{-1}
    m = ind.prior_mean
    mean_new = m + T @ (ind.mean - m)
    cross = T @ ind.cov
    K_nn = kernel_matrix(Xu_new, Xu_new, hyp) + hyp.jitter * np.eye(len(Xu_new))
    cov_nn = K_nn - T @ (ind.Kuu - ind.cov) @ T.T

    mean = np.concatenate([ind.mean, mean_new])
    cov = np.block([[ind.cov, cross.T], [cross, cov_nn]])
    return InducingSet(np.vstack([ind.Xu, Xu_new]), hyp, mean, cov, ind.prior_mean)


def remove_inducing_point(ind: InducingSet, index: int) -> InducingSet:
    """Drop one inducing point by marginalizing it out of the belief."""
    if ind.n_u < 2:
        raise InputError("cannot remove the last inducing point")
    if not 0 <= index < ind.n_u:
        raise InputError(f"inducing index {index} out of range for {ind.n_u} points")
    keep = np.delete(np.arange(ind.n_u), index)
    return InducingSet(ind.Xu[keep], ind.hyp, ind.mean[keep], ind.cov[np.ix_(keep, keep)], ind.prior_mean)
