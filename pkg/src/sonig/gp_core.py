"""Batch GP regression: exact posterior, FITC and prediction from inducing points."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular

from .errors import InputError, NumericalError
from .kernels import Hyperparameters, as_points, kernel_matrix


def symmetrize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def cholesky(A: np.ndarray, what: str = "matrix"):
    try:
        return cho_factor(A, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise NumericalError(f"Cholesky factorization of {what} failed: {exc}") from exc


@dataclass
class GaussianBelief:
    """Mean vector and covariance matrix of a multivariate normal."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        n = self.mean.shape[0]
        if self.cov.shape != (n, n):
            raise InputError(f"covariance shape {self.cov.shape} does not match mean length {n}")
        self.cov = symmetrize(self.cov)

    @property
    def var(self) -> np.ndarray:
        return np.diag(self.cov).copy()

    def __len__(self):
        return self.mean.shape[0]

    def marginal(self, idx) -> "GaussianBelief":
        idx = np.asarray(idx, dtype=int)
        return GaussianBelief(self.mean[idx], self.cov[np.ix_(idx, idx)])


class InducingSet:
    """Inducing inputs with the belief over their function values.

    The prior covariance ``Kuu`` (plus a small diagonal jitter) is factorized
    once and shared by every belief derived from this set, so updating the
    belief never refactorizes.

    Parameters
    ----------
    Xu : array_like, shape (n_u, d_x)
    hyp : Hyperparameters
    mean, cov : array_like, optional
        Belief over f_u. Defaults to the prior ``(m_u, Kuu)``.
    prior_mean : float
        Constant prior mean of the GP.
    """

    def __init__(self, Xu, hyp: Hyperparameters, mean=None, cov=None, prior_mean: float = 0.0, _chol=None):
        self.hyp = hyp
        self.Xu = as_points(Xu, hyp).copy()
        if self.Xu.shape[0] < 1:
            raise InputError("an inducing set needs at least one point")
        self.prior_mean = float(prior_mean)
        n_u = self.Xu.shape[0]
        if _chol is None:
            Kuu = kernel_matrix(self.Xu, self.Xu, hyp) + hyp.jitter * np.eye(n_u)
            _chol = (Kuu, cholesky(Kuu, "Kuu"))
        self.Kuu, self._chol = _chol
        self.mean = np.full(n_u, self.prior_mean) if mean is None else np.asarray(mean, dtype=float).copy()
        self.cov = self.Kuu.copy() if cov is None else symmetrize(np.asarray(cov, dtype=float))
        if self.mean.shape != (n_u,) or self.cov.shape != (n_u, n_u):
            raise InputError("belief shape does not match the number of inducing points")

    @property
    def n_u(self) -> int:
        return self.Xu.shape[0]

    @property
    def belief(self) -> GaussianBelief:
        return GaussianBelief(self.mean, self.cov)

    def solve(self, B: np.ndarray) -> np.ndarray:
        """Kuu^{-1} B through the cached factorization."""
        return cho_solve(self._chol, B)

    def weights(self) -> np.ndarray:
        """Kuu^{-1} (mu_u - m_u)."""
        return self.solve(self.mean - self.prior_mean)

    def reduction(self) -> np.ndarray:
        """Kuu^{-1} (Kuu - Sigma_uu) Kuu^{-1}, the variance explained by the data."""
        return symmetrize(self.solve(self.solve(self.Kuu - self.cov).T))

    def whitened_reduction(self):
        """Lower factor L of Kuu and ``I - L^{-1} Sigma_uu L^{-T}``.

        Predictive covariances formed as ``a^T R a`` with ``a = L^{-1} Ku*`` lose
        accuracy only as cond(Kuu), not cond(Kuu)^2 as with :meth:`reduction`.
        """
        L = np.tril(self._chol[0])
        W = solve_triangular(L, solve_triangular(L, self.cov, lower=True).T, lower=True)
        return L, symmetrize(np.eye(self.n_u) - W)

    def with_belief(self, mean, cov) -> "InducingSet":
        return InducingSet(self.Xu, self.hyp, mean, cov, self.prior_mean, _chol=(self.Kuu, self._chol))

    def copy(self) -> "InducingSet":
        return self.with_belief(self.mean, self.cov)


@dataclass
class FitcWorkspace:
    """Intermediate FITC quantities, ``diag(K - Ku^T Kuu^{-1} Ku)`` and Delta."""

    lambda_n: np.ndarray
    delta: np.ndarray


def exact_gp_posterior(X, y, Xstar, hyp: Hyperparameters, noise=None, prior_mean: float = 0.0) -> GaussianBelief:
    """Exact GP posterior over f(Xstar).

    ``noise`` optionally replaces the homoscedastic ``sigma_n_sq`` by a vector of
    per-point noise variances (used by the NIGP baseline).
    """
    X = as_points(X, hyp)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0] or X.shape[0] < 1:
        raise InputError("X and y must have the same nonzero length")
    Xstar = as_points(Xstar, hyp) if np.size(Xstar) else np.zeros((0, hyp.dim))
    if Xstar.shape[0] == 0:
        return GaussianBelief(np.zeros(0), np.zeros((0, 0)))
    noise = np.full(X.shape[0], hyp.sigma_n_sq) if noise is None else np.asarray(noise, dtype=float)
    L = cholesky(kernel_matrix(X, X, hyp) + np.diag(noise), "K + Sigma_n")
    Ks = kernel_matrix(X, Xstar, hyp)
    mean = prior_mean + Ks.T @ cho_solve(L, y - prior_mean)
    V = solve_triangular(L[0], Ks, lower=True)
    cov = kernel_matrix(Xstar, Xstar, hyp) - V.T @ V
    return GaussianBelief(mean, cov)


def fitc_workspace(X, Xu, hyp: Hyperparameters) -> FitcWorkspace:
    X, Xu = as_points(X, hyp), as_points(Xu, hyp)
    Kuu = kernel_matrix(Xu, Xu, hyp) + hyp.jitter * np.eye(Xu.shape[0])
    Ku = kernel_matrix(Xu, X, hyp)
    lambda_n = hyp.alpha_sq - np.sum(Ku * cho_solve(cholesky(Kuu, "Kuu"), Ku), axis=0)
    delta = Kuu + (Ku / (lambda_n + hyp.sigma_n_sq)) @ Ku.T
    return FitcWorkspace(lambda_n, symmetrize(delta))


def fitc_batch(X, y, Xu, hyp: Hyperparameters, prior_mean: float = 0.0) -> InducingSet:
    """Batch FITC posterior over the inducing function values, O(n n_u^2).

    Computes ``Sigma_uu = Kuu Delta^{-1} Kuu`` and the matching mean through the
    well-conditioned factorization ``Delta = L (I + V D^{-1} V^T) L^T`` with
    ``Kuu = L L^T``, ``V = L^{-1} Ku`` and ``D = Lambda_n + sigma_n^2 I``.
    """
    ind = InducingSet(Xu, hyp, prior_mean=prior_mean)
    X = as_points(X, hyp) if np.size(X) else np.zeros((0, hyp.dim))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise InputError("X and y must have the same length")
    if X.shape[0] == 0:
        return ind
    L = np.tril(ind._chol[0])
    V = solve_triangular(L, kernel_matrix(ind.Xu, X, hyp), lower=True)
    lambda_n = np.maximum(hyp.alpha_sq - np.sum(V**2, axis=0), 0.0)
    D = lambda_n + hyp.sigma_n_sq
    A = np.eye(ind.n_u) + (V / D) @ V.T
    try:
        LA = cho_factor(A, lower=True)
    except LinAlgError as exc:
        raise NumericalError(f"FITC matrix Delta is singular: {exc}") from exc
    mean = prior_mean + L @ cho_solve(LA, V @ ((y - prior_mean) / D))
    cov = L @ cho_solve(LA, L.T)
    return ind.with_belief(mean, cov)


def inducing_predict(ind: InducingSet, Xstar) -> GaussianBelief:
    """Predictive distribution of f(Xstar) given the inducing belief."""
    Xstar = as_points(Xstar, ind.hyp)
    Ksu = kernel_matrix(Xstar, ind.Xu, ind.hyp)
    mean = ind.prior_mean + Ksu @ ind.weights()
    L, R = ind.whitened_reduction()
    a = solve_triangular(L, Ksu.T, lower=True)
    cov = kernel_matrix(Xstar, Xstar, ind.hyp) - a.T @ R @ a
    return GaussianBelief(mean, cov)


def inducing_predict_diag(ind: InducingSet, Xstar):
    """Predictive means and marginal variances only, without the full covariance."""
    Xstar = as_points(Xstar, ind.hyp)
    Ksu = kernel_matrix(Xstar, ind.Xu, ind.hyp)
    mean = ind.prior_mean + Ksu @ ind.weights()
    L, R = ind.whitened_reduction()
    a = solve_triangular(L, Ksu.T, lower=True)
    var = ind.hyp.alpha_sq - np.sum((R @ a) * a, axis=0)
    return mean, var
