"""Squared-exponential covariance function and its derivatives.

All derivatives are taken with respect to the *second* argument, which is the
measurement location ``x_plus`` in the online update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


@dataclass
class Hyperparameters:
    """Per-output hyperparameters of a squared-exponential GP.

    Parameters
    ----------
    alpha_sq : float
        Output variance.
    lambda_diag : array_like, shape (d_x,)
        Squared input length scales (diagonal of Lambda).
    sigma_n_sq : float
        Output noise variance.
    sigma_x_diag : array_like, shape (d_x,), optional
        Input noise variances. Defaults to zeros.
    jitter_rel : float
        Diagonal jitter added to prior inducing covariances, relative to
        ``alpha_sq``.
    """

    alpha_sq: float
    lambda_diag: np.ndarray
    sigma_n_sq: float
    sigma_x_diag: np.ndarray = field(default=None)
    jitter_rel: float = 1e-8

    def __post_init__(self):
        self.alpha_sq = float(self.alpha_sq)
        self.sigma_n_sq = float(self.sigma_n_sq)
        self.lambda_diag = np.atleast_1d(np.asarray(self.lambda_diag, dtype=float)).copy()
        if self.sigma_x_diag is None:
            self.sigma_x_diag = np.zeros_like(self.lambda_diag)
        self.sigma_x_diag = np.atleast_1d(np.asarray(self.sigma_x_diag, dtype=float)).copy()
        if self.lambda_diag.ndim != 1 or self.sigma_x_diag.shape != self.lambda_diag.shape:
            raise InputError("lambda_diag and sigma_x_diag must be 1-D of equal length")
        if not self.alpha_sq > 0 or not self.sigma_n_sq > 0:
            raise InputError("alpha_sq and sigma_n_sq must be positive")
        if np.any(self.lambda_diag <= 0):
            raise InputError("lambda_diag entries must be positive")
        if np.any(self.sigma_x_diag < 0):
            raise InputError("sigma_x_diag entries must be non-negative")

    @property
    def dim(self) -> int:
        return self.lambda_diag.shape[0]

    @property
    def jitter(self) -> float:
        return self.jitter_rel * self.alpha_sq

    def replace(self, **changes) -> "Hyperparameters":
        values = dict(
            alpha_sq=self.alpha_sq,
            lambda_diag=self.lambda_diag,
            sigma_n_sq=self.sigma_n_sq,
            sigma_x_diag=self.sigma_x_diag,
            jitter_rel=self.jitter_rel,
        )
        values.update(changes)
        return Hyperparameters(**values)

    def to_dict(self) -> dict:
        return {
            "alpha_sq": self.alpha_sq,
            "lambda_diag": self.lambda_diag.tolist(),
            "sigma_n_sq": self.sigma_n_sq,
            "sigma_x_diag": self.sigma_x_diag.tolist(),
            "jitter_rel": self.jitter_rel,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparameters":
        return cls(d["alpha_sq"], d["lambda_diag"], d["sigma_n_sq"], d.get("sigma_x_diag"), d.get("jitter_rel", 1e-8))


def as_point(x, hyp: Hyperparameters) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (hyp.dim,):
        raise InputError(f"expected a point of dimension {hyp.dim}, got shape {x.shape}")
    return x


def as_points(X, hyp: Hyperparameters) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if hyp.dim == 1 else X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != hyp.dim:
        raise InputError(f"expected points of dimension {hyp.dim}, got shape {X.shape}")
    return X


def se_kernel(x, x2, hyp: Hyperparameters) -> float:
    """alpha^2 exp(-1/2 (x - x2)^T Lambda^{-1} (x - x2))."""
    diff = as_point(x, hyp) - as_point(x2, hyp)
    return hyp.alpha_sq * float(np.exp(-0.5 * np.sum(diff**2 / hyp.lambda_diag)))


def kernel_matrix(X, X2, hyp: Hyperparameters) -> np.ndarray:
    """Covariance matrix with entry (i, j) = k(X[i], X2[j])."""
    X = as_points(X, hyp) / np.sqrt(hyp.lambda_diag)
    X2 = as_points(X2, hyp) / np.sqrt(hyp.lambda_diag)
    # broadcast differences rather than the |a|^2 + |b|^2 - 2ab expansion, which
    # loses precision for nearby points
    sq = np.sum((X[:, None, :] - X2[None, :, :]) ** 2, axis=2)
    return hyp.alpha_sq * np.exp(-0.5 * sq)


def se_kernel_dx(x_u, x_plus, hyp: Hyperparameters) -> np.ndarray:
    """Gradient of k(x_u, x_plus) with respect to x_plus, shape (d_x,)."""
    x_u, x_plus = as_point(x_u, hyp), as_point(x_plus, hyp)
    diff = x_u - x_plus
    return se_kernel(x_u, x_plus, hyp) * diff / hyp.lambda_diag


def se_kernel_dxdx(x_u, x_plus, hyp: Hyperparameters) -> np.ndarray:
    """Hessian of k(x_u, x_plus) with respect to x_plus, shape (d_x, d_x)."""
    x_u, x_plus = as_point(x_u, hyp), as_point(x_plus, hyp)
    scaled = (x_u - x_plus) / hyp.lambda_diag
    return se_kernel(x_u, x_plus, hyp) * (np.outer(scaled, scaled) - np.diag(1.0 / hyp.lambda_diag))


def cross_terms(Xu: np.ndarray, x_plus: np.ndarray, hyp: Hyperparameters):
    """Kernel vector against a set of points with first and second derivatives.

    Vectorized form of :func:`se_kernel`, :func:`se_kernel_dx` and
    :func:`se_kernel_dxdx` for every row of ``Xu``.

    Returns
    -------
    k : ndarray, shape (n_u,)
    dk : ndarray, shape (n_u, d_x)
    d2k : ndarray, shape (n_u, d_x, d_x)
    """
    scaled = (Xu - x_plus) / hyp.lambda_diag
    k = hyp.alpha_sq * np.exp(-0.5 * np.sum((Xu - x_plus) * scaled, axis=1))
    dk = k[:, None] * scaled
    d2k = k[:, None, None] * (
        scaled[:, :, None] * scaled[:, None, :] - np.diag(1.0 / hyp.lambda_diag)[None]
    )
    return k, dk, d2k
