"""Moment-matched predictions at Gaussian-distributed test inputs.

Closed forms for the squared-exponential kernel. Determinants are written as
``|I + Sigma_x Lambda^{-1}|`` so that a zero input covariance needs no inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp_core import GaussianBelief, symmetrize
from .kernels import Hyperparameters


@dataclass
class MomentTerms:
    q: list[np.ndarray]
    Q: dict[tuple[int, int], np.ndarray]


def q_vector(Xu, xstar: GaussianBelief, hyp: Hyperparameters) -> np.ndarray:
    """E[k(x_ui, x*)] for x* ~ N(xstar.mean, xstar.cov)."""
    Xu = np.atleast_2d(Xu)
    Sx = xstar.cov
    d = Xu.shape[1]
    lam = hyp.lambda_diag
    norm = hyp.alpha_sq / np.sqrt(np.linalg.det(np.eye(d) + Sx / lam[None, :]))
    diff = Xu - xstar.mean
    A = np.diag(lam) + Sx
    maha = np.sum(diff * np.linalg.solve(A, diff.T).T, axis=1)
    return norm * np.exp(-0.5 * maha)


def q_matrix(Xu, xstar: GaussianBelief, hyp_k: Hyperparameters, hyp_l: Hyperparameters) -> np.ndarray:
    """E[k_k(x_ui, x*) k_l(x*, x_uj)] for x* ~ N(xstar.mean, xstar.cov)."""
    Xu = np.atleast_2d(Xu)
    Sx = xstar.cov
    d = Xu.shape[1]
    ik, il = 1.0 / hyp_k.lambda_diag, 1.0 / hyp_l.lambda_diag
    norm = hyp_k.alpha_sq * hyp_l.alpha_sq / np.sqrt(np.linalg.det(np.eye(d) + Sx * (ik + il)[None, :]))
    diff = Xu[:, None, :] - Xu[None, :, :]
    e1 = np.sum(diff**2 / (hyp_k.lambda_diag + hyp_l.lambda_diag), axis=2)
    # weighted midpoints of each inducing pair
    xbar = (ik * Xu[:, None, :] + il * Xu[None, :, :]) / (ik + il)
    A = np.diag(1.0 / (ik + il)) + Sx
    c = xbar - xstar.mean
    e2 = np.einsum("ijk,ijk->ij", c, np.linalg.solve(A, c.reshape(-1, d).T).T.reshape(c.shape))
    return norm * np.exp(-0.5 * (e1 + e2))


def moment_terms(model, xstar: GaussianBelief) -> MomentTerms:
    hyps = model.hyps
    q = [q_vector(model.Xu, xstar, h) for h in hyps]
    Q = {}
    for k in range(len(hyps)):
        for l in range(k, len(hyps)):
            Q[k, l] = q_matrix(model.Xu, xstar, hyps[k], hyps[l])
            Q[l, k] = Q[k, l].T
    return MomentTerms(q, Q)


def stochastic_predict(model, xstar: GaussianBelief, return_cross_cov: bool = False):
    """Gaussian approximation of f(x*) for an uncertain test input.

    Mean and covariance are exact for the sparse posterior; only the Gaussian
    shape is approximate. With ``return_cross_cov`` also returns
    Cov(f*, x*), shape (d_y, d_x), computed exactly as
    ``E[d mu / dx] Sigma_x``.
    """
    terms = moment_terms(model, xstar)
    weights = [s.weights() for s in model.sets]
    d_y = model.d_y
    mean = np.array([s.prior_mean + q @ w for s, q, w in zip(model.sets, terms.q, weights)])
    cov = np.empty((d_y, d_y))
    for k, s in enumerate(model.sets):
        Qkk = terms.Q[k, k]
        cov[k, k] = (
            s.hyp.alpha_sq
            - np.sum(s.reduction() * Qkk)
            + weights[k] @ Qkk @ weights[k]
            - (mean[k] - s.prior_mean) ** 2
        )
        for l in range(k + 1, d_y):
            cov[k, l] = cov[l, k] = (
                weights[k] @ terms.Q[k, l] @ weights[l]
                - (mean[k] - s.prior_mean) * (mean[l] - model.sets[l].prior_mean)
            )
    cov = symmetrize(cov)
    np.fill_diagonal(cov, np.maximum(np.diag(cov), 0.0))
    belief = GaussianBelief(mean, cov)
    if not return_cross_cov:
        return belief
    cross = np.empty((d_y, model.d_x))
    diff = model.Xu - xstar.mean
    for k, s in enumerate(model.sets):
        A = np.diag(s.hyp.lambda_diag) + xstar.cov
        # E[(x* - mean) k(x_ui, x*)] = q_i Sigma_x (Lambda + Sigma_x)^{-1} (x_ui - mean)
        cross[k] = xstar.cov @ np.linalg.solve(A, diff.T) @ (terms.q[k] * weights[k])
    return belief, cross
