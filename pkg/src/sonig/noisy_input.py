"""Online sparse GP updates from measurements whose input is itself noisy.

A measurement ``(x_hat, sigma_x, y_hat, sigma_f)`` is incorporated in three
steps: the GP is linearized to get a Gaussian posterior over the true input,
the exact fixed-input update is expanded to second order around that
posterior mean, and the expansion is averaged over the input posterior.
Outputs are handled independently, each with its own inducing belief.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InputError
from .gp_core import GaussianBelief, InducingSet, inducing_predict_diag, symmetrize
from .kernels import Hyperparameters, as_point, cross_terms
from . import online


class NumericalWarning(RuntimeWarning):
    pass


@dataclass
class NoisyMeasurement:
    """Measured input with covariance and measured output with noise variances.

    ``sigma_x`` may be given as a full matrix or as its diagonal; ``sigma_f``
    is the per-output noise variance (a scalar is broadcast).
    """

    x_hat: np.ndarray
    sigma_x: np.ndarray
    y_hat: np.ndarray
    sigma_f: np.ndarray

    def __post_init__(self):
        self.x_hat = np.atleast_1d(np.asarray(self.x_hat, dtype=float))
        sx = np.asarray(self.sigma_x, dtype=float)
        d = self.x_hat.shape[0]
        if sx.ndim <= 1:
            sx = np.diag(np.broadcast_to(sx, (d,)))
        if sx.shape != (d, d):
            raise InputError(f"sigma_x must be {d}x{d}, got {sx.shape}")
        self.sigma_x = symmetrize(sx)
        self.y_hat = np.atleast_1d(np.asarray(self.y_hat, dtype=float))
        self.sigma_f = np.broadcast_to(np.asarray(self.sigma_f, dtype=float), self.y_hat.shape).copy()
        scale = max(1.0, float(np.max(np.abs(np.diag(self.sigma_x)), initial=0.0)))
        if np.linalg.eigvalsh(self.sigma_x).min(initial=0.0) < -1e-12 * scale:
            raise InputError("sigma_x is not positive semidefinite")
        if np.any(self.sigma_f <= 0):
            raise InputError("sigma_f entries must be positive")


@dataclass
class SonigOptions:
    max_relin_iters: int = 3
    relin_tol: float = 1e-6
    second_order_mean: bool = True
    second_order_cov: bool = True
    psd_tol: float = 1e-6

    def __post_init__(self):
        if self.max_relin_iters < 1:
            raise InputError("max_relin_iters must be at least 1")


class SonigModel:
    """One inducing belief per output, all on the same inducing inputs.

    Parameters
    ----------
    sets : list of InducingSet
    """

    def __init__(self, sets: list[InducingSet]):
        if not sets:
            raise InputError("a model needs at least one output")
        Xu = sets[0].Xu
        for s in sets[1:]:
            if s.Xu.shape != Xu.shape or not np.array_equal(s.Xu, Xu):
                raise InputError("all outputs must share the same inducing inputs")
        self.sets = list(sets)

    @classmethod
    def from_prior(cls, Xu, hyps, prior_mean=0.0) -> "SonigModel":
        if isinstance(hyps, Hyperparameters):
            hyps = [hyps]
        means = np.broadcast_to(np.asarray(prior_mean, dtype=float), (len(hyps),))
        return cls([InducingSet(Xu, h, prior_mean=m) for h, m in zip(hyps, means)])

    @property
    def Xu(self) -> np.ndarray:
        return self.sets[0].Xu

    @property
    def n_u(self) -> int:
        return self.sets[0].n_u

    @property
    def d_x(self) -> int:
        return self.Xu.shape[1]

    @property
    def d_y(self) -> int:
        return len(self.sets)

    @property
    def hyps(self) -> list[Hyperparameters]:
        return [s.hyp for s in self.sets]

    @property
    def sigma_x_diag(self) -> np.ndarray:
        return self.sets[0].hyp.sigma_x_diag

    def predict(self, Xstar):
        """Means and marginal variances at deterministic inputs, each shape (n, d_y)."""
        out = [inducing_predict_diag(s, Xstar) for s in self.sets]
        return np.column_stack([m for m, _ in out]), np.column_stack([v for _, v in out])

    def nearest_normalized_distance(self, x) -> float:
        # the first output's length scales define "close"
        return online.nearest_normalized_distance(self.sets[0], x)

    def add_inducing_points(self, Xu_new) -> "SonigModel":
        return SonigModel([online.add_inducing_points(s, Xu_new) for s in self.sets])

    def remove_inducing_point(self, index: int) -> "SonigModel":
        return SonigModel([online.remove_inducing_point(s, index) for s in self.sets])

    def to_dict(self) -> dict:
        return {
            "Xu": self.Xu.tolist(),
            "outputs": [
                {
                    "hyp": s.hyp.to_dict(),
                    "prior_mean": s.prior_mean,
                    "mean": s.mean.tolist(),
                    "cov": s.cov.tolist(),
                }
                for s in self.sets
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SonigModel":
        return cls(
            [
                InducingSet(d["Xu"], Hyperparameters.from_dict(o["hyp"]), o["mean"], o["cov"], o["prior_mean"])
                for o in d["outputs"]
            ]
        )


def _point_moments(ind: InducingSet, x):
    """Prior-predictive mean/variance at x with first and second derivatives."""
    k, dk, d2k = cross_terms(ind.Xu, x, ind.hyp)
    a = ind.weights()
    B = ind.reduction()
    Bk = B @ k
    mu = ind.prior_mean + k @ a
    dmu = dk.T @ a
    d2mu = np.einsum("i,ijk->jk", a, d2k)
    s = ind.hyp.alpha_sq - k @ Bk
    ds = -2.0 * dk.T @ Bk
    d2s = -2.0 * dk.T @ B @ dk - 2.0 * np.einsum("i,ijk->jk", Bk, d2k)
    return k, dk, d2k, mu, dmu, d2mu, s, ds, symmetrize(d2s)


class UpdateDerivatives:
    """The fixed-input update as a function of the input, with derivatives.

    Evaluated at one input ``x_plus`` for one output. ``mu_u``/``Sigma_uu`` are
    the updated inducing moments if the measurement were taken exactly at
    ``x_plus``; ``dmu_u``, ``d2mu_u``, ``dSigma_uu`` and ``d2Sigma_uu`` are
    their derivatives (trailing axes index the input components). ``P`` is the
    predictive variance of the measurement, ``Sigma_++ + sigma_n^2``.

    The ``*_post`` attributes describe f(x_plus) after conditioning on the
    measurement, which the output posterior needs.
    """

    def __init__(self, ind: InducingSet, x_plus, y_plus: float, sigma_meas_sq: float):
        x_plus = as_point(x_plus, ind.hyp)
        if not sigma_meas_sq > 0:
            raise InputError("sigma_meas_sq must be positive")
        k, dk, d2k, mu, dmu, d2mu, s, ds, d2s = _point_moments(ind, x_plus)
        sig2 = float(sigma_meas_sq)
        self.x_plus = x_plus
        self.k, self.dk, self.d2k = k, dk, d2k

        self.P = s + sig2
        self.dP, self.d2P = ds, d2s
        Pinv = 1.0 / self.P
        self.Pinv = Pinv
        self.dPinv = -Pinv**2 * ds
        self.d2Pinv = symmetrize(2.0 * Pinv**3 * np.outer(ds, ds) - Pinv**2 * d2s)

        self.mu_plus, self.dmu_plus, self.d2mu_plus = mu, dmu, d2mu
        self.sigma_pp = s

        r = float(y_plus) - mu
        dr, d2r = -dmu, -d2mu
        self.innovation = r

        # C = Sigma_uu Kuu^{-1}; the update is mu_u + C g(x), Sigma_uu - C h(x) C^T
        self.C = ind.solve(ind.cov).T
        g = k * (Pinv * r)
        e = self.dPinv * r + Pinv * dr
        dg = dk * (Pinv * r) + np.outer(k, e)
        d2g = (
            d2k * (Pinv * r)
            + dk[:, :, None] * e[None, None, :]
            + dk[:, None, :] * e[None, :, None]
            + k[:, None, None]
            * (self.d2Pinv * r + np.outer(self.dPinv, dr) + np.outer(dr, self.dPinv) + Pinv * d2r)[None]
        )
        self.mu_u = ind.mean + self.C @ g
        self.dmu_u = self.C @ dg
        self.d2mu_u = np.einsum("ab,bjk->ajk", self.C, d2g)

        Ck = self.C @ k
        self.Sigma_uu = symmetrize(ind.cov - Pinv * np.outer(Ck, Ck))
        Cdk = self.C @ dk
        # d/dx_j of Pinv k k^T, pushed through C (.) C^T
        self.dSigma_uu = -(
            Pinv * (Cdk[:, None, :] * Ck[None, :, None] + Ck[:, None, None] * Cdk[None, :, :])
            + np.outer(Ck, Ck)[:, :, None] * self.dPinv[None, None, :]
        )

        # posterior of f(x_plus) after the update
        self.mu_plus_post = mu + (s * Pinv) * r
        self.dmu_plus_post = sig2 * (Pinv * dmu - self.dPinv * r)
        self.d2mu_plus_post = sig2 * (
            Pinv * d2mu + np.outer(dmu, self.dPinv) + np.outer(self.dPinv, dmu) - r * self.d2Pinv
        )
        self.sigma_pp_post = sig2 * s * Pinv
        self.dsigma_pp_post = -(sig2**2) * self.dPinv
        self.d2sigma_pp_post = -(sig2**2) * self.d2Pinv

    @cached_property
    def d2Sigma_uu(self) -> np.ndarray:
        """Full second derivative, shape (n_u, n_u, d_x, d_x)."""
        k, dk, d2k, Pinv = self.k, self.dk, self.d2k, self.Pinv
        kk = np.outer(k, k)
        dkk = dk[:, None, :] * k[None, :, None]  # (dk_j k^T)[a, b, j]
        sym1 = dkk + np.transpose(dkk, (1, 0, 2))
        d2kk = d2k[:, None, :, :] * k[None, :, None, None]
        d2h = (
            Pinv * (d2kk + np.transpose(d2kk, (1, 0, 2, 3)))
            + Pinv * (dk[:, None, :, None] * dk[None, :, None, :] + dk[:, None, None, :] * dk[None, :, :, None])
            + sym1[:, :, :, None] * self.dPinv[None, None, None, :]
            + sym1[:, :, None, :] * self.dPinv[None, None, :, None]
            + kk[:, :, None, None] * self.d2Pinv[None, None]
        )
        return -np.einsum("ab,bcjk,dc->adjk", self.C, d2h, self.C)

    def trace_mu(self, S: np.ndarray) -> np.ndarray:
        """tr(d2mu_u/dx^2 S) for each inducing point."""
        return np.einsum("ajk,jk->a", self.d2mu_u, S)

    def trace_sigma(self, S: np.ndarray) -> np.ndarray:
        """tr(d2Sigma_uu/dx^2 S) for each inducing pair, without the 4-D tensor."""
        k, dk, Pinv = self.k, self.dk, self.Pinv
        D2 = np.einsum("ijk,jk->i", self.d2k, S)
        dkS = dk @ S
        v = dkS @ self.dPinv
        M = (
            Pinv * (np.outer(D2, k) + np.outer(k, D2) + 2.0 * dkS @ dk.T)
            + 2.0 * (np.outer(v, k) + np.outer(k, v))
            + np.sum(S * self.d2Pinv) * np.outer(k, k)
        )
        return -symmetrize(self.C @ M @ self.C.T)


def update_derivatives(ind: InducingSet, x_plus, y_plus: float, sigma_meas_sq: float) -> UpdateDerivatives:
    return UpdateDerivatives(ind, x_plus, y_plus, sigma_meas_sq)


def input_posterior(model: SonigModel, meas: NoisyMeasurement, options: SonigOptions | None = None) -> GaussianBelief:
    """Gaussian posterior of the true input given the measured output.

    The GP mean is linearized around ``x_bar`` (first the measured input, then
    the latest posterior mean) with the predictive variance frozen at
    ``x_bar``. Written in gain form so a singular ``sigma_x`` is allowed.
    """
    options = options or SonigOptions()
    if meas.x_hat.shape[0] != model.d_x or meas.y_hat.shape[0] != model.d_y:
        raise InputError("measurement dimensions do not match the model")
    Sx = meas.sigma_x
    x_bar = meas.x_hat.copy()
    x_post, S_post = meas.x_hat.copy(), Sx.copy()
    lam = np.min([h.lambda_diag for h in model.hyps], axis=0)
    for _ in range(options.max_relin_iters):
        mus, J, svar = [], [], []
        for ind in model.sets:
            _, _, _, mu, dmu, _, s, _, _ = _point_moments(ind, x_bar)
            mus.append(mu)
            J.append(dmu)
            svar.append(s)
        mus, J = np.array(mus), np.array(J)
        Sy = np.diag(np.maximum(np.array(svar), 0.0) + meas.sigma_f)
        SJt = Sx @ J.T
        G = np.linalg.solve(J @ SJt + Sy, SJt.T).T
        x_post = meas.x_hat + G @ (J @ (x_bar - meas.x_hat) + meas.y_hat - mus)
        S_post = symmetrize(Sx - G @ J @ Sx)
        shift = x_post - x_bar
        x_bar = x_post
        if np.sum(shift**2 / lam) < options.relin_tol:
            break
    return GaussianBelief(x_post, S_post)


def _repair_cov(cov: np.ndarray, ind: InducingSet, tol: float):
    """Keep ``0 <= Sigma_uu <= Kuu`` in the PSD order.

    The trace terms can break either bound when the input noise is large. A
    violation beyond ``tol * alpha^2`` is repaired by clipping the eigenvalues
    of the whitened covariance ``L^{-1} Sigma_uu L^{-T}`` (``Kuu = L L^T``) to
    [0, 1]. Returns the covariance and the smallest eigenvalue of the input.
    """
    cov = symmetrize(cov)
    scale = tol * ind.hyp.alpha_sq
    lo = float(np.linalg.eigvalsh(cov)[0])
    hi = float(np.linalg.eigvalsh(ind.Kuu - cov)[0])
    if lo >= -scale and hi >= -scale:
        return cov, lo
    warnings.warn(
        f"inducing covariance left [0, Kuu] (min eig {lo:.3g}, min eig of Kuu - Sigma_uu {hi:.3g}); clipping",
        NumericalWarning,
        stacklevel=3,
    )
    L = np.tril(ind._chol[0])  # lower Cholesky factor of Kuu
    W = solve_triangular(L, solve_triangular(L, cov, lower=True).T, lower=True)
    w, V = np.linalg.eigh(symmetrize(W))
    W = (V * np.clip(w, 0.0, 1.0)) @ V.T
    return symmetrize(L @ W @ L.T), lo


@dataclass
class SonigUpdate:
    model: SonigModel
    input_post: GaussianBelief
    derivs: list[UpdateDerivatives]
    min_eigenvalues: list[float] = field(default_factory=list)
    correction_ratio: float = 0.0


def sonig_update(
    model: SonigModel,
    meas: NoisyMeasurement,
    options: SonigOptions | None = None,
    input_post: GaussianBelief | None = None,
) -> SonigUpdate:
    """Incorporate one noisy measurement into every output's inducing belief.

    ``correction_ratio`` reports the size of the second-order mean correction
    relative to the first-order mean change; values near or above one mean
    the input noise is too large for the expansion to be trusted.
    """
    options = options or SonigOptions()
    if input_post is None:
        input_post = input_posterior(model, meas, options)
    x, S = input_post.mean, input_post.cov
    sets, derivs, mins = [], [], []
    ratio = 0.0
    for i, ind in enumerate(model.sets):
        d = UpdateDerivatives(ind, x, meas.y_hat[i], meas.sigma_f[i])
        mean = d.mu_u.copy()
        tr_mu = 0.5 * d.trace_mu(S)
        if options.second_order_mean:
            mean += tr_mu
        step = np.linalg.norm(d.mu_u - ind.mean)
        if step > 0:
            ratio = max(ratio, float(np.linalg.norm(tr_mu) / step))
        cov = d.Sigma_uu + d.dmu_u @ S @ d.dmu_u.T
        if options.second_order_cov:
            cov += 0.5 * d.trace_sigma(S)
        cov, wmin = _repair_cov(cov, ind, options.psd_tol)
        sets.append(ind.with_belief(mean, cov))
        derivs.append(d)
        mins.append(wmin)
    return SonigUpdate(SonigModel(sets), input_post, derivs, mins, ratio)


def output_posterior(
    model: SonigModel,
    meas: NoisyMeasurement,
    input_post: GaussianBelief,
    derivs: list[UpdateDerivatives] | None = None,
):
    """Posterior of the noise-free output at the uncertain input.

    ``model`` is the model *before* the update; ``derivs`` may be passed from
    :func:`sonig_update` to avoid recomputation.

    Returns
    -------
    belief : GaussianBelief over f(x_plus), length d_y
    cross_cov : ndarray, shape (d_y, d_x)
        Cov(f(x_plus), x_plus).
    """
    x, S = input_post.mean, input_post.cov
    if derivs is None:
        derivs = [UpdateDerivatives(ind, x, meas.y_hat[i], meas.sigma_f[i]) for i, ind in enumerate(model.sets)]
    D = np.array([d.dmu_plus_post for d in derivs])
    mean = np.array([d.mu_plus_post + 0.5 * np.sum(d.d2mu_plus_post * S) for d in derivs])
    cov = D @ S @ D.T
    var = np.array([d.sigma_pp_post + 0.5 * np.sum(d.d2sigma_pp_post * S) for d in derivs])
    cov[np.diag_indices_from(cov)] += np.maximum(var, 0.0)
    return GaussianBelief(mean, cov), D @ S
