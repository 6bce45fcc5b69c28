"""NARX system identification with noisy-input sparse GP updates.

The lag window of past outputs and inputs is kept as one joint Gaussian whose
entries are labelled ``(signal, time, component)``. Each identification step
builds the regressor from that belief, refines it with the new output
measurement, updates the inducing beliefs and appends the posterior of the
new output together with its covariance to the window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericalError
from .gp_core import GaussianBelief, symmetrize
from .kernels import Hyperparameters
from .moments import stochastic_predict
from .noisy_input import (
    NoisyMeasurement,
    SonigModel,
    SonigOptions,
    input_posterior,
    output_posterior,
    sonig_update,
)


@dataclass
class NarxConfig:
    """Lag structure and noise settings of the NARX model.

    ``sigma_y_sq`` is the output measurement noise (also used as the GP output
    noise); ``sigma_u_sq`` the input measurement noise. With
    ``output_lag="measured"`` the lagged outputs are the raw measurements with
    variance ``measured_lag_var`` instead of the tracked posteriors.
    """

    n_y: int = 1
    n_u: int = 3
    d_y: int = 1
    d_u: int = 1
    add_threshold: float = 1.0
    options: SonigOptions = field(default_factory=SonigOptions)
    write_back: bool = True
    sigma_y_sq: np.ndarray | None = None
    sigma_u_sq: np.ndarray | None = None
    output_lag: str = "posterior"
    measured_lag_var: float | None = None

    def __post_init__(self):
        if self.n_y < 0 or self.n_u < 1:
            raise InputError("need n_y >= 0 and n_u >= 1")
        if self.output_lag not in ("posterior", "measured"):
            raise InputError("output_lag must be 'posterior' or 'measured'")

    @property
    def d_x(self) -> int:
        return self.n_y * self.d_y + self.n_u * self.d_u

    @property
    def warmup(self) -> int:
        """Index k of the first output y_k from which y_{k+1} can be predicted."""
        return max(self.n_y, self.n_u) - 1

    def with_noise_from(self, hyps) -> "NarxConfig":
        """Fill unset noise levels from hyperparameters.

        Output noise defaults to each output's ``sigma_n_sq``; input noise to
        the input-noise entry of the newest lagged input.
        """
        if isinstance(hyps, Hyperparameters):
            hyps = [hyps]
        sy = self.sigma_y_sq
        if sy is None:
            sy = np.array([h.sigma_n_sq for h in hyps])
        su = self.sigma_u_sq
        if su is None:
            off = self.n_y * self.d_y
            su = hyps[0].sigma_x_diag[off : off + self.d_u]
        return NarxConfig(
            self.n_y, self.n_u, self.d_y, self.d_u, self.add_threshold, self.options, self.write_back,
            np.broadcast_to(np.asarray(sy, float), (self.d_y,)).copy(),
            np.broadcast_to(np.asarray(su, float), (self.d_u,)).copy(),
            self.output_lag, self.measured_lag_var,
        )


@dataclass
class NarxState:
    """Joint belief over the lag window at time ``k`` (latest known output y_k)."""

    k: int
    labels: list[tuple[str, int, int]]
    belief: GaussianBelief

    def index(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise InputError(f"lag window has no entry {label}; warm-up incomplete") from None

    def append(self, labels, mean, cov, cross=None) -> "NarxState":
        """Add entries with covariance ``cov`` and ``cross`` against the existing ones."""
        mean = np.atleast_1d(mean)
        n_old, n_new = len(self.labels), len(mean)
        cross = np.zeros((n_new, n_old)) if cross is None else cross
        full = np.block([[self.belief.cov, cross.T], [cross, np.atleast_2d(cov)]])
        return NarxState(self.k, self.labels + list(labels), GaussianBelief(np.concatenate([self.belief.mean, mean]), full))

    def drop_before(self, cfg: NarxConfig) -> "NarxState":
        """Forget entries that no future regressor needs."""
        keep = [
            i for i, (sig, t, _) in enumerate(self.labels)
            if (sig == "y" and t > self.k - cfg.n_y) or (sig == "u" and t > self.k - cfg.n_u)
        ]
        return NarxState(self.k, [self.labels[i] for i in keep], self.belief.marginal(keep))


def regressor_labels(cfg: NarxConfig, k: int) -> list[tuple[str, int, int]]:
    """Labels of x = (y_k, ..., y_{k-n_y+1}, u_k, ..., u_{k-n_u+1}), newest first."""
    ys = [("y", k - lag, c) for lag in range(cfg.n_y) for c in range(cfg.d_y)]
    us = [("u", k - lag, c) for lag in range(cfg.n_u) for c in range(cfg.d_u)]
    return ys + us


def initial_state(cfg: NarxConfig, y, u) -> NarxState:
    """Warm-up window from the first measurements, at their measurement noise.

    ``y`` must hold outputs y_0..y_k0 and ``u`` inputs u_0..u_{k0-1} (at least),
    where ``k0 = cfg.warmup``; only the trailing entries are used.
    """
    if cfg.sigma_y_sq is None or cfg.sigma_u_sq is None:
        raise InputError("noise levels unset; call NarxConfig.with_noise_from first")
    y = np.asarray(y, float).reshape(len(y), cfg.d_y)
    u = np.asarray(u, float).reshape(len(u), cfg.d_u)
    k = len(y) - 1
    if k < cfg.warmup or len(u) < k - cfg.n_u + 1 + (cfg.n_u - 1):
        raise InputError("not enough warm-up samples")
    labels, mean, var = [], [], []
    for lag in range(cfg.n_y):
        for c in range(cfg.d_y):
            labels.append(("y", k - lag, c))
            mean.append(y[k - lag, c])
            var.append(cfg.sigma_y_sq[c] if cfg.measured_lag_var is None else cfg.measured_lag_var)
    for lag in range(1, cfg.n_u):
        for c in range(cfg.d_u):
            labels.append(("u", k - lag, c))
            mean.append(u[k - lag, c])
            var.append(cfg.sigma_u_sq[c])
    return NarxState(k, labels, GaussianBelief(np.array(mean), np.diag(var)))


def push_input(state: NarxState, cfg: NarxConfig, u_k, var=None) -> NarxState:
    u_k = np.atleast_1d(np.asarray(u_k, float))
    var = cfg.sigma_u_sq if var is None else np.broadcast_to(var, u_k.shape)
    return state.append([("u", state.k, c) for c in range(cfg.d_u)], u_k, np.diag(var))


def build_regressor(state: NarxState, cfg: NarxConfig) -> GaussianBelief:
    """Belief over the regressor for predicting y_{k+1}, ordered newest first."""
    idx = [state.index(lab) for lab in regressor_labels(cfg, state.k)]
    return state.belief.marginal(idx)


def _advance(state: NarxState, cfg: NarxConfig, x_belief: GaussianBelief, f_belief: GaussianBelief, cross) -> NarxState:
    """Window at k+1: the regressor entries (possibly refined) plus the new output."""
    labels = regressor_labels(cfg, state.k)
    n_f = len(f_belief)
    cov = np.block([[x_belief.cov, cross.T], [cross, f_belief.cov]])
    new = NarxState(
        state.k + 1,
        labels + [("y", state.k + 1, c) for c in range(n_f)],
        GaussianBelief(np.concatenate([x_belief.mean, f_belief.mean]), cov),
    )
    return new.drop_before(cfg)


@dataclass
class StepInfo:
    input_post: GaussianBelief
    output_post: GaussianBelief
    added_inducing: bool
    one_step: GaussianBelief


def sysid_step(model: SonigModel | None, state: NarxState, u_k, y_next, cfg: NarxConfig, hyps=None):
    """Process one input/output pair: u_k and the measured y_{k+1}.

    ``model`` may be None, in which case it is created with the first
    regressor as its single inducing point (``hyps`` required).

    Returns
    -------
    model, state, info : SonigModel, NarxState, StepInfo
    """
    k = state.k
    try:
        state = push_input(state, cfg, u_k)
        prior = build_regressor(state, cfg)
        if model is None:
            if hyps is None:
                raise InputError("hyperparameters needed to create the model")
            model = SonigModel.from_prior(prior.mean[None, :], hyps)
        y_next = np.atleast_1d(np.asarray(y_next, float))
        meas = NoisyMeasurement(prior.mean, prior.cov, y_next, cfg.sigma_y_sq)
        one_step = stochastic_predict(model, prior)

        post = input_posterior(model, meas, cfg.options)
        added = False
        if model.nearest_normalized_distance(post.mean) > cfg.add_threshold:
            model = model.add_inducing_points(post.mean[None, :])
            added = True
        upd = sonig_update(model, meas, cfg.options, input_post=post)
        f_post, cross = output_posterior(model, meas, post, upd.derivs)
        model = upd.model

        if cfg.output_lag == "measured":
            var = cfg.sigma_y_sq if cfg.measured_lag_var is None else np.full(cfg.d_y, cfg.measured_lag_var)
            f_post, cross = GaussianBelief(y_next, np.diag(var)), np.zeros_like(cross)
        if cfg.write_back:
            x_belief = post
        else:
            x_belief, cross = prior, np.zeros_like(cross)
        new_state = _advance(state, cfg, x_belief, f_post, cross)
    except NumericalError as exc:
        raise NumericalError(f"at time index {k}: {exc}") from exc
    if not np.all(np.isfinite(new_state.belief.mean)):
        raise NumericalError(f"at time index {k}: non-finite lag belief")
    return model, new_state, StepInfo(post, f_post, added, one_step)


@dataclass
class TrainResult:
    model: SonigModel
    state: NarxState
    one_step_mean: np.ndarray
    one_step_var: np.ndarray
    n_added: int


def train(y, u, hyps, cfg: NarxConfig, model: SonigModel | None = None) -> TrainResult:
    """Run identification steps over a whole record.

    Step k uses u_k and y_{k+1}; the returned state sits at the last output.
    """
    y = np.asarray(y, float).reshape(len(y), cfg.d_y)
    u = np.asarray(u, float).reshape(len(u), cfg.d_u)
    if len(u) < len(y) - 1:
        raise InputError("need an input sample for every output step")
    cfg = cfg.with_noise_from(hyps)
    k0 = cfg.warmup
    state = initial_state(cfg, y[: k0 + 1], u[:k0])
    means, vars_, added = [], [], 0
    for k in range(k0, len(y) - 1):
        model, state, info = sysid_step(model, state, u[k], y[k + 1], cfg, hyps)
        means.append(info.one_step.mean)
        vars_.append(info.one_step.var)
        added += info.added_inducing
    return TrainResult(model, state, np.array(means), np.array(vars_), added)


def free_run_simulate(model: SonigModel, inputs, init: NarxState, cfg: NarxConfig, input_var=None, propagate: bool = True):
    """Multi-step prediction feeding predicted outputs back into the regressor.

    ``inputs[i]`` is u at time ``init.k + i``; prediction i is y at
    ``init.k + i + 1``. Inputs are deterministic unless ``input_var`` is given.
    With ``propagate=False`` only the predicted means are fed back.

    Returns
    -------
    list of GaussianBelief over y, one per input sample.
    """
    inputs = np.asarray(inputs, float).reshape(len(inputs), -1)
    var = np.zeros(cfg.d_u) if input_var is None else input_var
    state = init
    out = []
    for u_k in inputs:
        state = push_input(state, cfg, u_k, var)
        xb = build_regressor(state, cfg)
        if not propagate:
            xb = GaussianBelief(xb.mean, np.zeros_like(xb.cov))
        f, cross = stochastic_predict(model, xb, return_cross_cov=True)
        out.append(f)
        if not propagate:
            f, cross = GaussianBelief(f.mean, np.zeros_like(f.cov)), np.zeros_like(cross)
        state = _advance(state, cfg, xb, f, cross)
    return out


def one_step_predict(model: SonigModel, y, u, cfg: NarxConfig):
    """One-step-ahead means from measured (deterministic) regressors."""
    y = np.asarray(y, float).reshape(len(y), -1)
    u = np.asarray(u, float).reshape(len(u), -1)
    k0 = cfg.warmup
    X = np.array(
        [
            np.concatenate([y[k - np.arange(cfg.n_y)].ravel(), u[k - np.arange(cfg.n_u)].ravel()])
            for k in range(k0, len(y) - 1)
        ]
    )
    return model.predict(X)


def simulate_narx(phi, u, y0, noise_y=0.0, noise_u=0.0, n_y=1, n_u=3, rng=None):
    """Simulate y_{k+1} = phi(y_k..., u_k...) and return noisy and clean records."""
    rng = np.random.default_rng(rng)
    u = np.asarray(u, float)
    T = len(u)
    y = np.zeros(T)
    y[: max(n_y, n_u)] = y0
    for k in range(max(n_y, n_u) - 1, T - 1):
        y[k + 1] = phi(y[k - np.arange(n_y)], u[k - np.arange(n_u)])
    y_meas = y + noise_y * rng.standard_normal(T)
    u_meas = u + noise_u * rng.standard_normal(T)
    return y_meas, u_meas, y


def covariance_is_psd(state: NarxState, tol: float = 1e-8) -> bool:
    cov = symmetrize(state.belief.cov)
    scale = max(1.0, float(np.trace(cov)))
    return bool(np.linalg.eigvalsh(cov).min() >= -tol * scale)


def surrogate_phi(y_lags, u_lags):
    """Nonlinear NARX map with one output lag and three input lags."""
    return 0.7 * y_lags[0] + 8.0 * np.tanh(1.5 * u_lags[0]) - 3.0 * u_lags[1] + 1.5 * np.sin(u_lags[2])


def surrogate_data(T: int = 3500, seed=0, noise_y: float = 0.5, noise_u: float = 0.05):
    """Record of the surrogate system driven by low-pass filtered noise.

    Returns
    -------
    u_meas, y_meas, y_true : ndarray, shape (T,)
    """
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(T)
    u = np.empty(T)
    u[0] = w[0]
    for k in range(1, T):
        u[k] = 0.85 * u[k - 1] + 0.5 * w[k]
    y_meas, u_meas, y = simulate_narx(surrogate_phi, u, 0.0, noise_y, noise_u, 1, 3, rng)
    return u_meas, y_meas, y
