"""Sample-function regression study and NARX identification study."""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..errors import InputError, NumericalError
from ..gp_core import exact_gp_posterior, fitc_batch, inducing_predict_diag
from ..hypertune import TuneConfig, nigp_inducing_set, nigp_predict, tune
from ..kernels import Hyperparameters, kernel_matrix
from ..noisy_input import NoisyMeasurement, SonigModel, SonigOptions, sonig_update
from .. import sysid
from .config import ALL_SAMPLE_METHODS, ExperimentConfig, NarxExperimentConfig
from .data import load_io_csv
from .metrics import metrics

METHODS = ALL_SAMPLE_METHODS
GRID_STEP = 0.01
TEST_RANGE = (-5.0, 5.0)


@dataclass
class ExperimentReport:
    """Aggregated results; ``methods`` maps a method name to its statistics."""

    kind: str
    settings: dict
    methods: dict
    seeds: list
    runtimes: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self, timings: bool = True) -> dict:
        d = dataclasses.asdict(self)
        if not timings:
            d.pop("runtimes")
        return d

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True)


class GpSample:
    """A GP draw stored on a dense grid and queried by linear interpolation."""

    def __init__(self, grid: np.ndarray, values: np.ndarray):
        self.grid, self.values = grid, values

    def __call__(self, x):
        return np.interp(x, self.grid, self.values)


@lru_cache(maxsize=8)
def _grid_factor(alpha_sq: float, lam: float, lo: float, hi: float, n: int):
    grid = np.linspace(lo, hi, n)
    hyp = Hyperparameters(alpha_sq, [lam], 1.0)
    K = kernel_matrix(grid, grid, hyp) + 1e-8 * alpha_sq * np.eye(n)
    return grid, np.linalg.cholesky(K)


def sample_gp_function(seed, hyp: Hyperparameters, grid=None) -> GpSample:
    """Draw one sample function of a one-dimensional GP prior.

    ``grid`` defaults to [-5, 5] at spacing 0.01 and must be evenly spaced.
    """
    if hyp.dim != 1:
        raise InputError("sample functions are one-dimensional")
    if grid is None:
        lo, hi, n = TEST_RANGE[0], TEST_RANGE[1], int(round((TEST_RANGE[1] - TEST_RANGE[0]) / GRID_STEP)) + 1
    else:
        grid = np.asarray(grid, dtype=float)
        lo, hi, n = float(grid[0]), float(grid[-1]), len(grid)
        if n < 2 or not np.allclose(np.diff(grid), (hi - lo) / (n - 1)):
            raise InputError("grid must be evenly spaced with at least two points")
        if (hi - lo) / (n - 1) > GRID_STEP + 1e-12 or lo > TEST_RANGE[0] or hi < TEST_RANGE[1]:
            raise InputError("grid must cover [-5, 5] at spacing <= 0.01")
    g, L = _grid_factor(float(hyp.alpha_sq), float(hyp.lambda_diag[0]), lo, hi, n)
    rng = np.random.default_rng(seed)
    return GpSample(g, L @ rng.standard_normal(n))


class _Repeat:
    """One data set of the sample-function study, with lazily computed fits."""

    def __init__(self, cfg: ExperimentConfig, rng: np.random.Generator):
        self.cfg = cfg
        n = cfg.n_long
        self.true_hyp = Hyperparameters(cfg.alpha_sq, [cfg.lambda_], max(cfg.sigma_n**2, 1e-8))
        self.f = sample_gp_function(rng.integers(2**63), self.true_hyp)
        self.x = rng.uniform(*TEST_RANGE, n)
        self.y = self.f(self.x) + cfg.sigma_n * rng.standard_normal(n)
        self.xh = self.x + cfg.sigma_x * rng.standard_normal(n)
        self.tune_seed = int(rng.integers(2**31))
        self.Xt = np.linspace(*TEST_RANGE, cfg.n_test)
        self.truth = self.f(self.Xt)
        self.Xu = np.linspace(*TEST_RANGE, cfg.n_inducing)[:, None]
        self._cache = {}

    def _memo(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def _tune_cfg(self):
        return TuneConfig(restarts=self.cfg.restarts, seed=self.tune_seed)

    def ml_hyp(self):
        n = self.cfg.n_train
        return self._memo("ml", lambda: tune(self.xh[:n], self.y[:n], self._tune_cfg(), sigma_x=0.0).hyp)

    def nigp_hyp(self):
        n = self.cfg.n_train
        return self._memo("nigp", lambda: tune(self.xh[:n], self.y[:n], self._tune_cfg()).hyp)

    def _sonig_run(self, model, start, stop, snapshot, options):
        h = model.hyps[0]
        snaps = {}
        for i in range(start, stop):
            meas = NoisyMeasurement(self.xh[i], h.sigma_x_diag, self.y[i], h.sigma_n_sq)
            model = sonig_update(model, meas, options).model
            if i + 1 in snapshot:
                snaps[i + 1] = model.predict(self.Xt[:, None])
        return snaps

    def sonig(self, second_order_mean=True):
        def run():
            model = SonigModel.from_prior(self.Xu, self.nigp_hyp())
            opts = SonigOptions(second_order_mean=second_order_mean)
            return self._sonig_run(model, 0, self.cfg.n_long, {self.cfg.n_train, self.cfg.n_long}, opts)

        return self._memo(("sonig", second_order_mean), run)

    def predict(self, method: str):
        """Predicted means and variances of f at the test grid."""
        cfg, n = self.cfg, self.cfg.n_train
        if method == "exact":
            b = exact_gp_posterior(self.x[:n], self.y[:n], self.Xt, self.true_hyp)
            return b.mean, b.var
        if method == "ml_gp":
            b = exact_gp_posterior(self.xh[:n], self.y[:n], self.Xt, self.ml_hyp())
            return b.mean, b.var
        if method == "nigp":
            b = nigp_predict(self.xh[:n], self.y[:n], self.nigp_hyp(), self.Xt)
            return b.mean, b.var
        if method in ("sonig200", "sonig800", "sonig200_first_order"):
            snaps = self.sonig(not method.endswith("first_order"))
            m, v = snaps[cfg.n_long if method == "sonig800" else n]
            return m[:, 0], v[:, 0]
        if method == "nigp_sonig":
            h, s = self.nigp_hyp(), cfg.n_subset
            model = SonigModel([nigp_inducing_set(self.xh[:s], self.y[:s], h, self.Xu)])
            m, v = self._sonig_run(model, s, cfg.n_long, {cfg.n_long}, SonigOptions())[cfg.n_long]
            return m[:, 0], v[:, 0]
        if method == "fitc":
            ind = fitc_batch(self.xh[: cfg.n_long], self.y[: cfg.n_long], self.Xu, self.ml_hyp())
            return inducing_predict_diag(ind, self.Xt)
        raise InputError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def run_sample_experiment(cfg: ExperimentConfig | None = None) -> ExperimentReport:
    """Regression of noisy samples of random GP functions, averaged over repeats.

    Each method's ratio is its average MSE divided by its average predicted
    variance. Repeat ``i`` draws from ``SeedSequence(cfg.seed).spawn(...)[i]``.
    """
    cfg = cfg or ExperimentConfig()
    for m in cfg.methods:
        if m not in METHODS:
            raise InputError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.repeats)
    mse = {m: [] for m in cfg.methods}
    mvar = {m: [] for m in cfg.methods}
    runtimes = {m: 0.0 for m in cfg.methods}
    for child in children:
        rep = _Repeat(cfg, np.random.default_rng(child))
        for m in cfg.methods:
            t0 = time.perf_counter()
            mean, var = rep.predict(m)
            runtimes[m] += time.perf_counter() - t0
            r = metrics(mean, rep.truth, var)
            mse[m].append(r.mse)
            mvar[m].append(r.mean_var)
    results = {}
    for m in cfg.methods:
        a, v = float(np.mean(mse[m])), float(np.mean(mvar[m]))
        results[m] = {
            "mse": a,
            "rmse": float(np.sqrt(a)),
            "mean_var": v,
            "ratio": a / v if v > 0 else float("nan"),
            "mse_std_err": float(np.std(mse[m], ddof=1) / np.sqrt(len(mse[m]))) if cfg.repeats > 1 else 0.0,
            "per_repeat_mse": [float(x) for x in mse[m]],
        }
    seeds = [{"entropy": int(c.entropy), "spawn_key": list(c.spawn_key)} for c in children]
    settings = dataclasses.asdict(cfg)
    settings["methods"] = list(cfg.methods)
    return ExperimentReport("sample-function", settings, results, seeds, {m: round(t, 6) for m, t in runtimes.items()})


def narx_regressors(y, u, n_y: int, n_u: int):
    """Deterministic regressors (y_k.., u_k..) and targets y_{k+1} from a record."""
    y, u = np.asarray(y, float), np.asarray(u, float)
    k0 = max(n_y, n_u) - 1
    ks = np.arange(k0, len(y) - 1)
    X = np.column_stack([y[ks - lag] for lag in range(n_y)] + [u[ks - lag] for lag in range(n_u)])
    return X, y[ks + 1]


def narx_hyperparameters(cfg: NarxExperimentConfig, y, u) -> Hyperparameters:
    """Hyperparameters from the config, or tuned on a subset of the training record."""
    d = cfg.n_y + cfg.n_u
    if cfg.has_hyperparameters:
        lam = np.asarray(cfg.lambda_, float)
        sx = np.asarray(cfg.sigma_x, float)
        if lam.shape != (d,) or sx.shape != (d,):
            raise InputError(f"lambda and sigma_x need {d} entries")
        return Hyperparameters(cfg.alpha_sq, lam, cfg.sigma_f, sx)
    X, Y = narx_regressors(y, u, cfg.n_y, cfg.n_u)
    tcfg = TuneConfig(subset_size=min(cfg.tune_subset, len(Y)), restarts=cfg.restarts, seed=cfg.seed)
    return tune(X, Y, tcfg).hyp


def run_damper_experiment(dataset_path=None, cfg: NarxExperimentConfig | None = None, train_samples=None, surrogate_seed=0):
    """Identify a NARX model online, then free-run it over the evaluation span.

    Without ``dataset_path`` the synthetic surrogate system is used. Training
    uses the first ``train_samples`` (default ``cfg.n_train``) samples; the
    free run always starts at sample ``cfg.n_train`` from measured lags.

    Returns
    -------
    report : ExperimentReport
    trace : dict of ndarray
        Columns ``t, mean, lower95, upper95, truth`` over the evaluation span.
    """
    cfg = cfg or NarxExperimentConfig()
    total = cfg.n_train + cfg.n_eval
    if dataset_path is None:
        u, y, _ = sysid.surrogate_data(total, surrogate_seed)
        source = f"surrogate(seed={surrogate_seed})"
    else:
        u, y = load_io_csv(dataset_path, min_rows=total)
        source = str(dataset_path)
    n_fit = cfg.n_train if train_samples is None else int(train_samples)
    if not max(cfg.n_y, cfg.n_u) + 1 < n_fit <= cfg.n_train:
        raise InputError(f"train_samples must lie in ({max(cfg.n_y, cfg.n_u) + 1}, {cfg.n_train}]")

    t0 = time.perf_counter()
    hyp = narx_hyperparameters(cfg, y[:n_fit], u[:n_fit])
    t_tune = time.perf_counter() - t0
    narx = sysid.NarxConfig(
        n_y=cfg.n_y, n_u=cfg.n_u, add_threshold=cfg.threshold, write_back=cfg.write_back,
        options=SonigOptions(max_relin_iters=cfg.max_relin_iters),
    ).with_noise_from(hyp)
    t0 = time.perf_counter()
    res = sysid.train(y[:n_fit], u[:n_fit], hyp, narx)
    t_train = time.perf_counter() - t0

    n0 = cfg.n_train
    init = sysid.initial_state(narx, y[:n0], u[: n0 - 1])
    t0 = time.perf_counter()
    preds = sysid.free_run_simulate(res.model, u[n0 - 1 : n0 - 1 + cfg.n_eval], init, narx)
    t_sim = time.perf_counter() - t0
    mean = np.array([p.mean[0] for p in preds])
    var = np.array([p.var[0] for p in preds])
    truth = y[n0 : n0 + cfg.n_eval]
    free = metrics(mean, truth, var)
    k0 = narx.warmup
    os_mean, os_var = sysid.one_step_predict(res.model, y[n0 - 1 - k0 : total], u[n0 - 1 - k0 : total], narx)
    one = metrics(os_mean[:, 0], truth, os_var[:, 0])
    if not (np.all(np.isfinite(mean)) and np.all(var >= 0)):
        raise NumericalError("free-run produced invalid predictions")

    half = 1.959963984540054 * np.sqrt(var)
    trace = {
        "t": (n0 + np.arange(cfg.n_eval)) * cfg.dt,
        "mean": mean, "lower95": mean - half, "upper95": mean + half, "truth": truth,
    }
    settings = {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(cfg).items()}
    settings.update(source=source, train_samples=n_fit)
    report = ExperimentReport(
        "narx", settings,
        {"sonig_free_run": free.to_dict(), "sonig_one_step": one.to_dict()},
        [cfg.seed, surrogate_seed],
        {"tune": round(t_tune, 6), "train": round(t_train, 6), "simulate": round(t_sim, 6)},
        {"n_inducing": res.model.n_u, "hyperparameters": hyp.to_dict()},
    )
    return report, trace
