"""Sparse online Gaussian process regression with noisy inputs.

Squared-exponential kernels, exact and sparse (FITC) regression, online
updates whose training inputs are themselves uncertain, moment-matched
predictions at uncertain test inputs, hyperparameter tuning and NARX system
identification.
"""

from .errors import InputError, NumericalError
from .gp_core import (
    GaussianBelief,
    InducingSet,
    exact_gp_posterior,
    fitc_batch,
    inducing_predict,
    inducing_predict_diag,
)
from .hypertune import TuneConfig, TuneResult, nigp_predict, tune, tune_sod
from .kernels import Hyperparameters, kernel_matrix, se_kernel, se_kernel_dx, se_kernel_dxdx
from .moments import q_matrix, q_vector, stochastic_predict
from .noisy_input import (
    NoisyMeasurement,
    NumericalWarning,
    SonigModel,
    SonigOptions,
    input_posterior,
    output_posterior,
    sonig_update,
    update_derivatives,
)
from .online import (
    add_inducing_points,
    nearest_normalized_distance,
    online_predict_point,
    online_update,
    remove_inducing_point,
)
from .sysid import NarxConfig, NarxState, build_regressor, free_run_simulate, sysid_step

__all__ = [
    "GaussianBelief",
    "Hyperparameters",
    "InducingSet",
    "InputError",
    "NarxConfig",
    "NarxState",
    "NoisyMeasurement",
    "NumericalError",
    "NumericalWarning",
    "SonigModel",
    "SonigOptions",
    "TuneConfig",
    "TuneResult",
    "add_inducing_points",
    "build_regressor",
    "exact_gp_posterior",
    "fitc_batch",
    "free_run_simulate",
    "inducing_predict",
    "inducing_predict_diag",
    "input_posterior",
    "kernel_matrix",
    "nearest_normalized_distance",
    "nigp_predict",
    "online_predict_point",
    "online_update",
    "output_posterior",
    "q_matrix",
    "q_vector",
    "remove_inducing_point",
    "se_kernel",
    "se_kernel_dx",
    "se_kernel_dxdx",
    "sonig_update",
    "stochastic_predict",
    "sysid_step",
    "tune",
    "tune_sod",
    "update_derivatives",
]

__version__ = "0.1.0"
