"""Error and calibration metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InputError


@dataclass(frozen=True)
class Metrics:
    mse: float
    rmse: float
    mean_var: float
    ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


def metrics(predictions, truths, variances=None) -> Metrics:
    """MSE, RMSE, mean predicted variance and their ratio MSE / mean variance.

    Without ``variances`` the mean variance is reported as NaN, as is the
    ratio when the mean variance is zero.
    """
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(truths, dtype=float).ravel()
    if p.size == 0:
        raise InputError("metrics need at least one prediction")
    if p.shape != t.shape:
        raise InputError(f"{p.size} predictions but {t.size} truths")
    mse = float(np.mean((p - t) ** 2))
    if variances is None:
        mean_var = float("nan")
    else:
        v = np.asarray(variances, dtype=float).ravel()
        if v.shape != p.shape:
            raise InputError(f"{v.size} variances but {p.size} predictions")
        mean_var = float(np.mean(v))
    ratio = mse / mean_var if mean_var > 0 else float("nan")
    return Metrics(mse, float(np.sqrt(mse)), mean_var, ratio)
