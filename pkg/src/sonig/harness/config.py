"""Plain-text ``key = value`` experiment configuration.

Lines starting with ``#`` are comments. Lists are comma separated. Unknown
keys are rejected so that typos do not pass silently.

Sample-function experiment keys: ``repeats``, ``seed``, ``methods``,
``n_train``, ``n_long``, ``n_subset``, ``sigma_x``, ``sigma_n``, ``alpha_sq``,
``lambda``, ``n_inducing``, ``n_test``, ``restarts``.

NARX experiment keys: ``n_y``, ``n_u``, ``threshold``, ``n_train``,
``n_eval``, ``dt``, ``seed``, ``write_back``, ``max_relin_iters``,
``tune_subset``, ``restarts`` and, to skip tuning, all of ``alpha_sq``,
``lambda``, ``sigma_x``, ``sigma_f`` (variances; ``lambda`` and ``sigma_x``
have one entry per regressor component).
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path

from ..errors import InputError

_SECTION = "config"

ALL_SAMPLE_METHODS = (
    "exact", "ml_gp", "nigp", "sonig200", "sonig800", "nigp_sonig", "fitc", "sonig200_first_order",
)


@dataclass
class ExperimentConfig:
    repeats: int = 50
    seed: int = 0
    methods: tuple[str, ...] = ALL_SAMPLE_METHODS
    n_train: int = 200
    n_long: int = 800
    n_subset: int = 100
    sigma_x: float = 0.4
    sigma_n: float = 0.1
    alpha_sq: float = 1.0
    lambda_: float = 1.0
    n_inducing: int = 21
    n_test: int = 101
    restarts: int = 2

    def __post_init__(self):
        self.methods = tuple(self.methods)
        if self.repeats < 1:
            raise InputError("repeats must be at least 1")
        if not 0 < self.n_subset < self.n_long or self.n_train > self.n_long:
            raise InputError("need 0 < n_subset < n_long and n_train <= n_long")
        if self.sigma_x < 0 or self.sigma_n < 0:
            raise InputError("noise levels must be non-negative")


@dataclass
class NarxExperimentConfig:
    n_y: int = 1
    n_u: int = 3
    threshold: float = 1.0
    n_train: int = 2000
    n_eval: int = 1499
    dt: float = 0.05
    seed: int = 0
    write_back: bool = True
    max_relin_iters: int = 3
    tune_subset: int = 300
    restarts: int = 2
    alpha_sq: float | None = None
    lambda_: tuple[float, ...] | None = None
    sigma_x: tuple[float, ...] | None = None
    sigma_f: float | None = None

    @property
    def has_hyperparameters(self) -> bool:
        given = [self.alpha_sq, self.lambda_, self.sigma_x, self.sigma_f]
        if any(v is not None for v in given) and not all(v is not None for v in given):
            raise InputError("give all of alpha_sq, lambda, sigma_x, sigma_f or none of them")
        return self.alpha_sq is not None


# preset from expert tuning of the damper benchmark
DAMPER_HYPERPARAMETERS = dict(
    alpha_sq=70.0**2, lambda_=(70.0**2, 20.0**2, 10.0**2, 10.0**2),
    sigma_x=(2.0**2, 0.1**2, 0.1**2, 0.1**2), sigma_f=2.0**2,
)


def _convert(raw: str, default, name: str):
    kind = type(default) if default is not None else None
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError
            return low in ("true", "yes", "1")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if isinstance(default, tuple) and default and isinstance(default[0], str):
            return tuple(items)
        if name in ("alpha_sq", "sigma_f"):
            return float(raw)
        return tuple(float(s) for s in items)
    except ValueError:
        raise InputError(f"config key {name!r}: cannot parse {raw!r}" + (f" as {kind.__name__}" if kind else "")) from None


def parse_config(text: str, cls):
    """Build ``cls`` from ``key = value`` text."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise InputError(f"malformed config: {exc}") from None
    fields = {f.name.rstrip("_"): f for f in dataclasses.fields(cls)}
    values = {}
    for key, raw in parser[_SECTION].items():
        if key not in fields:
            raise InputError(f"unknown config key {key!r}; known keys: {', '.join(sorted(fields))}")
        f = fields[key]
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        values[f.name] = _convert(raw.strip(), default, key)
    return cls(**values)


def load_config(path, cls=ExperimentConfig):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_config(text, cls)
