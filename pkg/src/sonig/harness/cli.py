"""Command-line interface.

Exit codes: 0 on success, 2 on invalid input, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..errors import InputError, NumericalError
from ..kernels import Hyperparameters
from ..noisy_input import SonigModel, SonigOptions
from .. import sysid
from .config import ExperimentConfig, NarxExperimentConfig, load_config
from .data import load_io_csv, write_csv
from .experiments import narx_hyperparameters, run_damper_experiment, run_sample_experiment

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3
MODEL_FORMAT = 1


def _narx_cfg(args) -> NarxExperimentConfig:
    return load_config(args.config, NarxExperimentConfig) if args.config else NarxExperimentConfig()


def _emit(args, payload: dict, header=None, columns=None):
    out = args.stdout
    if args.output == "csv":
        if columns is None:
            header = ["key", "value"]
            keys = sorted(payload)
            columns = [keys, [json.dumps(payload[k]) for k in keys]]
            w = csv.writer(out, lineterminator="\n")
            w.writerow(header)
            w.writerows(zip(*columns))
        else:
            write_csv(out, header, columns)
    else:
        out.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_hyp(path) -> Hyperparameters:
    try:
        return Hyperparameters.from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read hyperparameters from {path}: {exc}") from None


def _load_model(path):
    try:
        blob = json.loads(Path(path).read_text())
        if blob.get("format") != MODEL_FORMAT:
            raise InputError(f"{path}: unsupported model format")
        narx = sysid.NarxConfig(**blob["narx"])
        model = SonigModel.from_dict(blob["model"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read model from {path}: {exc}") from None
    return model, narx.with_noise_from(model.hyps)


def cmd_tune(args):
    cfg = _narx_cfg(args)
    u, y = load_io_csv(args.data, min_rows=max(cfg.n_y, cfg.n_u) + 2)
    cfg.alpha_sq = cfg.lambda_ = cfg.sigma_x = cfg.sigma_f = None
    hyp = narx_hyperparameters(cfg, y, u)
    _emit(args, hyp.to_dict())


def cmd_train(args):
    cfg = _narx_cfg(args)
    u, y = load_io_csv(args.data, min_rows=max(cfg.n_y, cfg.n_u) + 2)
    hyp = _load_hyp(args.hyp) if args.hyp else narx_hyperparameters(cfg, y, u)
    narx = sysid.NarxConfig(
        n_y=cfg.n_y, n_u=cfg.n_u, add_threshold=cfg.threshold, write_back=cfg.write_back,
        options=SonigOptions(max_relin_iters=cfg.max_relin_iters),
    )
    res = sysid.train(y, u, hyp, narx)
    blob = {
        "format": MODEL_FORMAT,
        "narx": {"n_y": cfg.n_y, "n_u": cfg.n_u, "add_threshold": cfg.threshold, "write_back": cfg.write_back},
        "model": res.model.to_dict(),
    }
    Path(args.model_out).write_text(json.dumps(blob))
    _emit(args, {"model": str(args.model_out), "samples": len(y), "n_inducing": res.model.n_u})


def cmd_predict(args):
    model, narx = _load_model(args.model)
    u, y = load_io_csv(args.data, min_rows=narx.warmup + 2)
    mean, var = sysid.one_step_predict(model, y, u, narx)
    k = np.arange(narx.warmup + 1, len(y))
    if args.output == "csv":
        _emit(args, {}, ["t", "mean", "var", "truth"], [k * args.dt, mean[:, 0], var[:, 0], y[k]])
    else:
        _emit(args, {"t": (k * args.dt).tolist(), "mean": mean[:, 0].tolist(), "var": var[:, 0].tolist()})


def cmd_simulate(args):
    model, narx = _load_model(args.model)
    u, y = load_io_csv(args.data, min_rows=narx.warmup + 2)
    k0 = narx.warmup
    init = sysid.initial_state(narx, y[: k0 + 1], u[:k0])
    preds = sysid.free_run_simulate(model, u[k0:-1], init, narx)
    mean = np.array([p.mean[0] for p in preds])
    half = 1.959963984540054 * np.sqrt(np.array([p.var[0] for p in preds]))
    t = np.arange(k0 + 1, len(y)) * args.dt
    cols = [t, mean, mean - half, mean + half, y[k0 + 1 :]]
    header = ["t", "mean", "lower95", "upper95", "truth"]
    if args.output == "csv":
        _emit(args, {}, header, cols)
    else:
        _emit(args, {h: c.tolist() for h, c in zip(header, cols)})


def cmd_experiment_sample(args):
    cfg = load_config(args.config, ExperimentConfig) if args.config else ExperimentConfig()
    if args.repeats is not None:
        cfg.repeats = args.repeats
    if args.seed is not None:
        cfg.seed = args.seed
    report = run_sample_experiment(cfg)
    _report(args, report)


def cmd_experiment_narx(args):
    cfg = _narx_cfg(args)
    cfg.dt = args.dt if args.dt is not None else cfg.dt
    report, trace = run_damper_experiment(args.data, cfg, args.train_samples, args.surrogate_seed)
    if args.export:
        write_csv(args.export, list(trace), list(trace.values()))
    _report(args, report)


def _report(args, report):
    if args.output == "csv":
        names = list(report.methods)
        keys = ["mse", "rmse", "mean_var", "ratio"]
        write_csv(args.stdout, ["method"] + keys, [names] + [[report.methods[n][k] for n in names] for k in keys])
    else:
        args.stdout.write(report.to_json() + "\n")


def cmd_surrogate(args):
    u, y, _ = sysid.surrogate_data(args.samples, args.seed)
    write_csv(args.out, ["u", "y"], [u, y])
    _emit(args, {"file": str(args.out), "samples": args.samples})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sonig", description="Sparse online noisy-input GP regression and NARX identification.")
    p.add_argument("--output", choices=("json", "csv"), default="json")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def data_cmd(name, fn, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--data", required=True, help="CSV with header u,y")
        s.add_argument("--dt", type=float, default=1.0, help="sample period for time columns")
        s.set_defaults(func=fn)
        return s

    s = data_cmd("tune", cmd_tune, "tune NARX hyperparameters on a data subset")
    s.add_argument("--config")
    s = data_cmd("train", cmd_train, "identify a NARX model and save it")
    s.add_argument("--config")
    s.add_argument("--hyp", help="JSON hyperparameters (from 'tune'); tuned when omitted")
    s.add_argument("--model-out", required=True)
    s = data_cmd("predict", cmd_predict, "one-step-ahead predictions from measured lags")
    s.add_argument("--model", required=True)
    s = data_cmd("simulate", cmd_simulate, "free-run simulation from the record's inputs")
    s.add_argument("--model", required=True)

    exp = sub.add_parser("experiment", help="run a benchmark study").add_subparsers(dest="study", required=True)
    s = exp.add_parser("sample-function", help="regression on noisy samples of random GP functions")
    s.add_argument("--config")
    s.add_argument("--repeats", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_experiment_sample)
    s = exp.add_parser("narx", help="NARX identification and free-run evaluation")
    s.add_argument("--data", help="CSV with header u,y; the synthetic surrogate is used when omitted")
    s.add_argument("--config")
    s.add_argument("--dt", type=float)
    s.add_argument("--train-samples", type=int)
    s.add_argument("--surrogate-seed", type=int, default=0)
    s.add_argument("--export", help="write t,mean,lower95,upper95,truth rows to this CSV")
    s.set_defaults(func=cmd_experiment_narx)

    s = sub.add_parser("generate-surrogate", help="write a synthetic NARX record as CSV")
    s.add_argument("--out", required=True)
    s.add_argument("--samples", type=int, default=3499)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_surrogate)
    return p


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    args.stdout = stdout
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=stderr)
        return EXIT_NUMERICAL
    return EXIT_OK
