import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sonig import Hyperparameters, InputError
from sonig.harness import (
    ExperimentConfig,
    NarxExperimentConfig,
    load_config,
    load_io_csv,
    metrics,
    run_damper_experiment,
    run_sample_experiment,
    sample_gp_function,
    write_csv,
)
from sonig.harness.config import parse_config


def _write(path, text):
    path.write_text(text)
    return path


class TestMetrics:
    def test_perfect_prediction(self):
        m = metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [0.1, 0.1, 0.1])
        assert m.mse == 0.0 and m.rmse == 0.0
        assert m.ratio == 0.0

    def test_constant_offset(self):
        t = np.linspace(-1, 1, 17)
        m = metrics(t + 0.3, t)
        assert m.mse == pytest.approx(0.09)
        assert m.rmse == pytest.approx(0.3)
        assert np.isnan(m.mean_var) and np.isnan(m.ratio)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 60), st.integers(0, 2**32 - 1))
    def test_recomputation(self, n, seed):
        rng = np.random.default_rng(seed)
        p, t, v = rng.normal(size=n), rng.normal(size=n), rng.uniform(0.1, 2.0, n)
        m = metrics(p, t, v)
        mse = sum((a - b) ** 2 for a, b in zip(p, t)) / n
        mv = sum(v) / n
        assert m.mse == pytest.approx(mse, rel=1e-12)
        assert m.rmse == pytest.approx(mse**0.5, rel=1e-12)
        assert m.mean_var == pytest.approx(mv, rel=1e-12)
        assert m.ratio == pytest.approx(mse / mv, rel=1e-12)

    def test_errors(self):
        with pytest.raises(InputError):
            metrics([], [])
        with pytest.raises(InputError):
            metrics([1.0, 2.0], [1.0])
        with pytest.raises(InputError):
            metrics([1.0, 2.0], [1.0, 2.0], [1.0])


class TestSampleFunction:
    hyp = Hyperparameters(1.0, [1.0], 0.01)

    def test_same_seed_same_function(self):
        x = np.linspace(-5, 5, 333)
        np.testing.assert_array_equal(sample_gp_function(7, self.hyp)(x), sample_gp_function(7, self.hyp)(x))
        assert not np.allclose(sample_gp_function(8, self.hyp)(x), sample_gp_function(7, self.hyp)(x))

    def test_variance_across_seeds(self):
        hyp = Hyperparameters(2.5, [0.7], 0.01)
        vals = np.array([sample_gp_function(s, hyp)([0.3, -4.0]) for s in range(2000)])
        # sample variance of 2000 draws has relative std about 3%
        np.testing.assert_allclose(vals.var(axis=0), 2.5, rtol=0.1)
        np.testing.assert_allclose(vals.mean(axis=0), 0.0, atol=0.3)

    def test_grid_endpoints(self):
        f = sample_gp_function(1, self.hyp)
        assert f.grid[0] == -5.0 and f.grid[-1] == 5.0
        assert f(-5.0) == f.values[0] and f(5.0) == f.values[-1]
        np.testing.assert_allclose(np.diff(f.grid), 0.01, rtol=1e-9)

    def test_interpolates_linearly(self):
        f = sample_gp_function(2, self.hyp)
        mid = 0.5 * (f.grid[100] + f.grid[101])
        assert f(mid) == pytest.approx(0.5 * (f.values[100] + f.values[101]))

    def test_bad_grids(self):
        with pytest.raises(InputError):
            sample_gp_function(0, self.hyp, np.linspace(-4, 5, 901))
        with pytest.raises(InputError):
            sample_gp_function(0, self.hyp, np.linspace(-5, 5, 101))
        with pytest.raises(InputError):
            sample_gp_function(0, Hyperparameters(1.0, [1.0, 1.0], 0.1), None)


class TestSampleExperiment:
    def test_unknown_method(self):
        with pytest.raises(InputError, match="unknown method"):
            run_sample_experiment(ExperimentConfig(repeats=1, methods=("exact", "magic")))

    def test_deterministic_report(self):
        cfg = ExperimentConfig(repeats=2, seed=5, methods=("exact", "ml_gp", "sonig200"))
        a = run_sample_experiment(cfg).to_json(timings=False)
        b = run_sample_experiment(cfg).to_json(timings=False)
        assert a == b

    def test_report_fields(self):
        cfg = ExperimentConfig(repeats=3, seed=1, methods=("exact", "fitc"))
        rep = run_sample_experiment(cfg)
        assert rep.settings["repeats"] == 3
        assert len(rep.seeds) == 3
        for stats in rep.methods.values():
            assert all(np.isfinite(stats[k]) for k in ("mse", "rmse", "mean_var", "ratio", "mse_std_err"))
            assert stats["ratio"] == pytest.approx(stats["mse"] / stats["mean_var"])
            assert stats["rmse"] == pytest.approx(np.sqrt(stats["mse"]))
            assert len(stats["per_repeat_mse"]) == 3
        json.loads(rep.to_json())

    def test_default_repeat_count(self):
        assert ExperimentConfig().repeats == 50

    def test_seed_changes_data(self):
        a = run_sample_experiment(ExperimentConfig(repeats=1, seed=0, methods=("exact",)))
        b = run_sample_experiment(ExperimentConfig(repeats=1, seed=1, methods=("exact",)))
        assert a.methods["exact"]["mse"] != b.methods["exact"]["mse"]

    def test_noiseless_limit(self):
        cfg = ExperimentConfig(repeats=2, seed=0, sigma_x=0.0, sigma_n=0.0)
        rep = run_sample_experiment(cfg)
        for name, stats in rep.methods.items():
            assert stats["mse"] < 1e-6, name


class TestData:
    def test_roundtrip(self, tmp_path):
        p = tmp_path / "d.csv"
        write_csv(p, ["u", "y"], [[0.1, 0.2, 1 / 3], [1.0, -2.0, 3.5]])
        u, y = load_io_csv(p)
        np.testing.assert_array_equal(u, [0.1, 0.2, 1 / 3])
        np.testing.assert_array_equal(y, [1.0, -2.0, 3.5])

    def test_write_to_stream(self):
        buf = io.StringIO()
        write_csv(buf, ["t", "label"], [[1.0, 2.0], ["a", "b"]])
        assert buf.getvalue() == "t,label\n1.0,a\n2.0,b\n"

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="u,y"):
            load_io_csv(tmp_path / "nope.csv")

    def test_wrong_header(self, tmp_path):
        with pytest.raises(InputError, match="header"):
            load_io_csv(_write(tmp_path / "d.csv", "y,u\n1,2\n"))

    def test_short_file(self, tmp_path):
        with pytest.raises(InputError, match="need at least 3499"):
            load_io_csv(_write(tmp_path / "d.csv", "u,y\n1,2\n3,4\n"), min_rows=3499)

    def test_non_numeric(self, tmp_path):
        with pytest.raises(InputError, match=":3:"):
            load_io_csv(_write(tmp_path / "d.csv", "u,y\n1,2\n3,x\n"))

    def test_wrong_column_count(self, tmp_path):
        with pytest.raises(InputError, match="2 columns"):
            load_io_csv(_write(tmp_path / "d.csv", "u,y\n1,2,3\n"))

    def test_unequal_columns(self, tmp_path):
        with pytest.raises(InputError):
            write_csv(tmp_path / "o.csv", ["a", "b"], [[1.0], [1.0, 2.0]])


class TestConfig:
    def test_parse_sample_config(self):
        cfg = parse_config(
            "# study settings\nrepeats = 7\nmethods = exact, sonig200\nsigma_x = 0.2  # smaller\nlambda = 0.5\n",
            ExperimentConfig,
        )
        assert cfg.repeats == 7
        assert cfg.methods == ("exact", "sonig200")
        assert cfg.sigma_x == 0.2
        assert cfg.lambda_ == 0.5

    def test_parse_narx_config(self):
        cfg = parse_config(
            "n_u = 2\nthreshold = 0.1\nwrite_back = false\nalpha_sq = 4\nlambda = 1, 2, 3\nsigma_x = 0.1, 0.1, 0.1\nsigma_f = 0.5\n",
            NarxExperimentConfig,
        )
        assert cfg.n_u == 2 and cfg.threshold == 0.1 and cfg.write_back is False
        assert cfg.lambda_ == (1.0, 2.0, 3.0)
        assert cfg.has_hyperparameters

    def test_partial_hyperparameters_rejected(self):
        cfg = parse_config("alpha_sq = 4\n", NarxExperimentConfig)
        with pytest.raises(InputError):
            cfg.has_hyperparameters

    def test_unknown_key(self):
        with pytest.raises(InputError, match="unknown config key 'repeat'"):
            parse_config("repeat = 3\n", ExperimentConfig)

    def test_bad_value(self):
        with pytest.raises(InputError, match="repeats"):
            parse_config("repeats = many\n", ExperimentConfig)
        with pytest.raises(InputError):
            parse_config("write_back = maybe\n", NarxExperimentConfig)

    def test_invalid_values(self):
        with pytest.raises(InputError):
            parse_config("repeats = 0\n", ExperimentConfig)
        with pytest.raises(InputError):
            parse_config("sigma_x = -1\n", ExperimentConfig)

    def test_load_from_file(self, tmp_path):
        cfg = load_config(_write(tmp_path / "c.cfg", "seed = 3\n"), ExperimentConfig)
        assert cfg.seed == 3
        with pytest.raises(InputError, match="cannot read"):
            load_config(tmp_path / "missing.cfg")


@pytest.fixture(scope="module")
def damper_runs():
    cfg = NarxExperimentConfig(threshold=0.1)
    full = run_damper_experiment(None, cfg)
    short = run_damper_experiment(None, cfg, train_samples=200)
    return full, short


class TestDamperExperiment:
    def test_trace_export(self, damper_runs, tmp_path):
        (report, trace), _ = damper_runs
        assert list(trace) == ["t", "mean", "lower95", "upper95", "truth"]
        assert all(len(c) == 1499 for c in trace.values())
        assert trace["t"][0] == pytest.approx(2000 * 0.05)
        assert np.all(trace["lower95"] <= trace["mean"]) and np.all(trace["mean"] <= trace["upper95"])
        p = tmp_path / "trace.csv"
        write_csv(p, list(trace), list(trace.values()))
        assert len(p.read_text().splitlines()) == 1500

    def test_report_metrics(self, damper_runs):
        (report, _), _ = damper_runs
        free = report.methods["sonig_free_run"]
        assert free["rmse"] == pytest.approx(np.sqrt(free["mse"]))
        assert free["ratio"] == pytest.approx(free["mse"] / free["mean_var"])
        assert report.extra["n_inducing"] > 1
        assert set(report.runtimes) == {"tune", "train", "simulate"}

    def test_truncated_training_is_worse(self, damper_runs):
        (full, _), (short, _) = damper_runs
        assert short.settings["train_samples"] == 200
        assert short.methods["sonig_free_run"]["rmse"] > full.methods["sonig_free_run"]["rmse"]

    def test_short_dataset(self, tmp_path):
        p = tmp_path / "d.csv"
        write_csv(p, ["u", "y"], [np.zeros(100), np.zeros(100)])
        with pytest.raises(InputError, match="u,y"):
            run_damper_experiment(p)

    def test_bad_train_samples(self):
        with pytest.raises(InputError, match="train_samples"):
            run_damper_experiment(None, NarxExperimentConfig(n_train=300, n_eval=50), train_samples=3)

    def test_dataset_file(self, tmp_path):
        from sonig.sysid import surrogate_data

        u, y, _ = surrogate_data(400, seed=2)
        p = tmp_path / "d.csv"
        write_csv(p, ["u", "y"], [u, y])
        cfg = NarxExperimentConfig(n_train=300, n_eval=100, threshold=0.3, tune_subset=100)
        report, trace = run_damper_experiment(p, cfg)
        assert report.settings["source"] == str(p)
        assert len(trace["t"]) == 100
