import numpy as np
import pytest

from conftest import make_trained_2d
from oracles import gauss_hermite, se_scalar
from sonig import (
    GaussianBelief,
    Hyperparameters,
    InducingSet,
    SonigModel,
    inducing_predict,
    inducing_predict_diag,
    kernel_matrix,
    q_matrix,
    q_vector,
    stochastic_predict,
)
from sonig.moments import moment_terms

H1 = Hyperparameters(1.0, [1.0], 0.1)


def _two_output_model():
    ind = make_trained_2d()
    rng = np.random.default_rng(11)
    h2 = Hyperparameters(0.6, [2.0, 0.7], 0.05)
    other = InducingSet(ind.Xu, h2)
    from sonig import online_update

    for x in rng.uniform(-2, 2, (25, 2)):
        other = online_update(other, x, x[0] - 0.5 * x[1] ** 2, h2.sigma_n_sq)
    return SonigModel([ind, other])


class TestQVector:
    def test_point_mass(self):
        Xu = np.array([[0.0], [0.5], [2.0]])
        b = GaussianBelief([0.3], [[0.0]])
        np.testing.assert_allclose(q_vector(Xu, b, H1), kernel_matrix(Xu, [[0.3]], H1)[:, 0])

    def test_substitution(self):
        assert q_vector([[0.0]], GaussianBelief([0.0], [[1.0]]), H1)[0] == pytest.approx(1 / np.sqrt(2))

    def test_quadrature(self):
        rng = np.random.default_rng(0)
        h = Hyperparameters(1.7, [0.9, 1.6], 0.1)
        Xu = rng.normal(size=(5, 2))
        A = rng.normal(size=(2, 2)) * 0.4
        b = GaussianBelief([0.2, -0.3], A @ A.T + 0.05 * np.eye(2))
        ref = gauss_hermite(lambda x: np.array([se_scalar(u, x, 1.7, [0.9, 1.6]) for u in Xu]), b.mean, b.cov)
        np.testing.assert_allclose(q_vector(Xu, b, h), ref, rtol=1e-6)


class TestQMatrix:
    def test_point_mass(self):
        h2 = Hyperparameters(2.0, [0.5], 0.1)
        Xu = np.array([[0.0], [0.5], [2.0]])
        b = GaussianBelief([0.3], [[0.0]])
        ka = kernel_matrix(Xu, [[0.3]], H1)[:, 0]
        kb = kernel_matrix(Xu, [[0.3]], h2)[:, 0]
        np.testing.assert_allclose(q_matrix(Xu, b, H1, h2), np.outer(ka, kb))

    def test_substitution(self):
        assert q_matrix([[0.0]], GaussianBelief([0.0], [[1.0]]), H1, H1)[0, 0] == pytest.approx(1 / np.sqrt(3))

    @pytest.mark.parametrize("mixed", [False, True])
    def test_quadrature(self, mixed):
        rng = np.random.default_rng(1)
        hk = Hyperparameters(1.3, [0.8, 1.5], 0.1)
        hl = Hyperparameters(0.6, [2.0, 0.7], 0.1) if mixed else hk
        Xu = rng.normal(size=(4, 2))
        A = rng.normal(size=(2, 2)) * 0.4
        b = GaussianBelief([0.1, 0.4], A @ A.T + 0.05 * np.eye(2))

        def integrand(x):
            a = np.array([se_scalar(u, x, hk.alpha_sq, hk.lambda_diag) for u in Xu])
            c = np.array([se_scalar(u, x, hl.alpha_sq, hl.lambda_diag) for u in Xu])
            return np.outer(a, c)

        ref = gauss_hermite(integrand, b.mean, b.cov)
        np.testing.assert_allclose(q_matrix(Xu, b, hk, hl), ref, rtol=1e-6)

    def test_terms_transpose_and_positive(self):
        model = _two_output_model()
        t = moment_terms(model, GaussianBelief([0.1, 0.2], np.diag([0.1, 0.2])))
        np.testing.assert_allclose(t.Q[0, 1], t.Q[1, 0].T)
        assert all(np.all(q > 0) for q in t.q) and all(np.all(Q > 0) for Q in t.Q.values())


class TestStochasticPredict:
    def test_deterministic_input(self):
        model = _two_output_model()
        x = np.array([0.3, -0.6])
        b = stochastic_predict(model, GaussianBelief(x, np.zeros((2, 2))))
        for k, ind in enumerate(model.sets):
            ref = inducing_predict(ind, x[None])
            assert b.mean[k] == pytest.approx(ref.mean[0], rel=1e-10)
            assert b.cov[k, k] == pytest.approx(ref.var[0], rel=1e-8, abs=1e-12)
        assert b.cov[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_fresh_prior(self):
        hs = [Hyperparameters(2.0, [1.0], 0.1), Hyperparameters(0.5, [3.0], 0.1)]
        model = SonigModel.from_prior(np.linspace(-2, 2, 5)[:, None], hs)
        b = stochastic_predict(model, GaussianBelief([0.4], [[0.3]]))
        np.testing.assert_allclose(b.mean, 0.0, atol=1e-12)
        np.testing.assert_allclose(np.diag(b.cov), [2.0, 0.5], rtol=1e-6)

    def test_matches_monte_carlo(self, trained_1d):
        xb = GaussianBelief([0.5], [[0.16]])
        b, cross = stochastic_predict(trained_1d, xb, return_cross_cov=True)
        rng = np.random.default_rng(0)
        xs = 0.5 + 0.4 * rng.standard_normal(10**6)
        m, v = inducing_predict_diag(trained_1d.sets[0], xs[:, None])
        assert b.mean[0] == pytest.approx(m.mean(), abs=3e-3)
        assert b.cov[0, 0] == pytest.approx(v.mean() + m.var(), abs=3e-3)
        assert cross[0, 0] == pytest.approx(np.mean((xs - 0.5) * (m - m.mean())), abs=3e-3)

    def test_constant_prior_mean(self, trained_1d):
        ind = trained_1d.sets[0]
        shifted = SonigModel([InducingSet(ind.Xu, ind.hyp, ind.mean + 4.0, ind.cov, prior_mean=4.0)])
        xb = GaussianBelief([0.5], [[0.16]])
        a, b = stochastic_predict(trained_1d, xb), stochastic_predict(shifted, xb)
        assert b.mean[0] == pytest.approx(a.mean[0] + 4.0, rel=1e-12)
        assert b.cov[0, 0] == pytest.approx(a.cov[0, 0], rel=1e-9)

    def test_converges_to_deterministic_limit(self, trained_1d):
        ref = inducing_predict(trained_1d.sets[0], [[0.9]])
        errs = []
        for s in (1e-2, 1e-4, 1e-6):
            b = stochastic_predict(trained_1d, GaussianBelief([0.9], [[s]]))
            errs.append(abs(b.mean[0] - ref.mean[0]) + abs(b.cov[0, 0] - ref.var[0]))
        assert errs[0] > errs[1] > errs[2]

    def test_input_uncertainty_inflates_variance(self, trained_1d):
        # holds where the data are dense and the mean has slope
        for x in np.linspace(-2.0, 2.0, 21):
            det = inducing_predict(trained_1d.sets[0], [[x]]).var[0]
            sto = stochastic_predict(trained_1d, GaussianBelief([x], [[0.05]])).cov[0, 0]
            assert sto >= det - 1e-8

    def test_variance_can_drop_at_a_variance_peak(self):
        # a counterexample to unconditional inflation, confirmed by sampling
        model = _two_output_model()
        x = np.array([0.9038234, 0.24648611])
        det = stochastic_predict(model, GaussianBelief(x, np.zeros((2, 2))))
        sto = stochastic_predict(model, GaussianBelief(x, 0.2 * np.eye(2)))
        xs = x + np.sqrt(0.2) * np.random.default_rng(0).standard_normal((200_000, 2))
        m, v = model.predict(xs)
        assert sto.cov[1, 1] < det.cov[1, 1]
        assert sto.cov[1, 1] == pytest.approx(v[:, 1].mean() + m[:, 1].var(), abs=3e-3)
