import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sonig import (
    Hyperparameters,
    InducingSet,
    InputError,
    add_inducing_points,
    fitc_batch,
    inducing_predict,
    inducing_predict_diag,
    kernel_matrix,
    nearest_normalized_distance,
    online_predict_point,
    online_update,
    remove_inducing_point,
)

H = Hyperparameters(1.0, [1.0], 0.01)
XU = np.linspace(-3, 3, 7)[:, None]
GRID = np.linspace(-4, 4, 41)[:, None]


def _sequential(ind, X, y, s2):
    for x, t in zip(X, y):
        ind = online_update(ind, x, t, s2)
    return ind


def _data(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-3, 3, (n, 1))
    return X, np.sin(X[:, 0]) + 0.1 * rng.standard_normal(n)


class TestPredictPoint:
    def test_fresh_set(self):
        ind = InducingSet(XU, H)
        x = np.array([0.37])
        mu, spp, _ = online_predict_point(ind, x)
        k = kernel_matrix(XU, x[None], H)[:, 0]
        assert mu == 0.0
        # at the prior the variance is the full prior variance
        assert spp == pytest.approx(H.alpha_sq, abs=1e-8)
        assert spp >= H.alpha_sq - k @ np.linalg.solve(ind.Kuu, k)

    def test_matches_inducing_predict(self, trained_1d):
        ind = trained_1d.sets[0]
        for x in [-2.2, 0.0, 1.5, XU[3, 0]]:
            mu, spp, _ = online_predict_point(ind, [x])
            b = inducing_predict(ind, [[x]])
            assert mu == pytest.approx(b.mean[0], rel=1e-10, abs=1e-14)
            assert spp == pytest.approx(b.var[0], rel=1e-10, abs=1e-14)
            assert spp >= -1e-8


class TestOnlineUpdate:
    def test_zero_innovation(self, trained_1d):
        ind = trained_1d.sets[0]
        mu, _, _ = online_predict_point(ind, [0.4])
        new = online_update(ind, [0.4], mu, 0.01)
        np.testing.assert_allclose(new.mean, ind.mean, atol=1e-14)
        assert np.trace(new.cov) < np.trace(ind.cov)

    def test_uninformative_measurement(self, trained_1d):
        ind = trained_1d.sets[0]
        new = online_update(ind, [0.4], 7.0, 1e12)
        np.testing.assert_allclose(new.mean, ind.mean, rtol=1e-6, atol=1e-10)
        np.testing.assert_allclose(new.cov, ind.cov, rtol=1e-6, atol=1e-10)

    def test_rejects_nonpositive_noise(self):
        with pytest.raises(InputError):
            online_update(InducingSet(XU, H), [0.0], 1.0, 0.0)

    def test_thirty_points_equal_batch(self):
        X, y = _data(30, 0)
        seq = _sequential(InducingSet(XU, H), X, y, H.sigma_n_sq)
        batch = fitc_batch(X, y, XU, H)
        np.testing.assert_allclose(seq.mean, batch.mean, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(seq.cov, batch.cov, rtol=1e-6, atol=1e-9)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(1, 50), st.integers(2, 8), st.integers(0, 10_000))
    def test_recursion_equals_batch(self, n, n_u, seed):
        rng = np.random.default_rng(seed)
        h = Hyperparameters(1.0, [0.7, 1.4], 0.05)
        X = rng.uniform(-2, 2, (n, 2))
        y = np.cos(X[:, 0]) * X[:, 1] + 0.2 * rng.standard_normal(n)
        Xu = rng.uniform(-2, 2, (n_u, 2))
        seq = _sequential(InducingSet(Xu, h), X, y, h.sigma_n_sq)
        batch = fitc_batch(X, y, Xu, h)
        np.testing.assert_allclose(seq.mean, batch.mean, rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(seq.cov, batch.cov, rtol=1e-6, atol=1e-8)

    def test_trace_non_increasing(self):
        X, y = _data(40, 1)
        ind = InducingSet(XU, H)
        tr = [np.trace(ind.cov)]
        for x, t in zip(X, y):
            ind = online_update(ind, x, t, H.sigma_n_sq)
            tr.append(np.trace(ind.cov))
            assert np.linalg.eigvalsh(ind.Kuu - ind.cov).min() >= -1e-6 * H.alpha_sq
        assert np.all(np.diff(tr) <= 1e-12)

    def test_order_independent(self):
        X, y = _data(40, 2)
        rng = np.random.default_rng(3)
        p1, p2 = rng.permutation(40), rng.permutation(40)
        a = _sequential(InducingSet(XU, H), X[p1], y[p1], H.sigma_n_sq)
        b = _sequential(InducingSet(XU, H), X[p2], y[p2], H.sigma_n_sq)
        np.testing.assert_allclose(a.mean, b.mean, rtol=1e-5, atol=1e-9)
        np.testing.assert_allclose(a.cov, b.cov, rtol=1e-5, atol=1e-9)


class TestNearestDistance:
    def test_at_inducing_point(self):
        assert nearest_normalized_distance(InducingSet(XU, H), XU[2]) == 0.0

    def test_substitution(self):
        assert nearest_normalized_distance(InducingSet([[0.0]], H), [2.0]) == pytest.approx(4.0)

    def test_exhaustive_scan(self):
        rng = np.random.default_rng(4)
        h = Hyperparameters(1.0, [0.5, 2.0, 1.0], 0.1)
        ind = InducingSet(rng.normal(size=(9, 3)), h)
        for x in rng.normal(size=(20, 3)):
            best = min(float(np.sum((x - xu) ** 2 / h.lambda_diag)) for xu in ind.Xu)
            assert nearest_normalized_distance(ind, x) == pytest.approx(best, rel=1e-14)


class TestAddRemove:
    def test_add_to_fresh_gives_union_prior(self):
        ind = add_inducing_points(InducingSet(XU, H), [[0.25], [3.7]])
        union = InducingSet(np.vstack([XU, [[0.25], [3.7]]]), H)
        np.testing.assert_allclose(ind.mean, 0.0, atol=1e-14)
        np.testing.assert_allclose(ind.cov, union.Kuu, atol=1e-6)

    def test_add_keeps_predictions(self, trained_1d):
        ind = trained_1d.sets[0]
        before = inducing_predict(ind, GRID)
        after = inducing_predict(add_inducing_points(ind, [[0.25], [-1.3]]), GRID)
        np.testing.assert_allclose(after.mean, before.mean, rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(after.cov, before.cov, rtol=1e-6, atol=1e-7)

    def test_add_then_remove_round_trip(self, trained_1d):
        ind = trained_1d.sets[0]
        m0, v0 = inducing_predict_diag(ind, GRID)
        grown = add_inducing_points(ind, [[0.8]])
        back = remove_inducing_point(grown, grown.n_u - 1)
        m1, v1 = inducing_predict_diag(back, GRID)
        np.testing.assert_allclose(m1, m0, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(v1, v0, rtol=1e-6, atol=1e-9)

    def test_duplicates_rejected(self):
        ind = InducingSet(XU, H)
        with pytest.raises(InputError):
            add_inducing_points(ind, [XU[1]])
        with pytest.raises(InputError):
            add_inducing_points(ind, [[0.3], [0.3]])
        with pytest.raises(InputError):
            add_inducing_points(ind, np.zeros((0, 1)))

    def test_remove_from_prior(self):
        ind = remove_inducing_point(InducingSet(XU, H), 3)
        ref = InducingSet(np.delete(XU, 3, axis=0), H)
        np.testing.assert_allclose(ind.cov, ref.Kuu)
        np.testing.assert_allclose(ind.mean, 0.0)

    def test_removal_respects_prior_bound(self, trained_1d):
        ind = trained_1d.sets[0]
        for i in range(ind.n_u):
            _, v = inducing_predict_diag(remove_inducing_point(ind, i), GRID)
            assert np.all(v <= H.alpha_sq + 1e-8) and np.all(v >= -1e-8)

    def test_remove_errors(self):
        with pytest.raises(InputError):
            remove_inducing_point(InducingSet([[0.0]], H), 0)
        with pytest.raises(InputError):
            remove_inducing_point(InducingSet(XU, H), 7)
