import numpy as np
import pytest

from causal_trees import (
    BartHyperparams,
    FitError,
    UsageError,
    fast_profile,
    fit_bart_continuous,
    fit_bart_probit,
    predict_posterior,
)

DESK = dict(n_trees=30, n_chains=2, n_draws=150, burn_in=200)


def _hp(seed=0, **kw):
    merged = {**DESK, **kw}
    return BartHyperparams(rng_seed=seed, **merged)


def _friedman(rng, n):
    X = rng.uniform(0, 1, (n, 5))
    f = (
        10 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20 * (X[:, 2] - 0.5) ** 2
        + 10 * X[:, 3]
        + 5 * X[:, 4]
    )
    return X, f + rng.normal(0, 1, n)


class TestContinuous:
    def test_constant_response(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(0, 1, (80, 3))
        y = np.full(80, 7.0)
        post = fit_bart_continuous(X, y, None, _hp(), predict_on=[X])
        mean = predict_posterior(post, 0).mean(axis=0)
        assert np.all(np.abs(mean - 7.0) < 0.05)
        assert np.median(post.sigma) < 0.05

    def test_step_function_recovery(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(0, 1, (200, 1))
        y = 3.0 * (X[:, 0] > 0.5) + rng.normal(0, 0.1, 200)
        probes = np.array([[0.25], [0.75]])
        post = fit_bart_continuous(X, y, None, _hp(seed=1), predict_on=[probes])
        mean = predict_posterior(post, 0).mean(axis=0)
        assert abs(mean[0] - 0.0) < 0.2
        assert abs(mean[1] - 3.0) < 0.2

    def test_beats_least_squares_on_friedman(self):
        rng = np.random.default_rng(2)
        X, y = _friedman(rng, 500)
        X_new, y_new = _friedman(rng, 500)
        post = fit_bart_continuous(
            X, y, None, fast_profile(rng_seed=2), predict_on=[X_new]
        )
        bart_rmse = float(
            np.sqrt(np.mean((predict_posterior(post, 0).mean(axis=0) - y_new) ** 2))
        )
        A = np.column_stack([np.ones(len(y)), X])
        coef = np.linalg.lstsq(A, y, rcond=None)[0]
        ols_pred = np.column_stack([np.ones(len(y_new)), X_new]) @ coef
        ols_rmse = float(np.sqrt(np.mean((ols_pred - y_new) ** 2)))
        assert bart_rmse < ols_rmse

    def test_sigma_draws_positive(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(0, 1, (60, 2))
        y = X[:, 0] + rng.normal(0, 0.3, 60)
        post = fit_bart_continuous(X, y, None, _hp(seed=3))
        assert np.all(post.sigma > 0)

    def test_dimension_mismatch(self):
        X = np.zeros((5, 2))
        with pytest.raises(FitError):
            fit_bart_continuous(X, np.zeros(4), None, _hp())
        with pytest.raises(FitError):
            fit_bart_continuous(X, np.zeros(5), np.ones(3), _hp())

    def test_constant_column_permitted(self):
        rng = np.random.default_rng(4)
        X = np.column_stack([rng.uniform(0, 1, 50), np.full(50, 2.0)])
        y = X[:, 0] + rng.normal(0, 0.2, 50)
        post = fit_bart_continuous(X, y, None, _hp(seed=4), predict_on=[X])
        assert np.all(np.isfinite(predict_posterior(post, 0)))


class TestProbit:
    def test_marginal_rate_recovered(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(0, 1, (1000, 3))
        z = (rng.uniform(0, 1, 1000) < 0.3).astype(float)
        post = fit_bart_probit(X, z, None, _hp(seed=5), predict_on=[X])
        p = predict_posterior(post, 0).mean(axis=0)
        assert p.mean() == pytest.approx(0.30, abs=0.03)
        assert p.std() < 0.1

    def test_separated_classes(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(-1, 1, (200, 1))
        z = (X[:, 0] > 0).astype(float)
        probes = np.array([[-1.0], [1.0]])
        post = fit_bart_probit(X, z, None, _hp(seed=6), predict_on=[probes])
        p = predict_posterior(post, 0).mean(axis=0)
        assert p[0] < 0.1
        assert p[1] > 0.9

    def test_probabilities_in_open_interval(self):
        rng = np.random.default_rng(7)
        X = rng.uniform(0, 1, (100, 2))
        z = (rng.uniform(0, 1, 100) < 0.5).astype(float)
        post = fit_bart_probit(X, z, None, _hp(seed=7), predict_on=[X])
        p = predict_posterior(post, 0)
        assert np.all(p > 0.0) and np.all(p < 1.0)
        assert np.all(post.sigma == 1.0)

    def test_single_class_rejected(self):
        X = np.random.default_rng(8).uniform(0, 1, (20, 2))
        with pytest.raises(FitError):
            fit_bart_probit(X, np.ones(20), None, _hp())

    def test_non_binary_rejected(self):
        X = np.random.default_rng(9).uniform(0, 1, (20, 2))
        z = np.linspace(0, 1, 20)
        with pytest.raises(UsageError):
            fit_bart_probit(X, z, None, _hp())


class TestPosteriorShape:
    def test_draw_layout(self):
        rng = np.random.default_rng(10)
        X = rng.uniform(0, 1, (40, 2))
        y = X[:, 0] + rng.normal(0, 0.2, 40)
        hp = _hp(seed=10, n_chains=3, n_draws=50)
        post = fit_bart_continuous(X, y, None, hp, predict_on=[X])
        assert post.total_draws == 3 * 50
        assert predict_posterior(post, 0).shape == (150, 40)
        assert np.array_equal(post.chain_index, np.repeat([0, 1, 2], 50))

    def test_unknown_matrix_index(self):
        rng = np.random.default_rng(11)
        X = rng.uniform(0, 1, (30, 2))
        y = X[:, 0]
        post = fit_bart_continuous(X, y, None, _hp(seed=11), predict_on=[X])
        with pytest.raises(UsageError):
            predict_posterior(post, 1)
        with pytest.raises(UsageError):
            predict_posterior(post, -1)

    def test_duplicate_rows_predict_identically(self):
        rng = np.random.default_rng(12)
        X = rng.uniform(0, 1, (50, 2))
        y = X[:, 0] + rng.normal(0, 0.2, 50)
        probe = np.array([[0.3, 0.6], [0.3, 0.6]])
        post = fit_bart_continuous(X, y, None, _hp(seed=12), predict_on=[probe])
        draws = predict_posterior(post, 0)
        assert np.array_equal(draws[:, 0], draws[:, 1])

    def test_counterfactual_pair_plumbing(self):
        rng = np.random.default_rng(13)
        t = (rng.uniform(0, 1, 120) < 0.5).astype(float)
        x = rng.uniform(0, 1, 120)
        X = np.column_stack([t, x])
        y = 2.0 * t + x + rng.normal(0, 0.2, 120)
        X1 = X.copy()
        X1[:, 0] = 1.0
        X0 = X.copy()
        X0[:, 0] = 0.0
        post = fit_bart_continuous(X, y, None, _hp(seed=13), predict_on=[X1, X0])
        diff = predict_posterior(post, 0) - predict_posterior(post, 1)
        assert diff.shape == (post.total_draws, 120)
        assert diff.mean() == pytest.approx(2.0, abs=0.3)


class TestReproducibility:
    def test_bit_identical_reruns(self):
        rng = np.random.default_rng(14)
        X = rng.uniform(0, 1, (60, 2))
        y = np.sin(3 * X[:, 0]) + rng.normal(0, 0.2, 60)
        a = fit_bart_continuous(X, y, None, _hp(seed=14), predict_on=[X])
        b = fit_bart_continuous(X, y, None, _hp(seed=14), predict_on=[X])
        assert predict_posterior(a, 0).tobytes() == predict_posterior(b, 0).tobytes()
        assert a.sigma.tobytes() == b.sigma.tobytes()

    def test_seed_changes_draws(self):
        rng = np.random.default_rng(15)
        X = rng.uniform(0, 1, (60, 2))
        y = np.sin(3 * X[:, 0]) + rng.normal(0, 0.2, 60)
        a = fit_bart_continuous(X, y, None, _hp(seed=15), predict_on=[X])
        b = fit_bart_continuous(X, y, None, _hp(seed=16), predict_on=[X])
        assert predict_posterior(a, 0).tobytes() != predict_posterior(b, 0).tobytes()

    def test_worker_cap_does_not_change_results(self, monkeypatch):
        rng = np.random.default_rng(17)
        X = rng.uniform(0, 1, (50, 2))
        y = X[:, 1] + rng.normal(0, 0.2, 50)
        monkeypatch.setenv("CAUSAL_TREES_THREADS", "1")
        a = fit_bart_continuous(X, y, None, _hp(seed=17), predict_on=[X])
        monkeypatch.setenv("CAUSAL_TREES_THREADS", "2")
        b = fit_bart_continuous(X, y, None, _hp(seed=17), predict_on=[X])
        assert predict_posterior(a, 0).tobytes() == predict_posterior(b, 0).tobytes()

    def test_bad_worker_cap(self, monkeypatch):
        monkeypatch.setenv("CAUSAL_TREES_THREADS", "zero")
        X = np.random.default_rng(18).uniform(0, 1, (20, 2))
        with pytest.raises(UsageError):
            fit_bart_continuous(X, X[:, 0], None, _hp(seed=18))


class TestConservation:
    def test_stored_fit_matches_rerouted_predictions(self):
        rng = np.random.default_rng(19)
        X = rng.uniform(0, 1, (80, 3))
        y = X[:, 0] - 2 * X[:, 1] + rng.normal(0, 0.3, 80)
        post = fit_bart_continuous(X, y, None, _hp(seed=19))
        for state in post.states:
            rerouted = state.predict(X)
            assert np.allclose(rerouted, state.ensemble_fit, rtol=0, atol=1e-10)


class TestHyperparams:
    def test_defaults_match_paper_scale(self):
        hp = BartHyperparams()
        assert hp.n_chains == 4
        assert hp.n_draws == 1000
        assert hp.burn_in == 1500
        assert hp.n_trees == 200

    def test_fast_profile_values(self):
        hp = fast_profile(rng_seed=9)
        assert (hp.n_chains, hp.n_draws, hp.burn_in, hp.n_trees) == (2, 250, 500, 50)
        assert hp.rng_seed == 9

    @pytest.mark.parametrize(
        "bad",
        [
            dict(n_trees=0),
            dict(alpha=1.0),
            dict(beta=-0.1),
            dict(k=0.0),
            dict(q=1.0),
            dict(burn_in=-1),
            dict(max_depth=0),
        ],
    )
    def test_validation(self, bad):
        with pytest.raises(UsageError):
            BartHyperparams(**bad)
