import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import gammaincinv
from scipy.stats import chi2, norm

from causal_trees.errors import FitError, SupportError, UsageError
from causal_trees.trees import (
    CHANGE,
    GROW,
    PRUNE,
    TreeNode,
    calibrate_lambda,
    draw_leaf_values,
    draw_sigma,
    leaf_log_marginal,
    make_cutpoints,
    propose_tree_move,
    standardize_response,
)
from enumeration import (
    ALPHA_TOY,
    BETA_TOY,
    CUTS_TOY,
    SIGMA_MU_TOY,
    SIGMA_TOY,
    W_TOY,
    X_TOY,
    Y_TOY,
    oracle_class_distribution,
    total_variation,
)


class TestStandardizeResponse:
    def test_delta_days_range(self):
        y = np.arange(-30.0, 31.0)
        y_std, shift, scale = standardize_response(y)
        assert shift == 0.0
        assert scale == 60.0
        assert y_std.min() == -0.5 and y_std.max() == 0.5

    def test_constant_response(self):
        y_std, shift, scale = standardize_response(np.array([5.0, 5.0, 5.0]))
        assert y_std.tolist() == [0.0, 0.0, 0.0]
        assert shift == 5.0 and scale == 1.0

    def test_two_point_response(self):
        y_std, _, _ = standardize_response(np.array([0.0, 10.0]))
        assert y_std.tolist() == [-0.5, 0.5]

    def test_empty_response(self):
        with pytest.raises(FitError):
            standardize_response(np.array([]))

    def test_non_finite_response(self):
        with pytest.raises(UsageError):
            standardize_response(np.array([1.0, np.nan]))

    @given(
        st.lists(
            st.floats(-1e6, 1e6),
            min_size=1,
            max_size=30,
        )
    )
    def test_round_trip(self, vals):
        y = np.asarray(vals)
        y_std, shift, scale = standardize_response(y)
        back = y_std * scale + shift
        assert np.allclose(back, y, rtol=0, atol=1e-12 * max(1.0, np.abs(y).max()))
        if y.max() > y.min():
            assert y_std.min() == pytest.approx(-0.5)
            assert y_std.max() == pytest.approx(0.5)


class TestMakeCutpoints:
    def test_unit_interval_grid(self):
        grid = make_cutpoints(np.array([[0.0], [1.0]]), 4)
        assert np.allclose(grid[0], [0.2, 0.4, 0.6, 0.8], rtol=0, atol=1e-15)

    def test_interior_formula(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(40, 3))
        n = 100
        grid = make_cutpoints(X, n)
        assert grid.shape == (3, n)
        lo, hi = X.min(axis=0), X.max(axis=0)
        j = np.arange(1, n + 1) / (n + 1)
        assert np.array_equal(grid, lo[:, None] + (hi - lo)[:, None] * j[None, :])
        assert np.all(grid > lo[:, None]) and np.all(grid < hi[:, None])

    def test_constant_column_degenerates(self):
        grid = make_cutpoints(np.full((5, 1), 3.0), 10)
        assert np.all(grid == 3.0)


def _three_node_tree() -> TreeNode:
    return TreeNode(
        split_column=0,
        split_value=0.5,
        left=TreeNode(mu=-1.0),
        right=TreeNode(mu=1.0),
    )


def _topology(tree: TreeNode):
    if tree.is_leaf:
        return ("leaf",)
    return (
        tree.split_column,
        tree.split_value,
        _topology(tree.left),
        _topology(tree.right),
    )


class TestProposeTreeMove:
    def test_stump_only_grows(self):
        rng = np.random.default_rng(1)
        cuts = make_cutpoints(np.linspace(0, 1, 8)[:, None], 5)
        for _ in range(50):
            cand, move = propose_tree_move(TreeNode(), cuts, rng)
            assert move == GROW
            assert len(cand.leaves()) == 2

    def test_grow_then_prune_restores_topology(self):
        rng = np.random.default_rng(2)
        cuts = make_cutpoints(np.linspace(0, 1, 8)[:, None], 5)
        tree = TreeNode()
        grown, move = propose_tree_move(tree, cuts, rng)
        assert move == GROW
        pruned = grown.clone()
        node = pruned.prunable_nodes()[0]
        node.split_column, node.left, node.right = None, None, None
        assert _topology(pruned) == _topology(tree)

    def test_input_never_mutated(self):
        rng = np.random.default_rng(3)
        cuts = make_cutpoints(np.linspace(0, 1, 8)[:, None], 5)
        tree = _three_node_tree()
        before = _topology(tree)
        for _ in range(100):
            propose_tree_move(tree, cuts, rng)
        assert _topology(tree) == before

    def test_move_frequencies(self):
        rng = np.random.default_rng(4)
        cuts = make_cutpoints(np.linspace(0, 1, 8)[:, None], 5)
        tree = _three_node_tree()
        counts = {GROW: 0, PRUNE: 0, CHANGE: 0}
        n = 10_000
        for _ in range(n):
            _, move = propose_tree_move(tree, cuts, rng)
            counts[move] += 1
        assert counts[GROW] / n == pytest.approx(0.25, abs=0.02)
        assert counts[PRUNE] / n == pytest.approx(0.25, abs=0.02)
        assert counts[CHANGE] / n == pytest.approx(0.50, abs=0.02)

    def test_grow_uses_grid_cutpoints(self):
        rng = np.random.default_rng(5)
        cuts = make_cutpoints(np.linspace(0, 1, 8)[:, None], 5)
        allowed = set(cuts[0].tolist())
        for _ in range(50):
            cand, move = propose_tree_move(TreeNode(), cuts, rng)
            assert cand.split_value in allowed


def _quad_leaf_marginal(r, w, sigma, sigma_mu):
    r = np.asarray(r, float)
    w = np.asarray(w, float)
    sd = sigma / np.sqrt(w)

    def log_integrand(mu):
        return float(
            np.sum(norm.logpdf(r, loc=mu, scale=sd))
            + norm.logpdf(mu, scale=sigma_mu)
        )

    # factor out the peak so the integral is O(1) regardless of how small
    # the marginal itself is
    center = float(np.average(r, weights=w))
    span = 8 * max(sigma_mu, sigma) + abs(center)
    peak = max(log_integrand(m) for m in np.linspace(-span, span, 4001))
    val, _ = quad(
        lambda mu: math.exp(log_integrand(mu) - peak),
        -span,
        span,
        limit=300,
        points=[0.0, center],
    )
    return math.log(val) + peak


class TestLeafLogMarginal:
    def test_single_point_hand_value(self):
        # N(0 | 0, sigma^2 + sigma_mu^2) with both scales 1
        got = leaf_log_marginal(np.array([0.0]), np.array([1.0]), 1.0, 1.0)
        assert got == pytest.approx(-0.5 * math.log(4 * math.pi), abs=1e-12)
        assert got == pytest.approx(-1.2655121234846456, abs=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_quadrature(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 7))
        r = rng.normal(0, 1, n)
        w = rng.uniform(0.3, 3.0, n)
        sigma = float(rng.uniform(0.3, 2.0))
        sigma_mu = float(rng.uniform(0.2, 1.5))
        got = leaf_log_marginal(r, w, sigma, sigma_mu)
        want = _quad_leaf_marginal(r, w, sigma, sigma_mu)
        assert got == pytest.approx(want, abs=1e-6)

    def test_prior_collapse_limit(self):
        r = np.array([0.4, -0.2, 0.1])
        w = np.array([1.0, 2.0, 0.5])
        sigma = 0.8
        got = leaf_log_marginal(r, w, sigma, 1e-9)
        want = float(np.sum(norm.logpdf(r, scale=sigma / np.sqrt(w))))
        assert got == pytest.approx(want, abs=1e-8)

    def test_empty_cell(self):
        with pytest.raises(SupportError):
            leaf_log_marginal(np.array([]), np.array([]), 1.0, 1.0)

    def test_bad_scales(self):
        with pytest.raises(UsageError):
            leaf_log_marginal(np.array([1.0]), np.array([1.0]), 0.0, 1.0)
        with pytest.raises(UsageError):
            leaf_log_marginal(np.array([1.0]), np.array([1.0]), 1.0, -1.0)

    def test_length_mismatch(self):
        with pytest.raises(UsageError):
            leaf_log_marginal(np.array([1.0, 2.0]), np.array([1.0]), 1.0, 1.0)


class _ZeroNormal:
    """Stand-in rng whose standard_normal is identically zero."""

    @staticmethod
    def standard_normal() -> float:
        return 0.0


class TestDrawLeafValues:
    def test_posterior_mean_matches_grid_argmax(self):
        rng = np.random.default_rng(11)
        X = rng.uniform(0, 1, (12, 1))
        r = rng.normal(0.3, 0.5, 12)
        w = rng.uniform(0.5, 2.0, 12)
        sigma, sigma_mu = 0.7, 0.4
        out = draw_leaf_values(TreeNode(), X, r, w, sigma, sigma_mu, _ZeroNormal())
        got = out.mu

        grid = np.linspace(got - 0.1, got + 0.1, 20_001)
        logpost = norm.logpdf(grid, scale=sigma_mu)
        for ri, wi in zip(r, w):
            logpost += norm.logpdf(ri, loc=grid, scale=sigma / np.sqrt(wi))
        want = grid[int(np.argmax(logpost))]
        assert got == pytest.approx(want, abs=1e-4)

    def test_weight_sigma_scale_cancellation(self):
        rng_a = np.random.default_rng(7)
        rng_b = np.random.default_rng(7)
        X = np.linspace(0, 1, 10)[:, None]
        r = np.sin(np.arange(10.0))
        w = np.full(10, 1.3)
        tree = TreeNode(
            split_column=0, split_value=0.45, left=TreeNode(), right=TreeNode()
        )
        a = draw_leaf_values(tree, X, r, w, 0.6, 0.5, rng_a)
        b = draw_leaf_values(tree, X, r, 2 * w, 0.6 * np.sqrt(2), 0.5, rng_b)
        assert [leaf.mu for leaf, _ in a.leaves()] == [
            leaf.mu for leaf, _ in b.leaves()
        ]

    def test_zero_residuals_tight_prior(self):
        X = np.linspace(0, 1, 20)[:, None]
        out = draw_leaf_values(
            TreeNode(), X, np.zeros(20), np.ones(20), 1.0, 1e-6,
            np.random.default_rng(0),
        )
        assert abs(out.mu) < 1e-5

    def test_empty_cell(self):
        tree = TreeNode(
            split_column=0, split_value=0.5, left=TreeNode(), right=TreeNode()
        )
        X = np.full((4, 1), 0.8)
        with pytest.raises(SupportError):
            draw_leaf_values(
                tree, X, np.zeros(4), np.ones(4), 1.0, 1.0,
                np.random.default_rng(0),
            )


class TestDrawSigma:
    def test_mean_matches_analytic(self):
        rng = np.random.default_rng(42)
        r = rng.normal(0, 0.8, 50)
        w = rng.uniform(0.5, 2.0, 50)
        nu, lam = 3.0, 0.4
        draws = np.array(
            [draw_sigma(r, w, nu, lam, rng) for _ in range(10_000)]
        )
        # scaled-inverse-chi-square mean: (nu*lam + sum w r^2) / (nu + n - 2)
        want = (nu * lam + float(np.sum(w * r * r))) / (nu + r.size - 2)
        assert draws.mean() == pytest.approx(want, rel=0.02)

    def test_concentration_for_constant_residuals(self):
        rng = np.random.default_rng(43)
        n, c = 4000, 0.7
        w = rng.uniform(0.5, 1.5, n)
        r = np.full(n, c)
        draws = np.sqrt(
            [draw_sigma(r, w, 3.0, 0.01, rng) for _ in range(200)]
        )
        want = abs(c) * math.sqrt(float(w.mean()))
        assert np.mean(draws) == pytest.approx(want, rel=0.03)

    def test_small_df_edge_still_samples(self):
        rng = np.random.default_rng(44)
        draws = [
            draw_sigma(np.array([0.5]), np.array([1.0]), 0.5, 0.2, rng)
            for _ in range(100)
        ]
        assert all(np.isfinite(d) and d > 0 for d in draws)

    def test_empty_residuals(self):
        with pytest.raises(UsageError):
            draw_sigma(np.array([]), np.array([]), 3.0, 0.1, np.random.default_rng(0))


class TestCalibrateLambda:
    def test_cross_check_incomplete_gamma(self):
        sigma_hat, nu, q = 1.7, 3.0, 0.9
        lam = calibrate_lambda(sigma_hat, nu, q)
        want = sigma_hat**2 * 2.0 * gammaincinv(nu / 2.0, 1.0 - q) / nu
        assert lam == pytest.approx(want, rel=1e-12)

    @pytest.mark.parametrize("q", [0.5, 0.75, 0.9, 0.99])
    def test_prior_mass_identity(self, q):
        sigma_hat, nu = 0.9, 3.0
        lam = calibrate_lambda(sigma_hat, nu, q)
        # P(sigma < sigma_hat) under sigma^2 ~ nu*lam/chi2(nu)
        assert chi2.sf(nu * lam / sigma_hat**2, nu) == pytest.approx(q, abs=1e-12)

    def test_invalid_inputs(self):
        with pytest.raises(UsageError):
            calibrate_lambda(-1.0, 3.0, 0.9)
        with pytest.raises(UsageError):
            calibrate_lambda(1.0, 3.0, 1.0)
        with pytest.raises(UsageError):
            calibrate_lambda(1.0, 0.0, 0.9)


def _log_prior_topology(
    tree: TreeNode, alpha: float, beta: float, menu: int
) -> float:
    """Depth prior times the uniform split-rule mass (1/menu per internal
    node); the rule mass must stay in the prior so it cancels the menu
    factor of the GROW proposal in the acceptance ratio."""
    total = 0.0
    for _, depth in tree.internal_nodes():
        total += math.log(alpha) - beta * math.log(1.0 + depth) - math.log(menu)
    for _, depth in tree.leaves():
        total += math.log1p(-alpha * (1.0 + depth) ** (-beta))
    return total


def _log_marginal_tree(tree, X, y, w, sigma, sigma_mu):
    total = 0.0
    for (_, _), rows in zip(tree.leaves(), tree.leaf_assignment(X)):
        if not rows:
            return -np.inf
        idx = np.asarray(rows)
        total += leaf_log_marginal(y[idx], w[idx], sigma, sigma_mu)
    return total


def _grow_prob(tree: TreeNode) -> float:
    return 1.0 if tree.is_leaf else 0.25


def _log_proposal_ratio(current, candidate, move, n_cols, n_cuts):
    """log q(candidate -> current) - log q(current -> candidate)."""
    menu = n_cols * n_cuts
    if move == GROW:
        fwd = math.log(_grow_prob(current)) - math.log(len(current.leaves())) - math.log(menu)
        rev = math.log(0.25) - math.log(len(candidate.prunable_nodes()))
        return rev - fwd
    if move == PRUNE:
        fwd = math.log(0.25) - math.log(len(current.prunable_nodes()))
        rev = (
            math.log(_grow_prob(candidate))
            - math.log(len(candidate.leaves()))
            - math.log(menu)
        )
        return rev - fwd
    return 0.0


def test_collapsed_sampler_matches_enumeration():
    """Metropolis chain assembled from the tree primitives hits the
    quadrature-enumerated posterior on the toy problem (leaf values are
    integrated out, so the topology chain alone is checked)."""
    rng = np.random.default_rng(20240815)
    X, y, w = X_TOY, Y_TOY, W_TOY
    cuts = CUTS_TOY
    n_cols, n_cuts = cuts.shape
    sigma, sigma_mu = SIGMA_TOY, SIGMA_MU_TOY

    tree = TreeNode()
    menu = n_cols * n_cuts
    log_post = (
        _log_prior_topology(tree, ALPHA_TOY, BETA_TOY, menu)
        + _log_marginal_tree(tree, X, y, w, sigma, sigma_mu)
    )
    counts = dict.fromkeys(("S", "A|BC", "AB|C", "A|B|C"), 0)
    n_sweeps = 20_000
    for _ in range(n_sweeps):
        candidate, move = propose_tree_move(tree, cuts, rng)
        cand_marg = _log_marginal_tree(candidate, X, y, w, sigma, sigma_mu)
        if np.isfinite(cand_marg):
            cand_post = (
                _log_prior_topology(candidate, ALPHA_TOY, BETA_TOY, menu)
                + cand_marg
            )
            log_accept = (
                cand_post
                - log_post
                + _log_proposal_ratio(tree, candidate, move, n_cols, n_cuts)
            )
            if math.log(rng.random()) < log_accept:
                tree, log_post = candidate, cand_post
        a, b, c = (
            id(tree.route(np.array([0.2]))),
            id(tree.route(np.array([0.45]))),
            id(tree.route(np.array([0.8]))),
        )
        if a == b and b == c:
            counts["S"] += 1
        elif a != b and b == c:
            counts["A|BC"] += 1
        elif a == b:
            counts["AB|C"] += 1
        else:
            counts["A|B|C"] += 1

    empirical = {k: v / n_sweeps for k, v in counts.items()}
    oracle = oracle_class_distribution()
    assert total_variation(empirical, oracle) <= 0.08
