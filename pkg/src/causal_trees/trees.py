"""Single-tree building blocks of the sum-of-trees sampler.

A regression tree is a binary tree of :class:`TreeNode`; internal nodes
carry an axis-aligned split ``x[col] <= value`` and leaves carry a scalar
``mu``.  The functions here implement the pieces a backfitting sampler
composes: structural proposals (GROW / PRUNE / CHANGE), the collapsed leaf
marginal likelihood, conjugate leaf-value draws, and the residual-variance
draw.  The production sampler runs a compiled mirror of these formulas
(:mod:`causal_trees._kernel`); agreement between the two is pinned by the
enumeration tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .errors import FitError, SupportError, UsageError

GROW, PRUNE, CHANGE = "grow", "prune", "change"

# Move selection for trees with at least one internal node; a stump admits
# neither PRUNE nor CHANGE, so its whole proposal mass collapses onto GROW.
P_GROW, P_PRUNE, P_CHANGE = 0.25, 0.25, 0.50

__all__ = [
    "TreeNode",
    "GROW",
    "PRUNE",
    "CHANGE",
    "standardize_response",
    "make_cutpoints",
    "propose_tree_move",
    "leaf_log_marginal",
    "draw_leaf_values",
    "draw_sigma",
    "calibrate_lambda",
]


@dataclass
class TreeNode:
    """Internal split (``split_column`` set) or leaf (``split_column`` None)."""

    split_column: int | None = None
    split_value: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    mu: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.split_column is None

    def clone(self) -> "TreeNode":
        if self.is_leaf:
            return TreeNode(mu=self.mu)
        assert self.left is not None and self.right is not None
        return TreeNode(
            split_column=self.split_column,
            split_value=self.split_value,
            left=self.left.clone(),
            right=self.right.clone(),
            mu=self.mu,
        )

    def leaves(self, depth: int = 0) -> list[tuple["TreeNode", int]]:
        if self.is_leaf:
            return [(self, depth)]
        assert self.left is not None and self.right is not None
        return self.left.leaves(depth + 1) + self.right.leaves(depth + 1)

    def internal_nodes(self, depth: int = 0) -> list[tuple["TreeNode", int]]:
        if self.is_leaf:
            return []
        assert self.left is not None and self.right is not None
        out = [(self, depth)]
        out += self.left.internal_nodes(depth + 1)
        out += self.right.internal_nodes(depth + 1)
        return out

    def prunable_nodes(self) -> list["TreeNode"]:
        """Internal nodes whose children are both leaves."""
        out = []
        for node, _ in self.internal_nodes():
            assert node.left is not None and node.right is not None
            if node.left.is_leaf and node.right.is_leaf:
                out.append(node)
        return out

    def route(self, x: np.ndarray) -> "TreeNode":
        node = self
        while not node.is_leaf:
            assert node.left is not None and node.right is not None
            node = node.left if x[node.split_column] <= node.split_value else node.right
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.route(row).mu for row in np.atleast_2d(X)])

    def leaf_assignment(self, X: np.ndarray) -> list[list[int]]:
        """Row indices of X per leaf, ordered as :meth:`leaves`."""
        leaves = [leaf for leaf, _ in self.leaves()]
        index = {id(leaf): k for k, leaf in enumerate(leaves)}
        cells: list[list[int]] = [[] for _ in leaves]
        for i, row in enumerate(np.atleast_2d(X)):
            cells[index[id(self.route(row))]].append(i)
        return cells


def standardize_response(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Affinely map the response onto [-0.5, 0.5].

    Returns ``(y_std, shift, scale)`` with ``shift = (max + min) / 2`` and
    ``scale = max - min`` so that ``y == y_std * scale + shift``; a
    constant response gets scale 1 to keep the map invertible.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise FitError("cannot standardize an empty response")
    if not np.all(np.isfinite(y)):
        raise UsageError("response must be finite")
    lo, hi = float(np.min(y)), float(np.max(y))
    shift = (hi + lo) / 2.0
    scale = hi - lo
    if scale == 0.0:
        scale = 1.0
    return (y - shift) / scale, shift, scale


def make_cutpoints(X: np.ndarray, n_cutpoints: int = 100) -> np.ndarray:
    """Equally spaced interior cutpoints per column of X.

    For column range [lo, hi] the grid is ``lo + j*(hi-lo)/(n+1)`` for
    ``j = 1..n``; a constant column yields a degenerate grid whose splits
    always produce an empty cell and therefore never get accepted.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    j = np.arange(1, n_cutpoints + 1, dtype=float) / (n_cutpoints + 1)
    return lo[:, None] + (hi - lo)[:, None] * j[None, :]


def propose_tree_move(
    tree: TreeNode,
    cutpoints: np.ndarray,
    rng: np.random.Generator,
) -> tuple[TreeNode, str]:
    """Draw a structural candidate from the current tree.

    Move probabilities are GROW 0.25 / PRUNE 0.25 / CHANGE 0.50; a stump
    supports only GROW.  GROW splits a uniformly chosen leaf on a
    uniformly chosen (column, cutpoint); PRUNE collapses a uniformly
    chosen internal node with two leaf children; CHANGE redraws the rule
    of a uniformly chosen internal node.  The candidate is a new tree; the
    input is never mutated.  Cell emptiness is not checked here — the
    accept step owns that rejection.
    """
    cutpoints = np.atleast_2d(cutpoints)
    n_cols, n_cuts = cutpoints.shape
    candidate = tree.clone()
    if candidate.is_leaf:
        move = GROW
    else:
        u = rng.random()
        move = GROW if u < P_GROW else (PRUNE if u < P_GROW + P_PRUNE else CHANGE)

    if move == GROW:
        leaves = [leaf for leaf, _ in candidate.leaves()]
        leaf = leaves[int(rng.integers(len(leaves)))]
        col = int(rng.integers(n_cols))
        cut = int(rng.integers(n_cuts))
        leaf.split_column = col
        leaf.split_value = float(cutpoints[col, cut])
        leaf.left = TreeNode()
        leaf.right = TreeNode()
        leaf.mu = 0.0
    elif move == PRUNE:
        nodes = candidate.prunable_nodes()
        node = nodes[int(rng.integers(len(nodes)))]
        node.split_column = None
        node.split_value = 0.0
        node.left = None
        node.right = None
        node.mu = 0.0
    else:
        nodes = [node for node, _ in candidate.internal_nodes()]
        node = nodes[int(rng.integers(len(nodes)))]
        col = int(rng.integers(n_cols))
        cut = int(rng.integers(n_cuts))
        node.split_column = col
        node.split_value = float(cutpoints[col, cut])
    return candidate, move


def leaf_log_marginal(
    residuals: np.ndarray,
    weights: np.ndarray,
    sigma: float,
    sigma_mu: float,
) -> float:
    """Log marginal likelihood of one leaf cell with its mean integrated out.

    Model: ``r_i ~ Normal(mu, sigma^2 / w_i)`` with ``mu ~ Normal(0,
    sigma_mu^2)``.  Closed form with precisions ``tau_i = w_i / sigma^2``:

        -n/2 log(2 pi) + 1/2 sum log tau_i - 1/2 log(sigma_mu^2 P)
        - 1/2 (sum tau_i r_i^2 - (sum tau_i r_i)^2 / P),
        P = sum tau_i + 1 / sigma_mu^2
    """
    r = np.asarray(residuals, dtype=float).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if r.size == 0:
        raise SupportError("leaf cell is empty")
    if r.shape != w.shape:
        raise UsageError("residuals and weights must have equal length")
    if sigma <= 0 or sigma_mu <= 0:
        raise UsageError("sigma and sigma_mu must be positive")
    tau = w / (sigma * sigma)
    s_tau = float(np.sum(tau))
    s_tr = float(np.sum(tau * r))
    s_tr2 = float(np.sum(tau * r * r))
    precision = s_tau + 1.0 / (sigma_mu * sigma_mu)
    return (
        -0.5 * r.size * np.log(2.0 * np.pi)
        + 0.5 * float(np.sum(np.log(tau)))
        - 0.5 * np.log(sigma_mu * sigma_mu * precision)
        - 0.5 * (s_tr2 - s_tr * s_tr / precision)
    )


def draw_leaf_values(
    tree: TreeNode,
    X: np.ndarray,
    residuals: np.ndarray,
    weights: np.ndarray,
    sigma: float,
    sigma_mu: float,
    rng: np.random.Generator,
) -> TreeNode:
    """Redraw every leaf mean from its conjugate normal posterior.

    Posterior for a leaf with rows C: precision ``P = sum_C w_i/sigma^2 +
    1/sigma_mu^2`` and mean ``(sum_C w_i r_i / sigma^2) / P``.  Leaves are
    drawn in depth-first (left before right) order.  Every leaf cell must
    be non-empty.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    r = np.asarray(residuals, dtype=float).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    out = tree.clone()
    cells = out.leaf_assignment(X)
    for (leaf, _), rows in zip(out.leaves(), cells):
        if not rows:
            raise SupportError("cannot draw a leaf value for an empty cell")
        idx = np.asarray(rows)
        tau = w[idx] / (sigma * sigma)
        precision = float(np.sum(tau)) + 1.0 / (sigma_mu * sigma_mu)
        mean = float(np.sum(tau * r[idx])) / precision
        leaf.mu = mean + float(rng.standard_normal()) / np.sqrt(precision)
    return out


def draw_sigma(
    residuals: np.ndarray,
    weights: np.ndarray,
    nu: float,
    lam: float,
    rng: np.random.Generator,
) -> float:
    """Draw sigma^2 from its scaled-inverse-chi-square full conditional.

    With n residuals the draw is ``(nu*lam + sum w_i r_i^2) / X`` where
    ``X ~ chi2(nu + n)``.
    """
    r = np.asarray(residuals, dtype=float).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if r.size == 0:
        raise UsageError("need at least one residual")
    return float((nu * lam + np.sum(w * r * r)) / rng.chisquare(nu + r.size))


def calibrate_lambda(sigma_hat: float, nu: float, q: float) -> float:
    """Scale lambda placing prior mass q below sigma_hat.

    Under sigma^2 ~ nu*lam / chi2(nu), ``P(sigma < sigma_hat) = q`` holds
    at ``lam = sigma_hat^2 * chi2.ppf(1 - q, nu) / nu``.
    """
    if sigma_hat < 0 or not 0 < q < 1 or nu <= 0:
        raise UsageError("need sigma_hat >= 0, nu > 0, 0 < q < 1")
    return float(sigma_hat * sigma_hat * chi2.ppf(1.0 - q, nu) / nu)
