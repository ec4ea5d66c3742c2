"""Exhaustively enumerable one-tree toy problem shared by sampler tests.

With one covariate and two interior cutpoints, at most five tree
structures can carry data (deeper splits always produce an empty cell):
the stump, two depth-1 trees, and two depth-2 trees that induce the same
three-cell partition.  Their posterior follows from the depth prior times
the product of per-leaf marginal likelihoods, each computed here by
numerical quadrature rather than the closed form under test.  Structures
are lumped into partition classes, which is exactly what prediction
behaviour can distinguish.
"""

import numpy as np
from scipy.integrate import quad

from causal_trees.trees import make_cutpoints

X_TOY = np.array([[0.1], [0.2], [0.4], [0.5], [0.7], [0.9]])
Y_TOY = np.array([-0.6, -0.5, 0.0, 0.1, 0.5, 0.6])
W_TOY = np.ones(6)
CUTS_TOY = make_cutpoints(X_TOY, 2)
SIGMA_TOY = 0.5
SIGMA_MU_TOY = 1.0
ALPHA_TOY = 0.5
BETA_TOY = 1.0
# probe rows landing in the three cutpoint cells
PROBES_TOY = np.array([[0.2], [0.45], [0.8]])

CLASSES = ("S", "A|BC", "AB|C", "A|B|C")


def _leaf_marginal_quad(resid: np.ndarray) -> float:
    def integrand(mu: float) -> float:
        dens = np.exp(-0.5 * ((resid - mu) / SIGMA_TOY) ** 2).prod() / (
            (SIGMA_TOY * np.sqrt(2 * np.pi)) ** len(resid)
        )
        prior = np.exp(-0.5 * (mu / SIGMA_MU_TOY) ** 2) / (
            SIGMA_MU_TOY * np.sqrt(2 * np.pi)
        )
        return dens * prior

    val, _ = quad(integrand, -30, 30, limit=200)
    return val


def oracle_class_distribution() -> dict[str, float]:
    """Posterior mass of each partition class by quadrature enumeration."""

    def p_split(d: int) -> float:
        return ALPHA_TOY * (1.0 + d) ** (-BETA_TOY)

    x = X_TOY[:, 0]
    c1, c2 = CUTS_TOY[0]
    cell_a = x <= c1
    cell_b = (x > c1) & (x <= c2)
    cell_c = x > c2

    deep_prior = (
        p_split(0) * 0.5 * (1 - p_split(1)) * p_split(1) * 0.5
        * (1 - p_split(2)) ** 2
    )
    trees = {
        "stump": (1 - p_split(0), "S", [cell_a | cell_b | cell_c]),
        "root_c1": (
            p_split(0) * 0.5 * (1 - p_split(1)) ** 2, "A|BC",
            [cell_a, cell_b | cell_c],
        ),
        "root_c2": (
            p_split(0) * 0.5 * (1 - p_split(1)) ** 2, "AB|C",
            [cell_a | cell_b, cell_c],
        ),
        "c1_then_c2": (deep_prior, "A|B|C", [cell_a, cell_b, cell_c]),
        "c2_then_c1": (deep_prior, "A|B|C", [cell_a, cell_b, cell_c]),
    }
    mass = dict.fromkeys(CLASSES, 0.0)
    for prior, klass, cells in trees.values():
        lik = 1.0
        for cell in cells:
            lik *= _leaf_marginal_quad(Y_TOY[cell])
        mass[klass] += prior * lik
    total = sum(mass.values())
    return {k: v / total for k, v in mass.items()}


def classify_probe_predictions(preds: np.ndarray) -> dict[str, float]:
    """Empirical class frequencies from per-draw predictions at PROBES_TOY.

    Probes in the same leaf share a drawn value bit-for-bit; probes in
    different leaves collide with probability zero.
    """
    a, b, c = preds[:, 0], preds[:, 1], preds[:, 2]
    eq_ab = a == b
    eq_bc = b == c
    n = preds.shape[0]
    return {
        "S": float(np.sum(eq_ab & eq_bc)) / n,
        "A|BC": float(np.sum(~eq_ab & eq_bc)) / n,
        "AB|C": float(np.sum(eq_ab & ~eq_bc)) / n,
        "A|B|C": float(np.sum(~eq_ab & ~eq_bc)) / n,
    }


def total_variation(p: dict[str, float], q: dict[str, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
