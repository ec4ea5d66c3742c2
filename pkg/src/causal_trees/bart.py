"""Sum-of-trees regression with conservative regularization priors.

Two response families share one sampler: a continuous response is mapped
affinely onto [-0.5, 0.5] and carries a scaled-inverse-chi-square residual
variance, while a binary response runs in a probit formulation with
truncated-normal latents and the variance pinned at one.  Survey weights
act as per-row precision multipliers in both.

Chains are independent given sub-seeds spawned from ``rng_seed``; their
draws are concatenated chain-contiguously.  The ``CAUSAL_TREES_THREADS``
environment variable caps how many chains may run as parallel worker
processes (default: sequential in-process execution, which yields the
same result bit for bit).
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernel
from .dataset import DesignMatrix
from .errors import FitError, UsageError
from .trees import calibrate_lambda, make_cutpoints, standardize_response

__all__ = [
    "BartHyperparams",
    "BartState",
    "BartPosterior",
    "fast_profile",
    "fit_bart_continuous",
    "fit_bart_probit",
    "predict_posterior",
]


@dataclass(frozen=True)
class BartHyperparams:
    """Sampler and prior settings.

    ``k`` controls the leaf-value prior spread (sd ``0.5/(k*sqrt(m))`` on
    the standardized scale, ``3/(k*sqrt(m))`` on the probit latent scale);
    ``nu``/``q`` calibrate the variance prior so the prior puts mass ``q``
    below a rough residual-sd estimate.
    """

    n_trees: int = 200
    alpha: float = 0.95
    beta: float = 2.0
    k: float = 2.0
    nu: float = 3.0
    q: float = 0.90
    n_chains: int = 4
    n_draws: int = 1000
    burn_in: int = 1500
    n_cutpoints: int = 100
    rng_seed: int = 0
    max_depth: int = 11

    def __post_init__(self) -> None:
        if min(self.n_trees, self.n_chains, self.n_draws, self.n_cutpoints) < 1:
            raise UsageError("tree, chain, draw, and cutpoint counts must be >= 1")
        if self.burn_in < 0 or not 1 <= self.max_depth <= 16:
            raise UsageError("burn_in must be >= 0 and max_depth in [1, 16]")
        if not (0.0 < self.alpha < 1.0) or self.beta < 0.0:
            raise UsageError("need 0 < alpha < 1 and beta >= 0")
        if self.k <= 0.0 or self.nu <= 0.0 or not (0.0 < self.q < 1.0):
            raise UsageError("need k > 0, nu > 0, 0 < q < 1")


def fast_profile(rng_seed: int = 0, **overrides) -> BartHyperparams:
    """Reduced desk-scale profile: 2 chains x 250 draws, 500 burn-in, 50 trees."""
    base = dict(n_trees=50, n_chains=2, n_draws=250, burn_in=500, rng_seed=rng_seed)
    base.update(overrides)
    return BartHyperparams(**base)


@dataclass(frozen=True)
class BartState:
    """Final sampler state of one chain (heap-array tree encoding).

    ``feature[j, v] >= 0`` is node v of tree j splitting on that column;
    -1 marks a leaf, -2 an absent slot.  ``sigma2`` is on the standardized
    scale and identically 1 for probit fits.
    """

    feature: np.ndarray
    threshold: np.ndarray
    leaf_mu: np.ndarray
    leaf_of_row: np.ndarray
    ensemble_fit: np.ndarray
    sigma2: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Route rows through every stored tree; returns latent-scale sums."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0])
        m = self.feature.shape[0]
        for i in range(X.shape[0]):
            s = 0.0
            for j in range(m):
                node = 1
                while self.feature[j, node] >= 0:
                    col = self.feature[j, node]
                    node = 2 * node + (0 if X[i, col] <= self.threshold[j, node] else 1)
                s += self.leaf_mu[j, node]
            out[i] = s
        return out


@dataclass(frozen=True)
class BartPosterior:
    """Retained draws of a fit: predictions per registered matrix plus sigma.

    ``predictions[k]`` has shape (total_draws, n_rows_k) on the response
    scale (probability scale for probit).  Draws are grouped contiguously
    by chain; ``chain_index`` labels each draw.
    """

    kind: str
    predictions: tuple[np.ndarray, ...]
    sigma: np.ndarray
    chain_index: np.ndarray
    n_chains: int
    hyperparams: BartHyperparams
    shift: float
    scale: float
    states: tuple[BartState, ...]
    proposed: np.ndarray
    accepted: np.ndarray

    @property
    def total_draws(self) -> int:
        return self.sigma.shape[0]


def _as_matrix(X) -> np.ndarray:
    if isinstance(X, DesignMatrix):
        X = X.values
    arr = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
    if arr.ndim != 2 or arr.size == 0:
        raise UsageError("design matrix must be 2-d and non-empty")
    if not np.all(np.isfinite(arr)):
        raise UsageError("design matrix must be finite")
    return arr


def _check_rows(X: np.ndarray, y: np.ndarray, w: np.ndarray | None):
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != X.shape[0]:
        raise FitError("response length does not match design rows")
    if not np.all(np.isfinite(y)):
        raise UsageError("response must be finite")
    if w is None:
        w = np.ones(X.shape[0])
    else:
        w = np.asarray(w, dtype=float).reshape(-1)
        if w.shape[0] != X.shape[0]:
            raise FitError("weights length does not match design rows")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise UsageError("weights must be finite and strictly positive")
    return y, w


def _worker_count(n_chains: int) -> int:
    raw = os.environ.get("CAUSAL_TREES_THREADS", "")
    if not raw:
        return 1
    try:
        cap = int(raw)
    except ValueError:
        raise UsageError("CAUSAL_TREES_THREADS must be a positive integer") from None
    if cap < 1:
        raise UsageError("CAUSAL_TREES_THREADS must be a positive integer")
    return min(cap, n_chains)


def _chain_seeds(rng_seed: int, n_chains: int) -> list[int]:
    state = np.random.SeedSequence(rng_seed).generate_state(n_chains)
    return [int(s) for s in state]


def _run_one(args):
    return _kernel.run_chain(*args)


def _run_chains(
    X: np.ndarray,
    y_fit: np.ndarray,
    w: np.ndarray,
    hp: BartHyperparams,
    Xpred_all: np.ndarray,
    sigma_mu: float,
    lam: float,
    is_probit: bool,
    update_sigma: bool,
    sigma2_init: float,
):
    cutpoints = make_cutpoints(X, hp.n_cutpoints)
    arg_list = [
        (
            X,
            y_fit,
            w,
            cutpoints,
            Xpred_all,
            hp.n_trees,
            hp.alpha,
            hp.beta,
            sigma_mu,
            hp.nu,
            lam,
            hp.burn_in,
            hp.n_draws,
            seed,
            is_probit,
            update_sigma,
            sigma2_init,
            hp.max_depth,
        )
        for seed in _chain_seeds(hp.rng_seed, hp.n_chains)
    ]
    workers = _worker_count(hp.n_chains)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, arg_list))
    else:
        results = [_run_one(a) for a in arg_list]
    return results


def _assemble(
    results,
    offsets: list[int],
    hp: BartHyperparams,
    kind: str,
    shift: float,
    scale: float,
) -> BartPosterior:
    preds = np.concatenate([res[0] for res in results], axis=0)
    sigma2 = np.concatenate([res[1] for res in results])
    if kind == "continuous":
        preds = preds * scale + shift
        sigma = np.sqrt(sigma2) * scale
    else:
        sigma = np.ones_like(sigma2)
    matrices = tuple(
        np.ascontiguousarray(preds[:, lo:hi]) for lo, hi in zip(offsets, offsets[1:])
    )
    chain_index = np.repeat(np.arange(hp.n_chains), hp.n_draws)
    states = tuple(
        BartState(
            feature=res[2],
            threshold=res[3],
            leaf_mu=res[4],
            leaf_of_row=res[5],
            ensemble_fit=res[6],
            sigma2=float(res[1][-1]),
        )
        for res in results
    )
    proposed = np.sum([res[7] for res in results], axis=0)
    accepted = np.sum([res[8] for res in results], axis=0)
    return BartPosterior(
        kind=kind,
        predictions=matrices,
        sigma=sigma,
        chain_index=chain_index,
        n_chains=hp.n_chains,
        hyperparams=hp,
        shift=shift,
        scale=scale,
        states=states,
        proposed=proposed,
        accepted=accepted,
    )


def _stack_predict(X: np.ndarray, predict_on) -> tuple[np.ndarray, list[int]]:
    mats = [_as_matrix(M) for M in predict_on]
    for M in mats:
        if M.shape[1] != X.shape[1]:
            raise UsageError("prediction matrix column count differs from training X")
    offsets = [0]
    for M in mats:
        offsets.append(offsets[-1] + M.shape[0])
    stacked = (
        np.concatenate(mats, axis=0) if mats else np.zeros((0, X.shape[1]))
    )
    return stacked, offsets


def _ols_residual_sd(X: np.ndarray, y_std: np.ndarray) -> float:
    """Residual sd of an intercept OLS fit; falls back to sd(y) when the
    design is rank deficient or the fit leaves no residual degrees of freedom."""
    n, p = X.shape
    fallback = float(np.std(y_std, ddof=1)) if n > 1 else 0.0
    if n <= p + 1:
        return fallback
    A = np.column_stack([np.ones(n), X])
    coef, _, rank, _ = np.linalg.lstsq(A, y_std, rcond=None)
    if rank < p + 1:
        return fallback
    resid = y_std - A @ coef
    return float(np.sqrt(np.sum(resid * resid) / (n - rank)))


def fit_bart_continuous(
    X,
    y: np.ndarray,
    weights: np.ndarray | None,
    hyperparams: BartHyperparams,
    predict_on=(),
) -> BartPosterior:
    """Fit the continuous-response ensemble.

    The response is standardized to [-0.5, 0.5]; the leaf prior sd is
    ``0.5/(k*sqrt(n_trees))`` and the variance prior scale is calibrated
    so that ``P(sigma < sigma_hat) = q`` with ``sigma_hat`` the residual
    sd of an intercept OLS fit (sd(y) when rank deficient).  Retained
    draws hold destandardized predictions for every matrix in
    ``predict_on`` and the destandardized residual sd.
    """
    Xm = _as_matrix(X)
    y, w = _check_rows(Xm, y, weights)
    hp = hyperparams
    y_std, shift, scale = standardize_response(y)
    sigma_hat = _ols_residual_sd(Xm, y_std)
    lam = max(calibrate_lambda(sigma_hat, hp.nu, hp.q), 1e-12)
    sigma_mu = 0.5 / (hp.k * np.sqrt(hp.n_trees))
    sigma2_init = max(sigma_hat * sigma_hat, 1e-12)
    stacked, offsets = _stack_predict(Xm, predict_on)
    results = _run_chains(
        Xm, y_std, w, hp, stacked, sigma_mu, lam, False, True, sigma2_init
    )
    return _assemble(results, offsets, hp, "continuous", shift, scale)


def fit_bart_probit(
    X,
    z: np.ndarray,
    weights: np.ndarray | None,
    hyperparams: BartHyperparams,
    predict_on=(),
) -> BartPosterior:
    """Fit the binary-response ensemble in its probit formulation.

    Latent values are drawn each sweep from normals truncated to match the
    observed class, the residual sd is pinned at one, and the leaf prior
    sd is ``3/(k*sqrt(n_trees))`` on the latent scale.  Predictions are
    probabilities in the open interval (0, 1).
    """
    Xm = _as_matrix(X)
    z, w = _check_rows(Xm, z, weights)
    if not np.all((z == 0.0) | (z == 1.0)):
        raise UsageError("probit response must contain only 0/1 values")
    if z.min() == z.max():
        raise FitError("probit response has a single class")
    hp = hyperparams
    sigma_mu = 3.0 / (hp.k * np.sqrt(hp.n_trees))
    stacked, offsets = _stack_predict(Xm, predict_on)
    results = _run_chains(Xm, z, w, hp, stacked, sigma_mu, 0.0, True, False, 1.0)
    return _assemble(results, offsets, hp, "probit", 0.0, 1.0)


def predict_posterior(post: BartPosterior, which_matrix: int) -> np.ndarray:
    """Per-draw predictions for one registered matrix (draws x rows)."""
    if not 0 <= which_matrix < len(post.predictions):
        raise UsageError(
            f"matrix index {which_matrix} out of range "
            f"(fit registered {len(post.predictions)})"
        )
    return post.predictions[which_matrix]
