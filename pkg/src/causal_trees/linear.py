"""Survey-weighted logistic and Gaussian regression with sandwich variance.

These are the comparison models: a weighted logistic fit of the binary
follow-up outcome and a weighted least-squares fit of the change-in-days
outcome.  Variance uses the weight-based sandwich estimator, which equals
Taylor linearization under a single-stage with-replacement design; full
stratum/PSU metadata is out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import expit
from scipy.stats import norm

from .dataset import DesignMatrix
from .errors import RankError, SeparationError, UsageError

INTERCEPT = "(intercept)"

__all__ = [
    "LinearFit",
    "fit_weighted_logistic",
    "fit_weighted_gaussian",
    "effect_ci",
    "INTERCEPT",
]


@dataclass(frozen=True)
class LinearFit:
    """Coefficients and sandwich covariance of one weighted GLM fit."""

    family: str
    columns: tuple[str, ...]
    coefficients: np.ndarray
    covariance: np.ndarray
    converged: bool
    iterations: int
    n: int
    weight_sum: float

    def coefficient(self, column: str) -> float:
        return float(self.coefficients[self._position(column)])

    def se(self, column: str) -> float:
        j = self._position(column)
        return float(np.sqrt(self.covariance[j, j]))

    def _position(self, column: str) -> int:
        try:
            return self.columns.index(column)
        except ValueError:
            raise UsageError(f"column {column!r} not in fit") from None


def _design_with_intercept(X) -> tuple[np.ndarray, tuple[str, ...]]:
    if isinstance(X, DesignMatrix):
        values, names = X.values, X.columns
    else:
        values = np.asarray(X, dtype=float)
        if values.ndim != 2:
            raise UsageError("X must be a 2-d design matrix")
        names = tuple(f"x{j}" for j in range(values.shape[1]))
    full = np.column_stack([np.ones(values.shape[0]), values])
    return full, (INTERCEPT, *names)


def _check_weights(w, n: int) -> np.ndarray:
    if w is None:
        return np.ones(n)
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != n or np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise UsageError("weights must be positive, finite, one per row")
    return w


def _rank_check(Xd: np.ndarray, names: tuple[str, ...], w: np.ndarray) -> None:
    """Pivoted QR on the weighted design; names the dependent columns."""
    _, r, piv = scipy.linalg.qr(
        np.sqrt(w)[:, None] * Xd, mode="economic", pivoting=True
    )
    diag = np.abs(np.diag(r))
    tol = diag[0] * max(Xd.shape) * np.finfo(float).eps if diag[0] > 0 else 0.0
    rank = int(np.sum(diag > tol))
    if rank < Xd.shape[1]:
        bad = tuple(sorted(names[j] for j in piv[rank:]))
        raise RankError(
            f"design matrix is rank deficient; offending columns: {', '.join(bad)}",
            columns=bad,
        )


def _sandwich(Xd: np.ndarray, a_weights: np.ndarray, b_weights: np.ndarray) -> np.ndarray:
    """A^-1 B A^-1 with A = X'diag(a)X and B = X'diag(b)X."""
    a = Xd.T @ (a_weights[:, None] * Xd)
    b = Xd.T @ (b_weights[:, None] * Xd)
    a_inv = np.linalg.inv(a)
    cov = a_inv @ b @ a_inv
    return (cov + cov.T) / 2.0


def fit_weighted_logistic(
    X,
    y: np.ndarray,
    weights: np.ndarray | None = None,
    *,
    max_iter: int = 50,
    tol: float = 1e-8,
) -> LinearFit:
    """Weighted logistic regression via IRLS with step-halving.

    Convergence is max |change in beta| < 1e-8.  Covariance is the
    sandwich A^-1 B A^-1 with A the weighted Fisher information and B the
    outer product of weighted score contributions.  A coefficient
    exceeding 15 on its standardized column scale raises
    :class:`SeparationError`.
    """
    Xd, names = _design_with_intercept(X)
    n, p = Xd.shape
    yv = np.asarray(y, dtype=float).reshape(-1)
    if yv.size != n:
        raise UsageError("y length does not match X")
    if not np.all((yv == 0.0) | (yv == 1.0)):
        raise UsageError("logistic outcome must be binary 0/1")
    if yv.min() == yv.max():
        raise SeparationError("outcome has a single class; log-odds diverge")
    w = _check_weights(weights, n)
    _rank_check(Xd, names, w)
    col_scale = np.std(Xd, axis=0)

    def loglik(beta: np.ndarray) -> float:
        eta = Xd @ beta
        mu = np.clip(expit(eta), 1e-12, 1.0 - 1e-12)
        return float(np.sum(w * (yv * np.log(mu) + (1.0 - yv) * np.log(1.0 - mu))))

    beta = np.zeros(p)
    ll = loglik(beta)
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        eta = Xd @ beta
        mu = expit(eta)
        v = np.clip(mu * (1.0 - mu), 1e-10, None)
        wls = w * v
        z = eta + (yv - mu) / v
        lhs = Xd.T @ (wls[:, None] * Xd)
        rhs = Xd.T @ (wls * z)
        try:
            beta_new = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError:
            raise RankError("singular normal equations in IRLS") from None
        step = beta_new - beta
        damp = 1.0
        ll_new = loglik(beta + step)
        while ll_new < ll and damp > 1e-8:
            damp /= 2.0
            ll_new = loglik(beta + damp * step)
        beta = beta + damp * step
        ll = ll_new
        if np.any(np.abs(beta) * col_scale > 15.0):
            raise SeparationError(
                "coefficients diverging; outcome classes look perfectly separated"
            )
        if np.max(np.abs(damp * step)) < tol:
            converged = True
            break

    mu = expit(Xd @ beta)
    cov = _sandwich(Xd, w * mu * (1.0 - mu), (w * (yv - mu)) ** 2)
    return LinearFit(
        family="logistic",
        columns=names,
        coefficients=beta,
        covariance=cov,
        converged=converged,
        iterations=iterations,
        n=n,
        weight_sum=float(np.sum(w)),
    )


def fit_weighted_gaussian(
    X,
    y: np.ndarray,
    weights: np.ndarray | None = None,
) -> LinearFit:
    """Weighted least squares with a heteroskedasticity-robust sandwich."""
    Xd, names = _design_with_intercept(X)
    n, p = Xd.shape
    yv = np.asarray(y, dtype=float).reshape(-1)
    if yv.size != n:
        raise UsageError("y length does not match X")
    if n <= p:
        raise UsageError("need more rows than design columns")
    w = _check_weights(weights, n)
    _rank_check(Xd, names, w)
    sw = np.sqrt(w)
    beta, *_ = np.linalg.lstsq(sw[:, None] * Xd, sw * yv, rcond=None)
    resid = yv - Xd @ beta
    cov = _sandwich(Xd, w, (w * resid) ** 2)
    return LinearFit(
        family="gaussian",
        columns=names,
        coefficients=beta,
        covariance=cov,
        converged=True,
        iterations=1,
        n=n,
        weight_sum=float(np.sum(w)),
    )


def effect_ci(
    fit: LinearFit, column: str, level: float = 0.95
) -> tuple[float, float, float]:
    """Wald interval for one coefficient.

    Logistic fits report the exponentiated coefficient (odds ratio) with
    the interval built on the log scale; Gaussian fits report the
    coefficient directly.
    """
    if not 0.0 < level < 1.0:
        raise UsageError("level must lie in (0, 1)")
    b = fit.coefficient(column)
    se = fit.se(column)
    z = float(norm.ppf(0.5 + level / 2.0))
    lo, hi = b - z * se, b + z * se
    if fit.family == "logistic":
        return float(np.exp(b)), float(np.exp(lo)), float(np.exp(hi))
    return b, lo, hi
