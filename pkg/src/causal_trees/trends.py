"""Prevalence trend models: exponential decay fits and gateway simulation.

Two small models over annual survey series.  The first fits
alpha * exp(-beta * t) by damped Gauss-Newton and wraps predictions in
residual-bootstrap intervals.  The second replays a counterfactual
recurrence: smoking prevalence continuing its pre-2010 linear decline,
plus a proportion k of every year-over-year rise in e-cigarette use.

The national youth survey series used by both models ships embedded
(years, cigarette prevalence, e-cigarette prevalence) so the default
simulation needs no input files.  Simulated prevalence is allowed to go
negative on long horizons; only bootstrap interval floors clamp at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BootstrapError, FitError, UsageError

NYTS_YEARS = (
    1999, 2000, 2002, 2004, 2006, 2009, 2011, 2012, 2013, 2014, 2015,
    2016, 2017, 2018, 2019, 2020, 2021, 2022, 2023, 2024, 2025,
)
NYTS_CIG = (
    19.6324, 20.2450, 16.7436, 15.6463, 13.6336, 11.9860, 10.8277, 9.4409,
    8.4642, 6.2975, 6.2261, 5.4710, 5.2713, 5.3594, 4.2741, 3.3151, 2.0098,
    1.6320, 1.5762, 1.4155, 1.4356,
)
NYTS_ECIG_YEARS = tuple(range(2011, 2026))
NYTS_ECIG = (
    1.1042, 2.0472, 3.0660, 9.3020, 11.3053, 8.2246, 8.0604, 13.7767,
    20.0187, 13.0610, 9.6654, 9.3972, 7.6652, 5.9287, 5.2317,
)

__all__ = [
    "NYTS_YEARS",
    "NYTS_CIG",
    "NYTS_ECIG_YEARS",
    "NYTS_ECIG",
    "TrendSeries",
    "TrendFit",
    "GatewaySimConfig",
    "PredictionBand",
    "nyts_smoking_series",
    "nyts_ecig_series",
    "average_annual_decline",
    "simulate_gateway",
    "fit_exp_decay",
    "bootstrap_prediction_interval",
]


@dataclass(frozen=True)
class TrendSeries:
    """An annual prevalence series on a strictly increasing year grid."""

    years: tuple[int, ...]
    prevalence: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.years) != len(self.prevalence) or len(self.years) == 0:
            raise UsageError("years and prevalence must be non-empty, equal length")
        ys = np.asarray(self.years)
        if not np.all(ys[1:] > ys[:-1]):
            raise UsageError("years must be strictly increasing")
        if not np.all(np.isfinite(self.prevalence)):
            raise UsageError("prevalence must be finite")

    def value_at(self, year: int) -> float | None:
        try:
            return self.prevalence[self.years.index(year)]
        except ValueError:
            return None


def nyts_smoking_series() -> TrendSeries:
    return TrendSeries(NYTS_YEARS, NYTS_CIG)


def nyts_ecig_series() -> TrendSeries:
    return TrendSeries(NYTS_ECIG_YEARS, NYTS_ECIG)


@dataclass(frozen=True)
class TrendFit:
    """alpha * exp(-beta * (year - year_center)) with in-sample residuals."""

    alpha: float
    beta: float
    year_center: int
    residuals: np.ndarray
    bootstrap_draws: np.ndarray | None = None

    def predict(self, years) -> np.ndarray:
        t = np.asarray(years, dtype=float) - self.year_center
        return self.alpha * np.exp(-self.beta * t)


@dataclass(frozen=True)
class GatewaySimConfig:
    """Settings for the counterfactual smoking recurrence.

    ``k`` is the proportion of each year-over-year e-cigarette increase
    added to the simulated smoking prevalence.  ``decline_window`` is the
    pair of (year, prevalence) anchors defining the baseline annual
    decline; None derives it from the last two observed years at or
    before ``cutoff_year``.
    """

    k: float = 0.0
    decline_window: tuple[tuple[int, float], tuple[int, float]] | None = None
    cutoff_year: int = 2009

    def __post_init__(self) -> None:
        if self.k < 0.0:
            raise UsageError("k must be non-negative")
        if self.decline_window is not None:
            (y1, _), (y2, _) = self.decline_window
            if y2 - y1 < 1:
                raise UsageError("decline window must span at least one year")


def average_annual_decline(p_start: float, p_end: float, years: int) -> float:
    """Per-year drop between two anchor prevalences; negative on increase."""
    if years < 1:
        raise UsageError("need at least a one-year window")
    return (p_start - p_end) / years


def simulate_gateway(
    smoking: TrendSeries, ecig: TrendSeries, cfg: GatewaySimConfig
) -> TrendSeries:
    """Replay the linear-decline-plus-gateway recurrence.

    Years at or before the cutoff are copied from the observed series.
    Each later year (stepping annually, including years with no survey)
    subtracts the anchored average annual decline and, when e-cigarette
    use rose from the prior year, adds k times that rise.  Output lands on
    the observed year grid, so internally simulated no-survey years drop
    out.
    """
    cutoff = cfg.cutoff_year
    if cfg.decline_window is not None:
        (y1, p1), (y2, p2) = cfg.decline_window
        if smoking.value_at(y1) is None or smoking.value_at(y2) is None:
            raise UsageError(f"anchor years {y1}, {y2} not in the smoking series")
    else:
        past = [y for y in smoking.years if y <= cutoff]
        if len(past) < 2:
            raise UsageError("need two observed years at or before the cutoff")
        y1, y2 = past[-2], past[-1]
        p1 = smoking.value_at(y1)
        p2 = smoking.value_at(y2)
    if y2 != cutoff or smoking.value_at(cutoff) is None:
        raise UsageError("cutoff year must be observed in the smoking series")
    decline = average_annual_decline(p1, p2, y2 - y1)

    values: dict[int, float] = {}
    for year, prev_val in zip(smoking.years, smoking.prevalence):
        if year <= cutoff:
            values[year] = prev_val
    prev = smoking.value_at(cutoff)
    for year in range(cutoff + 1, max(smoking.years) + 1):
        cur_e = ecig.value_at(year)
        prior_e = ecig.value_at(year - 1)
        delta = cur_e - prior_e if cur_e is not None and prior_e is not None else 0.0
        nxt = prev - decline
        if delta > 0.0:
            nxt += cfg.k * delta
        values[year] = nxt
        prev = nxt
    return TrendSeries(smoking.years, tuple(values[y] for y in smoking.years))


def _gauss_newton(
    t: np.ndarray,
    y: np.ndarray,
    alpha0: float,
    beta0: float,
    max_iter: int = 200,
    gtol: float = 1e-10,
) -> tuple[float, float, bool]:
    """Levenberg-damped Gauss-Newton for the two-parameter decay curve."""
    a, b = float(alpha0), float(beta0)
    lam = 1e-3
    f = a * np.exp(-b * t)
    r = y - f
    sse = float(r @ r)
    for _ in range(max_iter):
        e = np.exp(-b * t)
        jac = np.column_stack([e, -a * t * e])
        grad = jac.T @ r
        if float(np.linalg.norm(grad)) < gtol:
            return a, b, True
        jtj = jac.T @ jac
        # near the optimum SSE goes numerically flat while the gradient is
        # still resolvable; allow rounding-scale slack so polish steps land
        slack = 1e-12 * sse
        accepted = False
        for _ in range(60):
            try:
                step = np.linalg.solve(jtj + lam * np.eye(2), grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            a_new, b_new = a + step[0], b + step[1]
            r_new = y - a_new * np.exp(-b_new * t)
            sse_new = float(r_new @ r_new)
            if np.isfinite(sse_new) and sse_new <= sse + slack:
                a, b, r, sse = a_new, b_new, r_new, sse_new
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            return a, b, False
    e = np.exp(-b * t)
    grad = np.column_stack([e, -a * t * e]).T @ r
    return a, b, float(np.linalg.norm(grad)) < gtol


def fit_exp_decay(series: TrendSeries) -> TrendFit:
    """Least-squares alpha * exp(-beta * t), t = year - min(year).

    Initialized by a log-linear regression, refined by Gauss-Newton with
    Levenberg damping until the residual-gradient norm falls below 1e-10.
    """
    if len(series.years) < 3:
        raise UsageError("need at least 3 points to fit a decay curve")
    y = np.asarray(series.prevalence, dtype=float)
    if np.any(y <= 0):
        raise UsageError("prevalence must be strictly positive for a decay fit")
    center = int(min(series.years))
    t = np.asarray(series.years, dtype=float) - center
    coef = np.polynomial.polynomial.polyfit(t, np.log(y), 1)
    alpha0, beta0 = float(np.exp(coef[0])), float(-coef[1])
    alpha, beta, ok = _gauss_newton(t, y, alpha0, beta0)
    if not ok:
        raise FitError("decay fit did not converge in 200 iterations")
    return TrendFit(
        alpha=alpha,
        beta=beta,
        year_center=center,
        residuals=y - alpha * np.exp(-beta * t),
    )


@dataclass(frozen=True)
class PredictionBand:
    """Bootstrap prediction intervals on a year grid."""

    years: tuple[int, ...]
    point: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    draws: np.ndarray
    n_dropped: int


def bootstrap_prediction_interval(
    fit: TrendFit,
    series: TrendSeries,
    horizon_years,
    n_boot: int = 10000,
    level: float = 0.95,
    rng_seed: int = 0,
) -> PredictionBand:
    """Residual-bootstrap prediction intervals for the decay fit.

    Mean-centered residuals are resampled onto fitted values and the curve
    refit per iteration (warm-started at the original parameters); each
    horizon year's prediction draw adds one independently resampled
    centered residual, making these prediction intervals rather than
    confidence bands.  Refit failures are dropped; more than 5% raises
    :class:`BootstrapError`.  Interval floors clamp at zero.
    """
    if n_boot < 100:
        raise UsageError("n_boot must be at least 100")
    if not 0.0 < level < 1.0:
        raise UsageError("level must lie in (0, 1)")
    horizon = tuple(int(v) for v in horizon_years)
    if not horizon:
        raise UsageError("horizon_years must be non-empty")
    rng = np.random.default_rng(rng_seed)
    n = len(series.years)
    t = np.asarray(series.years, dtype=float) - fit.year_center
    t_hor = np.asarray(horizon, dtype=float) - fit.year_center
    fitted = fit.predict(series.years)
    centered = fit.residuals - float(np.mean(fit.residuals))

    preds = np.empty((n_boot, len(horizon)))
    params = np.empty((n_boot, 2))
    kept = 0
    for _ in range(n_boot):
        ystar = fitted + centered[rng.integers(0, n, n)]
        noise = centered[rng.integers(0, n, len(horizon))]
        a, b, ok = _gauss_newton(t, ystar, fit.alpha, fit.beta)
        if not ok:
            continue
        preds[kept] = a * np.exp(-b * t_hor) + noise
        params[kept] = (a, b)
        kept += 1
    dropped = n_boot - kept
    if dropped > 0.05 * n_boot:
        raise BootstrapError(f"{dropped} of {n_boot} bootstrap refits failed")
    preds = preds[:kept]
    tail = (1.0 - level) / 2.0
    lo = np.maximum(np.quantile(preds, tail, axis=0), 0.0)
    hi = np.quantile(preds, 1.0 - tail, axis=0)
    return PredictionBand(
        years=horizon,
        point=fit.predict(horizon),
        lo=lo,
        hi=hi,
        draws=params[:kept],
        n_dropped=dropped,
    )
