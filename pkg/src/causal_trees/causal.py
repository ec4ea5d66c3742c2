"""Propensity-augmented response-surface estimation of treatment effects.

The pipeline mirrors a two-stage design: a probit ensemble learns
treatment assignment and its posterior-mean score joins the covariates of
a continuous-response ensemble, which is then evaluated on the factual
matrix and on the two counterfactual matrices (everyone treated, everyone
control).  Per-draw differences give individual effects; rows whose
counterfactual predictions are too uncertain relative to factual ones are
suppressed by a common-support rule; group-level averages are optionally
re-targeted draw by draw with a one-parameter logistic fluctuation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, logit
from scipy.stats import chi2

from .bart import (
    BartHyperparams,
    BartPosterior,
    fit_bart_continuous,
    fit_bart_probit,
    predict_posterior,
)
from .dataset import Dataset, DesignMatrix, encode_design_matrix, rescale_weights
from .errors import FitError, SupportError, TmleError, UsageError

PS_COLUMN = "__ps"

__all__ = [
    "CausalConfig",
    "PropensityScores",
    "CausalResult",
    "CausalReport",
    "fit_propensity",
    "augment_with_ps",
    "counterfactual_matrices",
    "individual_effects",
    "support_rule_sd",
    "support_rule_chisq",
    "tmle_adjust",
    "summarize",
    "hdi",
    "rmse",
    "rhat",
    "run_causal",
]


@dataclass(frozen=True)
class CausalConfig:
    """Pipeline settings.

    ``support_rule`` is one of ``none`` / ``sd`` / ``chisq``;
    ``support_cut`` is the sd-rule slack in units of sd(sigma_f) and
    ``support_p`` the chisq-rule tail probability.  ``mcid`` is the
    smallest posterior-mean effect magnitude flagged as clinically
    relevant.  Propensity scores are truncated to ``ps_truncation`` before
    entering fluctuation weights (the appended covariate stays
    untruncated).
    """

    support_rule: str = "none"
    support_cut: float = 1.0
    support_p: float = 0.05
    use_ps_covariate: bool = True
    use_tmle: bool = True
    ps_truncation: tuple[float, float] = (0.025, 0.975)
    mcid: float = 1.0
    hyperparams: BartHyperparams = field(default_factory=BartHyperparams)
    outcome_bounds: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.support_rule not in ("none", "sd", "chisq"):
            raise UsageError(f"unknown support rule {self.support_rule!r}")
        if not 0.0 < self.support_p < 1.0:
            raise UsageError("support_p must lie in (0, 1)")
        lo, hi = self.ps_truncation
        if not 0.0 < lo < hi < 1.0:
            raise UsageError("ps_truncation must satisfy 0 < lo < hi < 1")
        if self.mcid < 0.0:
            raise UsageError("mcid must be non-negative")


@dataclass(frozen=True)
class PropensityScores:
    """Per-draw and posterior-mean treatment probabilities."""

    draws: np.ndarray
    mean: np.ndarray


@dataclass(frozen=True)
class CausalResult:
    """Per-group posterior summary of the pipeline."""

    group: str
    n: int
    n_treated: int
    ate: float
    ate_hdi: tuple[float, float]
    ate_draws: np.ndarray
    att: float | None
    att_hdi: tuple[float, float] | None
    att_draws: np.ndarray | None
    icate_mean: np.ndarray
    icate_lo: np.ndarray
    icate_hi: np.ndarray
    retained_rows: np.ndarray
    suppressed_treated: int
    suppressed_control: int
    rmse: float
    rhat: float
    clinical_flag: bool
    tmle_epsilon: np.ndarray | None
    tmle_fallbacks: int


@dataclass(frozen=True)
class CausalReport:
    """Everything a run produced: per-group results plus shared pieces."""

    results: dict[str, CausalResult]
    config: CausalConfig
    n_chains: int
    propensity: PropensityScores | None
    response_posterior: BartPosterior
    treatment: np.ndarray
    weights: np.ndarray
    groups: np.ndarray


def hdi(samples: np.ndarray, mass: float = 0.95) -> tuple[float, float]:
    """Shortest contiguous interval holding ``ceil(mass * n)`` samples.

    Ties between equally short windows resolve to the lowest starting
    index in the sorted sample.
    """
    arr = np.asarray(samples, dtype=float).reshape(-1)
    if arr.size < 2 or not np.all(np.isfinite(arr)):
        raise UsageError("need at least 2 finite samples")
    if not 0.0 < mass < 1.0:
        raise UsageError("mass must lie in (0, 1)")
    lo, hi = _hdi_columns(arr[:, None], mass)
    return float(lo[0]), float(hi[0])


def _hdi_columns(draws: np.ndarray, mass: float) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise HDI of a (draws, columns) matrix."""
    s = np.sort(draws, axis=0)
    n = s.shape[0]
    k = int(np.ceil(mass * n))
    if k >= n:
        return s[0], s[-1]
    widths = s[k - 1 :, :] - s[: n - k + 1, :]
    start = np.argmin(widths, axis=0)  # first minimum = lowest start
    cols = np.arange(s.shape[1])
    return s[start, cols], s[start + k - 1, cols]


def rmse(pred: np.ndarray, obs: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Weighted root-mean-square error; weights must be >= 0 with a positive sum."""
    p = np.asarray(pred, dtype=float).reshape(-1)
    o = np.asarray(obs, dtype=float).reshape(-1)
    if p.shape != o.shape or p.size == 0:
        raise UsageError("pred and obs must be non-empty arrays of equal length")
    if weights is None:
        w = np.ones_like(p)
    else:
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.shape != p.shape or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise UsageError("weights must be non-negative, finite, aligned")
    total = float(np.sum(w))
    if total <= 0:
        raise UsageError("weights must not sum to zero")
    return float(np.sqrt(np.sum(w * (p - o) ** 2) / total))


def rhat(draws: np.ndarray, n_chains: int) -> float:
    """Split R-hat of a chain-contiguous draw vector.

    Each chain is halved, within-half variances are compared to the
    between-half variance of the means.  Identical constant chains return
    exactly 1.0 (zero within-variance convention).
    """
    arr = np.asarray(draws, dtype=float).reshape(-1)
    if n_chains < 2:
        raise UsageError("split R-hat needs at least 2 chains")
    if arr.size % n_chains != 0:
        raise UsageError("draws must divide evenly into n_chains blocks")
    per = arr.size // n_chains
    if per < 4:
        raise UsageError("need at least 4 draws per chain for split R-hat")
    half = per // 2
    chains = arr.reshape(n_chains, per)
    halves = np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)
    within = float(np.mean(np.var(halves, axis=1, ddof=1)))
    between = half * float(np.var(np.mean(halves, axis=1), ddof=1))
    if within == 0.0:
        return 1.0 if between == 0.0 else float("inf")
    var_hat = (half - 1) / half * within + between / half
    return float(np.sqrt(var_hat / within))


def fit_propensity(
    X,
    treatment: np.ndarray,
    weights: np.ndarray | None,
    hyperparams: BartHyperparams,
) -> PropensityScores:
    """Probit ensemble for treatment assignment, evaluated in sample.

    The treatment column must not be part of X.
    """
    t = np.asarray(treatment, dtype=float).reshape(-1)
    if not np.all((t == 0.0) | (t == 1.0)):
        raise UsageError("treatment must be binary 0/1")
    if t.min() == t.max():
        raise FitError("treatment has a single class; cannot fit assignment model")
    post = fit_bart_probit(X, t, weights, hyperparams, predict_on=[X])
    draws = predict_posterior(post, 0)
    return PropensityScores(draws=draws, mean=draws.mean(axis=0))


def augment_with_ps(X: DesignMatrix, scores: PropensityScores | np.ndarray) -> DesignMatrix:
    """Append the posterior-mean score as a ``__ps`` covariate (untruncated)."""
    if PS_COLUMN in X.columns:
        raise UsageError("design matrix already carries a propensity column")
    mean = scores.mean if isinstance(scores, PropensityScores) else np.asarray(scores)
    return X.with_column(PS_COLUMN, mean)


def counterfactual_matrices(
    X: DesignMatrix, treatment_col: str
) -> tuple[DesignMatrix, DesignMatrix]:
    """Copies of X with the treatment column forced to all-1 and all-0."""
    pos = X.column_position(treatment_col)
    col = X.values[:, pos]
    if not np.all((col == 0.0) | (col == 1.0)):
        raise UsageError(f"treatment column {treatment_col!r} is not binary")
    treated = X.values.copy()
    control = X.values.copy()
    treated[:, pos] = 1.0
    control[:, pos] = 0.0
    return X.with_values(treated), X.with_values(control)


def individual_effects(
    post: BartPosterior, treated_idx: int, control_idx: int
) -> np.ndarray:
    """Per-draw, per-row effect: treated-matrix minus control-matrix prediction."""
    pt = predict_posterior(post, treated_idx)
    pc = predict_posterior(post, control_idx)
    if pt.shape != pc.shape:
        raise UsageError("counterfactual prediction matrices differ in shape")
    return pt - pc


def _check_support_inputs(sigma_f: np.ndarray, sigma_cf: np.ndarray):
    f = np.asarray(sigma_f, dtype=float).reshape(-1)
    c = np.asarray(sigma_cf, dtype=float).reshape(-1)
    if f.size == 0 or f.shape != c.shape:
        raise SupportError("posterior sd vectors must be non-empty and aligned")
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(c))):
        raise SupportError("posterior sd vectors must be finite")
    if np.any(f < 0) or np.any(c < 0):
        raise SupportError("posterior sds must be non-negative")
    return f, c


def support_rule_sd(
    sigma_f: np.ndarray, sigma_cf: np.ndarray, cut: float = 1.0
) -> np.ndarray:
    """Keep rows whose counterfactual sd is within the factual envelope.

    Keep iff ``sigma_cf_i <= max(sigma_f) + cut * sd(sigma_f)`` with the
    max and (sample) sd taken over the rows the rule is applied to; with a
    single row the slack term is zero.
    """
    f, c = _check_support_inputs(sigma_f, sigma_cf)
    spread = float(np.std(f, ddof=1)) if f.size > 1 else 0.0
    return c <= float(np.max(f)) + cut * spread


def support_rule_chisq(
    sigma_f: np.ndarray, sigma_cf: np.ndarray, p: float = 0.05
) -> np.ndarray:
    """Keep rows whose sd ratio squared stays under the chi-square(1) quantile.

    Keep iff ``(sigma_cf_i / sigma_f_i)^2 <= Q`` with ``Q`` the 1-p
    quantile of chi-square with one degree of freedom; larger p therefore
    keeps fewer rows.  Factual sds must be strictly positive.
    """
    f, c = _check_support_inputs(sigma_f, sigma_cf)
    if not 0.0 < p < 1.0:
        raise SupportError("p must lie in (0, 1)")
    if np.any(f == 0.0):
        raise SupportError("factual posterior sd of zero leaves the ratio undefined")
    q = float(chi2.ppf(1.0 - p, 1.0))
    return (c / f) ** 2 <= q


_QBAR_CLIP = 1e-6


def _fluctuation_solve(
    offset: np.ndarray,
    h: np.ndarray,
    ystar: np.ndarray,
    w: np.ndarray,
    max_iter: int = 100,
) -> tuple[float, bool]:
    """Damped Newton for the one-parameter logistic fluctuation.

    Maximizes the weighted quasi-binomial log likelihood of ``ystar`` on
    the clever covariate ``h`` with fixed ``offset``; concave in the
    parameter, so step halving on the log likelihood is monotone.
    """

    def loglik_score_info(e: float):
        mu = expit(offset + e * h)
        mu = np.clip(mu, 1e-12, 1.0 - 1e-12)
        ll = float(np.sum(w * (ystar * np.log(mu) + (1.0 - ystar) * np.log(1.0 - mu))))
        score = float(np.sum(w * h * (ystar - mu)))
        info = float(np.sum(w * h * h * mu * (1.0 - mu)))
        return ll, score, info

    eps = 0.0
    ll, score, info = loglik_score_info(eps)
    for _ in range(max_iter):
        if info <= 0.0:
            return eps, False
        step = score / info
        if abs(step) < 1e-10:
            return eps, True
        damp = 1.0
        while damp >= 1e-8:
            cand = eps + damp * step
            ll_new, score_new, info_new = loglik_score_info(cand)
            if ll_new >= ll - 1e-12:
                break
            damp /= 2.0
        else:
            return eps, False
        eps, ll, score, info = cand, ll_new, score_new, info_new
    return eps, False


@dataclass(frozen=True)
class TmleResult:
    ate_draws: np.ndarray
    epsilon: np.ndarray
    n_fallback: int


def tmle_adjust(
    tau_draws: np.ndarray,
    qbar_treated_draws: np.ndarray,
    qbar_control_draws: np.ndarray,
    y: np.ndarray,
    treatment: np.ndarray,
    g: np.ndarray,
    weights: np.ndarray,
    outcome_bounds: tuple[float, float],
    max_iter: int = 100,
) -> TmleResult:
    """Draw-wise targeted update of the average treatment effect.

    Outcomes and outcome-model predictions are mapped onto [0, 1]; each
    posterior draw gets its own fluctuation solve with clever covariate
    ``t/g - (1-t)/(1-g)`` and offset ``logit`` of the factual prediction.
    A draw whose solve fails falls back to its unadjusted weighted mean
    effect (epsilon NaN); if every draw fails, :class:`TmleError` is
    raised.
    """
    a, b = float(outcome_bounds[0]), float(outcome_bounds[1])
    if not a < b:
        raise UsageError("outcome bounds must satisfy a < b")
    y = np.asarray(y, dtype=float).reshape(-1)
    t = np.asarray(treatment, dtype=float).reshape(-1)
    g = np.asarray(g, dtype=float).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    qt = np.atleast_2d(np.asarray(qbar_treated_draws, dtype=float))
    qc = np.atleast_2d(np.asarray(qbar_control_draws, dtype=float))
    tau = np.atleast_2d(np.asarray(tau_draws, dtype=float))
    n = y.size
    if not (t.size == g.size == w.size == n and qt.shape[1] == n and qc.shape[1] == n):
        raise UsageError("tmle inputs are not aligned")
    if np.any((y < a) | (y > b)):
        raise UsageError("outcomes fall outside the declared bounds")
    if np.any((g <= 0.0) | (g >= 1.0)):
        raise UsageError("propensity scores must lie strictly inside (0, 1)")

    span = b - a
    ystar = (y - a) / span
    h = t / g - (1.0 - t) / (1.0 - g)
    h_treated = 1.0 / g
    h_control = -1.0 / (1.0 - g)
    w_total = float(np.sum(w))

    n_draws = qt.shape[0]
    ate = np.empty(n_draws)
    eps_out = np.full(n_draws, np.nan)
    n_fallback = 0
    for d in range(n_draws):
        qt_star = np.clip((qt[d] - a) / span, _QBAR_CLIP, 1.0 - _QBAR_CLIP)
        qc_star = np.clip((qc[d] - a) / span, _QBAR_CLIP, 1.0 - _QBAR_CLIP)
        offset = logit(np.where(t == 1.0, qt_star, qc_star))
        eps, ok = _fluctuation_solve(offset, h, ystar, w, max_iter=max_iter)
        if not ok:
            ate[d] = float(np.sum(w * tau[d]) / w_total)
            n_fallback += 1
            continue
        upd_t = expit(logit(qt_star) + eps * h_treated)
        upd_c = expit(logit(qc_star) + eps * h_control)
        ate[d] = float(np.sum(w * (upd_t - upd_c)) / w_total) * span
        eps_out[d] = eps
    if n_fallback == n_draws:
        raise TmleError("fluctuation solve failed for every posterior draw")
    return TmleResult(ate_draws=ate, epsilon=eps_out, n_fallback=n_fallback)


def summarize(
    tau_draws: np.ndarray,
    treatment: np.ndarray,
    groups: np.ndarray,
    weights: np.ndarray,
    config: CausalConfig,
    *,
    n_chains: int = 1,
    keep: np.ndarray | None = None,
    y: np.ndarray | None = None,
    factual_mean: np.ndarray | None = None,
    tmle_inputs: dict | None = None,
) -> dict[str, CausalResult]:
    """Fold individual effects into per-group posterior summaries.

    ``tmle_inputs``, when given, must carry ``qbar_treated_draws``,
    ``qbar_control_draws``, ``g`` (already truncated) and
    ``outcome_bounds``; the fluctuation is then solved per group on its
    retained rows.  ATT averages stay unadjusted by design.
    """
    tau = np.atleast_2d(np.asarray(tau_draws, dtype=float))
    t = np.asarray(treatment, dtype=float).reshape(-1)
    glab = np.asarray(groups, dtype=object).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    n = t.size
    if tau.shape[1] != n or glab.size != n or w.size != n:
        raise UsageError("summarize inputs are not aligned")
    if keep is None:
        keep = np.ones(n, dtype=bool)
    keep = np.asarray(keep, dtype=bool).reshape(-1)

    out: dict[str, CausalResult] = {}
    for label in np.unique(glab):
        rows = glab == label
        kept = rows & keep
        n_group = int(rows.sum())
        sup_t = int(np.sum(rows & ~keep & (t == 1.0)))
        sup_c = int(np.sum(rows & ~keep & (t == 0.0)))
        if not kept.any():
            raise SupportError(f"group {label!r}: every row suppressed")
        wk = w[kept]
        tau_k = tau[:, kept]
        epsilon = None
        fallbacks = 0
        if config.use_tmle and tmle_inputs is not None:
            res = tmle_adjust(
                tau_k,
                tmle_inputs["qbar_treated_draws"][:, kept],
                tmle_inputs["qbar_control_draws"][:, kept],
                y[kept],
                t[kept],
                tmle_inputs["g"][kept],
                wk,
                tmle_inputs["outcome_bounds"],
            )
            ate_draws = res.ate_draws
            epsilon = res.epsilon
            fallbacks = res.n_fallback
        else:
            ate_draws = tau_k @ wk / float(np.sum(wk))

        treated_kept = kept & (t == 1.0)
        if treated_kept.any():
            wt = w[treated_kept]
            att_draws = tau[:, treated_kept] @ wt / float(np.sum(wt))
            att = float(np.mean(att_draws))
            att_hdi = hdi(att_draws, 0.95)
        else:
            att_draws = None
            att = None
            att_hdi = None

        icate_mean = tau_k.mean(axis=0)
        icate_lo, icate_hi = _hdi_columns(tau_k, 0.95)
        ate = float(np.mean(ate_draws))
        group_rmse = float("nan")
        if y is not None and factual_mean is not None:
            group_rmse = rmse(factual_mean[kept], y[kept], wk)
        n_draws = np.asarray(ate_draws).size
        if n_chains >= 2 and n_draws % n_chains == 0 and n_draws // n_chains >= 4:
            group_rhat = rhat(ate_draws, n_chains)
        else:
            group_rhat = float("nan")
        out[str(label)] = CausalResult(
            group=str(label),
            n=n_group,
            n_treated=int(np.sum(rows & (t == 1.0))),
            ate=ate,
            ate_hdi=hdi(ate_draws, 0.95),
            ate_draws=ate_draws,
            att=att,
            att_hdi=att_hdi,
            att_draws=att_draws,
            icate_mean=icate_mean,
            icate_lo=icate_lo,
            icate_hi=icate_hi,
            retained_rows=np.flatnonzero(kept),
            suppressed_treated=sup_t,
            suppressed_control=sup_c,
            rmse=group_rmse,
            rhat=group_rhat,
            clinical_flag=bool(abs(ate) >= config.mcid),
            tmle_epsilon=epsilon,
            tmle_fallbacks=fallbacks,
        )
    return out


def _derived_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(stream,)).generate_state(1)[0])


def run_causal(data: Dataset, config: CausalConfig) -> CausalReport:
    """Run the full pipeline on a loaded dataset.

    Weights are rescaled to mean one; the confounder matrix (group
    indicator included) is one-hot encoded; the propensity ensemble is fit
    whenever its score is used as a covariate or the fluctuation needs it.
    Support rules are evaluated within each group before any averaging.
    """
    data = rescale_weights(data)
    t = data.treatment()
    y = data.response()
    w = data.weights()
    glab = data.group_labels()
    if not np.all((t == 0.0) | (t == 1.0)) or t.min() == t.max():
        raise UsageError("treatment must be binary with both arms present")

    X_conf = encode_design_matrix(data, "full_one_hot", roles=("confounder", "group"))
    hp = config.hyperparams
    need_ps = config.use_ps_covariate or config.use_tmle
    ps = None
    if need_ps:
        ps_hp = replace(hp, rng_seed=_derived_seed(hp.rng_seed, 1))
        ps = fit_propensity(X_conf, t, w, ps_hp)

    X_resp = X_conf.with_column(data.treatment_spec.name, t)
    if config.use_ps_covariate:
        assert ps is not None
        X_resp = augment_with_ps(X_resp, ps)
    X_treated, X_control = counterfactual_matrices(X_resp, data.treatment_spec.name)

    resp_hp = replace(hp, rng_seed=_derived_seed(hp.rng_seed, 2))
    post = fit_bart_continuous(
        X_resp, y, w, resp_hp, predict_on=[X_resp, X_treated, X_control]
    )
    pred_t = predict_posterior(post, 1)
    pred_c = predict_posterior(post, 2)
    tau = individual_effects(post, 1, 2)

    is_treated = t == 1.0
    pred_f = np.where(is_treated[None, :], pred_t, pred_c)
    pred_cf = np.where(is_treated[None, :], pred_c, pred_t)
    sigma_f = pred_f.std(axis=0, ddof=1)
    sigma_cf = pred_cf.std(axis=0, ddof=1)

    keep = np.ones(data.n_rows, dtype=bool)
    if config.support_rule != "none":
        for label in np.unique(glab):
            rows = glab == label
            if config.support_rule == "sd":
                keep[rows] = support_rule_sd(
                    sigma_f[rows], sigma_cf[rows], config.support_cut
                )
            else:
                keep[rows] = support_rule_chisq(
                    sigma_f[rows], sigma_cf[rows], config.support_p
                )

    tmle_inputs = None
    if config.use_tmle:
        assert ps is not None
        bounds = config.outcome_bounds
        if bounds is None:
            spec_bounds = data.response_spec.bounds
            bounds = spec_bounds if spec_bounds is not None else (
                float(np.min(y)),
                float(np.max(y)),
            )
        if not bounds[0] < bounds[1]:
            bounds = (bounds[0] - 0.5, bounds[1] + 0.5)
        lo, hi = config.ps_truncation
        tmle_inputs = {
            "qbar_treated_draws": pred_t,
            "qbar_control_draws": pred_c,
            "g": np.clip(ps.mean, lo, hi),
            "outcome_bounds": bounds,
        }

    results = summarize(
        tau,
        t,
        glab,
        w,
        config,
        n_chains=resp_hp.n_chains,
        keep=keep,
        y=y,
        factual_mean=pred_f.mean(axis=0),
        tmle_inputs=tmle_inputs,
    )
    return CausalReport(
        results=results,
        config=config,
        n_chains=resp_hp.n_chains,
        propensity=ps,
        response_posterior=post,
        treatment=t,
        weights=w,
        groups=glab,
    )
