"""Command-line entry point.

Four commands: ``causal`` (the full pipeline), ``baseline`` (weighted
GLMs), ``trend fit`` (decay curve with bootstrap intervals), and
``trend simulate`` (the gateway recurrence).  Every run computes all
artifacts in memory first and only then writes into --out-dir, so failed
runs leave no partial outputs.  Exit codes: 0 success, 2 schema or input
problems, 3 model fitting failures, 4 output I/O failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bart import BartHyperparams
from .causal import CausalConfig, run_causal
from .dataset import (
    binarize_outcome,
    encode_design_matrix,
    load_dataset,
    load_schema,
    rescale_weights,
)
from .errors import CellError, ModelError, SchemaError, SchemaMismatch, UsageError
from .linear import effect_ci, fit_weighted_gaussian, fit_weighted_logistic
from .serialize import to_json
from .svgplot import LineSeries, line_chart
from .trends import (
    GatewaySimConfig,
    TrendSeries,
    bootstrap_prediction_interval,
    fit_exp_decay,
    nyts_ecig_series,
    nyts_smoking_series,
    simulate_gateway,
)

EXIT_SCHEMA = 2
EXIT_FIT = 3
EXIT_IO = 4

__all__ = ["main"]


def _g17(v: float) -> str:
    return f"{float(v):.17g}"


def _safe_name(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-." else "_" for c in label)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causal-trees",
        description="Tree-ensemble causal inference with linear and trend baselines.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("causal", help="run the full causal pipeline")
    pc.add_argument("data", help="input CSV")
    pc.add_argument("schema", help="JSON column schema")
    pc.add_argument("--support", choices=("none", "sd", "chisq"), default="none")
    pc.add_argument("--cut", type=float, default=1.0, help="sd-rule slack")
    pc.add_argument("--p", type=float, default=0.05, help="chisq-rule tail probability")
    pc.add_argument("--no-tmle", action="store_true")
    pc.add_argument("--no-ps-covariate", action="store_true")
    pc.add_argument("--mcid", type=float, default=1.0)
    pc.add_argument("--chains", type=int)
    pc.add_argument("--draws", type=int)
    pc.add_argument("--burnin", type=int)
    pc.add_argument("--trees", type=int)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--fast", action="store_true",
                    help="desk-scale profile: 2 chains x 250 draws, 500 burn-in, 50 trees")
    pc.add_argument("--out-dir", default="out")

    pb = sub.add_parser("baseline", help="weighted GLM comparison models")
    pb.add_argument("data")
    pb.add_argument("schema")
    pb.add_argument("--family", choices=("logistic", "gaussian"), required=True)
    pb.add_argument("--outcome", choices=("binary", "delta"), required=True)
    pb.add_argument("--out-dir", default="out")

    pt = sub.add_parser("trend", help="prevalence trend models")
    tsub = pt.add_subparsers(dest="subcommand", required=True)

    tf = tsub.add_parser("fit", help="exponential decay with bootstrap intervals")
    tf.add_argument("series", help="CSV with year,prevalence columns")
    tf.add_argument("--horizon", type=int, nargs="+", required=True)
    tf.add_argument("--boot", type=int, default=10000)
    tf.add_argument("--level", type=float, default=0.95)
    tf.add_argument("--seed", type=int, default=0)
    tf.add_argument("--out-dir", default="out")

    ts = tsub.add_parser("simulate", help="counterfactual gateway recurrence")
    ts.add_argument("series", nargs="?", help="smoking CSV; embedded fixture when omitted")
    ts.add_argument("--ecig", help="e-cigarette CSV; embedded fixture when omitted")
    ts.add_argument("--k", type=float, action="append",
                    help="gateway proportion; repeatable (default 0, 0.09, 0.25)")
    ts.add_argument("--cutoff", type=int, default=2009)
    ts.add_argument("--out-dir", default="out")
    return parser


def _hyperparams(args) -> BartHyperparams:
    kw: dict = {}
    if args.fast:
        kw.update(n_chains=2, n_draws=250, burn_in=500, n_trees=50)
    if args.chains is not None:
        kw["n_chains"] = args.chains
    if args.draws is not None:
        kw["n_draws"] = args.draws
    if args.burnin is not None:
        kw["burn_in"] = args.burnin
    if args.trees is not None:
        kw["n_trees"] = args.trees
    kw["rng_seed"] = args.seed
    return BartHyperparams(**kw)


def _read_series(path: str) -> TrendSeries:
    text = Path(path).read_text(encoding="utf-8")
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows or [c.strip().lower() for c in rows[0][:2]] != ["year", "prevalence"]:
        raise SchemaMismatch(f"{path}: expected a year,prevalence header")
    years: list[int] = []
    prev: list[float] = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) < 2:
            raise CellError(f"{path}: row {i} has fewer than 2 cells")
        try:
            years.append(int(row[0]))
            prev.append(float(row[1]))
        except ValueError:
            raise CellError(f"{path}: row {i} is not numeric") from None
    return TrendSeries(tuple(years), tuple(prev))


def _cmd_causal(args) -> tuple[dict[str, str], dict]:
    schema = load_schema(args.schema)
    data = load_dataset(args.data, schema)
    config = CausalConfig(
        support_rule=args.support,
        support_cut=args.cut,
        support_p=args.p,
        use_ps_covariate=not args.no_ps_covariate,
        use_tmle=not args.no_tmle,
        mcid=args.mcid,
        hyperparams=_hyperparams(args),
    )
    report = run_causal(data, config)

    artifacts: dict[str, str] = {}
    groups: dict[str, dict] = {}
    for label in sorted(report.results):
        res = report.results[label]
        groups[label] = {
            "n": res.n,
            "n_treated": res.n_treated,
            "ate": res.ate,
            "ate_hdi": list(res.ate_hdi),
            "att": res.att,
            "att_hdi": list(res.att_hdi) if res.att_hdi is not None else None,
            "suppressed_treated": res.suppressed_treated,
            "suppressed_control": res.suppressed_control,
            "rmse": res.rmse,
            "rhat": res.rhat,
            "clinical_flag": res.clinical_flag,
            "tmle_fallbacks": res.tmle_fallbacks,
        }
    artifacts["result.json"] = to_json(
        {
            "command": "causal",
            "support_rule": config.support_rule,
            "mcid": config.mcid,
            "use_tmle": config.use_tmle,
            "use_ps_covariate": config.use_ps_covariate,
            "groups": groups,
        }
    )

    per_chain = report.results[next(iter(report.results))].ate_draws.size // report.n_chains
    for label in sorted(report.results):
        res = report.results[label]
        safe = _safe_name(label)
        lines = ["chain,draw,ate"]
        chain_series = []
        for c in range(report.n_chains):
            block = res.ate_draws[c * per_chain : (c + 1) * per_chain]
            for d, v in enumerate(block):
                lines.append(f"{c},{d},{_g17(v)}")
            chain_series.append(
                LineSeries(f"chain {c}", tuple(range(per_chain)), tuple(block))
            )
        artifacts[f"trace_{safe}.csv"] = "\n".join(lines) + "\n"
        artifacts[f"trace_{safe}.svg"] = line_chart(
            chain_series,
            title=f"ATE trace, group {label}",
            xlabel="draw",
            ylabel="ate",
            version=__version__,
        )

        order = np.argsort(res.icate_mean, kind="stable")
        rows = ["row,icate_mean,icate_lo,icate_hi"]
        for j in order:
            src = data.row_index[res.retained_rows[j]]
            rows.append(
                f"{src},{_g17(res.icate_mean[j])},{_g17(res.icate_lo[j])},"
                f"{_g17(res.icate_hi[j])}"
            )
        artifacts[f"waterfall_{safe}.csv"] = "\n".join(rows) + "\n"
        rank = tuple(range(order.size))
        artifacts[f"waterfall_{safe}.svg"] = line_chart(
            [
                LineSeries("icate mean", rank, tuple(res.icate_mean[order])),
                LineSeries("hdi lo", rank, tuple(res.icate_lo[order]), dashed=True),
                LineSeries("hdi hi", rank, tuple(res.icate_hi[order]), dashed=True),
            ],
            title=f"Individual effects, group {label}",
            xlabel="row rank",
            ylabel="effect",
            version=__version__,
        )

    meta = {
        "command": "causal",
        "inputs": {"data": args.data, "schema": args.schema},
        "config": {
            "support_rule": config.support_rule,
            "cut": config.support_cut,
            "p": config.support_p,
            "use_tmle": config.use_tmle,
            "use_ps_covariate": config.use_ps_covariate,
            "mcid": config.mcid,
            "n_trees": config.hyperparams.n_trees,
            "n_chains": config.hyperparams.n_chains,
            "n_draws": config.hyperparams.n_draws,
            "burn_in": config.hyperparams.burn_in,
        },
        "seed": args.seed,
    }
    return artifacts, meta


def _cmd_baseline(args) -> tuple[dict[str, str], dict]:
    pairing = {"logistic": "binary", "gaussian": "delta"}
    if pairing[args.family] != args.outcome:
        raise UsageError(
            f"--family {args.family} requires --outcome {pairing[args.family]}"
        )
    schema = load_schema(args.schema)
    data = rescale_weights(load_dataset(args.data, schema))
    X = encode_design_matrix(
        data, "reference_coded", roles=("treatment", "confounder", "group")
    )
    y = data.response()
    w = data.weights()
    if args.outcome == "binary":
        y = binarize_outcome(y)
        fit = fit_weighted_logistic(X, y, w)
    else:
        fit = fit_weighted_gaussian(X, y, w)
    columns = {}
    for name in fit.columns:
        est, lo, hi = effect_ci(fit, name)
        columns[name] = {
            "estimate": est,
            "ci": [lo, hi],
            "coefficient": fit.coefficient(name),
            "se": fit.se(name),
        }
    artifacts = {
        "result.json": to_json(
            {
                "command": "baseline",
                "family": fit.family,
                "outcome": args.outcome,
                "n": fit.n,
                "weight_sum": fit.weight_sum,
                "converged": fit.converged,
                "iterations": fit.iterations,
                "columns": columns,
            }
        )
    }
    meta = {
        "command": "baseline",
        "inputs": {"data": args.data, "schema": args.schema},
        "config": {"family": args.family, "outcome": args.outcome},
        "seed": None,
    }
    return artifacts, meta


def _cmd_trend_fit(args) -> tuple[dict[str, str], dict]:
    series = _read_series(args.series)
    fit = fit_exp_decay(series)
    band = bootstrap_prediction_interval(
        fit,
        series,
        args.horizon,
        n_boot=args.boot,
        level=args.level,
        rng_seed=args.seed,
    )
    lines = ["year,point,lo,hi"]
    for i, year in enumerate(band.years):
        lines.append(
            f"{year},{_g17(band.point[i])},{_g17(band.lo[i])},{_g17(band.hi[i])}"
        )
    grid = tuple(range(min(series.years), max(max(series.years), max(band.years)) + 1))
    svg = line_chart(
        [
            LineSeries("observed", tuple(series.years), tuple(series.prevalence)),
            LineSeries("fitted", grid, tuple(fit.predict(grid))),
            LineSeries("pi lo", band.years, tuple(band.lo), dashed=True),
            LineSeries("pi hi", band.years, tuple(band.hi), dashed=True),
        ],
        title="Exponential decay fit",
        xlabel="year",
        ylabel="prevalence (%)",
        version=__version__,
    )
    artifacts = {"trend_fit.csv": "\n".join(lines) + "\n", "trend_fit.svg": svg}
    meta = {
        "command": "trend fit",
        "inputs": {"series": args.series},
        "config": {
            "horizon": list(args.horizon),
            "boot": args.boot,
            "level": args.level,
            "alpha": fit.alpha,
            "beta": fit.beta,
            "dropped_refits": band.n_dropped,
        },
        "seed": args.seed,
    }
    return artifacts, meta


def _cmd_trend_simulate(args) -> tuple[dict[str, str], dict]:
    smoking = _read_series(args.series) if args.series else nyts_smoking_series()
    ecig = _read_series(args.ecig) if args.ecig else nyts_ecig_series()
    ks = args.k if args.k else [0.0, 0.09, 0.25]
    sims = {
        k: simulate_gateway(smoking, ecig, GatewaySimConfig(k=k, cutoff_year=args.cutoff))
        for k in ks
    }
    header = "year,observed," + ",".join(f"k={k:g}" for k in ks)
    lines = [header]
    for i, year in enumerate(smoking.years):
        cells = [str(year), _g17(smoking.prevalence[i])]
        cells += [_g17(sims[k].prevalence[i]) for k in ks]
        lines.append(",".join(cells))
    series_list = [
        LineSeries("observed smoking", tuple(smoking.years), tuple(smoking.prevalence)),
        LineSeries("observed e-cigarette", tuple(ecig.years), tuple(ecig.prevalence)),
    ] + [
        LineSeries(
            f"counterfactual k={k:g}",
            tuple(sims[k].years),
            tuple(sims[k].prevalence),
            dashed=True,
        )
        for k in ks
    ]
    svg = line_chart(
        series_list,
        title="Gateway simulation",
        xlabel="year",
        ylabel="prevalence (%)",
        version=__version__,
    )
    artifacts = {
        "trend_simulate.csv": "\n".join(lines) + "\n",
        "trend_simulate.svg": svg,
    }
    meta = {
        "command": "trend simulate",
        "inputs": {"series": args.series, "ecig": args.ecig},
        "config": {"k": list(ks), "cutoff": args.cutoff},
        "seed": None,
    }
    return artifacts, meta


def _dispatch(args) -> tuple[dict[str, str], dict]:
    if args.command == "causal":
        return _cmd_causal(args)
    if args.command == "baseline":
        return _cmd_baseline(args)
    if args.subcommand == "fit":
        return _cmd_trend_fit(args)
    return _cmd_trend_simulate(args)


def _emit_error(exc: BaseException) -> None:
    sys.stderr.write(to_json({"error": type(exc).__name__, "message": str(exc)}))


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    started = time.time()
    try:
        artifacts, meta = _dispatch(args)
    except SchemaError as exc:
        _emit_error(exc)
        return EXIT_SCHEMA
    except ModelError as exc:
        _emit_error(exc)
        return EXIT_FIT
    except OSError as exc:
        _emit_error(exc)
        return EXIT_SCHEMA

    meta["version"] = __version__
    meta["wall_time_s"] = time.time() - started
    meta["outputs"] = sorted(artifacts) + ["manifest.json"]
    artifacts["manifest.json"] = to_json(meta)
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, text in sorted(artifacts.items()):
            (out_dir / name).write_text(text, encoding="utf-8")
    except OSError as exc:
        _emit_error(exc)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
