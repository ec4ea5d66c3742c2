"""Counterfactual gateway figure from the embedded survey series.

Simulates youth smoking prevalence as if the pre-2009 linear decline had
continued, with a configurable share of each year's e-cigarette uptake
added back on top, then renders observed and counterfactual curves into
one SVG and prints the per-year gap for each gateway proportion.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from causal_trees import __version__
from causal_trees.svgplot import LineSeries, line_chart
from causal_trees.trends import (
    GatewaySimConfig,
    nyts_ecig_series,
    nyts_smoking_series,
    simulate_gateway,
)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--k", type=float, action="append",
                        help="gateway proportion; repeatable (default 0, 0.09, 0.25)")
    parser.add_argument("--out", default="gateway.svg")
    args = parser.parse_args(argv)
    ks = args.k if args.k else [0.0, 0.09, 0.25]

    smoking = nyts_smoking_series()
    ecig = nyts_ecig_series()
    sims = {
        k: simulate_gateway(smoking, ecig, GatewaySimConfig(k=k)) for k in ks
    }

    header = ["year", "observed"] + [f"k={k:g}" for k in ks]
    print("  ".join(f"{h:>9}" for h in header))
    for i, year in enumerate(smoking.years):
        if year <= 2009:
            continue
        cells = [f"{year:>9}", f"{smoking.prevalence[i]:9.4f}"]
        cells += [f"{sims[k].prevalence[i]:9.4f}" for k in ks]
        print("  ".join(cells))

    series = [
        LineSeries("observed smoking", tuple(smoking.years), tuple(smoking.prevalence)),
        LineSeries("observed e-cigarette", tuple(ecig.years), tuple(ecig.prevalence)),
    ] + [
        LineSeries(f"counterfactual k={k:g}", tuple(sims[k].years),
                   tuple(sims[k].prevalence), dashed=True)
        for k in ks
    ]
    svg = line_chart(
        series,
        title="Observed smoking against continued-decline counterfactuals",
        xlabel="year",
        ylabel="prevalence (%)",
        version=__version__,
    )
    Path(args.out).write_text(svg, encoding="utf-8")
    print(f"\nwrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
