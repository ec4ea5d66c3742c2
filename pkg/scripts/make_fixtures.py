"""Regenerate the committed CSV fixtures under tests/data.

Every fixture is seeded, so reruns reproduce identical bytes; tests rely
on the committed copies, not on this script running first.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from causal_trees.trends import NYTS_CIG, NYTS_ECIG, NYTS_ECIG_YEARS, NYTS_YEARS

DATA_DIR = Path(__file__).resolve().parent.parent / "tests" / "data"


def _write(name: str, text: str) -> None:
    (DATA_DIR / name).write_text(text, encoding="utf-8")
    print(f"wrote {name}")


def _csv(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(c) for c in row))
    return "\n".join(lines) + "\n"


def make_randomized() -> None:
    """Randomized treatment, constant true effect 2.0, two groups."""
    rng = np.random.default_rng(20240811)
    n = 400
    x1 = rng.uniform(0, 1, n)
    x2 = rng.uniform(0, 1, n)
    x3 = rng.uniform(0, 1, n)
    region = rng.choice(["n", "s", "e", "w"], n)
    grp = rng.choice(["never", "ever"], n)
    t = (rng.uniform(0, 1, n) < 0.5).astype(int)
    y = 2.0 * t + np.sin(2 * np.pi * x1) + x2 ** 2 + rng.normal(0, 0.5, n)
    w = rng.uniform(0.5, 2.0, n)
    rows = [
        [f"{y[i]:.8f}", t[i], f"{x1[i]:.8f}", f"{x2[i]:.8f}", f"{x3[i]:.8f}",
         region[i], grp[i], f"{w[i]:.8f}"]
        for i in range(n)
    ]
    _write("randomized.csv",
           _csv(["dy", "vape", "x1", "x2", "x3", "region", "grp", "wt"], rows))
    _write("randomized_schema.json", json.dumps({
        "dy": {"role": "response", "kind": "numeric"},
        "vape": {"role": "treatment", "kind": "binary"},
        "x1": {"role": "confounder", "kind": "numeric"},
        "x2": {"role": "confounder", "kind": "numeric"},
        "x3": {"role": "confounder", "kind": "numeric"},
        "region": {"role": "confounder", "kind": "categorical",
                   "levels": ["n", "s", "e", "w"]},
        "grp": {"role": "group", "kind": "categorical",
                "levels": ["never", "ever"]},
        "wt": {"role": "weight", "kind": "numeric"},
    }, indent=2) + "\n")


def make_overlap_broken() -> None:
    """Treated and control mix below x1 = 0.7; above 0.85 only treated rows.

    Rows in the treated-only region have no control support, so their
    counterfactual predictions extrapolate and should be suppressed.
    """
    rng = np.random.default_rng(20240812)
    n = 500
    x1 = rng.uniform(0, 1, n)
    x2 = rng.uniform(0, 1, n)
    p = np.clip(0.5 + (x1 - 0.7) / 0.15 * 0.5, 0.5, 1.0)
    t = (rng.uniform(0, 1, n) < p).astype(int)
    y = 3.0 * x1 + 2.0 * t + np.where(x1 > 0.85, 9.0 * (x1 - 0.85), 0.0)
    y = y + rng.normal(0, 0.3, n)
    rows = [
        [f"{y[i]:.8f}", t[i], f"{x1[i]:.8f}", f"{x2[i]:.8f}"] for i in range(n)
    ]
    _write("overlap_broken.csv", _csv(["dy", "vape", "x1", "x2"], rows))
    _write("overlap_broken_schema.json", json.dumps({
        "dy": {"role": "response", "kind": "numeric"},
        "vape": {"role": "treatment", "kind": "binary"},
        "x1": {"role": "confounder", "kind": "numeric"},
        "x2": {"role": "confounder", "kind": "numeric"},
    }, indent=2) + "\n")


def make_path_shaped() -> None:
    """Survey-shaped fixture: 13 confounders, rare treatment, change-in-days outcome.

    Treatment load is carried by a single peer-use driver and the outcome
    surface is kept mild; heavier confounding leaves the counterfactual
    functional too autocorrelated for half-chain agreement at desk scale.
    """
    rng = np.random.default_rng(20240813)
    n = 1500
    age = rng.integers(12, 18, n)
    house = rng.integers(1, 6, n)
    income = rng.integers(1, 8, n)
    grades = rng.integers(1, 6, n)
    media = np.round(rng.gamma(2.0, 1.5, n), 1).clip(0, 10)
    base_days = np.where(rng.uniform(0, 1, n) < 0.85, 0,
                         rng.integers(1, 31, n)).astype(int)
    parent = (rng.uniform(0, 1, n) < 0.25).astype(int)
    peer = (rng.uniform(0, 1, n) < 0.30).astype(int)
    mental = (rng.uniform(0, 1, n) < 0.20).astype(int)
    rural = (rng.uniform(0, 1, n) < 0.40).astype(int)
    race = rng.choice(["a", "b", "c", "d"], n, p=[0.5, 0.2, 0.2, 0.1])
    sex = rng.choice(["f", "m"], n)
    region = rng.choice(["ne", "mw", "s", "w"], n)
    grp = np.where(base_days > 0, "ever",
                   np.where(rng.uniform(0, 1, n) < 0.15, "ever", "never"))

    logit = -3.75 + 0.8 * peer
    t = (rng.uniform(0, 1, n) < 1.0 / (1.0 + np.exp(-logit))).astype(int)

    drift = (0.6 * peer + 0.25 * (age - 14.5) - 0.05 * base_days
             + rng.normal(0, 1.2, n))
    tau = np.where(grp == "ever", 1.8, 0.9)
    follow = np.clip(np.round(base_days + drift + tau * t), 0, 30).astype(int)
    delta = follow - base_days
    w = np.round(rng.lognormal(0.0, 0.5, n), 6)

    rows = [
        [delta[i], t[i], age[i], house[i], income[i], grades[i],
         f"{media[i]:.1f}", base_days[i], parent[i], peer[i], mental[i],
         rural[i], race[i], sex[i], region[i], grp[i], f"{w[i]:.6f}"]
        for i in range(n)
    ]
    _write("path_shaped.csv", _csv(
        ["delta_days", "vape", "c_age", "c_house", "c_income", "c_grades",
         "c_media", "c_base_days", "c_parent", "c_peer", "c_mental",
         "c_rural", "c_race", "c_sex", "c_region", "grp", "wt"], rows))
    _write("path_shaped_schema.json", json.dumps({
        "delta_days": {"role": "response", "kind": "numeric",
                       "bounds": [-30, 30]},
        "vape": {"role": "treatment", "kind": "binary"},
        "c_age": {"role": "confounder", "kind": "numeric"},
        "c_house": {"role": "confounder", "kind": "numeric"},
        "c_income": {"role": "confounder", "kind": "numeric"},
        "c_grades": {"role": "confounder", "kind": "numeric"},
        "c_media": {"role": "confounder", "kind": "numeric"},
        "c_base_days": {"role": "confounder", "kind": "numeric",
                        "bounds": [0, 30]},
        "c_parent": {"role": "confounder", "kind": "binary"},
        "c_peer": {"role": "confounder", "kind": "binary"},
        "c_mental": {"role": "confounder", "kind": "binary"},
        "c_rural": {"role": "confounder", "kind": "binary"},
        "c_race": {"role": "confounder", "kind": "categorical",
                   "levels": ["a", "b", "c", "d"]},
        "c_sex": {"role": "confounder", "kind": "categorical",
                  "levels": ["f", "m"]},
        "c_region": {"role": "confounder", "kind": "categorical",
                     "levels": ["ne", "mw", "s", "w"]},
        "grp": {"role": "group", "kind": "categorical",
                "levels": ["never", "ever"]},
        "wt": {"role": "weight", "kind": "numeric"},
    }, indent=2) + "\n")


def make_twobytwo() -> None:
    """30/70 exposed and 10/90 unexposed events: odds ratio 3.857142..."""
    rows = []
    for exposed, event, count in ((1, 1, 30), (1, 0, 70), (0, 1, 10), (0, 0, 90)):
        rows += [[event, exposed]] * count
    _write("twobytwo.csv", _csv(["smoked_days", "exposed"], rows))
    _write("twobytwo_schema.json", json.dumps({
        "smoked_days": {"role": "response", "kind": "numeric", "bounds": [0, 30]},
        "exposed": {"role": "treatment", "kind": "binary"},
    }, indent=2) + "\n")


def make_trend_csvs() -> None:
    rows = [[y, f"{p}"] for y, p in zip(NYTS_YEARS, NYTS_CIG)]
    _write("nyts_smoking.csv", _csv(["year", "prevalence"], rows))
    rows = [[y, f"{p}"] for y, p in zip(NYTS_ECIG_YEARS, NYTS_ECIG)]
    _write("nyts_ecig.csv", _csv(["year", "prevalence"], rows))

    years = np.arange(2000, 2015)
    t = years - years[0]
    exact = 12.0 * np.exp(-0.08 * t)
    rows = [[int(y), f"{v:.12f}"] for y, v in zip(years, exact)]
    _write("decay_noiseless.csv", _csv(["year", "prevalence"], rows))

    rng = np.random.default_rng(20240814)
    noisy = exact + rng.normal(0, 0.3, len(years))
    rows = [[int(y), f"{v:.12f}"] for y, v in zip(years, noisy)]
    _write("decay_noisy.csv", _csv(["year", "prevalence"], rows))


def main() -> None:
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    make_randomized()
    make_overlap_broken()
    make_path_shaped()
    make_twobytwo()
    make_trend_csvs()


if __name__ == "__main__":
    main()
