"""Render figures from featclash summary CSVs.

One image per error metric for a given experiment family: counterexample
count on a log x-axis, one line per group (feature, counterexample type,
training size, ... depending on the family), and a shaded band between the
bootstrap interval columns.  Output is deterministic: fixed style, no
timestamps or hostnames embedded.

Usage:
    featclash-plots summary.csv --family hardness --out figures/
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import matplotlib
import pandas as pd

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

METRICS = ("weak_only_err", "strong_only_err", "both_err", "neither_err")
METRIC_TITLES = {
    "weak_only_err": "weak-only error",
    "strong_only_err": "strong-only error",
    "both_err": "both error",
    "neither_err": "neither error",
}

AXIS_COLUMNS = ("family", "strong_feature", "base_size", "vocab", "k",
                "epsilon", "purity", "ce_mix", "n_ce", "n_extra")

# Fallback legend order: features from hardest to easiest, as measured by
# the hardness probe's error-curve area.
HARDNESS_ORDER = ("contains-first", "adjacent-duplicate",
                  "first-last-duplicate", "prefix-duplicate", "contains-1")

# Which columns identify a line within each family, and which column is the
# x axis (n_ce everywhere except the control family).
FAMILY_GROUPING = {
    "hardness": (("strong_feature",), "n_ce"),
    "ce-type": (("strong_feature", "ce_mix"), "n_ce"),
    "train-size": (("strong_feature", "base_size"), "n_ce"),
    "multi-weak": (("k", "purity"), "n_ce"),
    "noise": (("strong_feature", "epsilon"), "n_ce"),
    "multi-strong": (("strong_feature",), "n_ce"),
    "vocab": (("strong_feature", "vocab"), "n_ce"),
    "control": (("strong_feature",), "n_extra"),
    "fixed-size": (("strong_feature",), "n_ce"),
}

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "svg.hashsalt": "featclash",
}


class SchemaError(ValueError):
    """The summary CSV does not have the expected columns."""


def load_summary(csv_path) -> pd.DataFrame:
    df = pd.read_csv(csv_path, dtype=str, keep_default_na=False)
    needed = list(AXIS_COLUMNS) + [f"{m}_{s}" for m in METRICS
                                   for s in ("mean", "lo", "hi")]
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise SchemaError(f"{csv_path}: missing columns {missing}")
    return df


def hardness_rank(hardness_json) -> dict[str, float]:
    """Feature -> error-curve AUC, for legend ordering (descending)."""
    if hardness_json is None:
        return {feat: -i for i, feat in enumerate(HARDNESS_ORDER)}
    with open(hardness_json, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    return {e["feature"]: float(e["error_auc"]) for e in entries}


def _group_sort_key(group_values: tuple[str, ...], group_cols: tuple[str, ...],
                    ranks: dict[str, float]):
    key = []
    for col, value in zip(group_cols, group_values):
        if col == "strong_feature":
            key.append(-ranks.get(value, float("-inf")))
        else:
            try:
                key.append(float(value))
            except ValueError:
                key.append(value)
    return tuple(key)


def render_family(df: pd.DataFrame, family: str, out_dir: Path,
                  metrics=METRICS, fmt: str = "png",
                  hardness_json=None) -> list[Path]:
    """Write one image per metric for the family; returns the paths."""
    if family not in FAMILY_GROUPING:
        raise SchemaError(f"unknown family {family!r}; "
                          f"expected one of {sorted(FAMILY_GROUPING)}")
    group_cols, x_col = FAMILY_GROUPING[family]
    rows = df[df["family"] == family].copy()
    if rows.empty:
        print(f"warning: no rows for family {family!r}", file=sys.stderr)
        return []
    rows["_x"] = rows[x_col].astype(float)
    ranks = hardness_rank(hardness_json)
    groups = sorted({tuple(r) for r in rows[list(group_cols)].itertuples(index=False)},
                    key=lambda g: _group_sort_key(g, group_cols, ranks))
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    with plt.rc_context(STYLE):
        for metric in metrics:
            fig, ax = plt.subplots()
            for group in groups:
                mask = pd.Series(True, index=rows.index)
                for col, value in zip(group_cols, group):
                    mask &= rows[col] == value
                sub = rows[mask].sort_values("_x")
                sub = sub[sub[f"{metric}_mean"] != ""]
                if sub.empty:
                    continue
                x = sub["_x"].to_numpy()
                mean = sub[f"{metric}_mean"].astype(float).to_numpy()
                lo = sub[f"{metric}_lo"].astype(float).to_numpy()
                hi = sub[f"{metric}_hi"].astype(float).to_numpy()
                label = ", ".join(f"{c}={v}" if c != "strong_feature" else v
                                  for c, v in zip(group_cols, group))
                line, = ax.plot(x, mean, marker="o", label=label)
                if (hi > lo).any():
                    ax.fill_between(x, lo, hi, alpha=0.2,
                                    color=line.get_color())
            if (rows["_x"] > 0).all():
                ax.set_xscale("log")
            else:
                ax.set_xscale("symlog", linthresh=1)
            ax.set_xlabel(x_col.replace("_", " "))
            ax.set_ylabel(METRIC_TITLES[metric])
            ax.set_ylim(-0.02, 1.02)
            ax.set_title(f"{family}: {METRIC_TITLES[metric]}")
            ax.legend(fontsize=8)
            path = out_dir / f"{family}_{metric}.{fmt}"
            fig.savefig(path, metadata=_no_provenance_metadata(fmt))
            plt.close(fig)
            written.append(path)
    return written


def _no_provenance_metadata(fmt: str):
    if fmt == "png":
        return {"Software": None}
    if fmt == "svg":
        return {"Date": None}
    return None


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="featclash-plots",
        description="Render figures from a featclash summary CSV")
    parser.add_argument("summary", help="summary.csv from 'featclash aggregate'")
    parser.add_argument("--family", required=True,
                        choices=sorted(FAMILY_GROUPING))
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--metrics", nargs="+", default=list(METRICS),
                        choices=METRICS)
    parser.add_argument("--format", default="png", choices=("png", "svg", "pdf"))
    parser.add_argument("--hardness", default=None,
                        help="hardness.json for legend ordering")
    args = parser.parse_args(argv)
    try:
        df = load_summary(args.summary)
        written = render_family(df, args.family, Path(args.out),
                                metrics=tuple(args.metrics), fmt=args.format,
                                hardness_json=args.hardness)
    except (SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
