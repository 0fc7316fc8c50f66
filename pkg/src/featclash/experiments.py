"""Declarative sweep families and a resumable runner.

Each family expands to a grid of dataset/training cells, run over several
seeds.  One CSV row is written per (cell, seed); completed rows are detected
on rerun and skipped, so interrupted sweeps can resume.  Aggregation groups
rows by cell and attaches percentile-bootstrap intervals per error metric.

Families:

  hardness      error vs counterexample count, one line per strong feature
  ce-type       same grid but all-weak-only or all-strong-only counterexamples
  train-size    varying initial training set size at fixed counterexample counts
  multi-weak    k = 1..3 weak features, impure strong-only counterexamples,
                plus a pure-counterexample arm at k = 3
  noise         label noise levels on the hardness grid
  multi-strong  the label is a disjunction of several strong features
  vocab         vocabulary size variants of the hardness grid
  control       extra non-adversarial examples instead of counterexamples
  fixed-size    counterexamples replace base examples (constant training size)
"""
from __future__ import annotations

import csv
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace

from . import datagen, neural, trainer
from .datagen import PURITY_PURE, PURITY_REMOVE_AT_MOST_ONE, DatasetConfig
from .errors import ConfigError
from .metrics import bootstrap_ci

FEATURES_ALL = (
    "contains-1",
    "prefix-duplicate",
    "first-last-duplicate",
    "adjacent-duplicate",
    "contains-first",
)

MIX_EVEN = "even"
MIX_WEAK_ONLY = "weak-only"
MIX_STRONG_ONLY = "strong-only"
MIX_FRACTIONS = {
    MIX_EVEN: (0.5, 0.5),
    MIX_WEAK_ONLY: (1.0, 0.0),
    MIX_STRONG_ONLY: (0.0, 1.0),
}

# Reserved symbols hosting the weak features, in order.
WEAK_SYMBOLS = (2, 3, 4)


@dataclass(frozen=True)
class ScaleProfile:
    name: str
    vocab_size: int
    base_size: int
    embed_dim: int
    hidden_dim: int
    mlp_hidden: int
    ce_grid: tuple[int, ...]
    seeds: tuple[int, ...]
    val_size: int
    n_test_per_region: int
    hardness_train_size: int
    hardness_val_size: int
    dtype: str = "float32"

    def model_config(self, vocab_size: int | None = None,
                     seq_len: int = 5) -> neural.ModelConfig:
        return neural.ModelConfig(
            vocab_size=self.vocab_size if vocab_size is None else vocab_size,
            embed_dim=self.embed_dim, hidden_dim=self.hidden_dim,
            mlp_hidden=self.mlp_hidden, seq_len=seq_len, dtype=self.dtype)


PROFILES = {
    "paper": ScaleProfile(
        name="paper", vocab_size=50_000, base_size=200_000,
        embed_dim=250, hidden_dim=250, mlp_hidden=250,
        ce_grid=(10, 100, 1_000, 10_000, 50_000, 100_000),
        seeds=(42, 43, 44, 45, 46),
        val_size=10_000, n_test_per_region=2_000,
        hardness_train_size=200_000, hardness_val_size=10_000,
    ),
    "desk": ScaleProfile(
        name="desk", vocab_size=5_000, base_size=50_000,
        embed_dim=64, hidden_dim=64, mlp_hidden=64,
        ce_grid=(2, 25, 250, 2_500, 12_500, 25_000),
        seeds=(42, 43, 44),
        val_size=5_000, n_test_per_region=2_000,
        hardness_train_size=50_000, hardness_val_size=5_000,
    ),
}

FAMILIES = ("hardness", "ce-type", "train-size", "multi-weak", "noise",
            "multi-strong", "vocab", "control", "fixed-size")

ROW_COLUMNS = (
    "family", "strong_feature", "base_size", "vocab", "k", "epsilon",
    "purity", "ce_mix", "n_ce", "seed",
    "weak_only_err", "strong_only_err", "both_err", "neither_err",
    "best_epoch", "wall_s", "n_extra",
)
AXIS_COLUMNS = ("family", "strong_feature", "base_size", "vocab", "k",
                "epsilon", "purity", "ce_mix", "n_ce", "n_extra")
METRIC_COLUMNS = ("weak_only_err", "strong_only_err", "both_err", "neither_err")


@dataclass(frozen=True)
class SweepSpec:
    family: str
    profile: str = "desk"
    features: tuple[str, ...] | None = None
    ce_grid: tuple[int, ...] | None = None
    seeds: tuple[int, ...] | None = None
    base_sizes: tuple[int, ...] | None = None
    noise_rates: tuple[float, ...] = (0.0, 0.05, 0.1)
    vocab_sizes: tuple[int, ...] = (500, 5_000, 50_000)
    extras_grid: tuple[int, ...] | None = None
    include_expensive: bool = False
    max_epochs: int = 100

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigError(f"family: {self.family!r} is not one of {FAMILIES}")
        if self.profile not in PROFILES:
            raise ConfigError(f"profile: {self.profile!r} is not one of "
                              f"{tuple(PROFILES)}")
        for f in self.features or ():
            try:
                datagen.parse_feature(f)
            except ValueError as exc:
                raise ConfigError(f"features: {exc}") from exc
        if self.seeds is not None and not self.seeds:
            raise ConfigError("seeds: must be nonempty")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown sweep config keys: {sorted(unknown)}")
        kwargs = dict(d)
        for key in ("features", "ce_grid", "seeds", "base_sizes", "noise_rates",
                    "vocab_sizes", "extras_grid"):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = tuple(kwargs[key])
        spec = cls(**kwargs)
        spec.validate()
        return spec

    def resolved_seeds(self) -> tuple[int, ...]:
        return self.seeds if self.seeds is not None else PROFILES[self.profile].seeds


@dataclass(frozen=True)
class Cell:
    """One sweep grid point: axis values plus the configs that realize it."""

    axes: tuple[tuple[str, str], ...]  # (column, value) in AXIS_COLUMNS order
    dataset: DatasetConfig
    model: neural.ModelConfig
    train: trainer.TrainConfig

    def axis_dict(self) -> dict[str, str]:
        return dict(self.axes)


def _make_cell(spec: SweepSpec, profile: ScaleProfile, *,
               feature_label: str, strong_features: tuple[str, ...],
               n_ce: int, mix: str, k: int = 1, epsilon: float = 0.0,
               purity: str = PURITY_PURE, base_size: int | None = None,
               vocab: int | None = None, n_extra: int = 0,
               fixed_total: int | None = None) -> Cell:
    base = profile.base_size if base_size is None else base_size
    vocab = profile.vocab_size if vocab is None else vocab
    ds = DatasetConfig(
        vocab_size=vocab,
        base_size=base,
        strong_features=strong_features,
        weak_symbols=WEAK_SYMBOLS[:k],
        n_counterexamples=n_ce,
        ce_mix=MIX_FRACTIONS[mix],
        ce_purity=purity,
        noise_rate=epsilon,
        n_default_extra=n_extra,
        fixed_total_size=fixed_total,
        val_size=profile.val_size,
        n_test_per_region=profile.n_test_per_region,
    )
    ds.validate()
    axes = (
        ("family", spec.family),
        ("strong_feature", feature_label),
        ("base_size", str(base)),
        ("vocab", str(vocab)),
        ("k", str(k)),
        ("epsilon", _fmt_float(epsilon)),
        ("purity", purity),
        ("ce_mix", mix),
        ("n_ce", str(n_ce)),
        ("n_extra", str(n_extra)),
    )
    return Cell(axes=axes, dataset=ds,
                model=profile.model_config(vocab_size=vocab, seq_len=ds.seq_len),
                train=trainer.TrainConfig(max_epochs=spec.max_epochs))


def _fmt_float(x: float) -> str:
    return f"{x:g}"


def expand(spec: SweepSpec) -> list[Cell]:
    """Materialize the family's grid as a list of cells."""
    spec.validate()
    profile = PROFILES[spec.profile]
    grid = spec.ce_grid if spec.ce_grid is not None else profile.ce_grid
    features = spec.features if spec.features is not None else FEATURES_ALL
    cells: list[Cell] = []
    fam = spec.family

    if fam == "hardness":
        for feat in features:
            for n_ce in grid:
                cells.append(_make_cell(spec, profile, feature_label=feat,
                                        strong_features=(feat,), n_ce=n_ce,
                                        mix=MIX_EVEN))
    elif fam == "ce-type":
        for feat in features:
            for mix in (MIX_WEAK_ONLY, MIX_STRONG_ONLY):
                for n_ce in grid:
                    cells.append(_make_cell(spec, profile, feature_label=feat,
                                            strong_features=(feat,), n_ce=n_ce,
                                            mix=mix))
    elif fam == "train-size":
        if spec.features is None:
            features = tuple(f for f in FEATURES_ALL if f != "contains-1")
        bases = spec.base_sizes
        if bases is None:
            scale = profile.base_size / 200_000
            bases = tuple(int(b * scale) for b in (100_000, 200_000, 1_000_000))
            if spec.include_expensive:
                bases = bases + (int(10_000_000 * scale),)
        for feat in features:
            for base in bases:
                for n_ce in grid:
                    cells.append(_make_cell(spec, profile, feature_label=feat,
                                            strong_features=(feat,), n_ce=n_ce,
                                            mix=MIX_EVEN, base_size=base))
    elif fam == "multi-weak":
        if spec.features is None:
            features = ("contains-first",)
        arms = [(1, PURITY_REMOVE_AT_MOST_ONE), (2, PURITY_REMOVE_AT_MOST_ONE),
                (3, PURITY_REMOVE_AT_MOST_ONE), (3, PURITY_PURE)]
        for feat in features:
            for k, purity in arms:
                for n_ce in grid:
                    cells.append(_make_cell(spec, profile, feature_label=feat,
                                            strong_features=(feat,), n_ce=n_ce,
                                            mix=MIX_EVEN, k=k, purity=purity))
    elif fam == "noise":
        for feat in features:
            for eps in spec.noise_rates:
                for n_ce in grid:
                    cells.append(_make_cell(spec, profile, feature_label=feat,
                                            strong_features=(feat,), n_ce=n_ce,
                                            mix=MIX_EVEN, epsilon=eps))
    elif fam == "multi-strong":
        combos = (
            ("prefix-duplicate", "first-last-duplicate"),
            ("adjacent-duplicate", "contains-first"),
            ("first-last-duplicate", "contains-first"),
        )
        for combo in combos:
            label = "+".join(combo)
            for n_ce in grid:
                cells.append(_make_cell(spec, profile, feature_label=label,
                                        strong_features=combo, n_ce=n_ce,
                                        mix=MIX_EVEN))
    elif fam == "vocab":
        for vocab in spec.vocab_sizes:
            for feat in features:
                for n_ce in grid:
                    cells.append(_make_cell(spec, profile, feature_label=feat,
                                            strong_features=(feat,), n_ce=n_ce,
                                            mix=MIX_EVEN, vocab=vocab))
    elif fam == "control":
        if spec.features is None:
            features = ("first-last-duplicate",)
        extras = spec.extras_grid
        if extras is None:
            extras = (0, profile.base_size // 4, profile.base_size // 2,
                      profile.base_size)
        for feat in features:
            for n_extra in extras:
                cells.append(_make_cell(spec, profile, feature_label=feat,
                                        strong_features=(feat,), n_ce=0,
                                        mix=MIX_EVEN, n_extra=n_extra))
    elif fam == "fixed-size":
        for feat in features:
            for n_ce in grid:
                cells.append(_make_cell(spec, profile, feature_label=feat,
                                        strong_features=(feat,), n_ce=n_ce,
                                        mix=MIX_EVEN,
                                        fixed_total=profile.base_size))
    return cells


def row_key(axis_values: dict[str, str], seed) -> str:
    return "|".join([axis_values[c] for c in AXIS_COLUMNS] + [str(seed)])


def run_cell(cell: Cell, seed: int) -> dict[str, str]:
    """Build the cell's data, train one model, evaluate the four regions."""
    t0 = time.perf_counter()
    ds_cfg = replace(cell.dataset, seed=seed)
    bundle = datagen.build_dataset(ds_cfg)
    train_cfg = replace(cell.train, seed=seed)
    params, history = trainer.train(cell.model, train_cfg, bundle.train,
                                    bundle.val)
    report = trainer.evaluate_regions(params, bundle.regions)
    wall = time.perf_counter() - t0
    row = cell.axis_dict()
    row.update({
        "seed": str(seed),
        "weak_only_err": _fmt_err(report.weak_only),
        "strong_only_err": _fmt_err(report.strong_only),
        "both_err": _fmt_err(report.both),
        "neither_err": _fmt_err(report.neither),
        "best_epoch": str(history.best_epoch),
        "wall_s": f"{wall:.3f}",
    })
    return row


def _fmt_err(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def read_rows(csv_path) -> list[dict[str, str]]:
    if not os.path.exists(csv_path):
        return []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _append_row(csv_path, row: dict[str, str]) -> None:
    new_file = not os.path.exists(csv_path) or os.path.getsize(csv_path) == 0
    with open(csv_path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=ROW_COLUMNS)
        if new_file:
            writer.writeheader()
        writer.writerow(row)
        fh.flush()


def run(spec: SweepSpec, csv_path, workers: int = 1,
        log=print) -> list[dict[str, str]]:
    """Run every (cell, seed) not already present in csv_path.

    Failures are recorded per cell (error printed, row skipped) and the run
    continues.  Returns all rows, including previously completed ones.
    """
    cells = expand(spec)
    seeds = spec.resolved_seeds()
    existing = read_rows(csv_path)
    done = {row_key(r, r["seed"]) for r in existing}
    jobs = [(cell, seed) for cell in cells for seed in seeds
            if row_key(cell.axis_dict(), seed) not in done]
    if log:
        log(f"[sweep {spec.family}] {len(jobs)} runs to do "
            f"({len(existing)} already in {csv_path})")
    failures = 0
    if workers <= 1:
        for cell, seed in jobs:
            failures += _run_one(cell, seed, csv_path, log)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_cell, cell, seed): (cell, seed)
                       for cell, seed in jobs}
            for fut in as_completed(futures):
                cell, seed = futures[fut]
                try:
                    row = fut.result()
                except Exception as exc:
                    failures += 1
                    if log:
                        log(f"  FAILED {row_key(cell.axis_dict(), seed)}: {exc}")
                    continue
                _append_row(csv_path, row)
                if log:
                    _log_row(log, row)
    if failures and log:
        log(f"[sweep {spec.family}] {failures} runs failed")
    return read_rows(csv_path)


def _run_one(cell: Cell, seed: int, csv_path, log) -> int:
    try:
        row = run_cell(cell, seed)
    except Exception as exc:
        if log:
            log(f"  FAILED {row_key(cell.axis_dict(), seed)}: {exc}")
        return 1
    _append_row(csv_path, row)
    if log:
        _log_row(log, row)
    return 0


def _log_row(log, row: dict[str, str]) -> None:
    log(f"  {row['strong_feature']:>22s} n_ce={row['n_ce']:>6s} "
        f"k={row['k']} seed={row['seed']} "
        f"weak-only={row['weak_only_err']} strong-only={row['strong_only_err']} "
        f"({row['wall_s']}s)")


SUMMARY_COLUMNS = tuple(AXIS_COLUMNS) + ("n_seeds",) + tuple(
    f"{m}_{s}" for m in METRIC_COLUMNS for s in ("mean", "lo", "hi"))


def aggregate(rows: list[dict[str, str]], iterations: int = 1_000,
              level: float = 0.95) -> list[dict[str, str]]:
    """Group result rows by cell; bootstrap a CI per error metric."""
    groups: dict[tuple, list[dict]] = {}
    order: list[tuple] = []
    for r in rows:
        key = tuple(r[c] for c in AXIS_COLUMNS)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(r)
    out = []
    for key in order:
        group = groups[key]
        summary = dict(zip(AXIS_COLUMNS, key))
        summary["n_seeds"] = str(len(group))
        for metric in METRIC_COLUMNS:
            values = [float(r[metric]) for r in group if r[metric] != ""]
            if not values:
                for s in ("mean", "lo", "hi"):
                    summary[f"{metric}_{s}"] = ""
                continue
            ci_seed = zlib.crc32("|".join(key).encode() + metric.encode())
            est = bootstrap_ci(values, iterations=iterations, level=level,
                               seed=ci_seed)
            summary[f"{metric}_mean"] = f"{est.mean:.6f}"
            summary[f"{metric}_lo"] = f"{est.lower:.6f}"
            summary[f"{metric}_hi"] = f"{est.upper:.6f}"
        out.append(summary)
    return out


def write_summary(csv_path, summaries: list[dict[str, str]]) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        writer.writerows(summaries)
