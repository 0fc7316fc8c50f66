"""Command-line entry point: gen, train, hardness, sweep, aggregate, inspect.

Experiments are config-file driven (YAML); flags only override the seed,
scale profile, worker count, and output location.  Outputs are write-once:
existing files are refused unless --force is given.  The default output root
comes from the FEATCLASH_OUT environment variable (falling back to the
current directory).

Exit codes: 2 config error, 3 runtime failure, 4 training divergence.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from . import datagen, experiments, neural, trainer
from .datagen import DatasetConfig
from .errors import ConfigError, DivergenceError, FeatclashError
from .features import KIND_CONTAINS_SYMBOL, parse_feature, sites

EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_DIVERGENCE = 4

REGION_FILES = {
    "weak-only": "test_weak_only.jsonl",
    "strong-only": "test_strong_only.jsonl",
    "both": "test_both.jsonl",
    "neither": "test_neither.jsonl",
}

CONFIG_SECTIONS = {"dataset", "model", "train", "sweep", "hardness"}


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}")
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(doc) - CONFIG_SECTIONS
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    return doc


def out_dir(args) -> Path:
    if args.out:
        root = Path(args.out)
    else:
        root = Path(os.environ.get("FEATCLASH_OUT", "."))
    root.mkdir(parents=True, exist_ok=True)
    return root


def check_writable(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise FeatclashError(
            f"refusing to overwrite {path} (pass --force to allow)")


def dataset_config(doc: dict, args) -> DatasetConfig:
    section = doc.get("dataset")
    if section is None:
        raise ConfigError("config needs a 'dataset' section")
    cfg = DatasetConfig.from_dict(section)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def model_config(doc: dict, ds: DatasetConfig, profile_name: str) -> neural.ModelConfig:
    profile = experiments.PROFILES[profile_name]
    section = dict(doc.get("model") or {})
    allowed = {"embed_dim", "hidden_dim", "mlp_hidden", "dtype"}
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
    cfg = neural.ModelConfig(
        vocab_size=ds.vocab_size,
        embed_dim=section.get("embed_dim", profile.embed_dim),
        hidden_dim=section.get("hidden_dim", profile.hidden_dim),
        mlp_hidden=section.get("mlp_hidden", profile.mlp_hidden),
        seq_len=ds.seq_len,
        dtype=section.get("dtype", profile.dtype),
    )
    cfg.validate()
    return cfg


def train_config(doc: dict, args) -> trainer.TrainConfig:
    cfg = trainer.TrainConfig.from_dict(dict(doc.get("train") or {}))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(root: Path, ds: DatasetConfig, files: list[Path],
                   force: bool) -> None:
    manifest_path = root / "manifest.json"
    check_writable(manifest_path, force)
    hashes = {p.name: sha256_file(p) for p in files}
    content = hashlib.sha256(
        json.dumps([ds.to_dict(), hashes], sort_keys=True).encode()).hexdigest()
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump({"dataset": ds.to_dict(), "files": hashes,
                   "content_hash": content}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_gen(args) -> int:
    doc = load_config(args.config)
    ds = dataset_config(doc, args)
    root = out_dir(args)
    bundle = datagen.build_dataset(ds)
    outputs = {"train.jsonl": bundle.train, "val.jsonl": bundle.val}
    for region, fname in REGION_FILES.items():
        outputs[fname] = bundle.regions[region]
    paths = []
    for fname in outputs:
        check_writable(root / fname, args.force)
    for fname, examples in outputs.items():
        datagen.write_jsonl(root / fname, examples)
        paths.append(root / fname)
    write_manifest(root, ds, paths, args.force)
    print(f"gen: wrote {len(bundle.train)} train / {len(bundle.val)} val / "
          f"4x{ds.n_test_per_region} test examples to {root}")
    return 0


def cmd_train(args) -> int:
    doc = load_config(args.config)
    ds = dataset_config(doc, args)
    model_cfg = model_config(doc, ds, args.profile)
    train_cfg = train_config(doc, args)
    root = out_dir(args)
    for fname in ("checkpoint.bin", "history.jsonl", "report.json"):
        check_writable(root / fname, args.force)
    bundle = datagen.build_dataset(ds)
    params, history = trainer.train(model_cfg, train_cfg, bundle.train,
                                    bundle.val)
    report = trainer.evaluate_regions(params, bundle.regions)
    neural.save_checkpoint(root / "checkpoint.bin", params)
    history.write_jsonl(root / "history.jsonl")
    with open(root / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, indent=2)
        fh.write("\n")
    print(f"train: best epoch {history.best_epoch}/{history.epochs} "
          f"weak-only={report.weak_only:.4f} strong-only={report.strong_only:.4f} "
          f"both={report.both:.4f} neither={report.neither:.4f}")
    return 0


def cmd_hardness(args) -> int:
    doc = load_config(args.config) if args.config else {}
    section = dict(doc.get("hardness") or {})
    allowed = {"features", "train_size", "val_size", "seeds", "max_epochs"}
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown hardness config keys: {sorted(unknown)}")
    profile = experiments.PROFILES[args.profile]
    features = section.get("features")
    if args.feature:
        features = [args.feature]
    if not features:
        features = list(experiments.FEATURES_ALL)
    for f in features:
        parse_feature(f)
    seeds = tuple(section.get("seeds", (42, 43, 44)))
    if args.seed is not None:
        seeds = (args.seed,)
    ds = DatasetConfig(vocab_size=profile.vocab_size,
                       base_size=profile.base_size,
                       val_size=profile.val_size,
                       n_test_per_region=profile.n_test_per_region)
    probe = trainer.HardnessProbeConfig(
        dataset=ds,
        model=profile.model_config(),
        train=trainer.TrainConfig(max_epochs=section.get("max_epochs", 100)),
        train_size=section.get("train_size", profile.hardness_train_size),
        val_size=section.get("val_size", profile.hardness_val_size),
        seeds=seeds,
    )
    root = out_dir(args)
    out_path = root / "hardness.json"
    check_writable(out_path, args.force)
    results = []
    for feat in features:
        res = trainer.hardness_auc(feat, probe)
        results.append(res.to_dict())
        print(f"hardness: {feat:>22s} error-AUC={res.error_auc:.3f} "
              f"loss-AUC={res.loss_auc:.3f}")
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2)
        fh.write("\n")
    return 0


def cmd_sweep(args) -> int:
    if args.config:
        doc = load_config(args.config)
        section = dict(doc.get("sweep") or {})
        if args.family:
            section["family"] = args.family
        section.setdefault("profile", args.profile)
    else:
        if not args.family:
            raise ConfigError("sweep needs --family or a config file")
        section = {"family": args.family, "profile": args.profile}
    spec = experiments.SweepSpec.from_dict(section)
    if args.seed is not None:
        spec = replace(spec, seeds=(args.seed,))
    root = out_dir(args)
    csv_path = root / "results.csv"
    rows = experiments.run(spec, csv_path, workers=args.workers)
    print(f"sweep: {len(rows)} rows in {csv_path}")
    return 0


def cmd_aggregate(args) -> int:
    rows = experiments.read_rows(args.results)
    if not rows:
        raise FeatclashError(f"no rows found in {args.results}")
    root = out_dir(args)
    out_path = root / "summary.csv"
    check_writable(out_path, args.force)
    summaries = experiments.aggregate(rows)
    experiments.write_summary(out_path, summaries)
    print(f"aggregate: {len(summaries)} cells -> {out_path}")
    _render_figures(root, out_path, summaries)
    return 0


def _render_figures(root: Path, summary_path: Path, summaries) -> None:
    """Render one figure per (family, metric) when the plot package is present."""
    try:
        from featclash_plots.render import load_summary, render_family
    except ImportError:
        print("aggregate: figures skipped (featclash-plots not installed)")
        return
    df = load_summary(summary_path)
    fig_dir = root / "figures"
    for family in sorted({s["family"] for s in summaries}):
        for path in render_family(df, family, fig_dir):
            print(f"aggregate: wrote {path}")


def _pool_audit(examples, manifest_path: Path, is_test_file: bool):
    """Count strong-feature instantiations using symbols from the wrong pool."""
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    ds = DatasetConfig.from_dict(manifest["dataset"])
    pools = datagen.partition_symbols(ds)
    allowed = set(pools.test if is_test_file else pools.train)
    violations = 0
    for e in examples:
        if not e.strong:
            continue
        for spec in ds.strong_specs():
            if spec.kind == KIND_CONTAINS_SYMBOL:
                continue  # instantiated by its fixed symbol, not the pools
            for where in sites(spec, e.seq):
                if any(e.seq[i] not in allowed for i in where):
                    violations += 1
    return violations


def cmd_inspect(args) -> int:
    path = Path(args.dataset)
    examples = datagen.read_jsonl(path)
    if not examples:
        raise FeatclashError(f"{path}: no records")
    n = len(examples)
    k = len(examples[0].weak)
    balance = sum(e.label for e in examples) / n
    strong_rate = sum(e.strong for e in examples) / n
    print(f"records:        {n}")
    print(f"label balance:  {balance:.4f}")
    print(f"strong rate:    {strong_rate:.4f}")
    strong_n = sum(1 for e in examples if e.strong)
    for i in range(k):
        overall = sum(e.weak[i] for e in examples) / n
        line = f"weak[{i}] rate:   {overall:.4f}"
        if strong_n:
            among = sum(e.weak[i] for e in examples if e.strong) / strong_n
            line += f"  (among strong: {among:.4f})"
        print(line)
    provs: dict[str, int] = {}
    for e in examples:
        provs[e.prov] = provs.get(e.prov, 0) + 1
    for prov in sorted(provs):
        print(f"prov {prov}: {provs[prov]}")
    manifest_path = path.parent / "manifest.json"
    if manifest_path.exists():
        is_test = path.name.startswith("test_")
        violations = _pool_audit(examples, manifest_path, is_test)
        print(f"pool audit:     {violations} out-of-pool strong instantiations")
    else:
        print("pool audit:     skipped (no manifest.json beside dataset)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featclash",
        description="Counterexample-augmentation benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("-c", "--config", required=True,
                           help="YAML config file")
        p.add_argument("-o", "--out", default=None,
                       help="output directory (default: $FEATCLASH_OUT or .)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--profile", choices=tuple(experiments.PROFILES),
                       default="desk", help="scale profile")
        p.add_argument("--force", action="store_true",
                       help="allow overwriting existing outputs")

    p = sub.add_parser("gen", help="generate dataset files")
    common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train one model and evaluate regions")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("hardness", help="run the hardness probe")
    common(p, needs_config=False)
    p.add_argument("-c", "--config", default=None, help="YAML config file")
    p.add_argument("--feature", default=None,
                   help="probe a single feature by name")
    p.set_defaults(func=cmd_hardness)

    p = sub.add_parser("sweep", help="run an experiment family")
    common(p, needs_config=False)
    p.add_argument("-c", "--config", default=None, help="YAML config file")
    p.add_argument("--family", choices=experiments.FAMILIES, default=None)
    p.add_argument("--workers", type=int, default=1,
                   help="concurrent (cell, seed) runs")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("aggregate", help="summarize a results CSV with CIs")
    p.add_argument("results", help="results.csv from a sweep")
    p.add_argument("-o", "--out", default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("inspect", help="print dataset statistics")
    p.add_argument("dataset", help="a .jsonl dataset file")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except FeatclashError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
