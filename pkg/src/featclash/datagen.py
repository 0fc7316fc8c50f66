"""Dataset construction for the feature-competition benchmark.

Builds training sets with perfect strong/weak co-occurrence, counterexamples
of both types (weak-only and strong-only, with optional impurity when several
weak features exist), label noise, non-adversarial control examples, the four
test regions, and balanced feature-presence datasets for the hardness probe.

Every training-time strong-feature instantiation draws its symbols from the
train half of the vocabulary partition; every test-time instantiation draws
from the disjoint test half.  Filler symbols (positions that carry no feature)
come from the full non-reserved vocabulary in both splits.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError, DataFormatError, UnsatisfiableTargetError
from .features import (
    FREE,
    KIND_CONTAINS_SYMBOL,
    FeatureSpec,
    holds,
    parse_feature,
    plant_at,
    sites,
)

PURITY_PURE = "pure"
PURITY_REMOVE_AT_MOST_ONE = "remove-at-most-one"

PROV_BASE = "base"
PROV_CONTROL = "control"


@dataclass(frozen=True)
class Example:
    """One labeled sequence with its feature-presence annotations."""

    seq: tuple[int, ...]
    label: int
    strong: bool
    weak: tuple[bool, ...]
    prov: str

    @property
    def any_weak(self) -> bool:
        return any(self.weak)


@dataclass(frozen=True)
class DatasetConfig:
    """Full recipe for one training set (plus its validation/test companions)."""

    vocab_size: int = 50_000
    seq_len: int = 5
    base_size: int = 200_000
    strong_features: tuple[str, ...] = ("contains-1",)
    weak_symbols: tuple[int, ...] = (2,)
    n_counterexamples: int = 0
    ce_mix: tuple[float, float] = (0.5, 0.5)  # (weak-only, strong-only)
    ce_purity: str = PURITY_PURE
    noise_rate: float = 0.0
    n_default_extra: int = 0
    fixed_total_size: int | None = None
    symbol_split_fraction: float = 0.5
    val_size: int = 5_000
    n_test_per_region: int = 2_000
    attempt_cap: int = 1_000
    seed: int = 42

    @property
    def k(self) -> int:
        return len(self.weak_symbols)

    def strong_specs(self) -> tuple[FeatureSpec, ...]:
        return tuple(parse_feature(name) for name in self.strong_features)

    def validate(self) -> None:
        if self.vocab_size < 8:
            raise ConfigError(f"vocab_size: {self.vocab_size} is too small")
        if self.seq_len < 2:
            raise ConfigError(f"seq_len: must be >= 2, got {self.seq_len}")
        if self.base_size < 2:
            raise ConfigError(f"base_size: must be >= 2, got {self.base_size}")
        if not self.strong_features:
            raise ConfigError("strong_features: must be nonempty")
        try:
            specs = self.strong_specs()
        except Exception as exc:
            raise ConfigError(f"strong_features: {exc}") from exc
        if len(set(self.weak_symbols)) != len(self.weak_symbols):
            raise ConfigError(f"weak_symbols: duplicates in {self.weak_symbols}")
        for s in self.weak_symbols:
            if not 0 <= s < self.vocab_size:
                raise ConfigError(f"weak_symbols: {s} outside vocabulary")
        targets = {f.symbol for f in specs if f.kind == KIND_CONTAINS_SYMBOL}
        if targets & set(self.weak_symbols):
            raise ConfigError(
                "weak_symbols: overlap with a contains-symbol strong target"
            )
        for f in specs:
            if f.kind == KIND_CONTAINS_SYMBOL and not 0 <= f.symbol < self.vocab_size:
                raise ConfigError(f"strong_features: symbol {f.symbol} outside vocabulary")
        occupancy = max(f.max_positions for f in specs)
        if self.k + occupancy > self.seq_len:
            raise ConfigError(
                f"weak_symbols: k={self.k} plus strong occupancy {occupancy} "
                f"exceeds seq_len={self.seq_len}"
            )
        if self.n_counterexamples < 0:
            raise ConfigError("n_counterexamples: must be >= 0")
        if abs(self.ce_mix[0] + self.ce_mix[1] - 1.0) > 1e-9 or min(self.ce_mix) < 0:
            raise ConfigError(f"ce_mix: fractions {self.ce_mix} must be >= 0 and sum to 1")
        if self.ce_purity not in (PURITY_PURE, PURITY_REMOVE_AT_MOST_ONE):
            raise ConfigError(f"ce_purity: unknown mode {self.ce_purity!r}")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ConfigError(f"noise_rate: must be in [0, 1), got {self.noise_rate}")
        if self.n_default_extra < 0:
            raise ConfigError("n_default_extra: must be >= 0")
        if self.fixed_total_size is not None:
            floor = self.n_counterexamples + self.n_default_extra + 2
            if self.fixed_total_size < floor:
                raise ConfigError(
                    f"fixed_total_size: {self.fixed_total_size} leaves no room "
                    f"for base examples (needs >= {floor})"
                )
        if not 0.0 < self.symbol_split_fraction < 1.0:
            raise ConfigError("symbol_split_fraction: must be in (0, 1)")
        if self.val_size < 0 or self.n_test_per_region < 0:
            raise ConfigError("val_size / n_test_per_region: must be >= 0")
        if self.attempt_cap < 1:
            raise ConfigError("attempt_cap: must be >= 1")

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown dataset config keys: {sorted(unknown)}")
        kwargs = dict(d)
        for key in ("strong_features", "weak_symbols", "ce_mix"):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = tuple(kwargs[key])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class SymbolPools:
    """Disjoint train/test instantiation pools plus the reserved symbols."""

    train: tuple[int, ...]
    test: tuple[int, ...]
    reserved: frozenset[int]
    fillers: tuple[int, ...]  # all non-reserved symbols, sorted


def reserved_symbols(config: DatasetConfig) -> frozenset[int]:
    out = set(config.weak_symbols)
    for f in config.strong_specs():
        if f.kind == KIND_CONTAINS_SYMBOL:
            out.add(f.symbol)
    return frozenset(out)


def partition_symbols(config: DatasetConfig) -> SymbolPools:
    """Seeded disjoint split of the non-reserved vocabulary."""
    reserved = reserved_symbols(config)
    non_reserved = [s for s in range(config.vocab_size) if s not in reserved]
    n_train = round(config.symbol_split_fraction * len(non_reserved))
    if n_train < 2 or len(non_reserved) - n_train < 2:
        raise ConfigError(
            f"vocab_size: {config.vocab_size} leaves fewer than 2 non-reserved "
            "symbols in one of the pools"
        )
    rng = random.Random(f"{config.seed}:partition")
    shuffled = list(non_reserved)
    rng.shuffle(shuffled)
    return SymbolPools(
        train=tuple(sorted(shuffled[:n_train])),
        test=tuple(sorted(shuffled[n_train:])),
        reserved=reserved,
        fillers=tuple(non_reserved),
    )


class Sampler:
    """Rejection sampler producing examples whose feature flags are exact.

    `split` selects which half of the symbol partition instantiates the
    strong feature(s).  Filler positions are rejected until no tracked
    feature holds accidentally and the planted instantiation is unique.
    """

    def __init__(self, config: DatasetConfig, pools: SymbolPools, split: str):
        if split not in ("train", "test"):
            raise ValueError(f"split must be 'train' or 'test', got {split!r}")
        self.config = config
        self.pools = pools
        pool = pools.train if split == "train" else pools.test
        self.strong = tuple(
            f.with_pool({f.symbol}) if f.kind == KIND_CONTAINS_SYMBOL
            else f.with_pool(pool)
            for f in config.strong_specs()
        )
        self.weak = tuple(
            FeatureSpec(KIND_CONTAINS_SYMBOL, symbol=s, pool=frozenset({s}))
            for s in config.weak_symbols
        )
        self.fillers = pools.fillers

    def sample(self, rng: random.Random, strong: bool, weak_targets, prov: str,
               strong_index: int | None = None) -> Example:
        cfg = self.config
        weak_targets = tuple(bool(t) for t in weak_targets)
        fillers = self.fillers
        n_fill = len(fillers)
        for _ in range(cfg.attempt_cap):
            seq = [FREE] * cfg.seq_len
            chosen = None
            planted_site = None
            if strong:
                chosen = (strong_index if strong_index is not None
                          else rng.randrange(len(self.strong)))
                seq, planted_site = plant_at(self.strong[chosen], seq, rng)
                seq = list(seq)
            ok = True
            for i, want in enumerate(weak_targets):
                if not want:
                    continue
                free = [p for p in range(cfg.seq_len) if seq[p] == FREE]
                if not free:
                    ok = False
                    break
                seq[free[rng.randrange(len(free))]] = cfg.weak_symbols[i]
            if not ok:
                continue
            for p in range(cfg.seq_len):
                if seq[p] == FREE:
                    seq[p] = fillers[rng.randrange(n_fill)]
            if not self._flags_exact(seq, chosen, planted_site, weak_targets):
                continue
            return Example(
                seq=tuple(seq),
                label=int(strong),
                strong=strong,
                weak=weak_targets,
                prov=prov,
            )
        raise UnsatisfiableTargetError(
            f"gave up after {cfg.attempt_cap} attempts "
            f"(strong={strong}, weak={weak_targets}, prov={prov})"
        )

    def _flags_exact(self, seq, chosen, planted_site, weak_targets) -> bool:
        for j, f in enumerate(self.strong):
            s = sites(f, seq)
            if j == chosen:
                if s != [planted_site]:
                    return False
            elif s:
                return False
        for i, f in enumerate(self.weak):
            if holds(f, seq) != weak_targets[i]:
                return False
        return True


def sample_weak_mask(rng: random.Random, k: int) -> tuple[bool, ...]:
    """Each weak feature Bernoulli(1/2), resampled until at least one holds."""
    while True:
        mask = tuple(rng.random() < 0.5 for _ in range(k))
        if any(mask):
            return mask


def build_base(config: DatasetConfig, pools: SymbolPools, rng: random.Random,
               n: int | None = None, prov: str = PROV_BASE) -> list[Example]:
    """Balanced base set: positives with strong + weak features, negatives bare."""
    n = config.base_size if n is None else n
    sampler = Sampler(config, pools, "train")
    n_pos = n // 2
    out = []
    none = (False,) * config.k
    for _ in range(n_pos):
        mask = sample_weak_mask(rng, config.k)
        out.append(sampler.sample(rng, True, mask, prov))
    for _ in range(n - n_pos):
        out.append(sampler.sample(rng, False, none, prov))
    return out


def gen_weak_only_ce(count: int, i: int, config: DatasetConfig,
                     pools: SymbolPools, rng: random.Random) -> list[Example]:
    """Weak feature i present, strong and other weak features absent, label 0."""
    sampler = Sampler(config, pools, "train")
    mask = tuple(j == i for j in range(config.k))
    prov = f"weak-only-ce:{i}"
    return [sampler.sample(rng, False, mask, prov) for _ in range(count)]


def gen_strong_only_ce(count: int, i: int, config: DatasetConfig,
                       pools: SymbolPools, rng: random.Random,
                       p_other_weak=None) -> list[Example]:
    """Strong present with weak feature i removed, label 1.

    Pure purity drops every weak feature; remove-at-most-one keeps each other
    weak feature j with probability p_other_weak[j] (the base distribution's
    empirical P(weak_j | strong)).
    """
    sampler = Sampler(config, pools, "train")
    prov = f"strong-only-ce:{i}"
    out = []
    impure = config.ce_purity == PURITY_REMOVE_AT_MOST_ONE
    if impure and p_other_weak is None:
        raise ValueError("remove-at-most-one purity needs p_other_weak")
    for _ in range(count):
        if impure:
            mask = tuple(
                j != i and rng.random() < p_other_weak[j]
                for j in range(config.k)
            )
        else:
            mask = (False,) * config.k
        out.append(sampler.sample(rng, True, mask, prov))
    return out


def gen_default_extra(count: int, config: DatasetConfig, pools: SymbolPools,
                      rng: random.Random) -> list[Example]:
    """Non-adversarial control examples from the base distribution."""
    return build_base(config, pools, rng, n=count, prov=PROV_CONTROL)


def apply_noise(examples: list[Example], noise_rate: float,
                rng: random.Random) -> list[Example]:
    """Independently flip each label with probability noise_rate."""
    if not 0.0 <= noise_rate < 1.0:
        raise ConfigError(f"noise_rate: must be in [0, 1), got {noise_rate}")
    if noise_rate == 0.0:
        return list(examples)
    out = []
    for e in examples:
        if rng.random() < noise_rate:
            out.append(replace(e, label=1 - e.label))
        else:
            out.append(e)
    return out


REGION_NAMES = ("weak-only", "strong-only", "both", "neither")


def build_test_regions(config: DatasetConfig, n_per_region: int,
                       pools: SymbolPools, rng: random.Random,
                       split: str = "test") -> dict[str, list[Example]]:
    """Four equally sized test regions, strong features drawn from the test pool.

    weak-only carries at least one weak feature (sampled with the same
    resampling scheme as the base positives when k > 1); strong-only carries
    none.  Labels follow the strong-feature rule; no noise is applied.
    `split="train"` builds the same region structure from the train pool
    (used for the validation set).
    """
    sampler = Sampler(config, pools, split)
    none = (False,) * config.k
    regions: dict[str, list[Example]] = {}
    for name in REGION_NAMES:
        out = []
        for _ in range(n_per_region):
            if name == "weak-only":
                out.append(sampler.sample(
                    rng, False, sample_weak_mask(rng, config.k), f"test:{name}"))
            elif name == "strong-only":
                out.append(sampler.sample(rng, True, none, f"test:{name}"))
            elif name == "both":
                out.append(sampler.sample(
                    rng, True, sample_weak_mask(rng, config.k), f"test:{name}"))
            else:
                out.append(sampler.sample(rng, False, none, f"test:{name}"))
        regions[name] = out
    return regions


def build_hardness_dataset(feature_name: str, n: int, config: DatasetConfig,
                           pools: SymbolPools, rng: random.Random) -> list[Example]:
    """Balanced feature-presence data for the hardness probe (no weak symbols)."""
    probe_cfg = replace(config, strong_features=(feature_name,))
    probe_cfg.validate()
    sampler = Sampler(probe_cfg, pools, "train")
    none = (False,) * probe_cfg.k
    out = []
    n_pos = n // 2
    for _ in range(n_pos):
        out.append(sampler.sample(rng, True, none, "hardness:pos"))
    for _ in range(n - n_pos):
        out.append(sampler.sample(rng, False, none, "hardness:neg"))
    return out


def empirical_weak_given_strong(examples: list[Example], k: int) -> list[float]:
    """P(weak_i | strong) measured on a realized dataset."""
    counts = [0] * k
    total = 0
    for e in examples:
        if e.strong:
            total += 1
            for i in range(k):
                if e.weak[i]:
                    counts[i] += 1
    if total == 0:
        return [0.0] * k
    return [c / total for c in counts]


@dataclass(frozen=True)
class CountPlan:
    """Resolved example counts for one dataset build."""

    base: int
    weak_ce: tuple[int, ...]    # per weak feature
    strong_ce: tuple[int, ...]  # per weak feature
    extras: int

    @property
    def total(self) -> int:
        return self.base + sum(self.weak_ce) + sum(self.strong_ce) + self.extras


def _split_even(total: int, k: int) -> tuple[int, ...]:
    base, residue = divmod(total, k)
    return tuple(base + (1 if i < residue else 0) for i in range(k))


def plan_counts(config: DatasetConfig, base_override: int | None = None,
                n_ce: int | None = None, extras: int | None = None) -> CountPlan:
    """Turn the config's budgets into exact per-provenance counts.

    The even residue of the type split goes to the weak-only side; the residue
    of the per-feature split goes to the lowest feature indices.  When
    fixed_total_size is set, counterexamples and extras replace base examples.
    """
    n_ce = config.n_counterexamples if n_ce is None else n_ce
    extras = config.n_default_extra if extras is None else extras
    w_total = int(round(n_ce * config.ce_mix[0]))
    s_total = n_ce - w_total
    base = config.base_size if base_override is None else base_override
    if config.fixed_total_size is not None and base_override is None:
        base = config.fixed_total_size - n_ce - extras
        if base < 2:
            raise ConfigError(
                f"fixed_total_size: {config.fixed_total_size} leaves base {base}"
            )
    return CountPlan(
        base=base,
        weak_ce=_split_even(w_total, config.k),
        strong_ce=_split_even(s_total, config.k),
        extras=extras,
    )


@dataclass
class DatasetBundle:
    """Training set, matched validation set, and the four test regions."""

    config: DatasetConfig
    pools: SymbolPools
    train: list[Example]
    val: list[Example]
    regions: dict[str, list[Example]]


def _build_split(config: DatasetConfig, pools: SymbolPools, plan: CountPlan,
                 rng: random.Random) -> list[Example]:
    examples = build_base(config, pools, rng, n=plan.base)
    p_weak = None
    if config.ce_purity == PURITY_REMOVE_AT_MOST_ONE:
        p_weak = empirical_weak_given_strong(examples, config.k)
    for i, count in enumerate(plan.weak_ce):
        examples.extend(gen_weak_only_ce(count, i, config, pools, rng))
    for i, count in enumerate(plan.strong_ce):
        examples.extend(gen_strong_only_ce(count, i, config, pools, rng, p_weak))
    if plan.extras:
        examples.extend(gen_default_extra(plan.extras, config, pools, rng))
    return examples


def build_validation(config: DatasetConfig, pools: SymbolPools,
                     rng: random.Random) -> list[Example]:
    """Region-balanced validation set, instantiated from the train pool.

    Early stopping needs to see the error regions it is meant to drive down
    (a sample of the raw training mix saturates immediately whenever the weak
    feature alone explains the training data), so validation mirrors the four
    test regions but never uses test-pool symbols.  Labels stay noise-free.
    """
    per_region = config.val_size // len(REGION_NAMES)
    regions = build_test_regions(config, per_region, pools, rng, split="train")
    return [e for name in REGION_NAMES for e in regions[name]]


def build_dataset(config: DatasetConfig) -> DatasetBundle:
    """Materialize one full dataset bundle, bit-reproducible from the config."""
    config.validate()
    pools = partition_symbols(config)
    plan = plan_counts(config)
    train_rng = random.Random(f"{config.seed}:train")
    train = _build_split(config, pools, plan, train_rng)
    train = apply_noise(train, config.noise_rate, random.Random(f"{config.seed}:noise"))
    val = build_validation(config, pools, random.Random(f"{config.seed}:val"))
    test_rng = random.Random(f"{config.seed}:test")
    regions = build_test_regions(config, config.n_test_per_region, pools, test_rng)
    return DatasetBundle(config=config, pools=pools, train=train, val=val,
                         regions=regions)


# ---------------------------------------------------------------------------
# Serialization: one JSON object per line, fixed key order.

def example_to_json(e: Example) -> str:
    return json.dumps(
        {"seq": list(e.seq), "label": e.label, "strong": e.strong,
         "weak": list(e.weak), "prov": e.prov},
        separators=(",", ":"),
    )


def write_jsonl(path, examples: list[Example]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in examples:
            fh.write(example_to_json(e))
            fh.write("\n")


def read_jsonl(path) -> list[Example]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                out.append(Example(
                    seq=tuple(int(s) for s in d["seq"]),
                    label=int(d["label"]),
                    strong=bool(d["strong"]),
                    weak=tuple(bool(w) for w in d["weak"]),
                    prov=str(d["prov"]),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from exc
    return out
