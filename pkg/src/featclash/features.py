"""Feature predicates and feature planting for fixed-length symbol sequences.

Five feature kinds are supported:

  contains-symbol:<s>   symbol s occurs somewhere in the sequence
  prefix-duplicate      sequence begins with a duplicate (seq[0] == seq[1])
  first-last-duplicate  first symbol equals last symbol
  adjacent-duplicate    some adjacent pair is a duplicate
  contains-first        the first symbol occurs again later in the sequence

``contains-1`` is accepted as shorthand for ``contains-symbol:1``.

Detection (`holds`) is a pure predicate over a complete sequence and ignores
the instantiation pool.  Planting (`plant`) writes a feature into a partially
built sequence (free slots marked with FREE) using only pool symbols, choosing
uniformly among the valid placements.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

FREE = -1

KIND_CONTAINS_SYMBOL = "contains-symbol"
KIND_PREFIX_DUP = "prefix-duplicate"
KIND_FIRST_LAST_DUP = "first-last-duplicate"
KIND_ADJACENT_DUP = "adjacent-duplicate"
KIND_CONTAINS_FIRST = "contains-first"

KINDS = (
    KIND_CONTAINS_SYMBOL,
    KIND_PREFIX_DUP,
    KIND_FIRST_LAST_DUP,
    KIND_ADJACENT_DUP,
    KIND_CONTAINS_FIRST,
)


class ConstraintError(ValueError):
    """A feature cannot be realized under the given constraints."""


@dataclass(frozen=True)
class FeatureSpec:
    """Identity of one feature plus the symbols allowed to realize it.

    For ``contains-symbol`` the pool must be exactly {symbol}; for the other
    kinds the pool holds the symbols permitted to instantiate the duplicate /
    echo (this is how the train/test symbol split is enforced).
    """

    kind: str
    symbol: int | None = None
    pool: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConstraintError(f"unknown feature kind {self.kind!r}")
        if self.kind == KIND_CONTAINS_SYMBOL:
            if self.symbol is None:
                raise ConstraintError("contains-symbol needs a target symbol")
            if self.pool and set(self.pool) != {self.symbol}:
                raise ConstraintError(
                    f"contains-symbol pool must be exactly {{{self.symbol}}}"
                )
        elif self.symbol is not None:
            raise ConstraintError(f"{self.kind} takes no target symbol")

    @property
    def name(self) -> str:
        if self.kind == KIND_CONTAINS_SYMBOL:
            return f"contains-{self.symbol}"
        return self.kind

    def with_pool(self, pool) -> "FeatureSpec":
        return FeatureSpec(self.kind, self.symbol, frozenset(pool))

    @property
    def max_positions(self) -> int:
        """Largest number of sequence slots one instantiation occupies."""
        return 1 if self.kind == KIND_CONTAINS_SYMBOL else 2


def parse_feature(name: str) -> FeatureSpec:
    """Parse a kebab-case feature name (as used in config files)."""
    name = name.strip()
    if name.startswith("contains-") and name[len("contains-"):].lstrip("-").isdigit():
        return FeatureSpec(KIND_CONTAINS_SYMBOL, symbol=int(name[len("contains-"):]))
    if name.startswith("contains-symbol:"):
        return FeatureSpec(KIND_CONTAINS_SYMBOL, symbol=int(name.split(":", 1)[1]))
    if name in (KIND_PREFIX_DUP, KIND_FIRST_LAST_DUP, KIND_ADJACENT_DUP,
                KIND_CONTAINS_FIRST):
        return FeatureSpec(name)
    raise ConstraintError(f"unknown feature name {name!r}")


def sites(feature: FeatureSpec, seq) -> list[tuple[int, ...]]:
    """All position tuples at which `feature` is realized in `seq`."""
    n = len(seq)
    k = feature.kind
    if k == KIND_CONTAINS_SYMBOL:
        return [(i,) for i in range(n) if seq[i] == feature.symbol]
    if k == KIND_PREFIX_DUP:
        return [(0, 1)] if n >= 2 and seq[0] == seq[1] else []
    if k == KIND_FIRST_LAST_DUP:
        return [(0, n - 1)] if n >= 2 and seq[0] == seq[n - 1] else []
    if k == KIND_ADJACENT_DUP:
        return [(i, i + 1) for i in range(n - 1) if seq[i] == seq[i + 1]]
    # contains-first
    return [(0, j) for j in range(1, n) if seq[j] == seq[0]]


def holds(feature: FeatureSpec, seq) -> bool:
    """Truth of the feature predicate on a complete sequence."""
    n = len(seq)
    k = feature.kind
    if k == KIND_CONTAINS_SYMBOL:
        return feature.symbol in seq
    if k == KIND_PREFIX_DUP:
        return n >= 2 and seq[0] == seq[1]
    if k == KIND_FIRST_LAST_DUP:
        return n >= 2 and seq[0] == seq[n - 1]
    if k == KIND_ADJACENT_DUP:
        return any(seq[i] == seq[i + 1] for i in range(n - 1))
    return any(seq[j] == seq[0] for j in range(1, n))


def _placements(feature: FeatureSpec, seq) -> list[tuple[int, ...]]:
    """Position tuples that could host the feature given current free slots."""
    n = len(seq)
    free = [i for i in range(n) if seq[i] == FREE]
    k = feature.kind
    if k == KIND_CONTAINS_SYMBOL:
        return [(i,) for i in free]
    if k == KIND_PREFIX_DUP:
        return [(0, 1)] if n >= 2 and seq[0] == FREE and seq[1] == FREE else []
    if k == KIND_FIRST_LAST_DUP:
        ok = n >= 2 and seq[0] == FREE and seq[n - 1] == FREE
        return [(0, n - 1)] if ok else []
    if k == KIND_ADJACENT_DUP:
        return [(i, i + 1) for i in range(n - 1)
                if seq[i] == FREE and seq[i + 1] == FREE]
    # contains-first: anchor at 0, echo at any later free slot
    if n < 2 or seq[0] != FREE:
        return []
    return [(0, j) for j in range(1, n) if seq[j] == FREE]


def plant(feature: FeatureSpec, seq, rng: random.Random) -> tuple[int, ...]:
    """Write `feature` into the free slots of `seq`, returning a new sequence.

    The placement is chosen uniformly among valid placements and the symbol
    uniformly from the feature's pool.  Raises ConstraintError when the pool
    is empty or no placement fits.
    """
    if not feature.pool:
        raise ConstraintError(f"{feature.name}: empty instantiation pool")
    out, _ = plant_at(feature, seq, rng)
    return out


def plant_at(feature: FeatureSpec, seq, rng: random.Random):
    """Like `plant`, but also returns the occupied position tuple."""
    if not feature.pool:
        raise ConstraintError(f"{feature.name}: empty instantiation pool")
    options = _placements(feature, seq)
    if not options:
        raise ConstraintError(f"{feature.name}: no free placement in {list(seq)}")
    where = options[rng.randrange(len(options))]
    pool = sorted(feature.pool)
    sym = pool[rng.randrange(len(pool))] if len(pool) > 1 else pool[0]
    out = list(seq)
    for i in where:
        out[i] = sym
    return tuple(out), where
