"""Four-region conditional error rates and percentile-bootstrap intervals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RegionErrorReport:
    """Conditional error rate per test region, None when a region is empty.

    weak_only:   P(pred=1 | weak, not strong)
    strong_only: P(pred=0 | not weak, strong)
    both:        P(pred=0 | weak, strong)
    neither:     P(pred=1 | not weak, not strong)
    """

    weak_only: float | None
    strong_only: float | None
    both: float | None
    neither: float | None
    counts: dict[str, int]

    def as_dict(self) -> dict:
        return {"weak-only": self.weak_only, "strong-only": self.strong_only,
                "both": self.both, "neither": self.neither,
                "counts": dict(self.counts)}


def region_errors(predictions, strong_flags, weak_flags) -> RegionErrorReport:
    """Partition examples by (strong, any-weak) and count wrong predictions.

    `weak_flags` is the per-example "any weak feature present" boolean.
    """
    preds = np.asarray(predictions, dtype=np.int64)
    strong = np.asarray(strong_flags, dtype=bool)
    weak = np.asarray(weak_flags, dtype=bool)
    if not (preds.shape == strong.shape == weak.shape):
        raise ValueError("predictions and feature flags must be aligned")

    def rate(mask: np.ndarray, wrong_value: int) -> tuple[float | None, int]:
        n = int(mask.sum())
        if n == 0:
            return None, 0
        return float((preds[mask] == wrong_value).mean()), n

    wo, n_wo = rate(weak & ~strong, 1)
    so, n_so = rate(~weak & strong, 0)
    bo, n_bo = rate(weak & strong, 0)
    ne, n_ne = rate(~weak & ~strong, 1)
    return RegionErrorReport(
        weak_only=wo, strong_only=so, both=bo, neither=ne,
        counts={"weak-only": n_wo, "strong-only": n_so,
                "both": n_bo, "neither": n_ne},
    )


@dataclass(frozen=True)
class IntervalEstimate:
    mean: float
    lower: float
    upper: float
    level: float = 0.95
    iterations: int = 1_000

    def __post_init__(self):
        if not self.lower <= self.mean + 1e-12 or not self.mean <= self.upper + 1e-12:
            raise ValueError(f"interval [{self.lower}, {self.upper}] "
                             f"does not contain mean {self.mean}")


def bootstrap_ci(values, iterations: int = 1_000, level: float = 0.95,
                 seed: int = 0) -> IntervalEstimate:
    """Percentile bootstrap over resampled means of per-seed values."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim != 1 or vals.size == 0:
        raise ValueError("bootstrap_ci needs a nonempty 1-D sample")
    mean = float(vals.mean())
    if vals.size == 1 or np.all(vals == vals[0]):
        return IntervalEstimate(mean, mean, mean, level, iterations)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, vals.size, size=(iterations, vals.size))
    means = vals[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lower = float(np.quantile(means, alpha))
    upper = float(np.quantile(means, 1.0 - alpha))
    lower = min(lower, mean)
    upper = max(upper, mean)
    return IntervalEstimate(mean, lower, upper, level, iterations)
