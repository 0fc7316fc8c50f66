"""Training loop with early stopping, region evaluation, and the hardness probe."""
from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import datagen, neural
from .datagen import DatasetConfig, Example
from .errors import ConfigError, DivergenceError
from .metrics import RegionErrorReport, region_errors

METRIC_VAL_ERROR = "val-error"
METRIC_VAL_LOSS = "val-loss"


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 5
    lr: float = 1e-3
    seed: int = 42
    early_stop_metric: str = METRIC_VAL_ERROR

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size: must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience: must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs: must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr: must be > 0")
        if self.early_stop_metric not in (METRIC_VAL_ERROR, METRIC_VAL_LOSS):
            raise ConfigError(
                f"early_stop_metric: {self.early_stop_metric!r} is not one of "
                f"{METRIC_VAL_ERROR!r}, {METRIC_VAL_LOSS!r}"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_error: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0
    wall_time: float = 0.0
    capped: bool = False  # True when max_epochs stopped training, not patience

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i in range(self.epochs):
                fh.write(json.dumps(
                    {"epoch": i + 1, "train_loss": self.train_loss[i],
                     "val_error": self.val_error[i],
                     "val_loss": self.val_loss[i]},
                    separators=(",", ":")))
                fh.write("\n")


def to_arrays(examples: list[Example]):
    """Pack examples into (seqs, labels, strong, any_weak) numpy arrays."""
    seqs = np.array([e.seq for e in examples], dtype=np.int64)
    labels = np.array([e.label for e in examples], dtype=np.int64)
    strong = np.array([e.strong for e in examples], dtype=bool)
    any_weak = np.array([e.any_weak for e in examples], dtype=bool)
    return seqs, labels, strong, any_weak


def train(model_cfg: neural.ModelConfig, train_cfg: TrainConfig,
          train_set: list[Example], val_set: list[Example],
          params: neural.ModelParams | None = None):
    """Train with per-epoch shuffling and early stopping.

    Returns (parameters of the best epoch, TrainHistory).  Raises
    DivergenceError if the loss becomes non-finite.
    """
    train_cfg.validate()
    if not train_set or not val_set:
        raise ConfigError("train and validation sets must be nonempty")
    x_tr, y_tr, _, _ = to_arrays(train_set)
    x_val, y_val, _, _ = to_arrays(val_set)

    rng = np.random.default_rng(train_cfg.seed)
    if params is None:
        params = neural.init_params(model_cfg, rng)
    state = neural.AdamState.for_params(params)
    grad_buf = params.zeros_like()
    history = TrainHistory()
    best_metric = np.inf
    best_flat = params.flat.copy()
    since_best = 0
    n = x_tr.shape[0]
    bs = train_cfg.batch_size
    t0 = time.perf_counter()

    for epoch in range(1, train_cfg.max_epochs + 1):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            logits, cache = neural.forward(params, x_tr[idx])
            batch_loss = neural.loss(logits, y_tr[idx])
            if not np.isfinite(batch_loss):
                raise DivergenceError(
                    f"non-finite training loss at epoch {epoch}")
            epoch_loss += batch_loss * idx.size
            grads = neural.backward(params, cache, y_tr[idx], out=grad_buf)
            neural.adam_step(params, grads, state, lr=train_cfg.lr)
        val_loss, val_error = neural.batched_loss_error(params, x_val, y_val)
        if not np.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        history.train_loss.append(epoch_loss / n)
        history.val_error.append(val_error)
        history.val_loss.append(val_loss)
        metric = val_error if train_cfg.early_stop_metric == METRIC_VAL_ERROR else val_loss
        if metric < best_metric:
            best_metric = metric
            best_flat = params.flat.copy()
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= train_cfg.patience:
                break
    else:
        history.capped = True
    history.wall_time = time.perf_counter() - t0
    return neural.ModelParams(model_cfg, best_flat), history


def evaluate_regions(params: neural.ModelParams,
                     regions: dict[str, list[Example]]) -> RegionErrorReport:
    """Predict every region and compute the four conditional error rates."""
    examples = [e for name in datagen.REGION_NAMES if name in regions
                for e in regions[name]]
    for name in regions:
        if name not in datagen.REGION_NAMES:
            examples.extend(regions[name])
    seqs, _, strong, any_weak = to_arrays(examples)
    preds = neural.predict(params, seqs)
    return region_errors(preds, strong, any_weak)


def flatline(curve: list[float]) -> list[float]:
    """Replace everything after the first attainment of the minimum with it."""
    if not curve:
        return []
    m = min(curve)
    idx = curve.index(m)
    return list(curve[:idx + 1]) + [m] * (len(curve) - idx - 1)


@dataclass(frozen=True)
class HardnessProbeConfig:
    """Probe settings: balanced presence data, standard model, a few re-runs."""

    dataset: DatasetConfig
    model: neural.ModelConfig
    train: TrainConfig
    train_size: int = 200_000
    val_size: int = 10_000
    seeds: tuple[int, ...] = (42, 43, 44)


@dataclass
class HardnessResult:
    feature: str
    error_auc: float
    loss_auc: float
    error_curves: list[list[float]]
    loss_curves: list[list[float]]

    def to_dict(self) -> dict:
        return {"feature": self.feature, "error_auc": self.error_auc,
                "loss_auc": self.loss_auc, "error_curves": self.error_curves,
                "loss_curves": self.loss_curves}


def hardness_auc(feature_name: str, probe: HardnessProbeConfig) -> HardnessResult:
    """Area under the flat-lined validation error curve for a presence probe.

    The curve starts with the untrained model's validation error (epoch 0)
    followed by one entry per training epoch, is flat-lined after its minimum,
    and summed; the result is averaged over the probe seeds.  The analogous
    loss-curve area is reported alongside.
    """
    error_aucs, loss_aucs = [], []
    error_curves, loss_curves = [], []
    for seed in probe.seeds:
        ds_cfg = replace(probe.dataset, strong_features=(feature_name,), seed=seed)
        ds_cfg.validate()
        pools = datagen.partition_symbols(ds_cfg)
        gen_rng = random.Random(f"{seed}:hardness")
        train_set = datagen.build_hardness_dataset(
            feature_name, probe.train_size, ds_cfg, pools, gen_rng)
        val_set = datagen.build_hardness_dataset(
            feature_name, probe.val_size, ds_cfg, pools, gen_rng)
        train_cfg = replace(probe.train, seed=seed)
        init_rng = np.random.default_rng(seed)
        params0 = neural.init_params(probe.model, init_rng)
        x_val, y_val, _, _ = to_arrays(val_set)
        loss0, err0 = neural.batched_loss_error(params0, x_val, y_val)
        _, history = train(probe.model, train_cfg, train_set, val_set,
                           params=params0)
        e_curve = flatline([err0] + history.val_error)
        l_curve = flatline([loss0] + history.val_loss)
        error_aucs.append(sum(e_curve))
        loss_aucs.append(sum(l_curve))
        error_curves.append(e_curve)
        loss_curves.append(l_curve)
    return HardnessResult(
        feature=feature_name,
        error_auc=float(np.mean(error_aucs)),
        loss_auc=float(np.mean(loss_aucs)),
        error_curves=error_curves,
        loss_curves=loss_curves,
    )
