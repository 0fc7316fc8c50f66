"""Minimal trainable stack: embedding -> 1-layer LSTM -> ReLU MLP -> sigmoid.

All parameters live in one flat vector with named matrix views, so every
coordinate is addressable by a global flat index (used by the finite
difference checks) and the Adam update is a handful of vectorized ops.
Gradients are hand-derived for this fixed architecture; there is no autodiff.

Gate order inside the fused LSTM weight matrices is [input, forget,
candidate, output].  The classifier reads the final hidden state only.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FeatclashError

CHECKPOINT_MAGIC = b"FCLP"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 250
    hidden_dim: int = 250
    mlp_hidden: int = 250
    seq_len: int = 5
    dtype: str = "float64"

    def validate(self) -> None:
        for name in ("vocab_size", "embed_dim", "hidden_dim", "mlp_hidden", "seq_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype: must be float32 or float64, got {self.dtype}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


class ModelParams:
    """Flat parameter vector with named views.

    Layout (flat order): embedding (V, E); LSTM input weights (E, 4H); LSTM
    recurrent weights (H, 4H); LSTM bias (4H,); MLP hidden weights (H, M) and
    bias (M,); output weights (M,) and bias (1,).
    """

    def __init__(self, config: ModelConfig, flat: np.ndarray | None = None):
        config.validate()
        self.config = config
        v, e, h, m = (config.vocab_size, config.embed_dim,
                      config.hidden_dim, config.mlp_hidden)
        shapes = [
            ("emb", (v, e)),
            ("w_x", (e, 4 * h)),
            ("w_h", (h, 4 * h)),
            ("b_lstm", (4 * h,)),
            ("w_mlp", (h, m)),
            ("b_mlp", (m,)),
            ("w_out", (m,)),
            ("b_out", (1,)),
        ]
        total = sum(int(np.prod(s)) for _, s in shapes)
        if flat is None:
            flat = np.zeros(total, dtype=config.np_dtype)
        elif flat.shape != (total,):
            raise ValueError(f"flat vector has {flat.shape}, expected ({total},)")
        self.flat = flat
        self.slices: dict[str, slice] = {}
        off = 0
        for name, shape in shapes:
            n = int(np.prod(shape))
            self.slices[name] = slice(off, off + n)
            setattr(self, name, flat[off:off + n].reshape(shape))
            off += n

    @property
    def size(self) -> int:
        return self.flat.size

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, self.flat.copy())

    def zeros_like(self) -> "ModelParams":
        return ModelParams(self.config, np.zeros_like(self.flat))


# A gradient holder has the same layout as the parameters.
Gradients = ModelParams


def init_params(config: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per matrix, zero biases.

    The embedding lookup sees a one-hot input, so its fan-in is 1 and its
    bound is 1.  This is a sensitivity knob: the scale of the embedding rows
    at initialization measurably affects how quickly counterexamples suppress
    the weak features (larger scales suppress faster).
    """
    p = ModelParams(config)
    e, h, m = config.embed_dim, config.hidden_dim, config.mlp_hidden
    for view, fan_in in ((p.emb, 1), (p.w_x, e), (p.w_h, h),
                         (p.w_mlp, h), (p.w_out, m)):
        bound = 1.0 / np.sqrt(fan_in)
        view[...] = rng.uniform(-bound, bound, size=view.shape)
    return p


def _sigmoid(x):
    # sigmoid(x) = (1 + tanh(x/2)) / 2, stable for any |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def forward(params: ModelParams, seqs: np.ndarray):
    """Batch forward pass.

    seqs is an int array of shape (B, T) with entries < vocab_size.  Returns
    (logits of shape (B,), cache) where the cache holds everything backward
    needs.
    """
    cfg = params.config
    seqs = np.asarray(seqs)
    if seqs.ndim != 2:
        raise ValueError(f"seqs must be 2-D (batch, time), got shape {seqs.shape}")
    if seqs.size and (seqs.min() < 0 or seqs.max() >= cfg.vocab_size):
        raise FeatclashError("forward: symbol id out of vocabulary range")
    b, t = seqs.shape
    h_dim = cfg.hidden_dim
    dt = cfg.np_dtype
    xs = params.emb[seqs]  # (B, T, E)
    h = np.zeros((b, h_dim), dtype=dt)
    c = np.zeros((b, h_dim), dtype=dt)
    steps = []
    for step in range(t):
        x_t = xs[:, step, :]
        pre = x_t @ params.w_x + h @ params.w_h + params.b_lstm
        gi = _sigmoid(pre[:, :h_dim])
        gf = _sigmoid(pre[:, h_dim:2 * h_dim])
        gg = np.tanh(pre[:, 2 * h_dim:3 * h_dim])
        go = _sigmoid(pre[:, 3 * h_dim:])
        c_new = gf * c + gi * gg
        tanh_c = np.tanh(c_new)
        h_new = go * tanh_c
        steps.append((h, c, gi, gf, gg, go, tanh_c))
        h, c = h_new, c_new
    a1 = h @ params.w_mlp + params.b_mlp
    r1 = np.maximum(a1, 0.0)
    logits = r1 @ params.w_out + params.b_out[0]
    cache = {"seqs": seqs, "xs": xs, "steps": steps, "h_final": h,
             "a1": a1, "r1": r1, "logits": logits}
    return logits, cache


def loss(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy on logits, numerically stable for any |z|."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    # log(1 + e^z) - y*z, written to avoid overflow
    per = np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))
    return float(per.mean())


def backward(params: ModelParams, cache: dict, labels: np.ndarray,
             out: Gradients | None = None) -> Gradients:
    """Exact gradients of loss(forward(.)) w.r.t. every parameter.

    `out` may supply a reusable gradient buffer; it is overwritten.
    """
    cfg = params.config
    seqs = cache["seqs"]
    b, t = seqs.shape
    h_dim = cfg.hidden_dim
    dt = cfg.np_dtype
    if out is None:
        g = params.zeros_like()
    else:
        g = out
        g.flat.fill(0.0)

    z = cache["logits"]
    y = np.asarray(labels, dtype=dt)
    dz = (_sigmoid(z) - y) / b  # (B,)

    r1 = cache["r1"]
    g.b_out[0] = dz.sum()
    g.w_out[...] = r1.T @ dz
    dr1 = np.outer(dz, params.w_out)
    da1 = dr1 * (cache["a1"] > 0)
    h_final = cache["h_final"]
    g.w_mlp[...] = h_final.T @ da1
    g.b_mlp[...] = da1.sum(axis=0)
    dh = da1 @ params.w_mlp.T
    dc = np.zeros((b, h_dim), dtype=dt)

    xs = cache["xs"]
    d_emb_rows = np.zeros((b, t, cfg.embed_dim), dtype=dt)
    for step in range(t - 1, -1, -1):
        h_prev, c_prev, gi, gf, gg, go, tanh_c = cache["steps"][step]
        d_go = dh * tanh_c
        dc = dc + dh * go * (1.0 - tanh_c * tanh_c)
        d_gi = dc * gg
        d_gg = dc * gi
        d_gf = dc * c_prev
        dc = dc * gf
        dpre = np.empty((b, 4 * h_dim), dtype=dt)
        dpre[:, :h_dim] = d_gi * gi * (1.0 - gi)
        dpre[:, h_dim:2 * h_dim] = d_gf * gf * (1.0 - gf)
        dpre[:, 2 * h_dim:3 * h_dim] = d_gg * (1.0 - gg * gg)
        dpre[:, 3 * h_dim:] = d_go * go * (1.0 - go)
        x_t = xs[:, step, :]
        g.w_x += x_t.T @ dpre
        g.w_h += h_prev.T @ dpre
        g.b_lstm += dpre.sum(axis=0)
        d_emb_rows[:, step, :] = dpre @ params.w_x.T
        dh = dpre @ params.w_h.T
    np.add.at(g.emb, seqs.ravel(), d_emb_rows.reshape(b * t, cfg.embed_dim))
    return g


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    _scratch: np.ndarray | None = None

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(m=np.zeros_like(params.flat), v=np.zeros_like(params.flat),
                   _scratch=np.empty_like(params.flat))


def adam_step(params: ModelParams, grads: Gradients, state: AdamState,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """Standard Adam with bias correction, updating params in place."""
    state.t += 1
    g = grads.flat
    m, v = state.m, state.v
    if state._scratch is None:
        state._scratch = np.empty_like(params.flat)
    s = state._scratch
    m *= beta1
    np.multiply(g, 1.0 - beta1, out=s)
    m += s
    v *= beta2
    np.multiply(g, g, out=s)
    s *= 1.0 - beta2
    v += s
    # s := lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
    np.divide(v, 1.0 - beta2 ** state.t, out=s)
    np.sqrt(s, out=s)
    s += eps
    np.divide(m, s, out=s)
    s *= lr / (1.0 - beta1 ** state.t)
    params.flat -= s


def predict(params: ModelParams, seqs: np.ndarray, batch_size: int = 4096) -> np.ndarray:
    """Hard labels: 1 iff logit > 0 (probability strictly above 0.5)."""
    seqs = np.asarray(seqs)
    out = np.empty(seqs.shape[0], dtype=np.int64)
    for start in range(0, seqs.shape[0], batch_size):
        logits, _ = forward(params, seqs[start:start + batch_size])
        out[start:start + batch_size] = (logits > 0).astype(np.int64)
    return out


def batched_loss_error(params: ModelParams, seqs: np.ndarray, labels: np.ndarray,
                       batch_size: int = 4096) -> tuple[float, float]:
    """Mean loss and classification error over a full dataset."""
    seqs = np.asarray(seqs)
    labels = np.asarray(labels)
    n = seqs.shape[0]
    if n == 0:
        raise ValueError("empty evaluation set")
    total_loss = 0.0
    wrong = 0
    for start in range(0, n, batch_size):
        sl = slice(start, start + batch_size)
        logits, _ = forward(params, seqs[sl])
        total_loss += loss(logits, labels[sl]) * logits.shape[0]
        wrong += int(((logits > 0).astype(np.int64) != labels[sl]).sum())
    return total_loss / n, wrong / n


# ---------------------------------------------------------------------------
# Checkpoints: header (magic, version, dims, dtype width) then the flat
# parameter vector, little-endian.

def save_checkpoint(path, params: ModelParams) -> None:
    cfg = params.config
    width = 4 if cfg.dtype == "float32" else 8
    header = struct.pack(
        "<4sIIIIIIB", CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
        cfg.vocab_size, cfg.embed_dim, cfg.hidden_dim, cfg.mlp_hidden,
        cfg.seq_len, width,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(params.flat.astype(f"<f{width}").tobytes())


def load_checkpoint(path) -> ModelParams:
    header_size = struct.calcsize("<4sIIIIIIB")
    with open(path, "rb") as fh:
        header = fh.read(header_size)
        if len(header) != header_size:
            raise FeatclashError(f"{path}: truncated checkpoint header")
        magic, version, v, e, h, m, t, width = struct.unpack("<4sIIIIIIB", header)
        if magic != CHECKPOINT_MAGIC:
            raise FeatclashError(f"{path}: not a featclash checkpoint")
        if version != CHECKPOINT_VERSION:
            raise FeatclashError(f"{path}: unsupported checkpoint version {version}")
        cfg = ModelConfig(vocab_size=v, embed_dim=e, hidden_dim=h, mlp_hidden=m,
                          seq_len=t, dtype="float32" if width == 4 else "float64")
        raw = np.frombuffer(fh.read(), dtype=f"<f{width}")
    return ModelParams(cfg, raw.astype(cfg.np_dtype))
