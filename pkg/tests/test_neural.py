"""Neural stack tests: scalar-oracle forward, finite-difference gradients, Adam."""
import math

import numpy as np
import pytest

from featclash import neural
from featclash.errors import FeatclashError
from featclash.neural import (
    AdamState,
    ModelConfig,
    ModelParams,
    adam_step,
    backward,
    forward,
    init_params,
    load_checkpoint,
    loss,
    predict,
    save_checkpoint,
)


def tiny_config(**kw):
    defaults = dict(vocab_size=11, embed_dim=4, hidden_dim=5, mlp_hidden=3,
                    seq_len=4, dtype="float64")
    defaults.update(kw)
    return ModelConfig(**defaults)


def scalar_forward_oracle(params, seq):
    """Straightforward non-vectorized re-implementation with python floats."""
    cfg = params.config
    h_dim = cfg.hidden_dim

    def sig(x):
        return 1.0 / (1.0 + math.exp(-x))

    h = [0.0] * h_dim
    c = [0.0] * h_dim
    for sym in seq:
        x = [float(v) for v in params.emb[sym]]
        pre = []
        for j in range(4 * h_dim):
            acc = float(params.b_lstm[j])
            for a in range(cfg.embed_dim):
                acc += x[a] * float(params.w_x[a, j])
            for a in range(h_dim):
                acc += h[a] * float(params.w_h[a, j])
            pre.append(acc)
        gi = [sig(pre[j]) for j in range(h_dim)]
        gf = [sig(pre[h_dim + j]) for j in range(h_dim)]
        gg = [math.tanh(pre[2 * h_dim + j]) for j in range(h_dim)]
        go = [sig(pre[3 * h_dim + j]) for j in range(h_dim)]
        c = [gf[j] * c[j] + gi[j] * gg[j] for j in range(h_dim)]
        h = [go[j] * math.tanh(c[j]) for j in range(h_dim)]
    a1 = []
    for j in range(cfg.mlp_hidden):
        acc = float(params.b_mlp[j])
        for a in range(h_dim):
            acc += h[a] * float(params.w_mlp[a, j])
        a1.append(max(acc, 0.0))
    z = float(params.b_out[0])
    for j in range(cfg.mlp_hidden):
        z += a1[j] * float(params.w_out[j])
    return z


class TestForward:
    def test_zero_params_give_logit_zero(self):
        cfg = tiny_config()
        params = ModelParams(cfg)
        logits, _ = forward(params, np.zeros((3, cfg.seq_len), dtype=np.int64))
        assert np.all(logits == 0.0)

    def test_matches_scalar_oracle(self):
        cfg = tiny_config()
        rng = np.random.default_rng(0)
        params = init_params(cfg, rng)
        seqs = rng.integers(0, cfg.vocab_size, size=(8, cfg.seq_len))
        logits, _ = forward(params, seqs)
        for i, seq in enumerate(seqs):
            want = scalar_forward_oracle(params, seq)
            assert abs(logits[i] - want) <= 1e-12 * max(abs(want), 1.0)

    def test_batch_equals_per_example(self):
        cfg = tiny_config()
        rng = np.random.default_rng(1)
        params = init_params(cfg, rng)
        seqs = rng.integers(0, cfg.vocab_size, size=(6, cfg.seq_len))
        batch_logits, _ = forward(params, seqs)
        singles = [forward(params, seqs[i:i + 1])[0][0] for i in range(6)]
        assert np.allclose(batch_logits, singles, rtol=0, atol=1e-14)

    def test_out_of_range_symbol(self):
        cfg = tiny_config()
        params = ModelParams(cfg)
        with pytest.raises(FeatclashError):
            forward(params, np.full((1, cfg.seq_len), cfg.vocab_size))

    def test_deterministic(self):
        cfg = tiny_config()
        params = init_params(cfg, np.random.default_rng(2))
        seqs = np.random.default_rng(3).integers(0, 11, size=(4, 4))
        a, _ = forward(params, seqs)
        b, _ = forward(params, seqs)
        assert np.array_equal(a, b)


class TestLoss:
    def test_logit_zero_is_ln2(self):
        for y in (0, 1):
            assert loss(np.array([0.0]), np.array([y])) == pytest.approx(math.log(2))

    def test_nonnegative(self):
        rng = np.random.default_rng(4)
        z = rng.normal(size=100) * 5
        y = rng.integers(0, 2, size=100)
        assert loss(z, y) >= 0.0

    def test_matches_direct_formula(self):
        # direct-formula oracle at moderate logits
        rng = np.random.default_rng(5)
        z = rng.uniform(-10, 10, size=200)
        y = rng.integers(0, 2, size=200)
        sig = 1.0 / (1.0 + np.exp(-z))
        direct = float(np.mean(-y * np.log(sig) - (1 - y) * np.log(1 - sig)))
        assert loss(z, y) == pytest.approx(direct, rel=1e-12)


def central_difference(params, seqs, labels, flat_index, h=1e-4):
    orig = params.flat[flat_index]
    params.flat[flat_index] = orig + h
    up = loss(forward(params, seqs)[0], labels)
    params.flat[flat_index] = orig - h
    down = loss(forward(params, seqs)[0], labels)
    params.flat[flat_index] = orig
    return (up - down) / (2 * h)


def check_gradients(params, seqs, labels, indices, tol=1e-4):
    logits, cache = forward(params, seqs)
    grads = backward(params, cache, labels)
    worst = 0.0
    for i in indices:
        fd = central_difference(params, seqs, labels, int(i))
        denom = max(abs(fd), abs(grads.flat[i]), 1e-8)
        worst = max(worst, abs(fd - grads.flat[i]) / denom)
    assert worst <= tol, f"worst relative gradient error {worst}"


class TestBackward:
    def test_bias_gradients_at_zero_params(self):
        cfg = tiny_config()
        params = ModelParams(cfg)
        rng = np.random.default_rng(6)
        seqs = rng.integers(0, cfg.vocab_size, size=(5, cfg.seq_len))
        labels = rng.integers(0, 2, size=5)
        bias_indices = list(range(*params.slices["b_lstm"].indices(params.size))) \
            + list(range(*params.slices["b_mlp"].indices(params.size))) \
            + list(range(*params.slices["b_out"].indices(params.size)))
        check_gradients(params, seqs, labels, bias_indices)

    def test_random_coordinates_per_group(self):
        cfg = tiny_config()
        rng = np.random.default_rng(7)
        params = init_params(cfg, rng)
        seqs = rng.integers(0, cfg.vocab_size, size=(6, cfg.seq_len))
        labels = rng.integers(0, 2, size=6)
        indices = []
        for name, sl in params.slices.items():
            lo, hi, _ = sl.indices(params.size)
            indices.extend(rng.integers(lo, hi, size=20))
        check_gradients(params, seqs, labels, indices)

    def test_unused_embedding_row_gradient_is_zero(self):
        cfg = tiny_config()
        rng = np.random.default_rng(8)
        params = init_params(cfg, rng)
        seqs = rng.integers(0, 5, size=(4, cfg.seq_len))  # symbols 0..4 only
        labels = rng.integers(0, 2, size=4)
        logits, cache = forward(params, seqs)
        grads = backward(params, cache, labels)
        assert np.all(grads.emb[7] == 0.0)

    def test_random_small_configs(self):
        # property over random architectures, >= 200 coordinates in total
        rng = np.random.default_rng(9)
        total = 0
        for trial in range(5):
            cfg = ModelConfig(
                vocab_size=int(rng.integers(5, 15)),
                embed_dim=int(rng.integers(3, 9)),
                hidden_dim=int(rng.integers(3, 9)),
                mlp_hidden=int(rng.integers(3, 9)),
                seq_len=int(rng.integers(2, 7)),
                dtype="float64")
            params = init_params(cfg, rng)
            seqs = rng.integers(0, cfg.vocab_size, size=(5, cfg.seq_len))
            labels = rng.integers(0, 2, size=5)
            indices = rng.integers(0, params.size, size=45)
            check_gradients(params, seqs, labels, indices)
            total += len(indices)
        assert total >= 200

    def test_gradient_buffer_reuse(self):
        cfg = tiny_config()
        rng = np.random.default_rng(10)
        params = init_params(cfg, rng)
        seqs = rng.integers(0, cfg.vocab_size, size=(3, cfg.seq_len))
        labels = rng.integers(0, 2, size=3)
        _, cache = forward(params, seqs)
        fresh = backward(params, cache, labels)
        buf = params.zeros_like()
        buf.flat.fill(123.0)
        reused = backward(params, cache, labels, out=buf)
        assert np.array_equal(fresh.flat, reused.flat)


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        cfg = tiny_config()
        params = init_params(cfg, np.random.default_rng(11))
        before = params.flat.copy()
        adam_step(params, params.zeros_like(), AdamState.for_params(params))
        assert np.array_equal(params.flat, before)

    def test_first_step_is_signed_lr(self):
        cfg = tiny_config()
        params = ModelParams(cfg)
        grads = params.zeros_like()
        grads.flat[0] = 1e6
        grads.flat[1] = -1e6
        adam_step(params, grads, AdamState.for_params(params), lr=1e-3)
        assert params.flat[0] == pytest.approx(-1e-3, rel=1e-6)
        assert params.flat[1] == pytest.approx(1e-3, rel=1e-6)

    def test_quadratic_convergence(self):
        # closed-form oracle: the minimum of 0.5(w0-a)^2 + 0.5(w1-b)^2 is (a, b)
        a, b = 0.7, -0.4
        cfg = tiny_config()
        params = ModelParams(cfg)
        grads = params.zeros_like()
        state = AdamState.for_params(params)
        for _ in range(100):
            grads.flat.fill(0.0)
            grads.flat[0] = params.flat[0] - a
            grads.flat[1] = params.flat[1] - b
            adam_step(params, grads, state, lr=0.05)
        assert abs(params.flat[0] - a) <= 1e-3
        assert abs(params.flat[1] - b) <= 1e-3


class TestInitAndPredict:
    def test_biases_zero_and_weights_bounded(self):
        cfg = tiny_config()
        params = init_params(cfg, np.random.default_rng(12))
        assert np.all(params.b_lstm == 0)
        assert np.all(params.b_mlp == 0)
        assert params.b_out[0] == 0
        assert np.max(np.abs(params.emb)) <= 1  # one-hot lookup: fan-in 1
        assert np.max(np.abs(params.w_x)) <= 1 / math.sqrt(cfg.embed_dim)
        assert np.max(np.abs(params.w_h)) <= 1 / math.sqrt(cfg.hidden_dim)
        assert np.max(np.abs(params.w_out)) <= 1 / math.sqrt(cfg.mlp_hidden)

    def test_same_seed_same_init(self):
        cfg = tiny_config()
        a = init_params(cfg, np.random.default_rng(13))
        b = init_params(cfg, np.random.default_rng(13))
        assert np.array_equal(a.flat, b.flat)

    def test_predict_tie_break_and_monotone(self):
        cfg = tiny_config()
        params = ModelParams(cfg)  # all logits 0
        seqs = np.zeros((4, cfg.seq_len), dtype=np.int64)
        assert np.all(predict(params, seqs) == 0)
        params.b_out[0] = 0.1
        assert np.all(predict(params, seqs) == 1)


class TestCheckpoints:
    @pytest.mark.parametrize("dtype", ["float32", "float64"])
    def test_round_trip(self, tmp_path, dtype):
        cfg = tiny_config(dtype=dtype)
        params = init_params(cfg, np.random.default_rng(14))
        path = tmp_path / "model.bin"
        save_checkpoint(path, params)
        loaded = load_checkpoint(path)
        assert loaded.config == cfg
        assert np.array_equal(loaded.flat, params.flat)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(FeatclashError):
            load_checkpoint(path)
