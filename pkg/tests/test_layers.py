"""LSTM cell oracle, batched/bucketed encoding equivalence, MLP heads,
checkpoint round trips."""

import numpy as np
import pytest

from advleak.layers import (
    GATES,
    EncoderParams,
    LstmParams,
    MlpParams,
    argmax_predictions,
    encode_sequences,
    load_checkpoint,
    lstm_encode,
    lstm_encode_batch,
    make_encoder,
    mlp_forward,
    save_checkpoint,
)
from advleak.tensor import ShapeError, Tensor, derive_rng, tsum


def scalar_lstm_oracle(p: LstmParams, xs):
    """Independent numpy re-derivation of the recurrence, step by step."""

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    h = np.zeros(p.hidden_dim)
    c = np.zeros(p.hidden_dim)
    for x in xs:
        i = sig(x @ p.w["i"].data + h @ p.u["i"].data + p.b["i"].data)
        f = sig(x @ p.w["f"].data + h @ p.u["f"].data + p.b["f"].data)
        o = sig(x @ p.w["o"].data + h @ p.u["o"].data + p.b["o"].data)
        g = np.tanh(x @ p.w["g"].data + h @ p.u["g"].data + p.b["g"].data)
        c = f * c + i * g
        h = o * np.tanh(c)
    return h


def test_lstm_matches_scalar_oracle():
    rng = derive_rng(3, "test/lstm")
    p = LstmParams(4, 3, rng, init_scale=0.5)
    xs = rng.normal(size=(5, 4))
    h = lstm_encode(p, Tensor(xs))
    np.testing.assert_allclose(h.data[0], scalar_lstm_oracle(p, xs), atol=1e-12)


def test_lstm_zero_weights_zero_state():
    # All-zero weights: i=f=o=0.5, g=0, c stays 0, h = 0.5*tanh(0) = 0.
    rng = derive_rng(0, "x")
    p = LstmParams(2, 3, rng)
    for k in GATES:
        p.w[k].data[...] = 0.0
        p.u[k].data[...] = 0.0
    h = lstm_encode(p, Tensor(np.ones((4, 2))))
    np.testing.assert_allclose(h.data, np.zeros((1, 3)), atol=1e-15)


def test_lstm_order_sensitivity():
    rng = derive_rng(9, "test/perm")
    p = LstmParams(3, 4, rng, init_scale=0.5)
    xs = rng.normal(size=(6, 3))
    h1 = lstm_encode(p, Tensor(xs)).data
    h2 = lstm_encode(p, Tensor(xs[::-1].copy())).data
    assert not np.allclose(h1, h2)


def test_lstm_forget_bias_knob():
    rng1 = derive_rng(1, "a")
    rng2 = derive_rng(1, "a")
    p0 = LstmParams(2, 3, rng1, forget_bias=0.0)
    p1 = LstmParams(2, 3, rng2, forget_bias=1.0)
    np.testing.assert_allclose(p1.b["f"].data, p0.b["f"].data + 1.0)


def test_lstm_rejects_empty_and_mismatched():
    p = LstmParams(2, 3, derive_rng(0, "x"))
    with pytest.raises(ValueError):
        lstm_encode(p, Tensor(np.zeros((0, 2))))
    with pytest.raises(ShapeError):
        lstm_encode(p, Tensor(np.zeros((3, 5))))


def test_batched_encoding_matches_per_example():
    rng = derive_rng(11, "test/batch")
    enc = make_encoder(20, 3, 4, rng, init_scale=0.5)
    seqs = [[1, 2, 3], [4, 5, 6], [7, 8, 9]]
    batched = lstm_encode_batch(enc, seqs).data
    for i, s in enumerate(seqs):
        emb = Tensor(enc.embedding.data[np.asarray(s)])
        single = lstm_encode(enc.lstm, emb).data
        np.testing.assert_allclose(batched[i], single[0], atol=1e-12)


def test_encode_sequences_bucketing_preserves_order():
    rng = derive_rng(12, "test/bucket")
    enc = make_encoder(30, 3, 4, rng, init_scale=0.5)
    seqs = [[1, 2, 3, 4], [5, 6], [7, 8, 9], [10, 11], [12, 13, 14, 15]]
    out = encode_sequences(enc, seqs).data
    for i, s in enumerate(seqs):
        emb = Tensor(enc.embedding.data[np.asarray(s)])
        np.testing.assert_allclose(out[i], lstm_encode(enc.lstm, emb).data[0], atol=1e-12)


def test_encode_sequences_gradients_flow_to_embedding():
    rng = derive_rng(13, "test/bucketgrad")
    enc = make_encoder(10, 3, 2, rng, init_scale=0.5)
    out = encode_sequences(enc, [[1, 2], [3, 4, 5]])
    tsum(out).backward()
    assert enc.embedding.grad is not None
    used = {1, 2, 3, 4, 5}
    for tok in range(10):
        row = enc.embedding.grad[tok]
        if tok in used:
            assert np.any(row != 0.0)
        else:
            np.testing.assert_array_equal(row, np.zeros(3))


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------


def test_mlp_forward_oracle():
    mlp = MlpParams(2, 2, 2, derive_rng(0, "x"), n_hidden=1)
    (w1, b1), (w2, b2) = mlp.layers
    w1.data[...] = np.eye(2)
    b1.data[...] = 0.0
    w2.data[...] = [[1.0, 0.0], [0.0, 2.0]]
    b2.data[...] = [0.5, -0.5]
    x = np.array([[1.0, -1.0]])
    out = mlp_forward(mlp, Tensor(x)).data
    expected = np.tanh(x) @ w2.data + b2.data
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_mlp_depth_validation_and_reinit():
    with pytest.raises(ValueError):
        MlpParams(2, 2, 2, derive_rng(0, "x"), n_hidden=0)
    mlp = MlpParams(3, 4, 2, derive_rng(0, "x"), n_hidden=2, init_scale=0.3)
    before = [w.data.copy() for w, b in mlp.layers]
    mlp.layers[0][1].data[...] = 7.0
    mlp.reinit(derive_rng(1, "re"))
    for (w, b), old in zip(mlp.layers, before):
        assert not np.array_equal(w.data, old)
        assert np.abs(w.data).max() <= 0.3
        np.testing.assert_array_equal(b.data, np.zeros_like(b.data))


def test_argmax_ties_to_lowest_index():
    logits = np.array([[0.5, 0.5], [1.0, 2.0]])
    np.testing.assert_array_equal(argmax_predictions(logits), [0, 1])


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = derive_rng(21, "test/ckpt")
    enc = make_encoder(15, 3, 4, rng, init_scale=0.5)
    heads = {
        "classifier": MlpParams(4, 5, 2, rng),
        "adversary0": MlpParams(4, 5, 2, rng, n_hidden=2),
    }
    cfg = {"lr": 0.1, "lam": 1.5}
    vocab = {"<pad>": 0, "<unk>": 1, "hello": 2}
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, enc, heads, cfg, vocab=vocab)
    enc2, heads2, cfg2, vocab2 = load_checkpoint(path)
    assert cfg2 == cfg
    assert vocab2 == vocab
    assert np.array_equal(enc2.embedding.data, enc.embedding.data)
    for k in GATES:
        assert np.array_equal(enc2.lstm.w[k].data, enc.lstm.w[k].data)
        assert np.array_equal(enc2.lstm.u[k].data, enc.lstm.u[k].data)
        assert np.array_equal(enc2.lstm.b[k].data, enc.lstm.b[k].data)
    assert set(heads2) == set(heads)
    for name in heads:
        for (w, b), (w2, b2) in zip(heads[name].layers, heads2[name].layers):
            assert np.array_equal(w.data, w2.data)
            assert np.array_equal(b.data, b2.data)
    # Loaded parameters are trainable leaves.
    assert all(p.requires_grad for p in enc2.params())


def test_checkpoint_reload_same_encodings(tmp_path):
    rng = derive_rng(22, "test/ckpt2")
    enc = make_encoder(10, 3, 4, rng, init_scale=0.5)
    path = tmp_path / "c.npz"
    save_checkpoint(path, enc, {}, {})
    enc2, _, _, _ = load_checkpoint(path)
    seqs = [[1, 2, 3], [4, 5]]
    np.testing.assert_array_equal(
        encode_sequences(enc, seqs).data, encode_sequences(enc2, seqs).data
    )
