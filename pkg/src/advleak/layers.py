"""Model components: embedding table, single-layer LSTM encoder, MLP heads.

The encoder reads token embeddings and returns the final LSTM state. Heads
are one-or-more hidden-layer MLPs with tanh activations. All weights are
initialized uniform(-0.08, 0.08) with zero biases; the forget-gate bias
offset is a knob (default 0).
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    ShapeError,
    Tensor,
    add,
    affine,
    concat_rows,
    dropout,
    embedding_lookup,
    hadamard,
    matmul,
    sigmoid,
    take_rows,
    tanh,
    uniform_init,
    zeros_param,
)

GATES = ("i", "f", "o", "g")


class LstmParams:
    """Weights of a single LSTM layer: per-gate input, recurrent and bias terms."""

    def __init__(self, input_dim, hidden_dim, rng, forget_bias=0.0, init_scale=0.08):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.w = {k: uniform_init(rng, (input_dim, hidden_dim), -init_scale, init_scale) for k in GATES}
        self.u = {k: uniform_init(rng, (hidden_dim, hidden_dim), -init_scale, init_scale) for k in GATES}
        self.b = {k: zeros_param((hidden_dim,)) for k in GATES}
        if forget_bias:
            self.b["f"].data += forget_bias

    def params(self):
        return (
            [self.w[k] for k in GATES]
            + [self.u[k] for k in GATES]
            + [self.b[k] for k in GATES]
        )


class MlpParams:
    """Stack of (W, b) layers; tanh on hidden layers, linear output."""

    def __init__(self, input_dim, hidden_dim, out_dim, rng, n_hidden=1, init_scale=0.08):
        if n_hidden < 1:
            raise ValueError("MLP needs at least one hidden layer")
        self.init_scale = init_scale
        dims = [input_dim] + [hidden_dim] * n_hidden + [out_dim]
        self.layers = [
            (
                uniform_init(rng, (d_in, d_out), -init_scale, init_scale),
                zeros_param((d_out,)),
            )
            for d_in, d_out in zip(dims[:-1], dims[1:])
        ]

    def params(self):
        return [t for w, b in self.layers for t in (w, b)]

    def reinit(self, rng):
        """Replace all weights in place with a fresh random initialization."""
        scale = getattr(self, "init_scale", 0.08)
        for w, b in self.layers:
            w.data[...] = rng.uniform(-scale, scale, size=w.data.shape)
            b.data[...] = 0.0
            w.grad = None
            b.grad = None


@dataclass
class EncoderParams:
    """Embedding matrix plus LSTM; maps token ids to a fixed vector."""

    embedding: Tensor
    lstm: LstmParams
    vocab_size: int = 0
    tag: str = ""

    def params(self):
        return [self.embedding] + self.lstm.params()


def make_encoder(vocab_size, embed_dim, hidden_dim, rng, forget_bias=0.0, init_scale=0.08):
    emb = uniform_init(rng, (vocab_size, embed_dim), -init_scale, init_scale)
    return EncoderParams(
        embedding=emb,
        lstm=LstmParams(embed_dim, hidden_dim, rng, forget_bias=forget_bias, init_scale=init_scale),
        vocab_size=vocab_size,
    )


def lstm_step(p: LstmParams, x_t: Tensor, h: Tensor, c: Tensor):
    i = sigmoid(add(affine(x_t, p.w["i"], p.b["i"]), matmul(h, p.u["i"])))
    f = sigmoid(add(affine(x_t, p.w["f"], p.b["f"]), matmul(h, p.u["f"])))
    o = sigmoid(add(affine(x_t, p.w["o"], p.b["o"]), matmul(h, p.u["o"])))
    g = tanh(add(affine(x_t, p.w["g"], p.b["g"]), matmul(h, p.u["g"])))
    c_next = add(hadamard(f, c), hadamard(i, g))
    h_next = hadamard(o, tanh(c_next))
    return h_next, c_next


def lstm_encode(p: LstmParams, embedded: Tensor) -> Tensor:
    """Run the recurrence over one embedded sequence (m x d); return h_m as (1 x H)."""
    m = embedded.data.shape[0]
    if m < 1:
        raise ValueError("cannot encode an empty sequence")
    if embedded.data.shape[1] != p.input_dim:
        raise ShapeError(
            f"embedded dim {embedded.data.shape[1]} != LSTM input dim {p.input_dim}"
        )
    h = Tensor(np.zeros((1, p.hidden_dim)))
    c = Tensor(np.zeros((1, p.hidden_dim)))
    for t in range(m):
        x_t = take_rows(embedded, [t])
        h, c = lstm_step(p, x_t, h, c)
    return h


def lstm_encode_batch(enc: EncoderParams, id_seqs) -> Tensor:
    """Encode a batch of equal-length token-id sequences; returns (n x H)."""
    lengths = {len(s) for s in id_seqs}
    if lengths == {0} or not id_seqs:
        raise ValueError("cannot encode empty sequences")
    if len(lengths) != 1:
        raise ValueError("lstm_encode_batch requires equal-length sequences")
    ids = np.asarray(id_seqs, dtype=np.intp)
    n, m = ids.shape
    p = enc.lstm
    h = Tensor(np.zeros((n, p.hidden_dim)))
    c = Tensor(np.zeros((n, p.hidden_dim)))
    for t in range(m):
        x_t = embedding_lookup(enc.embedding, ids[:, t])
        h, c = lstm_step(p, x_t, h, c)
    return h


def encode_sequences(enc: EncoderParams, id_seqs) -> Tensor:
    """Encode variable-length sequences one length-group at a time.

    Each example is processed without padding: sequences are bucketed by
    length, each bucket runs as one uniform batch, and the outputs are
    reassembled in the original order.
    """
    n = len(id_seqs)
    by_len = {}
    for i, s in enumerate(id_seqs):
        by_len.setdefault(len(s), []).append(i)
    parts = []
    order = []
    for length in sorted(by_len):
        idxs = by_len[length]
        parts.append(lstm_encode_batch(enc, [id_seqs[i] for i in idxs]))
        order.extend(idxs)
    h_all = parts[0] if len(parts) == 1 else concat_rows(parts)
    inverse = np.empty(n, dtype=np.intp)
    inverse[np.asarray(order, dtype=np.intp)] = np.arange(n)
    if len(parts) == 1 and np.array_equal(inverse, np.arange(n)):
        return h_all
    return take_rows(h_all, inverse)


def mlp_forward(p: MlpParams, h: Tensor, dropout_p=0.0, rng=None, training=False) -> Tensor:
    """Tanh hidden layers (with dropout at train time), linear output layer."""
    out = h
    last = len(p.layers) - 1
    for i, (w, b) in enumerate(p.layers):
        out = affine(out, w, b)
        if i != last:
            out = tanh(out)
            if training and dropout_p > 0.0:
                out = dropout(out, dropout_p, rng, training=True)
    return out


def argmax_predictions(logits: np.ndarray) -> np.ndarray:
    """Deterministic argmax; ties broken toward the lowest class index."""
    return np.argmax(logits, axis=1)


# ---------------------------------------------------------------------------
# Checkpoints: npz archives of the raw float64 arrays plus a JSON config blob.
# Round trips are bit-exact.
# ---------------------------------------------------------------------------


def _encoder_arrays(enc: EncoderParams, prefix):
    arrays = {f"{prefix}embedding": enc.embedding.data}
    for k in GATES:
        arrays[f"{prefix}w_{k}"] = enc.lstm.w[k].data
        arrays[f"{prefix}u_{k}"] = enc.lstm.u[k].data
        arrays[f"{prefix}b_{k}"] = enc.lstm.b[k].data
    return arrays


def _encoder_from_arrays(arrays, prefix):
    emb = Tensor(arrays[f"{prefix}embedding"].copy(), requires_grad=True)
    vocab, d = emb.data.shape
    hidden = arrays[f"{prefix}u_i"].shape[0]
    lstm = LstmParams.__new__(LstmParams)
    lstm.input_dim = d
    lstm.hidden_dim = hidden
    lstm.w = {k: Tensor(arrays[f"{prefix}w_{k}"].copy(), requires_grad=True) for k in GATES}
    lstm.u = {k: Tensor(arrays[f"{prefix}u_{k}"].copy(), requires_grad=True) for k in GATES}
    lstm.b = {k: Tensor(arrays[f"{prefix}b_{k}"].copy(), requires_grad=True) for k in GATES}
    return EncoderParams(embedding=emb, lstm=lstm, vocab_size=vocab)


def _mlp_arrays(mlp: MlpParams, prefix):
    arrays = {}
    for i, (w, b) in enumerate(mlp.layers):
        arrays[f"{prefix}w{i}"] = w.data
        arrays[f"{prefix}b{i}"] = b.data
    return arrays


def _mlp_from_arrays(arrays, prefix):
    mlp = MlpParams.__new__(MlpParams)
    mlp.layers = []
    i = 0
    while f"{prefix}w{i}" in arrays:
        mlp.layers.append(
            (
                Tensor(arrays[f"{prefix}w{i}"].copy(), requires_grad=True),
                Tensor(arrays[f"{prefix}b{i}"].copy(), requires_grad=True),
            )
        )
        i += 1
    return mlp


def save_checkpoint(path, encoder: EncoderParams, heads: dict, config: dict, vocab=None):
    """Persist encoder + named MLP heads + config (and vocab) to one npz file."""
    arrays = _encoder_arrays(encoder, "enc/")
    meta = {"heads": sorted(heads), "config": config}
    for name, mlp in heads.items():
        arrays.update(_mlp_arrays(mlp, f"head/{name}/"))
    if vocab is not None:
        meta["vocab"] = vocab
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path):
    """Inverse of save_checkpoint; returns (encoder, heads, config, vocab)."""
    with np.load(path) as npz:
        arrays = {k: npz[k] for k in npz.files}
    meta = json.loads(arrays.pop("__meta__").tobytes().decode("utf-8"))
    encoder = _encoder_from_arrays(arrays, "enc/")
    heads = {name: _mlp_from_arrays(arrays, f"head/{name}/") for name in meta["heads"]}
    return encoder, heads, meta["config"], meta.get("vocab")
