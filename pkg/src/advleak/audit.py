"""Post-hoc auditing of frozen encoders.

Everything here operates downstream of a trained encoder: encoding datasets
to vector dumps, training attacker networks on the frozen vectors, leakage
and fairness reports, encoder fusion, prediction-consistency analysis, the
word-frequency rank test, and the overfitting / unseen-data checks.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers
from .data import Dataset, VectorDump
from .layers import EncoderParams, MlpParams, argmax_predictions
from .tensor import SgdMomentum, Tensor, derive_rng, softmax_nll
from .training import dataset_to_ids


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def encode_ids(encoder: EncoderParams, id_seqs, batch_size=512) -> np.ndarray:
    """Eval-mode representations, one row per sequence, order preserving."""
    out = []
    for lo in range(0, len(id_seqs), batch_size):
        h = layers.encode_sequences(encoder, id_seqs[lo : lo + batch_size])
        out.append(h.data)
    return np.concatenate(out, axis=0)


def encode_dataset(encoder: EncoderParams, ds: Dataset, vocab: dict) -> VectorDump:
    if any(v >= encoder.embedding.data.shape[0] for v in vocab.values()):
        raise ValueError("vocabulary does not match the encoder's embedding table")
    vectors = encode_ids(encoder, dataset_to_ids(ds, vocab))
    y, z = ds.labels()
    return VectorDump(vectors=vectors, z=z, y=y)


# ---------------------------------------------------------------------------
# Attacker
# ---------------------------------------------------------------------------


@dataclass
class AttackerConfig:
    hidden_dim: int = 300
    depth: int = 1
    epochs: int = 30
    lr: float = 0.01
    momentum: float = 0.9
    dropout: float = 0.2
    batch_size: int = 32
    init_scale: float = 0.08
    seed: int = 0


@dataclass
class AttackerResult:
    best_acc: float
    best_epoch: int
    best_preds: np.ndarray  # dev predictions at the best epoch
    epoch_accs: list
    params: MlpParams


def _attacker_eval(mlp: MlpParams, x: np.ndarray) -> np.ndarray:
    return argmax_predictions(layers.mlp_forward(mlp, Tensor(x)).data)


def train_attacker(train: VectorDump, dev: VectorDump, cfg: AttackerConfig) -> AttackerResult:
    """Train an MLP on frozen vectors to predict z; model selection by dev accuracy."""
    if len(set(train.z.tolist())) < 2:
        raise ValueError("attacker training set contains a single z class")
    if train.dim != dev.dim:
        raise ValueError(f"train dim {train.dim} != dev dim {dev.dim}")
    mlp = MlpParams(
        train.dim,
        cfg.hidden_dim,
        2,
        derive_rng(cfg.seed, "init/attacker"),
        n_hidden=cfg.depth,
        init_scale=cfg.init_scale,
    )
    opt = SgdMomentum(mlp.params(), lr=cfg.lr, momentum=cfg.momentum)
    shuffle_rng = derive_rng(cfg.seed, "shuffle/attacker")
    drop_rng = derive_rng(cfg.seed, "dropout/attacker")
    n = train.vectors.shape[0]
    best = AttackerResult(-1.0, -1, np.array([]), [], mlp)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            logits = layers.mlp_forward(
                mlp, Tensor(train.vectors[idx]), cfg.dropout, drop_rng, training=True
            )
            loss = softmax_nll(logits, train.z[idx])
            loss.backward()
            opt.step()
        preds = _attacker_eval(mlp, dev.vectors)
        acc = float((preds == dev.z).mean())
        best.epoch_accs.append(acc)
        if acc > best.best_acc:
            best.best_acc = acc
            best.best_epoch = epoch
            best.best_preds = preds
    return best


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class LeakageReport:
    main_task_acc: float
    adversary_dev_accs: list
    attacker_acc: float
    split: str = "dev"
    config_echo: dict = field(default_factory=dict)

    @property
    def leakage(self) -> float:
        return self.attacker_acc - 0.5

    @property
    def abs_leakage(self) -> float:
        # Below-chance recovery is as informative as above-chance.
        return abs(self.leakage)

    @property
    def delta(self) -> float | None:
        if not self.adversary_dev_accs:
            return None
        return self.attacker_acc - float(np.mean(self.adversary_dev_accs))

    def to_dict(self):
        d = asdict(self)
        d.update(leakage=self.leakage, abs_leakage=self.abs_leakage, delta=self.delta)
        return d


@dataclass
class FairnessReport:
    demographic_parity_gap: float | None
    equalized_odds_gaps: dict  # y value -> gap (or None for empty cells)
    guarded_tolerance: float = 0.01

    @property
    def equality_of_opportunity_gap(self):
        return self.equalized_odds_gaps.get(1)

    @property
    def consistent_with_guardedness(self) -> bool:
        gaps = [self.demographic_parity_gap] + list(self.equalized_odds_gaps.values())
        return all(g is not None and g <= self.guarded_tolerance for g in gaps)

    def to_dict(self):
        return {
            "demographic_parity_gap": self.demographic_parity_gap,
            "equalized_odds_gaps": {str(k): v for k, v in self.equalized_odds_gaps.items()},
            "equality_of_opportunity_gap": self.equality_of_opportunity_gap,
            "consistent_with_guardedness": self.consistent_with_guardedness,
        }


def _positive_rate(y_pred, mask):
    if mask.sum() == 0:
        return None
    return float((y_pred[mask] == 1).mean())


def fairness_report(y_true, z, y_pred, guarded_tolerance=0.01) -> FairnessReport:
    """Empirical fairness gaps of the main classifier's predictions w.r.t. z."""
    y_true = np.asarray(y_true)
    z = np.asarray(z)
    y_pred = np.asarray(y_pred)
    r0 = _positive_rate(y_pred, z == 0)
    r1 = _positive_rate(y_pred, z == 1)
    dp = None if r0 is None or r1 is None else abs(r0 - r1)
    odds = {}
    for y in (0, 1):
        r0y = _positive_rate(y_pred, (z == 0) & (y_true == y))
        r1y = _positive_rate(y_pred, (z == 1) & (y_true == y))
        odds[y] = None if r0y is None or r1y is None else abs(r0y - r1y)
    return FairnessReport(dp, odds, guarded_tolerance)


# ---------------------------------------------------------------------------
# Encoder fusion
# ---------------------------------------------------------------------------


def fuse_encoders(
    embedding_src: EncoderParams,
    rnn_src: EncoderParams,
    embedding_tag: str,
    rnn_tag: str,
    vocab_a: dict | None = None,
    vocab_b: dict | None = None,
) -> EncoderParams:
    """Compose the embedding matrix of one encoder with the LSTM of another."""
    emb_dim = embedding_src.embedding.data.shape[1]
    if emb_dim != rnn_src.lstm.input_dim:
        raise ValueError(
            f"embedding dim {emb_dim} != LSTM input dim {rnn_src.lstm.input_dim}"
        )
    if vocab_a is not None and vocab_b is not None and vocab_a != vocab_b:
        raise ValueError("fused encoders must share one vocabulary")
    fused = EncoderParams(
        embedding=embedding_src.embedding,
        lstm=rnn_src.lstm,
        vocab_size=embedding_src.embedding.data.shape[0],
        tag=f"emb:{embedding_tag}/rnn:{rnn_tag}",
    )
    return fused


# ---------------------------------------------------------------------------
# Consistency analysis
# ---------------------------------------------------------------------------


@dataclass
class ConsistencyResult:
    correct_ids: list  # correctly predicted by >= threshold attackers
    consistent_ids: list  # same prediction by >= threshold attackers, any label
    correct_counts: np.ndarray
    n_seeds: int
    threshold: int


def consistency_analysis(preds_by_seed, gold_z, threshold: int) -> ConsistencyResult:
    """Find dev examples most attackers agree on.

    preds_by_seed is an (n_seeds, n_examples) array of attacker predictions
    from independently seeded runs over the same dev split.
    """
    preds = np.asarray(preds_by_seed)
    gold = np.asarray(gold_z)
    n_seeds = preds.shape[0]
    if threshold > n_seeds:
        raise ValueError(f"threshold {threshold} > number of seeds {n_seeds}")
    correct_counts = (preds == gold[None, :]).sum(axis=0)
    ones = preds.sum(axis=0)
    agree = np.maximum(ones, n_seeds - ones)
    return ConsistencyResult(
        correct_ids=np.nonzero(correct_counts >= threshold)[0].tolist(),
        consistent_ids=np.nonzero(agree >= threshold)[0].tolist(),
        correct_counts=correct_counts,
        n_seeds=n_seeds,
        threshold=threshold,
    )


# ---------------------------------------------------------------------------
# Mann-Whitney U
# ---------------------------------------------------------------------------

EXACT_MAX_N = 20  # exact enumeration below this combined sample size


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sv = values[order]
    i = 0
    n = len(values)
    while i < n:
        j = i
        while j + 1 < n and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def mann_whitney_u(sample_a, sample_b, alternative: str = "less"):
    """One-tailed Mann-Whitney U test with midrank tie handling.

    alternative "less" tests whether sample_a is stochastically smaller than
    sample_b; "greater" the opposite. Returns (U_a, p). Exact enumeration of
    all rank assignments is used when n_a + n_b < 20, otherwise the normal
    approximation with tie-corrected variance and continuity correction.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    if alternative not in ("less", "greater"):
        raise ValueError(f"alternative must be 'less' or 'greater', got {alternative!r}")
    n1, n2 = a.size, b.size
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    u_a = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)

    if n1 + n2 < EXACT_MAX_N:
        base = n1 * (n1 + 1) / 2.0
        count = 0
        total = 0
        eps = 1e-9
        for combo in itertools.combinations(range(n1 + n2), n1):
            u = ranks[list(combo)].sum() - base
            total += 1
            if alternative == "less":
                count += u <= u_a + eps
            else:
                count += u >= u_a - eps
        return u_a, count / total
    # Normal approximation.
    n = n1 + n2
    mu = n1 * n2 / 2.0
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(((tie_counts**3) - tie_counts).sum())
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        return u_a, 0.5  # all values identical: the test is uninformative
    sd = math.sqrt(var)
    if alternative == "less":
        zscore = (u_a - mu + 0.5) / sd
        p = 0.5 * math.erfc(-zscore / math.sqrt(2.0))
    else:
        zscore = (u_a - mu - 0.5) / sd
        p = 0.5 * math.erfc(zscore / math.sqrt(2.0))
    return u_a, p


def frequency_study(consistent_examples, background_examples, train_freq: Counter):
    """Compare training-set frequencies of words unique to each example group.

    Group vocabularies are the symmetric difference of the two example sets'
    token sets; each word maps to its training-set frequency. Tests whether
    the consistent group's words are rarer (alternative "less").
    """
    vocab_c = {t for e in consistent_examples for t in e.tokens}
    vocab_b = {t for e in background_examples for t in e.tokens}
    only_c = vocab_c - vocab_b
    only_b = vocab_b - vocab_c
    freqs_c = [train_freq.get(t, 0) for t in sorted(only_c)]
    freqs_b = [train_freq.get(t, 0) for t in sorted(only_b)]
    u, p = mann_whitney_u(freqs_c, freqs_b, alternative="less")
    return {
        "u_statistic": u,
        "p_value": p,
        "n_consistent_words": len(freqs_c),
        "n_background_words": len(freqs_b),
        "mean_freq_consistent": float(np.mean(freqs_c)) if freqs_c else None,
        "mean_freq_background": float(np.mean(freqs_b)) if freqs_b else None,
    }


# ---------------------------------------------------------------------------
# Overfitting and unseen-data checks
# ---------------------------------------------------------------------------


def overfit_check(
    encoder: EncoderParams,
    train_ds: Dataset,
    vocab: dict,
    attacker_cfg: AttackerConfig,
    seed: int = 0,
):
    """Attacker trained on 90% of the encoded training vectors, scored on the rest."""
    dump = encode_dataset(encoder, train_ds, vocab)
    n = dump.vectors.shape[0]
    order = derive_rng(seed, "overfit/partition").permutation(n)
    cut = (9 * n) // 10
    tr = VectorDump(dump.vectors[order[:cut]], dump.z[order[:cut]])
    held = VectorDump(dump.vectors[order[cut:]], dump.z[order[cut:]])
    result = train_attacker(tr, held, attacker_cfg)
    return result.best_acc, result


def unseen_data_check(
    encoder: EncoderParams,
    vocab: dict,
    attacker: MlpParams,
    fresh_ds: Dataset,
    seen_token_sequences,
):
    """Evaluate a trained attacker on encodings of never-trained-on examples."""
    seen = set(seen_token_sequences)
    overlap = [e.tokens for e in fresh_ds.examples if e.tokens in seen]
    if overlap:
        raise ValueError(
            f"{len(overlap)} fresh examples overlap the training data, e.g. {overlap[0]}"
        )
    dump = encode_dataset(encoder, fresh_ds, vocab)
    preds = _attacker_eval(attacker, dump.vectors)
    return float((preds == dump.z).mean())
