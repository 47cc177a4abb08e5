"""Joint objective assembly, stream isolation invariants, config round trips,
checkpointing of experiment artifacts."""

import numpy as np
import pytest

from advleak.data import Dataset, Example, build_vocab
from advleak.layers import GATES, MlpParams, encode_sequences, make_encoder, mlp_forward
from advleak.tensor import Tensor, add, derive_rng, grl, softmax_nll
from advleak.training import (
    ExperimentArtifacts,
    TrainingConfig,
    config_from_text,
    config_to_text,
    dataset_to_ids,
    evaluate,
    train_adversarial,
    train_model,
    train_single_task,
)


def tiny_corpus(n=60, seed=0):
    rng = derive_rng(seed, "test/corpus")
    examples = []
    seen = set()
    while len(examples) < n:
        y = int(rng.integers(2))
        z = int(rng.integers(2))
        toks = tuple(
            [f"w{int(i)}" for i in rng.integers(30, size=4)]
            + [f"y{y}", f"z{z}"]
        )
        if toks in seen:
            continue
        seen.add(toks)
        examples.append(Example(toks, y, z))
    return Dataset(examples[: n * 3 // 4]), Dataset(examples[n * 3 // 4 :], "dev")


def tiny_config(**kw):
    base = dict(
        embed_dim=4,
        encoder_hidden=5,
        cls_hidden_dim=6,
        adv_hidden_dim=6,
        epochs=2,
        batch_size=8,
        lr=0.05,
        init_scale=0.5,
        seed=0,
    )
    base.update(kw)
    return TrainingConfig(**base)


# ---------------------------------------------------------------------------
# Objective assembly
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_total_loss_is_sum_of_parts(k):
    """Joint loss equals main loss plus each adversary loss to 1e-12."""
    rng = derive_rng(k, "test/additivity")
    train, _ = tiny_corpus()
    vocab = build_vocab(train.examples)
    enc = make_encoder(len(vocab), 4, 5, rng, init_scale=0.5)
    cls = MlpParams(5, 6, 2, rng)
    advs = [MlpParams(5, 6, 2, rng) for _ in range(k)]
    ids = dataset_to_ids(train, vocab)[:16]
    y, z = train.labels()
    h = encode_sequences(enc, ids)
    main = softmax_nll(mlp_forward(cls, h), y[:16])
    total = main
    parts = [float(main.data)]
    for adv in advs:
        part = softmax_nll(mlp_forward(adv, grl(h, 1.0)), z[:16])
        parts.append(float(part.data))
        total = add(total, part)
    assert abs(float(total.data) - sum(parts)) <= 1e-12


def test_lambda_zero_matches_no_adversary_bitwise():
    """With lambda=0 the encoder/classifier trajectory is bitwise identical to
    a run without any adversary: adversary randomness is stream-isolated and
    the reversed gradient is exactly zero."""
    train, dev = tiny_corpus()
    art0 = train_model(train, dev, tiny_config(k_adversaries=0), target="y")
    art1 = train_model(train, dev, tiny_config(k_adversaries=1, lam=0.0), target="y")
    assert np.array_equal(art0.encoder.embedding.data, art1.encoder.embedding.data)
    for g in GATES:
        assert np.array_equal(art0.encoder.lstm.w[g].data, art1.encoder.lstm.w[g].data)
        assert np.array_equal(art0.encoder.lstm.u[g].data, art1.encoder.lstm.u[g].data)
        assert np.array_equal(art0.encoder.lstm.b[g].data, art1.encoder.lstm.b[g].data)
    for (w0, b0), (w1, b1) in zip(art0.classifier.layers, art1.classifier.layers):
        assert np.array_equal(w0.data, w1.data)
        assert np.array_equal(b0.data, b1.data)


def test_lambda_positive_changes_encoder():
    train, dev = tiny_corpus()
    art0 = train_model(train, dev, tiny_config(k_adversaries=0), target="y")
    art1 = train_model(train, dev, tiny_config(k_adversaries=1, lam=1.0), target="y")
    assert not np.array_equal(art0.encoder.embedding.data, art1.encoder.embedding.data)


def test_seeded_reproducibility_and_seed_sensitivity():
    train, dev = tiny_corpus()
    a = train_model(train, dev, tiny_config(k_adversaries=1), target="y")
    b = train_model(train, dev, tiny_config(k_adversaries=1), target="y")
    c = train_model(train, dev, tiny_config(k_adversaries=1, seed=1), target="y")
    assert np.array_equal(a.encoder.embedding.data, b.encoder.embedding.data)
    strip = lambda stats: [
        {k: v for k, v in rec.items() if k != "seconds"} for rec in stats
    ]
    assert strip(a.stats) == strip(b.stats)
    assert not np.array_equal(a.encoder.embedding.data, c.encoder.embedding.data)


def test_delay_epochs_freezes_adversarial_pressure():
    """During the delay the encoder follows the lambda=0 trajectory."""
    train, dev = tiny_corpus()
    delayed = train_model(
        train, dev, tiny_config(k_adversaries=1, lam=2.0, delay_epochs=2, epochs=2)
    )
    detached = train_model(train, dev, tiny_config(k_adversaries=1, lam=0.0, epochs=2))
    assert np.array_equal(
        delayed.encoder.embedding.data, detached.encoder.embedding.data
    )


def test_reinit_period_resets_adversary():
    train, dev = tiny_corpus()
    plain = train_model(train, dev, tiny_config(k_adversaries=1, epochs=3))
    reinit = train_model(
        train, dev, tiny_config(k_adversaries=1, epochs=3, reinit_period=2)
    )
    w_plain = plain.adversaries[0].layers[0][0].data
    w_reinit = reinit.adversaries[0].layers[0][0].data
    assert not np.array_equal(w_plain, w_reinit)


def test_train_single_task_targets():
    train, dev = tiny_corpus()
    arty = train_single_task(train, dev, tiny_config(epochs=1), target="y")
    artz = train_single_task(train, dev, tiny_config(epochs=1), target="z")
    assert arty.target == "y" and artz.target == "z"
    assert arty.adversaries == [] and artz.adversaries == []


def test_train_adversarial_requires_k():
    train, dev = tiny_corpus()
    with pytest.raises(ValueError):
        train_adversarial(train, dev, tiny_config(k_adversaries=0))


def test_empty_training_set_rejected():
    _, dev = tiny_corpus()
    with pytest.raises(ValueError):
        train_model(Dataset([]), dev, tiny_config())


def test_stats_schema_and_best_checkpoint():
    train, dev = tiny_corpus()
    art = train_model(train, dev, tiny_config(k_adversaries=2, epochs=3))
    assert len(art.stats) == 3
    for rec in art.stats:
        assert set(rec) == {
            "epoch",
            "train_loss",
            "train_acc",
            "dev_loss",
            "dev_acc",
            "adv_dev_acc",
            "seconds",
            "unstable",
        }
        assert len(rec["adv_dev_acc"]) == 2
    best = max(art.stats, key=lambda r: r["dev_acc"])
    assert art.best_epoch == best["epoch"]
    assert art.best_encoder is not None


def test_evaluate_tie_breaks_to_class_zero():
    # A zero-weight classifier produces equal logits; all predictions are 0.
    train, dev = tiny_corpus()
    vocab = build_vocab(train.examples)
    enc = make_encoder(len(vocab), 4, 5, derive_rng(0, "e"))
    cls = MlpParams(5, 6, 2, derive_rng(0, "c"))
    for w, b in cls.layers:
        w.data[...] = 0.0
        b.data[...] = 0.0
    ids = dataset_to_ids(dev, vocab)
    y, _ = dev.labels()
    acc, loss, preds = evaluate(enc, cls, ids, y)
    assert set(preds.tolist()) == {0}
    assert acc == pytest.approx(float((y == 0).mean()))
    assert loss == pytest.approx(np.log(2.0))


# ---------------------------------------------------------------------------
# Config text round trip
# ---------------------------------------------------------------------------


def test_config_text_round_trip():
    cfg = TrainingConfig(
        lam=2.5,
        k_adversaries=3,
        reinit_period=None,
        delay_epochs=4,
        dropout_encoded=False,
        init_scale=0.5,
        seed=9,
    )
    assert config_from_text(config_to_text(cfg)) == cfg


def test_config_text_errors_and_comments():
    assert config_from_text("# comment\n\nlam=2.0\n").lam == 2.0
    with pytest.raises(ValueError, match="unknown config key"):
        config_from_text("bogus=1\n")
    with pytest.raises(ValueError, match="key=value"):
        config_from_text("not a pair\n")


def test_config_validation():
    with pytest.raises(ValueError):
        TrainingConfig(lam=-1.0)
    with pytest.raises(ValueError):
        TrainingConfig(k_adversaries=-1)
    with pytest.raises(ValueError):
        TrainingConfig(batch_size=0)


# ---------------------------------------------------------------------------
# Artifact persistence
# ---------------------------------------------------------------------------


def test_artifacts_save_load_round_trip(tmp_path):
    train, dev = tiny_corpus()
    art = train_model(train, dev, tiny_config(k_adversaries=2, epochs=2))
    art.save(tmp_path)
    assert (tmp_path / "checkpoint_final.npz").exists()
    assert (tmp_path / "checkpoint_best.npz").exists()
    assert (tmp_path / "stats.jsonl").exists()
    assert (tmp_path / "config.txt").exists()
    back = ExperimentArtifacts.load(tmp_path)
    assert back.config == art.config
    assert back.vocab == art.vocab
    assert back.target == "y"
    assert len(back.adversaries) == 2
    assert np.array_equal(back.encoder.embedding.data, art.encoder.embedding.data)
    assert np.array_equal(
        back.best_encoder.embedding.data, art.best_encoder.embedding.data
    )
    assert back.best_epoch == art.best_epoch
    assert back.stats == art.stats
