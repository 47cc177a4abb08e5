"""Joint adversarial training: main-task loss plus k reversed adversary losses.

Every minibatch computes h = encoder(x), the classifier loss on y, and one
loss per adversary on z routed through the gradient-reversal layer. A single
SGD+momentum step updates encoder, classifier and all adversaries at once,
so the adversaries descend their own losses while the encoder ascends them.

All randomness comes from named streams derived from the run seed, one per
consumer (init, shuffling, each dropout site), so e.g. a run with lambda=0
consumes encoder-side randomness identically to a run with no adversary.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import layers
from .data import Dataset, build_vocab, encode_tokens
from .layers import EncoderParams, MlpParams, argmax_predictions, make_encoder
from .tensor import SgdMomentum, Tensor, add, derive_rng, dropout, grl, softmax_nll


@dataclass
class TrainingConfig:
    lam: float = 1.0
    k_adversaries: int = 1
    adv_hidden_dim: int = 300
    adv_depth: int = 1
    cls_hidden_dim: int = 300
    encoder_hidden: int = 300
    embed_dim: int = 300
    lr: float = 0.01
    momentum: float = 0.9
    dropout: float = 0.2
    dropout_encoded: bool = True
    epochs: int = 100
    batch_size: int = 32
    reinit_period: int | None = None
    delay_epochs: int | None = None
    grad_clip: float | None = None
    instability_patience: int = 10
    min_count: int = 1
    init_scale: float = 0.08
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.k_adversaries < 0:
            raise ValueError("k_adversaries must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def config_to_text(cfg: TrainingConfig) -> str:
    """key=value echo of the configuration, stable field order."""
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name}={'' if v is None else v}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> TrainingConfig:
    kwargs = {}
    types = {f.name: f for f in fields(TrainingConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in types:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if value == "":
            kwargs[key] = None
            continue
        ann = types[key].type
        if "bool" in str(ann):
            kwargs[key] = value.lower() in ("1", "true", "yes")
        elif "float" in str(ann):
            kwargs[key] = float(value)
        else:
            kwargs[key] = int(value)
    return TrainingConfig(**kwargs)


@dataclass
class ExperimentArtifacts:
    encoder: EncoderParams
    classifier: MlpParams
    adversaries: list
    vocab: dict
    config: TrainingConfig
    stats: list = field(default_factory=list)
    best_epoch: int = -1
    best_encoder: EncoderParams | None = None
    best_classifier: MlpParams | None = None
    target: str = "y"

    def save(self, outdir):
        import os

        os.makedirs(outdir, exist_ok=True)
        cfg = asdict(self.config)
        cfg["target"] = self.target
        heads = {"classifier": self.classifier}
        for j, adv in enumerate(self.adversaries):
            heads[f"adversary{j}"] = adv
        layers.save_checkpoint(
            os.path.join(outdir, "checkpoint_final.npz"),
            self.encoder,
            heads,
            cfg,
            vocab=self.vocab,
        )
        if self.best_encoder is not None:
            layers.save_checkpoint(
                os.path.join(outdir, "checkpoint_best.npz"),
                self.best_encoder,
                {"classifier": self.best_classifier},
                dict(cfg, best_epoch=self.best_epoch),
                vocab=self.vocab,
            )
        with open(os.path.join(outdir, "stats.jsonl"), "w", encoding="utf-8") as f:
            for rec in self.stats:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
        with open(os.path.join(outdir, "config.txt"), "w", encoding="utf-8") as f:
            f.write(config_to_text(self.config))
            f.write(f"target={self.target}\n")

    @staticmethod
    def load(outdir):
        import os

        encoder, heads, cfg, vocab = layers.load_checkpoint(
            os.path.join(outdir, "checkpoint_final.npz")
        )
        target = cfg.pop("target", "y")
        config = TrainingConfig(**{k: v for k, v in cfg.items() if k != "best_epoch"})
        advs = [heads[k] for k in sorted(heads) if k.startswith("adversary")]
        stats = []
        stats_path = os.path.join(outdir, "stats.jsonl")
        if os.path.exists(stats_path):
            with open(stats_path, encoding="utf-8") as f:
                stats = [json.loads(line) for line in f if line.strip()]
        art = ExperimentArtifacts(
            encoder=encoder,
            classifier=heads["classifier"],
            adversaries=advs,
            vocab={k: v for k, v in vocab.items()} if vocab else {},
            config=config,
            stats=stats,
            target=target,
        )
        best_path = os.path.join(outdir, "checkpoint_best.npz")
        if os.path.exists(best_path):
            b_enc, b_heads, b_cfg, _ = layers.load_checkpoint(best_path)
            art.best_encoder = b_enc
            art.best_classifier = b_heads["classifier"]
            art.best_epoch = b_cfg.get("best_epoch", -1)
        return art


def dataset_to_ids(ds: Dataset, vocab: dict):
    return [encode_tokens(vocab, e.tokens) for e in ds.examples]


def _clone_encoder(enc: EncoderParams) -> EncoderParams:
    arrays = layers._encoder_arrays(enc, "")
    return layers._encoder_from_arrays({k: v.copy() for k, v in arrays.items()}, "")


def _clone_mlp(mlp: MlpParams) -> MlpParams:
    arrays = layers._mlp_arrays(mlp, "")
    return layers._mlp_from_arrays({k: v.copy() for k, v in arrays.items()}, "")


def _forward_eval(encoder, head, id_seqs, batch_size=512):
    """Eval-mode logits over a dataset, batched; returns (n, C) ndarray."""
    out = []
    for lo in range(0, len(id_seqs), batch_size):
        h = layers.encode_sequences(encoder, id_seqs[lo : lo + batch_size])
        logits = layers.mlp_forward(head, h)
        out.append(logits.data)
    return np.concatenate(out, axis=0)


def evaluate(encoder, head, id_seqs, labels, batch_size=512):
    """Argmax accuracy (ties to the lowest class) plus mean NLL, no dropout."""
    logits = _forward_eval(encoder, head, id_seqs, batch_size)
    preds = argmax_predictions(logits)
    loss = float(softmax_nll(Tensor(logits), labels).data)
    acc = float((preds == np.asarray(labels)).mean())
    return acc, loss, preds


def train_model(
    train_ds: Dataset,
    dev_ds: Dataset,
    config: TrainingConfig,
    target: str = "y",
    vocab: dict | None = None,
) -> ExperimentArtifacts:
    """Train encoder + classifier (+ k adversaries) on a prepared split.

    target selects the classifier's label ("y" or "z"); adversaries always
    predict z. With k_adversaries=0 this is plain single-task training.
    """
    if len(train_ds) == 0:
        raise ValueError("empty training dataset")
    if vocab is None:
        vocab = build_vocab(train_ds.examples, min_count=config.min_count)
    train_ids = dataset_to_ids(train_ds, vocab)
    dev_ids = dataset_to_ids(dev_ds, vocab)
    y_train, z_train = train_ds.labels()
    y_dev, z_dev = dev_ds.labels()
    main_train = y_train if target == "y" else z_train
    main_dev = y_dev if target == "y" else z_dev

    seed = config.seed
    encoder = make_encoder(
        len(vocab),
        config.embed_dim,
        config.encoder_hidden,
        derive_rng(seed, "init/encoder"),
        init_scale=config.init_scale,
    )
    classifier = MlpParams(
        config.encoder_hidden,
        config.cls_hidden_dim,
        2,
        derive_rng(seed, "init/classifier"),
        init_scale=config.init_scale,
    )
    adversaries = [
        MlpParams(
            config.encoder_hidden,
            config.adv_hidden_dim,
            2,
            derive_rng(seed, f"init/adversary{j}"),
            n_hidden=config.adv_depth,
            init_scale=config.init_scale,
        )
        for j in range(config.k_adversaries)
    ]

    params = encoder.params() + classifier.params()
    for adv in adversaries:
        params += adv.params()
    opt = SgdMomentum(params, lr=config.lr, momentum=config.momentum, grad_clip=config.grad_clip)

    shuffle_rng = derive_rng(seed, "shuffle")
    rng_h = derive_rng(seed, "dropout/encoded")
    rng_cls = derive_rng(seed, "dropout/classifier")
    rng_advs = [derive_rng(seed, f"dropout/adversary{j}") for j in range(config.k_adversaries)]

    art = ExperimentArtifacts(
        encoder=encoder,
        classifier=classifier,
        adversaries=adversaries,
        vocab=vocab,
        config=config,
        target=target,
    )
    n = len(train_ids)
    best_acc = -1.0
    recent_train_acc = []
    unstable = False

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        if (
            config.reinit_period
            and epoch > 0
            and epoch % config.reinit_period == 0
        ):
            for j, adv in enumerate(adversaries):
                adv.reinit(derive_rng(seed, f"reinit/adversary{j}/epoch{epoch}"))
                for p in adv.params():
                    opt.reset_velocity(p)
        lam_eff = 0.0 if config.delay_epochs and epoch < config.delay_epochs else config.lam

        order = shuffle_rng.permutation(n)
        total_loss = 0.0
        total_correct = 0
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            batch_ids = [train_ids[i] for i in idx]
            h = layers.encode_sequences(encoder, batch_ids)
            if config.dropout_encoded and config.dropout > 0.0:
                h = dropout(h, config.dropout, rng_h, training=True)
            logits = layers.mlp_forward(
                classifier, h, config.dropout, rng_cls, training=True
            )
            loss = softmax_nll(logits, main_train[idx])
            for j, adv in enumerate(adversaries):
                adv_logits = layers.mlp_forward(
                    adv, grl(h, lam_eff), config.dropout, rng_advs[j], training=True
                )
                loss = add(loss, softmax_nll(adv_logits, z_train[idx]))
            loss.backward()
            opt.step()
            total_loss += float(loss.data) * len(idx)
            total_correct += int(
                (argmax_predictions(logits.data) == main_train[idx]).sum()
            )

        train_acc = total_correct / n
        dev_acc, dev_loss, _ = evaluate(encoder, classifier, dev_ids, main_dev)
        adv_accs = [
            evaluate(encoder, adv, dev_ids, z_dev)[0] for adv in adversaries
        ]
        recent_train_acc.append(train_acc)
        if (
            not unstable
            and config.lam >= 5
            and len(recent_train_acc) >= config.instability_patience
            and all(
                abs(a - 0.5) <= 0.02
                for a in recent_train_acc[-config.instability_patience :]
            )
        ):
            unstable = True
        rec = {
            "epoch": epoch,
            "train_loss": total_loss / n,
            "train_acc": train_acc,
            "dev_loss": dev_loss,
            "dev_acc": dev_acc,
            "adv_dev_acc": adv_accs,
            "seconds": time.perf_counter() - t0,
            "unstable": unstable,
        }
        art.stats.append(rec)
        if dev_acc > best_acc and np.isfinite(dev_loss):
            best_acc = dev_acc
            art.best_epoch = epoch
            art.best_encoder = _clone_encoder(encoder)
            art.best_classifier = _clone_mlp(classifier)
    return art


def train_single_task(train_ds, dev_ds, config, target="y", vocab=None):
    """Encoder + classifier trained directly on one target, no adversary."""
    cfg = replace(config, k_adversaries=0)
    return train_model(train_ds, dev_ds, cfg, target=target, vocab=vocab)


def train_adversarial(train_ds, dev_ds, config, vocab=None):
    if config.k_adversaries < 1:
        raise ValueError("adversarial training needs k_adversaries >= 1")
    return train_model(train_ds, dev_ds, config, target="y", vocab=vocab)
