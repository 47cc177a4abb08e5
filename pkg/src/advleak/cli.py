"""Experiment orchestration CLI.

Subcommands cover the full pipeline: derive or generate a corpus, split it,
train baseline or adversarial encoders, audit frozen representations with
attackers, run the follow-up analyses, sweep mitigation configurations, and
render consolidated reports (tables + figures).

Stage outputs are files; a manifest.json per output directory records a
hash of each completed stage's inputs so re-running a finished stage is a
no-op.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, fields, replace

import numpy as np

from . import audit as audit_mod
from . import data as data_mod
from . import report as report_mod
from .audit import AttackerConfig
from .training import (
    ExperimentArtifacts,
    TrainingConfig,
    config_from_text,
    config_to_text,
    dataset_to_ids,
    evaluate,
    train_model,
)

TOOL_VERSION = "advleak 0.1.0"


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _stage_hash(config_text: str, input_paths):
    h = hashlib.sha256()
    h.update(config_text.encode("utf-8"))
    for p in input_paths:
        h.update(_sha256_file(p).encode("ascii"))
    return h.hexdigest()


class Manifest:
    def __init__(self, outdir):
        self.path = os.path.join(outdir, "manifest.json")
        self.data = {"tool_version": TOOL_VERSION, "stages": {}}
        if os.path.exists(self.path):
            with open(self.path, encoding="utf-8") as f:
                self.data = json.load(f)

    def is_done(self, stage, stage_hash):
        rec = self.data["stages"].get(stage)
        if not rec or rec.get("hash") != stage_hash or rec.get("status") != "done":
            return False
        return all(os.path.exists(p) for p in rec.get("artifacts", []))

    def mark(self, stage, stage_hash, artifacts, status="done"):
        self.data["stages"][stage] = {
            "hash": stage_hash,
            "status": status,
            "artifacts": list(artifacts),
        }
        os.makedirs(os.path.dirname(self.path), exist_ok=True)
        with open(self.path, "w", encoding="utf-8") as f:
            json.dump(self.data, f, indent=2, sort_keys=True)
            f.write("\n")


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _add_attacker_flags(p: argparse.ArgumentParser):
    p.add_argument("--attacker-hidden", type=int, default=300)
    p.add_argument("--attacker-epochs", type=int, default=30)
    p.add_argument("--attacker-lr", type=float, default=0.01)
    p.add_argument("--attacker-dropout", type=float, default=0.2)
    p.add_argument("--attacker-init-scale", type=float, default=0.08)


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--k", dest="k_adversaries", type=int)
    p.add_argument("--adv-hidden", dest="adv_hidden_dim", type=int)
    p.add_argument("--adv-depth", dest="adv_depth", type=int)
    p.add_argument("--cls-hidden", dest="cls_hidden_dim", type=int)
    p.add_argument("--encoder-hidden", dest="encoder_hidden", type=int)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--reinit-period", dest="reinit_period", type=int)
    p.add_argument("--delay-epochs", dest="delay_epochs", type=int)
    p.add_argument("--grad-clip", dest="grad_clip", type=float)
    p.add_argument("--min-count", dest="min_count", type=int)
    p.add_argument("--init-scale", dest="init_scale", type=float)


def _build_config(args) -> TrainingConfig:
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as f:
            cfg = config_from_text(f.read())
    else:
        cfg = TrainingConfig()
    overrides = {}
    for f_ in fields(TrainingConfig):
        v = getattr(args, f_.name, None)
        if v is not None:
            overrides[f_.name] = v
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return replace(cfg, **overrides)


def _load_split(path, lowercase=False) -> data_mod.Dataset:
    examples = data_mod.load_corpus(path, lowercase=lowercase)
    kept, n_short, n_dup = data_mod.clean_corpus(examples)
    if n_short or n_dup:
        print(f"{path}: dropped {n_short} short and {n_dup} duplicate examples")
    return data_mod.Dataset(kept)


# ---------------------------------------------------------------------------
# derive
# ---------------------------------------------------------------------------


def cmd_derive(args):
    lexicon = (
        data_mod.load_lexicon(args.lexicon) if args.lexicon else data_mod.default_lexicon()
    )
    derived = []
    n_mixed_or_unlabeled = 0
    with open(args.input, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise SystemExit(f"{args.input}:{lineno}: expected text<TAB>z")
            text, z_s = parts[0], parts[-1]
            try:
                z = int(z_s)
            except ValueError:
                raise SystemExit(f"{args.input}:{lineno}: non-integer z label {z_s!r}")
            tokens = data_mod.tokenize(text, lowercase=args.lowercase)
            if args.task == "sentiment":
                result = data_mod.derive_sentiment(tokens, lexicon)
                if result is None:
                    n_mixed_or_unlabeled += 1
                    continue
                stripped, y = result
            else:
                stripped, y = data_mod.derive_mention(tokens)
            derived.append(data_mod.Example(tokens=tuple(stripped), y=y, z=z))
    kept, n_short, n_dup = data_mod.clean_corpus(derived)
    data_mod.save_corpus(args.output, kept)
    print(
        f"kept {len(kept)} examples; discarded {n_mixed_or_unlabeled} unlabeled/mixed, "
        f"{n_short} short, {n_dup} duplicate"
    )
    return 0


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def cmd_generate(args):
    spec = data_mod.SyntheticSpec(
        n_examples=args.n,
        shared_vocab=args.shared_vocab,
        y_vocab=args.y_vocab,
        z_common_vocab=args.z_common,
        z_rare_vocab=args.z_rare,
        rare_rate=args.rare_rate,
        len_min=args.len_min,
        len_max=args.len_max,
        s_y=args.s_y,
        s_z=args.s_z,
        overlap=args.overlap,
        z_mode=args.z_mode,
    )
    pool = data_mod.generate_synthetic_corpus(spec, args.seed if args.seed is not None else 0)
    data_mod.save_corpus(args.output, pool)
    print(f"wrote {len(pool)} examples to {args.output}")
    return 0


# ---------------------------------------------------------------------------
# split
# ---------------------------------------------------------------------------


def cmd_split(args):
    pool = data_mod.load_corpus(args.corpus)
    if args.mode == "balanced":
        props = data_mod.balanced_proportions()
    else:
        props = data_mod.unbalanced_proportions(args.q)
    train, dev = data_mod.make_split(
        pool,
        {"train": args.train_size, "dev": args.dev_size},
        props,
        args.seed if args.seed is not None else 0,
    )
    os.makedirs(args.outdir, exist_ok=True)
    train_path = os.path.join(args.outdir, "train.tsv")
    dev_path = os.path.join(args.outdir, "dev.tsv")
    data_mod.save_corpus(train_path, train.examples)
    data_mod.save_corpus(dev_path, dev.examples)
    print(f"wrote {train_path} ({len(train)}) and {dev_path} ({len(dev)})")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def run_train_stage(train_file, dev_file, outdir, config, target="y"):
    """Train into outdir unless the manifest says this exact stage is done."""
    manifest = Manifest(outdir)
    cfg_text = config_to_text(config) + f"target={target}\n"
    stage_hash = _stage_hash(cfg_text, [train_file, dev_file])
    artifacts = [
        os.path.join(outdir, "checkpoint_final.npz"),
        os.path.join(outdir, "stats.jsonl"),
    ]
    if manifest.is_done("train", stage_hash):
        print(f"{outdir}: training already complete, skipping")
        return ExperimentArtifacts.load(outdir)
    train_ds = _load_split(train_file)
    dev_ds = _load_split(dev_file)
    art = train_model(train_ds, dev_ds, config, target=target)
    os.makedirs(outdir, exist_ok=True)
    art.save(outdir)
    with open(os.path.join(outdir, "run_meta.json"), "w", encoding="utf-8") as f:
        json.dump(
            {"train_file": os.path.abspath(train_file), "dev_file": os.path.abspath(dev_file)},
            f,
            indent=2,
            sort_keys=True,
        )
    manifest.mark("train", stage_hash, artifacts)
    return art


def cmd_train(args):
    config = _build_config(args)
    art = run_train_stage(args.train_file, args.dev_file, args.outdir, config, target=args.target)
    last = art.stats[-1]
    print(
        f"final epoch {last['epoch']}: dev acc {last['dev_acc']:.3f}, "
        f"adversary dev acc {last['adv_dev_acc']}"
    )
    return 0


# ---------------------------------------------------------------------------
# audit
# ---------------------------------------------------------------------------


def _adversary_final_accs(art: ExperimentArtifacts):
    return art.stats[-1]["adv_dev_acc"] if art.stats else []


def audit_encoder(encoder, art, train_ds, dev_ds, attacker_cfg, label):
    """Encode both splits, persist dumps, train the attacker, compute reports."""
    vocab = art.vocab
    train_dump = audit_mod.encode_dataset(encoder, train_ds, vocab)
    dev_dump = audit_mod.encode_dataset(encoder, dev_ds, vocab)
    attacker = audit_mod.train_attacker(train_dump, dev_dump, attacker_cfg)
    dev_ids = dataset_to_ids(dev_ds, vocab)
    y_dev, z_dev = dev_ds.labels()
    main = y_dev if art.target == "y" else z_dev
    cls = art.classifier if label == "final" else art.best_classifier
    main_acc, _, y_pred = evaluate(encoder, cls, dev_ids, main)
    fair = audit_mod.fairness_report(y_dev, z_dev, y_pred)
    rep = audit_mod.LeakageReport(
        main_task_acc=main_acc,
        adversary_dev_accs=_adversary_final_accs(art),
        attacker_acc=attacker.best_acc,
        split=label,
        config_echo=asdict(art.config),
    )
    return {
        "checkpoint": label,
        "main_task_acc": rep.main_task_acc,
        "adversary_dev_accs": rep.adversary_dev_accs,
        "attacker_acc": rep.attacker_acc,
        "leakage": rep.leakage,
        "abs_leakage": rep.abs_leakage,
        "delta": rep.delta,
        "attacker_best_epoch": attacker.best_epoch,
        "attacker_dev_preds": attacker.best_preds.tolist(),
        "dev_gold_z": z_dev.tolist(),
        "fairness": fair.to_dict(),
        "unstable": bool(art.stats and art.stats[-1].get("unstable")),
    }, (train_dump, dev_dump)


def run_audit_stage(run_dir, attacker_cfg, train_file=None, dev_file=None):
    manifest = Manifest(run_dir)
    meta_path = os.path.join(run_dir, "run_meta.json")
    if train_file is None or dev_file is None:
        with open(meta_path, encoding="utf-8") as f:
            meta = json.load(f)
        train_file = train_file or meta["train_file"]
        dev_file = dev_file or meta["dev_file"]
    cfg_text = json.dumps(asdict(attacker_cfg), sort_keys=True)
    stage_hash = _stage_hash(
        cfg_text, [train_file, dev_file, os.path.join(run_dir, "checkpoint_final.npz")]
    )
    audit_path = os.path.join(run_dir, "audit.json")
    if manifest.is_done("audit", stage_hash):
        print(f"{run_dir}: audit already complete, skipping")
        with open(audit_path, encoding="utf-8") as f:
            return json.load(f)
    art = ExperimentArtifacts.load(run_dir)
    train_ds = _load_split(train_file)
    dev_ds = _load_split(dev_file)
    result = {"config_echo": asdict(art.config), "method": None, "parameter": None}
    final, (train_dump, dev_dump) = audit_encoder(
        art.encoder, art, train_ds, dev_ds, attacker_cfg, "final"
    )
    result["final"] = final
    data_mod.save_vector_dump(os.path.join(run_dir, "vectors_train.tsv"), train_dump)
    data_mod.save_vector_dump(os.path.join(run_dir, "vectors_dev.tsv"), dev_dump)
    if art.best_encoder is not None:
        best, _ = audit_encoder(art.best_encoder, art, train_ds, dev_ds, attacker_cfg, "best")
        result["best"] = best
    cfg = art.config
    if cfg.k_adversaries == 0:
        result["method"] = "no adversary"
        result["parameter"] = "-"
    elif cfg.k_adversaries > 1:
        result["method"] = "ensemble"
        result["parameter"] = str(cfg.k_adversaries)
    else:
        result["method"] = "adversary"
        result["parameter"] = f"{cfg.adv_hidden_dim}/{cfg.lam}/{cfg.k_adversaries}"
    # Top-level copies of the final-checkpoint numbers for table rendering.
    for key in ("main_task_acc", "attacker_acc", "leakage", "abs_leakage", "delta", "unstable"):
        result[key] = final[key]
    with open(audit_path, "w", encoding="utf-8") as f:
        json.dump(result, f, indent=2, sort_keys=True)
        f.write("\n")
    manifest.mark(
        "audit",
        stage_hash,
        [audit_path, os.path.join(run_dir, "vectors_train.tsv")],
    )
    return result


def _attacker_cfg_from_args(args) -> AttackerConfig:
    return AttackerConfig(
        hidden_dim=args.attacker_hidden,
        epochs=args.attacker_epochs,
        lr=getattr(args, "attacker_lr", 0.01),
        dropout=getattr(args, "attacker_dropout", 0.2),
        init_scale=getattr(args, "attacker_init_scale", 0.08),
        seed=args.seed if args.seed is not None else 0,
    )


def cmd_audit(args):
    if args.vectors_train:
        # External-vector audit path: no encoder involved.
        train_dump = data_mod.load_vector_dump(args.vectors_train)
        dev_dump = data_mod.load_vector_dump(args.vectors_dev)
        attacker = audit_mod.train_attacker(train_dump, dev_dump, _attacker_cfg_from_args(args))
        rep = audit_mod.LeakageReport(
            main_task_acc=float("nan"),
            adversary_dev_accs=[],
            attacker_acc=attacker.best_acc,
            split="external",
        )
        out = {
            "attacker_acc": rep.attacker_acc,
            "leakage": rep.leakage,
            "abs_leakage": rep.abs_leakage,
        }
        print(json.dumps(out, indent=2, sort_keys=True))
        if args.out:
            with open(args.out, "w", encoding="utf-8") as f:
                json.dump(out, f, indent=2, sort_keys=True)
                f.write("\n")
        return 0
    result = run_audit_stage(
        args.run, _attacker_cfg_from_args(args), args.train_file, args.dev_file
    )
    print(
        f"attacker {result['attacker_acc']:.3f}, |leakage| {result['abs_leakage']:.3f}, "
        f"delta {result['delta'] if result['delta'] is None else round(result['delta'], 3)}"
    )
    return 0


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _load_run_data(run_dir):
    art = ExperimentArtifacts.load(run_dir)
    with open(os.path.join(run_dir, "run_meta.json"), encoding="utf-8") as f:
        meta = json.load(f)
    return art, meta


def cmd_analyze_fusion(args):
    leaky, meta = _load_run_data(args.leaky)
    guarded, _ = _load_run_data(args.guarded)
    train_ds = _load_split(args.train_file or meta["train_file"])
    dev_ds = _load_split(args.dev_file or meta["dev_file"])
    attacker_cfg = _attacker_cfg_from_args(args)
    combos = {
        "leaky_rnn_guarded_emb": audit_mod.fuse_encoders(
            guarded.encoder, leaky.encoder, "guarded", "leaky", guarded.vocab, leaky.vocab
        ),
        "guarded_rnn_leaky_emb": audit_mod.fuse_encoders(
            leaky.encoder, guarded.encoder, "leaky", "guarded", leaky.vocab, guarded.vocab
        ),
        "leaky_rnn_leaky_emb": leaky.encoder,
        "guarded_rnn_guarded_emb": guarded.encoder,
    }
    out = {}
    for name, enc in combos.items():
        tr = audit_mod.encode_dataset(enc, train_ds, leaky.vocab)
        de = audit_mod.encode_dataset(enc, dev_ds, leaky.vocab)
        attacker = audit_mod.train_attacker(tr, de, attacker_cfg)
        # Fusion validity: retrain a main-task head on the fused outputs.
        tr_y = data_mod.VectorDump(tr.vectors, train_ds.labels()[0])
        de_y = data_mod.VectorDump(de.vectors, dev_ds.labels()[0])
        head = audit_mod.train_attacker(tr_y, de_y, attacker_cfg)
        out[name] = {"attacker_acc": attacker.best_acc, "main_task_acc": head.best_acc}
    path = os.path.join(args.out or args.leaky, "fusion.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(out, f, indent=2, sort_keys=True)
        f.write("\n")
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_analyze_consistency(args):
    preds = []
    gold = None
    for run_dir in args.runs:
        with open(os.path.join(run_dir, "audit.json"), encoding="utf-8") as f:
            a = json.load(f)["final"]
        preds.append(a["attacker_dev_preds"])
        gold = a["dev_gold_z"]
    result = audit_mod.consistency_analysis(np.array(preds), np.array(gold), args.threshold)
    out = {
        "n_seeds": result.n_seeds,
        "threshold": result.threshold,
        "n_correct_consistent": len(result.correct_ids),
        "n_consistent": len(result.consistent_ids),
        "correct_ids": result.correct_ids,
        "consistent_ids": result.consistent_ids,
        "correct_counts": result.correct_counts.tolist(),
    }
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(out, f, indent=2, sort_keys=True)
        f.write("\n")
    if args.dev_file:
        dev_ds = _load_split(args.dev_file)
        table = args.out.replace(".json", "_examples.tsv")
        with open(table, "w", encoding="utf-8") as f:
            for i in result.correct_ids:
                e = dev_ds.examples[i]
                f.write("\t".join((" ".join(e.tokens), str(e.y), str(e.z))) + "\n")
    print(
        f"{len(result.correct_ids)} correct-consistent, "
        f"{len(result.consistent_ids)} consistent of {len(gold)} dev examples"
    )
    return 0


def cmd_analyze_frequency(args):
    with open(args.consistency, encoding="utf-8") as f:
        cons = json.load(f)
    dev_ds = _load_split(args.dev_file)
    train_ds = _load_split(args.train_file)
    from collections import Counter

    freq = Counter(t for e in train_ds.examples for t in e.tokens)
    counts = np.array(cons["correct_counts"])
    n_seeds = cons["n_seeds"]
    consistent = [dev_ds.examples[i] for i in cons["correct_ids"]]
    mid = n_seeds / 2.0
    background = [
        dev_ds.examples[i]
        for i in range(len(dev_ds.examples))
        if abs(counts[i] - mid) <= 1 and i not in set(cons["correct_ids"])
    ]
    result = audit_mod.frequency_study(consistent, background, freq)
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(result, f, indent=2, sort_keys=True)
        f.write("\n")
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def cmd_analyze_overfit(args):
    art, meta = _load_run_data(args.run)
    train_ds = _load_split(args.train_file or meta["train_file"])
    acc, _ = audit_mod.overfit_check(
        art.encoder,
        train_ds,
        art.vocab,
        _attacker_cfg_from_args(args),
        seed=args.seed or 0,
    )
    out = {"heldout_attacker_acc": acc}
    with open(os.path.join(args.run, "overfit.json"), "w", encoding="utf-8") as f:
        json.dump(out, f, indent=2, sort_keys=True)
        f.write("\n")
    print(json.dumps(out))
    return 0


def cmd_analyze_unseen(args):
    art, meta = _load_run_data(args.run)
    train_ds = _load_split(args.train_file or meta["train_file"])
    dev_ds = _load_split(meta["dev_file"])
    fresh = _load_split(args.fresh)
    attacker_cfg = _attacker_cfg_from_args(args)
    train_dump = audit_mod.encode_dataset(art.encoder, train_ds, art.vocab)
    dev_dump = audit_mod.encode_dataset(art.encoder, dev_ds, art.vocab)
    attacker = audit_mod.train_attacker(train_dump, dev_dump, attacker_cfg)
    seen = [e.tokens for e in train_ds.examples] + [e.tokens for e in dev_ds.examples]
    acc = audit_mod.unseen_data_check(art.encoder, art.vocab, attacker.params, fresh, seen)
    out = {"unseen_attacker_acc": acc, "dev_attacker_acc": attacker.best_acc}
    with open(os.path.join(args.run, "unseen.json"), "w", encoding="utf-8") as f:
        json.dump(out, f, indent=2, sort_keys=True)
        f.write("\n")
    print(json.dumps(out))
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _parse_grid(s, cast):
    return [cast(v) for v in s.split(",")] if s else []


def _run_sweep_cell(cell_dir, train_file, dev_file, cfg, attacker_cfg):
    run_train_stage(train_file, dev_file, cell_dir, cfg)
    return run_audit_stage(cell_dir, attacker_cfg, train_file, dev_file)


def cmd_sweep(args):
    base = _build_config(args)
    lams = _parse_grid(args.lambdas, float) or [base.lam]
    ks = _parse_grid(args.ks, int) or [base.k_adversaries]
    hiddens = _parse_grid(args.adv_hiddens, int) or [base.adv_hidden_dim]
    attacker_cfg = _attacker_cfg_from_args(args)
    os.makedirs(args.outdir, exist_ok=True)
    cells = []
    for lam in lams:
        for k in ks:
            for hidden in hiddens:
                cell = f"cell_lam{lam}_k{k}_h{hidden}"
                cfg = replace(base, lam=lam, k_adversaries=k, adv_hidden_dim=hidden)
                cells.append((cell, os.path.join(args.outdir, cell), cfg))
    rows = []
    failures = []
    workers = max(1, getattr(args, "workers", 1) or 1)
    if workers == 1:
        for cell, cell_dir, cfg in cells:
            try:
                rows.append(
                    _run_sweep_cell(cell_dir, args.train_file, args.dev_file, cfg, attacker_cfg)
                )
            except Exception as err:  # record and continue with other cells
                failures.append({"cell": cell, "error": str(err)})
                print(f"{cell} failed: {err}", file=sys.stderr)
    else:
        # Bounded worker pool; every cell is fully independent (own output dir).
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(
                    _run_sweep_cell, cell_dir, args.train_file, args.dev_file, cfg, attacker_cfg
                ): cell
                for cell, cell_dir, cfg in cells
            }
            for fut, cell in futures.items():
                try:
                    rows.append(fut.result())
                except Exception as err:
                    failures.append({"cell": cell, "error": str(err)})
                    print(f"{cell} failed: {err}", file=sys.stderr)
    table_path = os.path.join(args.outdir, "table.jsonl")
    with open(table_path, "w", encoding="utf-8") as f:
        for row in rows:
            slim = {k: v for k, v in row.items() if k not in ("final", "best")}
            f.write(json.dumps(slim, sort_keys=True) + "\n")
        for failure in failures:
            f.write(json.dumps({"failed": failure}, sort_keys=True) + "\n")
    entries = [
        {
            "method": r["method"],
            "parameter": r["parameter"],
            "task_acc": r["main_task_acc"],
            "abs_leakage": r["abs_leakage"],
            "delta": r["delta"],
            "unstable": r["unstable"],
        }
        for r in rows
    ]
    md = report_mod.markdown_table(
        report_mod.LEAKAGE_HEADERS, report_mod.leakage_table_rows(entries)
    )
    with open(os.path.join(args.outdir, "table.md"), "w", encoding="utf-8") as f:
        f.write(md)
    report_mod.write_delimited(
        os.path.join(args.outdir, "table.csv"),
        report_mod.LEAKAGE_HEADERS,
        report_mod.leakage_table_rows(entries, bold_best=False),
    )
    print(md)
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args):
    written = report_mod.render_report(args.runs, args.out)
    for path in written:
        print(path)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="advleak", description=__doc__)
    p.add_argument("--seed", type=int, default=None, help="global seed")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("derive", help="derive a labeled corpus from raw tweets")
    d.add_argument("--input", required=True, help="TSV: text<TAB>z")
    d.add_argument("--task", choices=("sentiment", "mention"), required=True)
    d.add_argument("--lexicon", help="lexicon config ([positive]/[negative] sections)")
    d.add_argument("--lowercase", action="store_true")
    d.add_argument("--output", required=True)
    d.set_defaults(func=cmd_derive)

    g = sub.add_parser("generate", help="generate a synthetic planted-signal corpus")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--s-y", type=float, default=0.7)
    g.add_argument("--s-z", type=float, default=0.6)
    g.add_argument("--overlap", type=float, default=0.0)
    g.add_argument("--rare-rate", type=float, default=0.1)
    g.add_argument("--shared-vocab", type=int, default=200)
    g.add_argument("--y-vocab", type=int, default=20)
    g.add_argument("--z-common", type=int, default=10)
    g.add_argument("--z-rare", type=int, default=300)
    g.add_argument("--z-mode", choices=("token", "order"), default="token")
    g.add_argument("--len-min", type=int, default=4)
    g.add_argument("--len-max", type=int, default=8)
    g.add_argument("--output", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("split", help="draw exact balanced/unbalanced train+dev splits")
    s.add_argument("--corpus", required=True)
    s.add_argument("--train-size", type=int, required=True)
    s.add_argument("--dev-size", type=int, required=True)
    s.add_argument("--mode", choices=("balanced", "unbalanced"), default="balanced")
    s.add_argument("--q", type=float, default=0.8)
    s.add_argument("--outdir", required=True)
    s.set_defaults(func=cmd_split)

    t = sub.add_parser("train", help="train an encoder (baseline or adversarial)")
    t.add_argument("--train-file", required=True)
    t.add_argument("--dev-file", required=True)
    t.add_argument("--target", choices=("y", "z"), default="y")
    t.add_argument("--outdir", required=True)
    _add_config_flags(t)
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("audit", help="attacker audit of a frozen encoder or vector dump")
    a.add_argument("--run", help="training run directory")
    a.add_argument("--train-file")
    a.add_argument("--dev-file")
    a.add_argument("--vectors-train", help="external vector dump (train)")
    a.add_argument("--vectors-dev", help="external vector dump (dev)")
    _add_attacker_flags(a)
    a.add_argument("--out")
    a.set_defaults(func=cmd_audit)

    an = sub.add_parser("analyze", help="follow-up analyses")
    ansub = an.add_subparsers(dest="analysis", required=True)

    fu = ansub.add_parser("fusion", help="swap embedding/RNN modules between encoders")
    fu.add_argument("--leaky", required=True)
    fu.add_argument("--guarded", required=True)
    fu.add_argument("--train-file")
    fu.add_argument("--dev-file")
    _add_attacker_flags(fu)
    fu.add_argument("--out")
    fu.set_defaults(func=cmd_analyze_fusion)

    co = ansub.add_parser("consistency", help="agreement across independently seeded attackers")
    co.add_argument("--runs", nargs="+", required=True)
    co.add_argument("--threshold", type=int, default=9)
    co.add_argument("--dev-file")
    co.add_argument("--out", required=True)
    co.set_defaults(func=cmd_analyze_consistency)

    fr = ansub.add_parser("frequency", help="word-frequency rank test on consistent examples")
    fr.add_argument("--consistency", required=True)
    fr.add_argument("--dev-file", required=True)
    fr.add_argument("--train-file", required=True)
    fr.add_argument("--out", required=True)
    fr.set_defaults(func=cmd_analyze_frequency)

    ov = ansub.add_parser("overfit", help="attacker on 90/10 partition of the training split")
    ov.add_argument("--run", required=True)
    ov.add_argument("--train-file")
    _add_attacker_flags(ov)
    ov.set_defaults(func=cmd_analyze_overfit)

    un = ansub.add_parser("unseen", help="attacker accuracy on never-trained-on examples")
    un.add_argument("--run", required=True)
    un.add_argument("--fresh", required=True)
    un.add_argument("--train-file")
    _add_attacker_flags(un)
    un.set_defaults(func=cmd_analyze_unseen)

    sw = sub.add_parser("sweep", help="grid over lambda / capacity / ensemble size")
    sw.add_argument("--train-file", required=True)
    sw.add_argument("--dev-file", required=True)
    sw.add_argument("--outdir", required=True)
    sw.add_argument("--lambdas", help="comma-separated lambda grid")
    sw.add_argument("--ks", help="comma-separated ensemble-size grid")
    sw.add_argument("--adv-hiddens", help="comma-separated adversary hidden-dim grid")
    sw.add_argument("--workers", type=int, default=1, help="parallel sweep cells")
    _add_attacker_flags(sw)
    _add_config_flags(sw)
    sw.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="consolidated tables and figures")
    r.add_argument("--runs", nargs="+", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)

    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
