"""Corpus handling: tokenization, task derivation, splits, synthetic data.

Tokenizer rules (applied left-to-right over the raw text, first match wins):
  1. URLs (http://, https://, www.) are single tokens.
  2. @mentions and #hashtags are single tokens.
  3. Emoticons from a fixed list (":)", ":-)", ": )", ":D", "=)", ":(",
     ":-(", ": (", "=(", ";)", ":P", ":/") are single tokens; variants with
     an internal space are normalized by removing it.
  4. :shortcode: emoji names and emoji codepoints are single tokens.
  5. Runs of word characters (letters, digits, underscore), optionally
     joined by hyphens or apostrophes, are single tokens.
  6. Any other non-space character is its own token.
Case is preserved by default.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .tensor import derive_rng


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------

_EMOTICONS = [":-)", ":-(", ": )", ": (", ":)", ":(", ":D", "=)", "=(", ";)", ":P", ":/"]

_TOKEN_RE = re.compile(
    r"""
    (?P<url>https?://\S+|www\.\S+)
    |(?P<mention>@\w+)
    |(?P<hashtag>\#\w+)
    |(?P<emoticon>{emoticons})
    |(?P<shortcode>:[a-z0-9_+\-]+:)
    |(?P<emoji>[←-⇿☀-➿⬀-⯿️\U0001F000-\U0001FAFF])
    |(?P<word>\w+(?:['\-]\w+)*)
    |(?P<punct>\S)
    """.format(emoticons="|".join(re.escape(e) for e in _EMOTICONS)),
    re.VERBOSE,
)


def tokenize(text: str, lowercase: bool = False) -> list[str]:
    """Twitter-aware tokenization per the rules in the module docstring."""
    tokens = []
    for m in _TOKEN_RE.finditer(text):
        tok = m.group(0)
        if m.lastgroup == "emoticon":
            tok = tok.replace(" ", "")
        tokens.append(tok.lower() if lowercase else tok)
    return tokens


# ---------------------------------------------------------------------------
# Sentiment lexicon
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SentimentLexicon:
    positive: frozenset
    negative: frozenset

    def __post_init__(self):
        both = self.positive & self.negative
        if both:
            raise ValueError(f"markers in both polarity sets: {sorted(both)}")


def default_lexicon() -> SentimentLexicon:
    # Emoticon seed sets; spaced variants are normalized by the tokenizer.
    return SentimentLexicon(
        positive=frozenset({":)", ":-)", ":D", "=)"}),
        negative=frozenset({":(", ":-(", "=("}),
    )


def load_lexicon(path) -> SentimentLexicon:
    """Parse a plain-text lexicon: [positive] / [negative] sections, one marker per line."""
    sections = {"positive": set(), "negative": set()}
    current = None
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                name = line[1:-1].strip().lower()
                if name not in sections:
                    raise ValueError(f"{path}:{lineno}: unknown section [{name}]")
                current = name
                continue
            if current is None:
                raise ValueError(f"{path}:{lineno}: marker before any section header")
            sections[current].add(line.replace(" ", ""))
    return SentimentLexicon(
        positive=frozenset(sections["positive"]),
        negative=frozenset(sections["negative"]),
    )


def save_lexicon(path, lexicon: SentimentLexicon):
    with open(path, "w", encoding="utf-8") as f:
        f.write("[positive]\n")
        for m in sorted(lexicon.positive):
            f.write(m + "\n")
        f.write("[negative]\n")
        for m in sorted(lexicon.negative):
            f.write(m + "\n")


# ---------------------------------------------------------------------------
# Examples and datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Example:
    tokens: tuple
    y: int
    z: int


@dataclass
class Dataset:
    examples: list
    split_tag: str = "train"
    proportions: dict = field(default_factory=dict)  # (y, z) -> fraction

    def __len__(self):
        return len(self.examples)

    def labels(self):
        y = np.array([e.y for e in self.examples], dtype=np.intp)
        z = np.array([e.z for e in self.examples], dtype=np.intp)
        return y, z


def clean_corpus(examples, min_tokens: int = 3):
    """Drop short and duplicate token sequences; returns (kept, n_short, n_dup)."""
    seen = set()
    kept = []
    n_short = n_dup = 0
    for e in examples:
        if len(e.tokens) < min_tokens:
            n_short += 1
            continue
        if e.tokens in seen:
            n_dup += 1
            continue
        seen.add(e.tokens)
        kept.append(e)
    return kept, n_short, n_dup


# ---------------------------------------------------------------------------
# Task derivation
# ---------------------------------------------------------------------------

POSITIVE, NEGATIVE = 1, 0


def derive_sentiment(tokens, lexicon: SentimentLexicon):
    """Label by sentiment markers and strip them.

    Returns (tokens_without_markers, y) or None when the tokens carry no
    marker or markers of both polarities.
    """
    toks = tuple(tokens)
    has_pos = any(t in lexicon.positive for t in toks)
    has_neg = any(t in lexicon.negative for t in toks)
    if has_pos == has_neg:
        return None
    markers = lexicon.positive if has_pos else lexicon.negative
    stripped = tuple(t for t in toks if t not in markers)
    return stripped, (POSITIVE if has_pos else NEGATIVE)


def _is_mention(token: str) -> bool:
    return token.startswith("@") and len(token) > 1


def derive_mention(tokens):
    """Label conversational tweets (>= 1 @mention) and remove all mention tokens."""
    toks = tuple(tokens)
    y = int(any(_is_mention(t) for t in toks))
    stripped = tuple(t for t in toks if not _is_mention(t))
    return stripped, y


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1


def build_vocab(train_examples, min_count: int = 1) -> dict:
    """Deterministic token -> id map from the training split only.

    Ids are assigned by descending frequency, ties broken lexicographically;
    tokens below min_count map to UNK at encode time.
    """
    counts = Counter()
    for e in train_examples:
        counts.update(e.tokens)
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    vocab = {PAD: PAD_ID, UNK: UNK_ID}
    for tok, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])):
        if counts[tok] >= min_count:
            vocab[tok] = len(vocab)
    return vocab


def encode_tokens(vocab: dict, tokens) -> list:
    return [vocab.get(t, UNK_ID) for t in tokens]


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

CELLS = [(0, 0), (0, 1), (1, 0), (1, 1)]


def balanced_proportions() -> dict:
    return {cell: 0.25 for cell in CELLS}


def unbalanced_proportions(q: float) -> dict:
    """Equal y marginals; within y=1 a fraction q has z=1, within y=0 a fraction q has z=0."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    return {(1, 1): q / 2, (1, 0): (1 - q) / 2, (0, 0): q / 2, (0, 1): (1 - q) / 2}


def largest_remainder(total: int, fractions: dict) -> dict:
    """Integer counts summing to total, apportioned by the largest-remainder rule."""
    quotas = {k: total * f for k, f in fractions.items()}
    counts = {k: int(np.floor(v)) for k, v in quotas.items()}
    short = total - sum(counts.values())
    by_remainder = sorted(quotas, key=lambda k: (-(quotas[k] - counts[k]), k))
    for k in by_remainder[:short]:
        counts[k] += 1
    return counts


def make_split(pool, sizes: dict, proportions: dict, seed: int):
    """Draw disjoint train/dev datasets with exact per-cell (y, z) counts."""
    rng = derive_rng(seed, "split")
    by_cell = {cell: [] for cell in CELLS}
    for e in pool:
        by_cell[(e.y, e.z)].append(e)
    for cell in CELLS:
        idx = rng.permutation(len(by_cell[cell]))
        by_cell[cell] = [by_cell[cell][i] for i in idx]
    cursors = {cell: 0 for cell in CELLS}
    out = []
    for tag in ("train", "dev"):
        size = sizes.get(tag, 0)
        counts = largest_remainder(size, proportions)
        examples = []
        for cell in CELLS:
            need = counts[cell]
            available = len(by_cell[cell]) - cursors[cell]
            if need > available:
                raise ValueError(
                    f"insufficient pool for cell (y={cell[0]}, z={cell[1]}) in "
                    f"{tag} split: need {need}, have {available}"
                )
            examples.extend(by_cell[cell][cursors[cell] : cursors[cell] + need])
            cursors[cell] += need
        order = rng.permutation(len(examples))
        examples = [examples[i] for i in order]
        out.append(Dataset(examples, split_tag=tag, proportions=dict(proportions)))
    return tuple(out)


# ---------------------------------------------------------------------------
# Synthetic corpus generation
# ---------------------------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Knobs for the planted-signal corpus generator.

    s_y / s_z are the probabilities that an example carries a main-task /
    protected-attribute indicative token. rare_rate is the chance a planted
    z token comes from the large low-frequency pool rather than the small
    high-frequency one. overlap is the chance a planted token is drawn from
    the opposite label's pool (label noise).

    z_mode selects how the z signal is planted: "token" plants z-indicative
    token identities; "order" plants the same two marker tokens (zma, zmb) in
    both z classes and encodes z purely in their relative order. In order
    mode, examples without the pair plant a single marker whose identity
    signals y, so the marker embeddings stay useful to the main task and the
    z signal can only be removed by the sequence model itself.
    """

    n_examples: int = 1000
    shared_vocab: int = 200
    y_vocab: int = 20
    z_common_vocab: int = 10
    z_rare_vocab: int = 300
    rare_rate: float = 0.1
    len_min: int = 4
    len_max: int = 8
    s_y: float = 0.7
    s_z: float = 0.6
    overlap: float = 0.0
    z_mode: str = "token"

    def validate(self):
        if self.z_mode not in ("token", "order"):
            raise ValueError(f"z_mode must be 'token' or 'order', got {self.z_mode!r}")
        for name in ("s_y", "s_z", "overlap", "rare_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.len_min < 3:
            raise ValueError(f"len_min must be >= 3, got {self.len_min}")
        if self.len_max < self.len_min:
            raise ValueError("len_max must be >= len_min")


def generate_synthetic_corpus(spec: SyntheticSpec, seed: int) -> list:
    """Deterministic pool of Examples with planted y and z token signals."""
    spec.validate()
    rng = derive_rng(seed, "synthetic")
    seen = set()
    examples = []
    attempts = 0
    max_attempts = 50 * spec.n_examples + 1000
    while len(examples) < spec.n_examples:
        attempts += 1
        if attempts > max_attempts:
            raise RuntimeError(
                "could not generate enough unique examples; enlarge the vocabulary"
            )
        y = int(rng.integers(2))
        z = int(rng.integers(2))
        m = int(rng.integers(spec.len_min, spec.len_max + 1))
        toks = [f"w{int(i):03d}" for i in rng.integers(spec.shared_vocab, size=m)]
        slots = rng.permutation(m)
        if spec.z_mode == "order":
            # z is carried purely by the relative order of the marker pair
            # (zma, zmb). To pin the marker embeddings to the main task, an
            # example without the pair plants a single marker whose identity
            # signals y; pair examples get a regular y-pool token instead.
            # Identity therefore carries y while order alone carries z, so
            # only the sequence model can remove the z signal.
            plant_pair = rng.random() < spec.s_z
            if rng.random() < spec.s_y:
                cls = y if rng.random() >= spec.overlap else 1 - y
                if plant_pair:
                    toks[slots[0]] = f"y{cls}_{int(rng.integers(spec.y_vocab)):03d}"
                else:
                    toks[slots[0]] = "zma" if cls == 1 else "zmb"
            if plant_pair:
                cls = z if rng.random() >= spec.overlap else 1 - z
                lo, hi = sorted((int(slots[1]), int(slots[2])))
                first, second = ("zma", "zmb") if cls == 1 else ("zmb", "zma")
                toks[lo] = first
                toks[hi] = second
            key = tuple(toks)
            if key in seen:
                continue
            seen.add(key)
            examples.append(Example(tokens=key, y=y, z=z))
            continue
        if rng.random() < spec.s_y:
            cls = y if rng.random() >= spec.overlap else 1 - y
            toks[slots[0]] = f"y{cls}_{int(rng.integers(spec.y_vocab)):03d}"
        if rng.random() < spec.s_z:
            cls = z if rng.random() >= spec.overlap else 1 - z
            if rng.random() < spec.rare_rate:
                toks[slots[1]] = f"z{cls}_r{int(rng.integers(spec.z_rare_vocab)):04d}"
            else:
                toks[slots[1]] = f"z{cls}_c{int(rng.integers(spec.z_common_vocab)):02d}"
        key = tuple(toks)
        if key in seen:
            continue
        seen.add(key)
        examples.append(Example(tokens=key, y=y, z=z))
    return examples


# ---------------------------------------------------------------------------
# Corpus TSV: text<TAB>y<TAB>z, UTF-8, one example per line
# ---------------------------------------------------------------------------


def save_corpus(path, examples):
    with open(path, "w", encoding="utf-8") as f:
        for e in examples:
            f.write("\t".join((" ".join(e.tokens), str(e.y), str(e.z))) + "\n")


def load_corpus(path, lowercase: bool = False) -> list:
    examples = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected text<TAB>y<TAB>z")
            text, y_s, z_s = parts
            try:
                y, z = int(y_s), int(z_s)
            except ValueError as err:
                raise ValueError(f"{path}:{lineno}: non-integer label") from err
            examples.append(
                Example(tokens=tuple(tokenize(text, lowercase=lowercase)), y=y, z=z)
            )
    return examples


# ---------------------------------------------------------------------------
# Vector dumps: frozen representations for encoder-free auditing
# ---------------------------------------------------------------------------


@dataclass
class VectorDump:
    vectors: np.ndarray  # (n, d) float64
    z: np.ndarray  # (n,) int
    y: np.ndarray | None = None  # optional (n,) int

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.z = np.asarray(self.z, dtype=np.intp)
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.intp)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != self.z.shape[0]:
            raise ValueError("vector/label row counts differ")
        if len(set(self.z.tolist())) < 1 or self.z.shape[0] == 0:
            raise ValueError("vector dump is empty")


def save_vector_dump(path, dump: VectorDump, fmt: str = "tsv"):
    if fmt == "tsv":
        with open(path, "w", encoding="utf-8") as f:
            for i in range(dump.vectors.shape[0]):
                row = ",".join(repr(float(v)) for v in dump.vectors[i])
                cols = [row, str(int(dump.z[i]))]
                if dump.y is not None:
                    cols.append(str(int(dump.y[i])))
                f.write("\t".join(cols) + "\n")
    elif fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as f:
            for i in range(dump.vectors.shape[0]):
                rec = {"v": [float(v) for v in dump.vectors[i]], "z": int(dump.z[i])}
                if dump.y is not None:
                    rec["y"] = int(dump.y[i])
                f.write(json.dumps(rec) + "\n")
    else:
        raise ValueError(f"unknown vector dump format: {fmt}")


def load_vector_dump(path) -> VectorDump:
    """Parse a TSV or JSONL vector dump; errors carry the offending line number."""
    vectors, zs, ys = [], [], []
    with open(path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    jsonl = any(ln.lstrip().startswith("{") for ln in lines if ln.strip())
    dim = None
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            if jsonl:
                rec = json.loads(line)
                vec = [float(v) for v in rec["v"]]
                z = int(rec["z"])
                y = int(rec["y"]) if "y" in rec else None
            else:
                parts = line.split("\t")
                if len(parts) < 2:
                    raise ValueError("missing z column")
                vec = [float(v) for v in parts[0].split(",")]
                z = int(parts[1])
                y = int(parts[2]) if len(parts) > 2 else None
        except (ValueError, KeyError, json.JSONDecodeError) as err:
            raise ValueError(f"{path}:{lineno}: malformed vector row ({err})") from err
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise ValueError(
                f"{path}:{lineno}: ragged row, expected dim {dim}, got {len(vec)}"
            )
        vectors.append(vec)
        zs.append(z)
        ys.append(y)
    if not vectors:
        raise ValueError(f"{path}: empty vector dump")
    y_arr = None if any(v is None for v in ys) else np.asarray(ys)
    return VectorDump(np.asarray(vectors), np.asarray(zs), y_arr)
