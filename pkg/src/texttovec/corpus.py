"""Corpus ingestion: TSV loading, vocabulary building, document encoding,
and GloVe-style embedding files.

All objects here are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

VOCAB_MODES = ("RV", "FV")


class CorpusError(ValueError):
    """A corpus file or its contents violate the expected format."""


class EmptyDocumentError(ValueError):
    """A document has no in-vocabulary tokens; callers should skip it."""


@dataclass(frozen=True)
class RawRecord:
    """One line of a corpus file: labels, raw text, 1-based line number."""

    labels: tuple[str, ...]
    text: str
    line_number: int


@dataclass(frozen=True)
class Vocabulary:
    token_to_id: dict[str, int]
    id_to_token: tuple[str, ...]
    frequency: np.ndarray  # training-corpus count per id
    mode: str  # "RV" | "FV"

    def __post_init__(self) -> None:
        if self.mode not in VOCAB_MODES:
            raise ValueError(f"vocabulary mode must be one of {VOCAB_MODES}")
        if len(self.id_to_token) == 0:
            raise ValueError("vocabulary is empty")

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def __len__(self) -> int:
        return len(self.id_to_token)


@dataclass(frozen=True)
class Document:
    """An encoded document: ordered word ids plus label ids."""

    tokens: np.ndarray  # int64, length >= 1, original order
    labels: frozenset[int] = frozenset()
    oov_dropped: int = 0

    def __len__(self) -> int:
        return int(self.tokens.shape[0])


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[Document, ...]
    validation: tuple[Document, ...]
    test: tuple[Document, ...]
    vocabulary: Vocabulary
    label_names: tuple[str, ...]


@dataclass(frozen=True)
class EmbeddingTable:
    """Static pre-trained word vectors aligned to a vocabulary.

    Rows for words missing from the embedding file are all-zero and
    flagged uncovered.
    """

    vectors: np.ndarray  # (K, H) float64
    covered: np.ndarray  # (K,) bool
    dimension: int

    @property
    def coverage(self) -> float:
        return float(self.covered.mean())


def load_corpus(path: str) -> list[RawRecord]:
    """Read a TSV corpus: one `label[:label...]<TAB>text` record per line.

    Empty lines are skipped. An empty label field yields an unlabeled
    record. Lines without a TAB are rejected with their line number.
    """
    records: list[RawRecord] = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot open corpus file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if "\t" not in line:
                raise CorpusError(f"{path}:{lineno}: missing TAB separator")
            label_field, text = line.split("\t", 1)
            labels = tuple(l for l in label_field.split(":") if l)
            records.append(RawRecord(labels=labels, text=text, line_number=lineno))
    if not records:
        warnings.warn(f"corpus file {path} contains no records")
    return records


def tokenize(text: str, mode: str) -> list[str]:
    """Whitespace tokenization; RV additionally lowercases."""
    if mode == "RV":
        text = text.lower()
    return text.split()


def build_vocabulary(
    train_docs: list[str],
    mode: str = "FV",
    max_size: int | None = None,
    min_count: int = 1,
    stopwords: set[str] | None = None,
) -> Vocabulary:
    """Build a vocabulary from training texts only.

    FV keeps every token meeting min_count. RV additionally lowercases
    and removes stopwords. When max_size is given, only the max_size
    most frequent tokens are kept. Ids are assigned by descending
    frequency with lexicographic tie-breaking, which makes the result
    reproducible across runs.
    """
    if mode not in VOCAB_MODES:
        raise ValueError(f"vocabulary mode must be one of {VOCAB_MODES}")
    if not train_docs:
        raise CorpusError("cannot build a vocabulary from an empty training set")
    if max_size is not None and max_size < 1:
        raise ValueError("max_size must be >= 1")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: dict[str, int] = {}
    for text in train_docs:
        for tok in tokenize(text, mode):
            counts[tok] = counts.get(tok, 0) + 1
    if mode == "RV" and stopwords:
        lowered = {w.lower() for w in stopwords}
        counts = {t: c for t, c in counts.items() if t not in lowered}
    items = [(t, c) for t, c in counts.items() if c >= min_count]
    items.sort(key=lambda tc: (-tc[1], tc[0]))
    if max_size is not None:
        items = items[:max_size]
    if not items:
        raise CorpusError("vocabulary is empty after filtering")
    id_to_token = tuple(t for t, _ in items)
    return Vocabulary(
        token_to_id={t: i for i, t in enumerate(id_to_token)},
        id_to_token=id_to_token,
        frequency=np.array([c for _, c in items], dtype=np.int64),
        mode=mode,
    )


def encode_document(
    raw_text: str, vocab: Vocabulary, labels: frozenset[int] = frozenset()
) -> Document:
    """Encode raw text as an ordered id sequence, dropping OOV tokens.

    Raises EmptyDocumentError when nothing survives; such documents must
    never reach a model.
    """
    ids = []
    dropped = 0
    for tok in tokenize(raw_text, vocab.mode):
        i = vocab.token_to_id.get(tok)
        if i is None:
            dropped += 1
        else:
            ids.append(i)
    if not ids:
        raise EmptyDocumentError(
            f"document has no in-vocabulary tokens ({dropped} dropped)"
        )
    return Document(
        tokens=np.array(ids, dtype=np.int64), labels=labels, oov_dropped=dropped
    )


def _encode_records(
    records: list[RawRecord], vocab: Vocabulary, label_ids: dict[str, int], name: str
) -> tuple[Document, ...]:
    docs = []
    skipped = 0
    for rec in records:
        labels = frozenset(label_ids[l] for l in rec.labels)
        try:
            docs.append(encode_document(rec.text, vocab, labels))
        except EmptyDocumentError:
            skipped += 1
    if skipped:
        warnings.warn(
            f"{name} split: skipped {skipped} documents with no in-vocabulary tokens"
        )
    return tuple(docs)


def build_split(
    train_records: list[RawRecord],
    validation_records: list[RawRecord] = (),
    test_records: list[RawRecord] = (),
    mode: str = "FV",
    max_size: int | None = None,
    min_count: int = 1,
    stopwords: set[str] | None = None,
) -> CorpusSplit:
    """Assemble a CorpusSplit: vocabulary from train only, all splits encoded.

    Validation/test tokens outside the training vocabulary are dropped
    with per-document counts; documents losing every token are skipped
    with a warning.
    """
    vocab = build_vocabulary(
        [r.text for r in train_records], mode, max_size, min_count, stopwords
    )
    names = sorted(
        {l for recs in (train_records, validation_records, test_records) for r in recs for l in r.labels}
    )
    label_ids = {l: i for i, l in enumerate(names)}
    return CorpusSplit(
        train=_encode_records(train_records, vocab, label_ids, "train"),
        validation=_encode_records(list(validation_records), vocab, label_ids, "validation"),
        test=_encode_records(list(test_records), vocab, label_ids, "test"),
        vocabulary=vocab,
        label_names=tuple(names),
    )


def load_embeddings(path: str, vocab: Vocabulary, dimension: int) -> EmbeddingTable:
    """Load GloVe-style text embeddings aligned to `vocab`.

    Each line is `word v1 ... vH`. Words absent from the file get a zero
    row and covered=False; duplicate lines for a word keep the last one.
    """
    vectors = np.zeros((vocab.size, dimension), dtype=np.float64)
    covered = np.zeros(vocab.size, dtype=bool)
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot open embedding file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2 or not parts[0]:
                continue
            word = parts[0]
            values = [p for p in parts[1:] if p]
            if len(values) != dimension:
                raise CorpusError(
                    f"{path}:{lineno}: expected {dimension} floats, found {len(values)}"
                )
            idx = vocab.token_to_id.get(word)
            if idx is None:
                continue
            try:
                row = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise CorpusError(f"{path}:{lineno}: unreadable float") from exc
            if not np.all(np.isfinite(row)):
                raise CorpusError(f"{path}:{lineno}: non-finite embedding value")
            vectors[idx] = row
            covered[idx] = True
    return EmbeddingTable(vectors=vectors, covered=covered, dimension=dimension)


def write_vocabulary(vocab: Vocabulary, path: str) -> None:
    """Dump a vocabulary as `id<TAB>token<TAB>frequency` lines."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_vocabulary(vocab))


def format_vocabulary(vocab: Vocabulary) -> str:
    lines = [
        f"{i}\t{tok}\t{int(vocab.frequency[i])}"
        for i, tok in enumerate(vocab.id_to_token)
    ]
    return "\n".join(lines) + "\n"


def parse_vocabulary(text: str, mode: str) -> Vocabulary:
    """Inverse of format_vocabulary; ids must be exactly 0..K-1 in order."""
    tokens: list[str] = []
    freqs: list[int] = []
    for lineno, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise CorpusError(f"vocabulary dump line {lineno + 1}: expected 3 fields")
        idx, tok, freq = parts
        if int(idx) != len(tokens):
            raise CorpusError(f"vocabulary dump line {lineno + 1}: ids out of order")
        tokens.append(tok)
        freqs.append(int(freq))
    return Vocabulary(
        token_to_id={t: i for i, t in enumerate(tokens)},
        id_to_token=tuple(tokens),
        frequency=np.array(freqs, dtype=np.int64),
        mode=mode,
    )


def read_vocabulary(path: str, mode: str = "FV") -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        return parse_vocabulary(fh.read(), mode)
