"""Evaluation protocols: held-out perplexity, topic extraction with
sliding-window NPMI coherence, precision-at-fraction retrieval over
document vectors, and L2-regularized logistic-regression categorization.

All evaluation is read-only over a frozen model. Reports serialize to
CSV with full-precision floats so identical runs produce identical
bytes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import ctx_lm, docnade
from .ctx_lm import CtxModelParams
from .docnade import DocNADEParams, as_token_array


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _dn_of(model) -> DocNADEParams:
    if isinstance(model, CtxModelParams):
        return model.dn
    if isinstance(model, DocNADEParams):
        return model
    raise TypeError(f"unsupported model type {type(model).__name__}")


def document_vector(doc, model) -> np.ndarray:
    """The representation used for retrieval and classification."""
    if isinstance(model, CtxModelParams):
        return ctx_lm.text_to_vec(doc, model)
    return docnade.doc_representation(doc, _dn_of(model))


# ---------------------------------------------------------------------------
# Perplexity


@dataclass
class PPLReport:
    ppl: float
    per_doc_logprob: list[float]
    per_doc_tokens: list[int]
    doc_count: int
    token_count: int

    def write_csv(self, path) -> None:
        _write_rows(
            path,
            ["doc", "log_prob", "tokens", "ppl"],
            [
                (i, lp, n, self.ppl if i == 0 else "")
                for i, (lp, n) in enumerate(zip(self.per_doc_logprob, self.per_doc_tokens))
            ],
        )


def perplexity_from_logprobs(logps, lens) -> float:
    """exp(-(1/z) sum_t (1/|v_t|) log p(v_t)) over z documents."""
    logps = np.asarray(logps, dtype=np.float64)
    lens = np.asarray(lens, dtype=np.float64)
    return float(np.exp(-np.mean(logps / lens)))


def perplexity(test_docs, model) -> PPLReport:
    """Average held-out perplexity per word.

    For mixture models the log-likelihood is evaluated with the language
    model switched off (mixture weight zero), which is the exact
    document likelihood of the topic-model component.
    """
    docs = list(test_docs)
    if not docs:
        raise ValueError("perplexity requires a non-empty test set")
    dn = _dn_of(model)
    logps = []
    lens = []
    for d in docs:
        tokens = as_token_array(d)
        logps.append(docnade.doc_log_likelihood(tokens, dn))
        lens.append(int(tokens.shape[0]))
    return PPLReport(
        ppl=perplexity_from_logprobs(logps, lens),
        per_doc_logprob=logps,
        per_doc_tokens=lens,
        doc_count=len(docs),
        token_count=int(sum(lens)),
    )


# ---------------------------------------------------------------------------
# Topics and coherence


@dataclass
class Topic:
    topic_id: int
    word_ids: list[int]
    scores: list[float]


def extract_topics(model, top_n: int = 10) -> list[Topic]:
    """Per-topic top words: row j of W sorted descending, ties to lower id."""
    dn = _dn_of(model)
    K = dn.vocab_size
    if top_n > K:
        raise ValueError(f"top_n={top_n} exceeds vocabulary size {K}")
    topics = []
    for j in range(dn.hidden_size):
        row = dn.W[j]
        order = np.argsort(-row, kind="stable")[:top_n]
        topics.append(
            Topic(topic_id=j, word_ids=[int(w) for w in order], scores=[float(row[w]) for w in order])
        )
    return topics


@dataclass
class CoherenceReport:
    per_topic: list[float]  # nan for topics with no countable pair
    average: float
    window: int
    top_n: int
    excluded_pairs: int  # pairs skipped because a word never appears
    zero_cooccurrence_pairs: int

    def write_csv(self, path) -> None:
        _write_rows(path, ["topic", "npmi"], list(enumerate(self.per_topic)))


NPMI_EPS = 1e-12


def _window_counts(reference_docs, window: int, needed: set[int], needed_pairs: set):
    """Boolean sliding-window counts over the reference corpus.

    A document shorter than the window contributes a single window.
    """
    word_counts: dict[int, int] = {w: 0 for w in needed}
    pair_counts: dict[tuple, int] = {p: 0 for p in needed_pairs}
    total = 0
    for d in reference_docs:
        tokens = as_token_array(d)
        L = tokens.shape[0]
        spans = range(max(1, L - window + 1))
        for s in spans:
            total += 1
            present = sorted(set(int(t) for t in tokens[s : s + window]) & needed)
            for w in present:
                word_counts[w] += 1
            for p in combinations(present, 2):
                if p in pair_counts:
                    pair_counts[p] += 1
    return word_counts, pair_counts, total


def npmi_pair(p_joint: float, p_a: float, p_b: float) -> float:
    """Smoothed normalized pointwise mutual information, clamped to [-1, 1]."""
    num = np.log((p_joint + NPMI_EPS) / (p_a * p_b))
    den = -np.log(p_joint + NPMI_EPS)
    return float(np.clip(num / den, -1.0, 1.0))


def npmi_coherence(topics, reference_docs, window: int = 20, top_n: int | None = None) -> CoherenceReport:
    """Topic coherence from boolean sliding-window co-occurrence counts.

    For each topic, NPMI is averaged over word pairs (i < j) among its
    top words; pairs involving a word that never occurs in the reference
    corpus are excluded and counted.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    reference_docs = list(reference_docs)
    if not reference_docs:
        raise ValueError("reference corpus is empty")
    if top_n is None:
        top_n = min(len(t.word_ids) for t in topics)
    topic_words = [t.word_ids[:top_n] for t in topics]
    needed = {w for words in topic_words for w in words}
    needed_pairs = set()
    for words in topic_words:
        for a, b in combinations(words, 2):
            needed_pairs.add((min(a, b), max(a, b)))
    word_counts, pair_counts, total = _window_counts(reference_docs, window, needed, needed_pairs)
    per_topic = []
    excluded = 0
    zero_pairs = 0
    for words in topic_words:
        vals = []
        for a, b in combinations(words, 2):
            ca, cb = word_counts[a], word_counts[b]
            if ca == 0 or cb == 0:
                excluded += 1
                continue
            cj = pair_counts[(min(a, b), max(a, b))]
            if cj == 0:
                zero_pairs += 1
            vals.append(npmi_pair(cj / total, ca / total, cb / total))
        per_topic.append(float(np.mean(vals)) if vals else float("nan"))
    valid = [v for v in per_topic if np.isfinite(v)]
    return CoherenceReport(
        per_topic=per_topic,
        average=float(np.mean(valid)) if valid else float("nan"),
        window=window,
        top_n=top_n,
        excluded_pairs=excluded,
        zero_cooccurrence_pairs=zero_pairs,
    )


# ---------------------------------------------------------------------------
# Retrieval


@dataclass
class RetrievalReport:
    fractions: list[float]
    precisions: list[float]  # mean over queries, aligned with fractions
    per_query: np.ndarray  # (num_queries, num_fractions)
    zero_norm_queries: int = 0
    zero_norm_index: int = 0

    def write_csv(self, path) -> None:
        _write_rows(path, ["fraction", "precision"], list(zip(self.fractions, self.precisions)))


def _unit_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    return x / safe[:, None], zero


def precision_from_vectors(
    query_vecs: np.ndarray,
    query_labels,
    index_vecs: np.ndarray,
    index_labels,
    fractions,
) -> RetrievalReport:
    """Cosine retrieval: for each fraction f the ceil(f * |index|) nearest
    index documents are retrieved (ties broken toward lower index ids);
    per-query precision is the share carrying the query's label,
    averaged over the query's labels when it has several. Zero-norm
    vectors compare at similarity -1 and are flagged."""
    fractions = [float(f) for f in fractions]
    if any(not 0.0 < f <= 1.0 for f in fractions):
        raise ValueError("fractions must lie in (0, 1]")
    q_labels = [_as_label_set(l) for l in query_labels]
    i_labels = [_as_label_set(l) for l in index_labels]
    if any(not l for l in q_labels) or any(not l for l in i_labels):
        raise ValueError("retrieval requires labeled documents")
    qn, q_zero = _unit_rows(np.asarray(query_vecs, dtype=np.float64))
    xn, x_zero = _unit_rows(np.asarray(index_vecs, dtype=np.float64))
    sims = qn @ xn.T
    undef = q_zero[:, None] | x_zero[None, :]
    sims[undef] = -1.0
    n_index = xn.shape[0]
    counts = [int(np.ceil(f * n_index)) for f in fractions]
    label_matrix = {}
    all_labels = sorted({l for s in i_labels for l in s})
    for lab in all_labels:
        label_matrix[lab] = np.array([lab in s for s in i_labels], dtype=np.float64)
    per_query = np.zeros((qn.shape[0], len(fractions)))
    ids = np.arange(n_index)
    for qi in range(qn.shape[0]):
        order = np.lexsort((ids, -sims[qi]))
        for fi, m in enumerate(counts):
            retrieved = order[:m]
            precs = []
            for lab in sorted(q_labels[qi]):
                hit = label_matrix.get(lab)
                precs.append(0.0 if hit is None else float(hit[retrieved].mean()))
            per_query[qi, fi] = float(np.mean(precs))
    return RetrievalReport(
        fractions=fractions,
        precisions=[float(c) for c in per_query.mean(axis=0)],
        per_query=per_query,
        zero_norm_queries=int(q_zero.sum()),
        zero_norm_index=int(x_zero.sum()),
    )


def _as_label_set(labels) -> frozenset:
    if isinstance(labels, frozenset):
        return labels
    if isinstance(labels, (set, list, tuple)):
        return frozenset(labels)
    return frozenset([labels])


def precision_at_fractions(query_docs, index_docs, model, fractions=(0.02,)) -> RetrievalReport:
    """Document retrieval over model representations (queries vs index)."""
    query_docs = list(query_docs)
    index_docs = list(index_docs)
    qv = np.stack([document_vector(d, model) for d in query_docs])
    iv = np.stack([document_vector(d, model) for d in index_docs])
    return precision_from_vectors(
        qv,
        [d.labels for d in query_docs],
        iv,
        [d.labels for d in index_docs],
        fractions,
    )


# ---------------------------------------------------------------------------
# Classification


@dataclass
class LogRegModel:
    """Per-class logistic heads; the last weight column is the bias.

    Single-label models share a softmax over classes; multi-label models
    hold independent one-vs-rest sigmoid heads.
    """

    weights: np.ndarray  # (C, H+1)
    classes: list
    l2_strength: float
    multi_label: bool
    loss_history: list[float] = field(default_factory=list)


def _design(vecs: np.ndarray) -> np.ndarray:
    vecs = np.asarray(vecs, dtype=np.float64)
    return np.hstack([vecs, np.ones((vecs.shape[0], 1))])


def _label_targets(labels, classes, multi_label):
    index = {c: i for i, c in enumerate(classes)}
    if multi_label:
        Y = np.zeros((len(labels), len(classes)))
        for r, ls in enumerate(labels):
            for l in _as_label_set(ls):
                if l in index:
                    Y[r, index[l]] = 1.0
        return Y
    y = np.empty(len(labels), dtype=np.int64)
    for r, ls in enumerate(labels):
        ls = _as_label_set(ls)
        if len(ls) != 1:
            raise ValueError("single-label classifier got a multi-label document")
        y[r] = index[next(iter(ls))]
    return y


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)


def train_classifier(
    train_vecs,
    train_labels,
    l2_strength: float = 0.01,
    multi_label: bool = False,
    learning_rate: float = 1.0,
    max_iter: int = 2000,
    tol: float = 1e-8,
    seed: int = 0,
) -> LogRegModel:
    """Full-batch gradient descent with backtracking on the regularized
    cross-entropy; stops when the gradient norm falls below `tol`.

    Deterministic: weights start at zero, so the seed only fixes the
    interface. The L2 penalty applies to weights, not biases.
    """
    del seed
    X = _design(train_vecs)
    classes = sorted({l for ls in train_labels for l in _as_label_set(ls)})
    if len(classes) < 2:
        raise ValueError("classifier needs at least 2 classes")
    C = len(classes)
    Y = _label_targets(train_labels, classes, multi_label)
    N = X.shape[0]
    W = np.zeros((C, X.shape[1]))

    def loss_grad(Wc):
        logits = X @ Wc.T
        reg_w = Wc.copy()
        reg_w[:, -1] = 0.0
        if multi_label:
            p = 1.0 / (1.0 + np.exp(-logits))
            eps = 1e-12
            ce = -(Y * np.log(p + eps) + (1 - Y) * np.log(1 - p + eps)).mean(axis=0).sum()
            g = (p - Y).T @ X / N
        else:
            p = _softmax_rows(logits)
            ce = -np.log(p[np.arange(N), Y] + 1e-300).mean()
            onehot = np.zeros_like(p)
            onehot[np.arange(N), Y] = 1.0
            g = (p - onehot).T @ X / N
        loss = ce + 0.5 * l2_strength * np.sum(reg_w * reg_w)
        return loss, g + l2_strength * reg_w

    history = []
    lr = learning_rate
    loss, grad = loss_grad(W)
    history.append(float(loss))
    for _ in range(max_iter):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            break
        while True:
            W_new = W - lr * grad
            new_loss, new_grad = loss_grad(W_new)
            if new_loss <= loss or lr < 1e-14:
                break
            lr *= 0.5
        W, loss, grad = W_new, new_loss, new_grad
        history.append(float(loss))
        lr = min(lr * 1.1, learning_rate)
    return LogRegModel(
        weights=W,
        classes=classes,
        l2_strength=l2_strength,
        multi_label=multi_label,
        loss_history=history,
    )


@dataclass
class ClassificationReport:
    macro_f1: float
    accuracy: float | None  # None for multi-label models
    per_class_f1: list[float]

    def write_csv(self, path) -> None:
        rows = [("macro_f1", self.macro_f1)]
        if self.accuracy is not None:
            rows.append(("accuracy", self.accuracy))
        rows.extend((f"f1_class_{i}", v) for i, v in enumerate(self.per_class_f1))
        _write_rows(path, ["metric", "value"], rows)


def _binary_f1(tp: int, fp: int, fn: int) -> float:
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def evaluate_classifier(model: LogRegModel, test_vecs, test_labels) -> ClassificationReport:
    """Macro-averaged F1 (per-class F1 is 0 when a class has no true
    positives), plus plain accuracy for single-label models."""
    X = _design(test_vecs)
    if X.shape[1] != model.weights.shape[1]:
        raise ValueError("test vectors do not match the classifier dimension")
    logits = X @ model.weights.T
    if model.multi_label:
        Y = _label_targets(test_labels, model.classes, True)
        pred = logits >= 0.0  # sigmoid >= 0.5
        f1s = []
        for c in range(len(model.classes)):
            tp = int(np.sum(pred[:, c] & (Y[:, c] == 1)))
            fp = int(np.sum(pred[:, c] & (Y[:, c] == 0)))
            fn = int(np.sum(~pred[:, c] & (Y[:, c] == 1)))
            f1s.append(_binary_f1(tp, fp, fn))
        return ClassificationReport(
            macro_f1=float(np.mean(f1s)), accuracy=None, per_class_f1=f1s
        )
    y = _label_targets(test_labels, model.classes, False)
    pred = logits.argmax(axis=1)
    f1s = []
    for c in range(len(model.classes)):
        tp = int(np.sum((pred == c) & (y == c)))
        fp = int(np.sum((pred == c) & (y != c)))
        fn = int(np.sum((pred != c) & (y == c)))
        f1s.append(_binary_f1(tp, fp, fn))
    return ClassificationReport(
        macro_f1=float(np.mean(f1s)),
        accuracy=float(np.mean(pred == y)),
        per_class_f1=f1s,
    )
