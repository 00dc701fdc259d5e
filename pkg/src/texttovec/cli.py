"""Command-line surface.

Subcommands: vocab, train, ppl, topics, coherence, ir, classify,
textvec, sweep. Configuration comes from defaults, then an optional
flat ``key = value`` config file, then explicit flags (highest
precedence). All file reports are CSV under --out; logs go to stderr.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import docnade, evaluation
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import CorpusSplit, build_split, load_corpus, load_embeddings, write_vocabulary
from .ctx_lm import CtxModelParams, CtxTrainConfig, pretrain_then_train
from .docnade import TrainConfig, TrainResult
from .evaluation import (
    npmi_coherence,
    extract_topics,
    perplexity,
    precision_at_fractions,
    train_classifier,
    evaluate_classifier,
)

log = logging.getLogger(__name__)

MODELS = ("docnade", "ctx-docnade", "ctx-docnadee")
DEFAULT_LAMBDA_GRID = (1.0, 0.8, 0.5, 0.3, 0.1, 0.01, 0.001)
DEFAULT_FRACTIONS = (0.2, 0.4, 0.6, 0.8, 1.0)
DEFAULT_IR_FRACTION = 0.02


class ConfigError(ValueError):
    """A run configuration field violates its constraints."""


@dataclass
class RunConfig:
    model: str = "docnade"
    hidden: int = 200
    depth: int = 1
    activation: str = ""  # empty means per-task default (sigmoid ppl / tanh ir)
    learning_rate: float = 0.001
    epochs: int = 1000
    pretrain_epochs: int = 10
    lam: float = 0.01
    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    embeddings: str | None = None
    vocab_mode: str = "FV"
    max_vocab: int | None = None
    min_count: int = 1
    stopwords: str | None = None
    seed: int = 1
    batch_size: int = 1
    train_fraction: float = 1.0
    patience: int = 10
    optimizer: str = "adam"
    precision: str = "float64"

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"model: {self.model!r} is not one of {MODELS}")
        if self.hidden < 1:
            raise ConfigError("hidden: must be >= 1")
        if self.depth < 1:
            raise ConfigError("depth: must be >= 1")
        if self.activation not in ("", "sigmoid", "tanh"):
            raise ConfigError(f"activation: {self.activation!r} is not sigmoid or tanh")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate: must be > 0")
        if self.epochs < 0 or self.pretrain_epochs < 0:
            raise ConfigError("epochs: epoch counts must be >= 0")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError("lam: mixture weight must be finite and >= 0")
        if any(not (np.isfinite(l) and l >= 0) for l in self.lambda_grid):
            raise ConfigError("lambda_grid: entries must be finite and >= 0")
        if self.model == "ctx-docnadee" and not self.embeddings:
            raise ConfigError("embeddings: ctx-docnadee requires an embedding file")
        if self.vocab_mode not in corpus_mod.VOCAB_MODES:
            raise ConfigError(f"vocab_mode: must be one of {corpus_mod.VOCAB_MODES}")
        if self.max_vocab is not None and self.max_vocab < 1:
            raise ConfigError("max_vocab: must be >= 1")
        if self.min_count < 1:
            raise ConfigError("min_count: must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size: must be >= 1")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigError("train_fraction: must lie in (0, 1]")
        if self.patience < 0:
            raise ConfigError("patience: must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError("optimizer: must be sgd or adam")
        if self.precision not in ("float64", "float32"):
            raise ConfigError("precision: must be float64 or float32")


_INT_FIELDS = {"hidden", "depth", "epochs", "pretrain_epochs", "min_count", "seed", "batch_size", "patience", "max_vocab"}
_FLOAT_FIELDS = {"learning_rate", "lam", "train_fraction"}


def load_config_file(path: str) -> dict:
    """Parse a flat `key = value` config file ('#' starts a comment)."""
    values = {}
    known = {f.name for f in fields(RunConfig)}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            if key in _INT_FIELDS:
                values[key] = int(value)
            elif key in _FLOAT_FIELDS:
                values[key] = float(value)
            elif key == "lambda_grid":
                values[key] = tuple(float(v) for v in value.split(","))
            else:
                values[key] = value
    return values


def _merged_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = replace(cfg, **load_config_file(args.config))
    overrides = {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            overrides[f.name] = v
    cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def _add_config_flags(p: argparse.ArgumentParser, training: bool = True) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    if training:
        p.add_argument("--model", choices=MODELS)
        p.add_argument("--hidden", type=int)
        p.add_argument("--depth", type=int)
        p.add_argument("--activation", choices=["sigmoid", "tanh"])
        p.add_argument("--lr", dest="learning_rate", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--pretrain-epochs", dest="pretrain_epochs", type=int)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--embeddings")
        p.add_argument("--vocab-mode", dest="vocab_mode", choices=list(corpus_mod.VOCAB_MODES))
        p.add_argument("--max-vocab", dest="max_vocab", type=int)
        p.add_argument("--min-count", dest="min_count", type=int)
        p.add_argument("--stopwords")
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--train-fraction", dest="train_fraction", type=float)
        p.add_argument("--patience", type=int)
        p.add_argument("--optimizer", choices=["sgd", "adam"])
        p.add_argument("--precision", choices=["float64", "float32"])


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="texttovec", description=__doc__)
    p.add_argument("--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("vocab", help="build and dump a vocabulary")
    sp.add_argument("--train", required=True)
    sp.add_argument("--out", required=True)
    _add_config_flags(sp)

    sp = sub.add_parser("train", help="train a model and save a checkpoint")
    sp.add_argument("--train", required=True)
    sp.add_argument("--valid")
    sp.add_argument("--test")
    sp.add_argument("--out", required=True)
    _add_config_flags(sp)

    sp = sub.add_parser("ppl", help="held-out perplexity of a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("topics", help="extract per-topic top words")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--top-n", dest="top_n", type=int, default=10)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("coherence", help="sliding-window NPMI topic coherence")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--reference", required=True, help="reference corpus TSV (typically the train split)")
    sp.add_argument("--window", type=int, default=20)
    sp.add_argument("--top-n", dest="top_n", type=int, default=10)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("ir", help="precision-at-fraction document retrieval")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--queries", required=True)
    sp.add_argument("--index", required=True)
    sp.add_argument("--fractions", default=str(DEFAULT_IR_FRACTION), help="comma-separated fractions in (0,1]")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("classify", help="logistic-regression text categorization")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--train", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--l2", type=float, default=0.01)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("textvec", help="write document vectors for a corpus")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("sweep", help="mixture-weight grid or training-fraction sweep")
    sp.add_argument("--train", required=True)
    sp.add_argument("--valid")
    sp.add_argument("--test")
    sp.add_argument("--out", required=True)
    sp.add_argument("--lambda-grid", dest="lambda_grid_flag", help="comma-separated mixture weights")
    sp.add_argument("--fractions", help="comma-separated training fractions; selects the fraction sweep")
    sp.add_argument("--select-by", dest="select_by", choices=["ppl", "ir"], default="ppl")
    _add_config_flags(sp)
    return p


def _load_labeled(path: str, vocab, label_names=None):
    records = load_corpus(path)
    if label_names is None:
        label_names = sorted({l for r in records for l in r.labels})
    label_ids = {l: i for i, l in enumerate(label_names)}
    docs = corpus_mod._encode_records(records, vocab, label_ids, path)
    return list(docs), list(label_names)


def _activation_for(cfg: RunConfig, task: str) -> str:
    if cfg.activation:
        return cfg.activation
    return "tanh" if task in ("ir", "classify") else "sigmoid"


def _train_config(cfg: RunConfig, activation: str):
    common = dict(
        hidden=cfg.hidden,
        depth=cfg.depth,
        activation=activation,
        learning_rate=cfg.learning_rate,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        seed=cfg.seed,
        optimizer=cfg.optimizer,
        patience=cfg.patience,
        precision=cfg.precision,
    )
    if cfg.model == "docnade":
        return TrainConfig(**common)
    mode = "shared_w_plus_e" if cfg.model == "ctx-docnadee" else "shared_w"
    return CtxTrainConfig(
        **common, lam=cfg.lam, pretrain_epochs=cfg.pretrain_epochs, embedding_mode=mode
    )


def subsample_docs(docs, fraction: float, seed: int):
    """Deterministic subsample keeping the original document order."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError("train_fraction: must lie in (0, 1]")
    n = len(docs)
    m = int(np.ceil(fraction * n))
    if m < 2:
        raise ConfigError(f"train_fraction: fraction {fraction} keeps {m} < 2 documents")
    idx = sorted(np.random.default_rng(seed).permutation(n)[:m])
    return [docs[i] for i in idx]


def _fit(cfg: RunConfig, split: CorpusSplit, activation: str, embeddings=None) -> TrainResult:
    train_docs = subsample_docs(list(split.train), cfg.train_fraction, cfg.seed)
    sub = CorpusSplit(
        train=tuple(train_docs),
        validation=split.validation,
        test=split.test,
        vocabulary=split.vocabulary,
        label_names=split.label_names,
    )
    tc = _train_config(cfg, activation)
    if cfg.model == "docnade":
        return docnade.train(sub, tc)
    return pretrain_then_train(sub, tc, embeddings=embeddings)


def _write_history(history, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "phase", "train_nll_per_word", "valid_ppl"])
        for s in history:
            w.writerow([s.epoch, s.phase, repr(s.train_nll_per_word), repr(s.valid_ppl)])


def _build_split_from_paths(cfg: RunConfig, train_path, valid_path, test_path) -> CorpusSplit:
    stop = None
    if cfg.stopwords:
        with open(cfg.stopwords, encoding="utf-8") as fh:
            stop = {line.strip() for line in fh if line.strip()}
    return build_split(
        load_corpus(train_path),
        load_corpus(valid_path) if valid_path else (),
        load_corpus(test_path) if test_path else (),
        mode=cfg.vocab_mode,
        max_size=cfg.max_vocab,
        min_count=cfg.min_count,
        stopwords=stop,
    )


def _load_embeddings_if_needed(cfg: RunConfig, vocab):
    if cfg.model != "ctx-docnadee":
        return None
    table = load_embeddings(cfg.embeddings, vocab, cfg.hidden)
    log.info("embedding coverage: %.1f%%", 100.0 * table.coverage)
    return table


def cmd_vocab(args) -> int:
    cfg = _merged_config(args)
    records = load_corpus(args.train)
    stop = None
    if cfg.stopwords:
        with open(cfg.stopwords, encoding="utf-8") as fh:
            stop = {line.strip() for line in fh if line.strip()}
    vocab = corpus_mod.build_vocabulary(
        [r.text for r in records], cfg.vocab_mode, cfg.max_vocab, cfg.min_count, stop
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_vocabulary(vocab, out / "vocab.tsv")
    log.info("vocabulary: %d tokens (%s)", vocab.size, vocab.mode)
    return 0


def cmd_train(args) -> int:
    cfg = _merged_config(args)
    activation = _activation_for(cfg, "ppl")
    split = _build_split_from_paths(cfg, args.train, args.valid, args.test)
    embeddings = _load_embeddings_if_needed(cfg, split.vocabulary)
    result = _fit(cfg, split, activation, embeddings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = result.best_params
    save_checkpoint(model, split.vocabulary, out / "model.ckpt")
    _write_history(result.history, out / "history.csv")
    write_vocabulary(split.vocabulary, out / "vocab.tsv")
    if split.test:
        perplexity(split.test, model).write_csv(out / "ppl.csv")
    log.info("saved checkpoint to %s", out / "model.ckpt")
    return 0


def cmd_ppl(args) -> int:
    model, vocab = load_checkpoint(args.checkpoint)
    docs, _ = _load_labeled(args.test, vocab)
    report = perplexity(docs, model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "ppl.csv")
    print(f"ppl={report.ppl!r} documents={report.doc_count} tokens={report.token_count}")
    return 0


def cmd_topics(args) -> int:
    model, vocab = load_checkpoint(args.checkpoint)
    topics = extract_topics(model, args.top_n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "topics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["topic", "rank", "word_id", "token", "score"])
        for t in topics:
            for rank, (wid, score) in enumerate(zip(t.word_ids, t.scores)):
                w.writerow([t.topic_id, rank, wid, vocab.id_to_token[wid], repr(score)])
    return 0


def cmd_coherence(args) -> int:
    model, vocab = load_checkpoint(args.checkpoint)
    docs, _ = _load_labeled(args.reference, vocab)
    topics = extract_topics(model, args.top_n)
    report = npmi_coherence(topics, docs, window=args.window, top_n=args.top_n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "coherence.csv")
    print(f"coherence={report.average!r} window={report.window} top_n={report.top_n}")
    return 0


def _parse_fractions(text: str):
    vals = tuple(float(v) for v in text.split(",") if v.strip())
    if not vals:
        raise ConfigError("fractions: expected at least one value")
    return vals


def cmd_ir(args) -> int:
    model, vocab = load_checkpoint(args.checkpoint)
    fractions = _parse_fractions(args.fractions)
    q_records = load_corpus(args.queries)
    i_records = load_corpus(args.index)
    names = sorted({l for r in q_records + i_records for l in r.labels})
    label_ids = {l: i for i, l in enumerate(names)}
    queries = corpus_mod._encode_records(q_records, vocab, label_ids, args.queries)
    index = corpus_mod._encode_records(i_records, vocab, label_ids, args.index)
    report = precision_at_fractions(queries, index, model, fractions)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "ir.csv")
    for f, p in zip(report.fractions, report.precisions):
        print(f"fraction={f!r} precision={p!r}")
    return 0


def cmd_classify(args) -> int:
    model, vocab = load_checkpoint(args.checkpoint)
    tr_records = load_corpus(args.train)
    te_records = load_corpus(args.test)
    names = sorted({l for r in tr_records + te_records for l in r.labels})
    label_ids = {l: i for i, l in enumerate(names)}
    train_docs = corpus_mod._encode_records(tr_records, vocab, label_ids, args.train)
    test_docs = corpus_mod._encode_records(te_records, vocab, label_ids, args.test)
    multi = any(len(d.labels) > 1 for d in list(train_docs) + list(test_docs))
    tv = np.stack([evaluation.document_vector(d, model) for d in train_docs])
    sv = np.stack([evaluation.document_vector(d, model) for d in test_docs])
    clf = train_classifier(tv, [d.labels for d in train_docs], l2_strength=args.l2, multi_label=multi)
    report = evaluate_classifier(clf, sv, [d.labels for d in test_docs])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "classify.csv")
    print(f"macro_f1={report.macro_f1!r} accuracy={report.accuracy!r}")
    return 0


def cmd_textvec(args) -> int:
    model, vocab = load_checkpoint(args.checkpoint)
    docs, _ = _load_labeled(args.input, vocab)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "vectors.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        dim = model.hidden_size
        w.writerow(["doc"] + [f"v{j}" for j in range(dim)])
        for i, d in enumerate(docs):
            vec = evaluation.document_vector(d, model)
            w.writerow([i] + [repr(float(x)) for x in vec])
    return 0


def _ir_precision(model, queries, index) -> float:
    report = precision_at_fractions(queries, index, model, (DEFAULT_IR_FRACTION,))
    return report.precisions[0]


def lambda_sweep(cfg: RunConfig, split: CorpusSplit, embeddings, out: Path, select_by: str):
    """One ctx training run per grid mixture weight; emits a validation
    table and saves the per-weight checkpoints."""
    if cfg.model == "docnade":
        raise ConfigError("model: the lambda sweep needs a ctx model")
    if not split.validation:
        raise ConfigError("sweep requires a validation split (--valid)")
    activation = _activation_for(cfg, "ir" if select_by == "ir" else "ppl")
    rows = []
    for lam in cfg.lambda_grid:
        run_cfg = replace(cfg, lam=lam)
        result = _fit(run_cfg, split, activation, embeddings)
        model = result.best_params
        if select_by == "ppl":
            metric = perplexity(split.validation, model).ppl
        else:
            metric = -_ir_precision(model, list(split.validation), list(split.train))
        rows.append((lam, metric, model))
        log.info("lambda=%s %s=%r", lam, select_by, metric)
    best_lam, _, best_model = min(rows, key=lambda r: r[1])
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        metric_name = "valid_ppl" if select_by == "ppl" else "valid_ir_precision"
        w.writerow(["lambda", metric_name, "best"])
        for lam, metric, _ in rows:
            value = metric if select_by == "ppl" else -metric
            w.writerow([repr(float(lam)), repr(float(value)), int(lam == best_lam)])
    for lam, _, model in rows:
        save_checkpoint(model, split.vocabulary, out / f"model_lambda_{lam}.ckpt")
    return best_lam, best_model


def training_fraction_sweep(cfg: RunConfig, split: CorpusSplit, fractions, embeddings, out: Path):
    """Train on deterministic subsamples of the train split and report
    retrieval precision and classification macro-F1 per fraction."""
    if not split.test:
        raise ConfigError("sweep requires a test split (--test)")
    activation = _activation_for(cfg, "ir")
    rows = []
    for fraction in fractions:
        run_cfg = replace(cfg, train_fraction=fraction)
        result = _fit(run_cfg, split, activation, embeddings)
        model = result.best_params
        sub_train = subsample_docs(list(split.train), fraction, cfg.seed)
        ir = _ir_precision(model, list(split.test), sub_train)
        multi = any(len(d.labels) > 1 for d in sub_train + list(split.test))
        tv = np.stack([evaluation.document_vector(d, model) for d in sub_train])
        sv = np.stack([evaluation.document_vector(d, model) for d in split.test])
        clf = train_classifier(tv, [d.labels for d in sub_train], multi_label=multi)
        f1 = evaluate_classifier(clf, sv, [d.labels for d in split.test]).macro_f1
        rows.append((fraction, ir, f1))
        log.info("fraction=%s ir=%r macro_f1=%r", fraction, ir, f1)
    with open(out / "fraction_sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["fraction", "ir_precision", "macro_f1"])
        for fraction, ir, f1 in rows:
            w.writerow([repr(float(fraction)), repr(float(ir)), repr(float(f1))])
    return rows


def cmd_sweep(args) -> int:
    cfg = _merged_config(args)
    if args.lambda_grid_flag:
        cfg = replace(cfg, lambda_grid=_parse_fractions(args.lambda_grid_flag))
        if cfg.model == "docnade":
            cfg = replace(cfg, model="ctx-docnade")
        cfg.validate()
    split = _build_split_from_paths(cfg, args.train, args.valid, args.test)
    embeddings = _load_embeddings_if_needed(cfg, split.vocabulary)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.fractions:
        training_fraction_sweep(cfg, split, _parse_fractions(args.fractions), embeddings, out)
    else:
        best_lam, _ = lambda_sweep(cfg, split, embeddings, out, args.select_by)
        print(f"best_lambda={best_lam!r}")
    return 0


_COMMANDS = {
    "vocab": cmd_vocab,
    "train": cmd_train,
    "ppl": cmd_ppl,
    "topics": cmd_topics,
    "coherence": cmd_coherence,
    "ir": cmd_ir,
    "classify": cmd_classify,
    "textvec": cmd_textvec,
    "sweep": cmd_sweep,
}


def run(argv=None) -> int:
    """Entry point returning an exit code instead of raising SystemExit."""
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to exit code 1
        log.debug("traceback", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
