"""The bag-of-words neural autoregressive topic model.

A document ``v = [v_1 .. v_D]`` is scored as a product of per-position
softmax conditionals whose hidden states are activations of a running
sum of word-representation columns:

    h_i = g(e + sum_{k<i} W[:, v_k])
    p(v_i = w | v_<i) = softmax(b + U h_i)[w]

The running sum makes the per-document cost O(H D) plus the softmax
work; the incremental and position-by-position formulations are
numerically interchangeable and the tests hold them to that.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .corpus import CorpusSplit, Document
from .numerics import (
    OptimizerState,
    Parameter,
    activate,
    log_softmax,
    optimizer_step,
)

log = logging.getLogger(__name__)


@dataclass
class DocNADEParams:
    """Parameters of the autoregressive topic model.

    W columns are word vectors, W rows are per-topic word weightings; U
    maps hidden states to vocabulary logits. Depth-2+ models stack extra
    H x H layers stored in W_deep / e_deep.
    """

    W: np.ndarray  # (H, K)
    U: np.ndarray  # (K, H)
    b: np.ndarray  # (K,)
    e: np.ndarray  # (H,)
    W_deep: np.ndarray  # (depth-1, H, H)
    e_deep: np.ndarray  # (depth-1, H)
    activation: str = "sigmoid"

    @property
    def hidden_size(self) -> int:
        return self.W.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.W.shape[1]

    @property
    def depth(self) -> int:
        return self.W_deep.shape[0] + 1

    def copy(self) -> "DocNADEParams":
        return DocNADEParams(
            W=self.W.copy(),
            U=self.U.copy(),
            b=self.b.copy(),
            e=self.e.copy(),
            W_deep=self.W_deep.copy(),
            e_deep=self.e_deep.copy(),
            activation=self.activation,
        )

    def kernel_args(self) -> tuple:
        return (
            self.W,
            self.U,
            self.b,
            self.e,
            self.W_deep,
            self.e_deep,
            kernels.ACT_IDS[self.activation],
        )


def init_params(
    vocab_size: int,
    hidden: int,
    seed: int = 1,
    activation: str = "sigmoid",
    depth: int = 1,
    rng: np.random.Generator | None = None,
    dtype=np.float64,
) -> DocNADEParams:
    """Seeded uniform Glorot initialization; biases start at zero."""
    if vocab_size < 1 or hidden < 1:
        raise ValueError("vocab_size and hidden must be >= 1")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if activation not in kernels.ACT_IDS:
        raise ValueError(f"unknown activation {activation!r}")
    if rng is None:
        rng = np.random.default_rng(seed)
    bound_wk = np.sqrt(6.0 / (hidden + vocab_size))
    bound_hh = np.sqrt(6.0 / (2.0 * hidden))
    W = rng.uniform(-bound_wk, bound_wk, size=(hidden, vocab_size))
    U = rng.uniform(-bound_wk, bound_wk, size=(vocab_size, hidden))
    W_deep = rng.uniform(-bound_hh, bound_hh, size=(depth - 1, hidden, hidden))
    return DocNADEParams(
        W=W.astype(dtype),
        U=U.astype(dtype),
        b=np.zeros(vocab_size, dtype=dtype),
        e=np.zeros(hidden, dtype=dtype),
        W_deep=W_deep.astype(dtype),
        e_deep=np.zeros((depth - 1, hidden), dtype=dtype),
        activation=activation,
    )


def as_token_array(doc) -> np.ndarray:
    """Accept a Document or raw id sequence; reject empty documents."""
    tokens = doc.tokens if isinstance(doc, Document) else np.asarray(doc, dtype=np.int64)
    tokens = np.ascontiguousarray(tokens, dtype=np.int64)
    if tokens.ndim != 1 or tokens.shape[0] == 0:
        raise ValueError("document must be a non-empty 1-D id sequence")
    return tokens


@dataclass
class OpCounter:
    """Counts the recurrence work of the stepwise likelihood path."""

    hidden_evals: int = 0
    accumulator_adds: int = 0


@dataclass(frozen=True)
class PrefixActivation:
    """Running pre-activation a = e + sum_{k<i} W[:, v_k] at position i."""

    a: np.ndarray
    position: int  # 1-based; position D+1 covers the whole document


def prefix_start(params: DocNADEParams) -> PrefixActivation:
    return PrefixActivation(a=params.e.copy(), position=1)


def prefix_advance(
    act: PrefixActivation, v: int, params: DocNADEParams, counter: OpCounter | None = None
) -> PrefixActivation:
    """Absorb word v into the running sum."""
    if not 0 <= v < params.vocab_size:
        raise ValueError(f"word id {v} out of range for vocabulary size {params.vocab_size}")
    if counter is not None:
        counter.accumulator_adds += 1
    return PrefixActivation(a=act.a + params.W[:, v], position=act.position + 1)


def hidden(
    act: PrefixActivation, params: DocNADEParams, counter: OpCounter | None = None
) -> np.ndarray:
    """Top hidden layer for the prefix: g(a), composed through deep layers."""
    if counter is not None:
        counter.hidden_evals += 1
    h = activate(act.a, params.activation)
    for d in range(params.W_deep.shape[0]):
        h = activate(params.e_deep[d] + params.W_deep[d] @ h, params.activation)
    return h


def conditional_log_prob(h: np.ndarray, params: DocNADEParams) -> np.ndarray:
    """Log p(v_i = w | v_<i) over the whole vocabulary for a hidden state."""
    return log_softmax(params.b + params.U @ h)


def doc_logps(doc, params: DocNADEParams) -> np.ndarray:
    """Per-position target log-probabilities (fused kernel path)."""
    tokens = as_token_array(doc)
    if tokens.max() >= params.vocab_size:
        raise ValueError("document contains out-of-vocabulary ids")
    return kernels.docnade_logps(tokens, *params.kernel_args())


def doc_log_likelihood(doc, params: DocNADEParams) -> float:
    """log p(v): the sum of autoregressive conditionals."""
    return float(doc_logps(doc, params).sum())


def stepwise_log_likelihood(
    doc, params: DocNADEParams, counter: OpCounter | None = None
) -> float:
    """log p(v) via the explicit accumulator recurrence.

    Performs exactly D accumulator additions and D hidden evaluations
    (witnessed by `counter`); the fused kernels compute the same
    recurrence vectorized.
    """
    tokens = as_token_array(doc)
    act = prefix_start(params)
    ll = 0.0
    for v in tokens:
        h = hidden(act, params, counter)
        ll += float(conditional_log_prob(h, params)[v])
        act = prefix_advance(act, int(v), params, counter)
    return ll


@dataclass
class DocGradients:
    """Gradients of -log p(v); log_likelihood carries the forward value."""

    log_likelihood: float
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    e: np.ndarray
    W_deep: np.ndarray
    e_deep: np.ndarray


def doc_gradients(doc, params: DocNADEParams) -> DocGradients:
    tokens = as_token_array(doc)
    ll, gW, gU, gb, ge, gWd, ged = kernels.docnade_grads(tokens, *params.kernel_args())
    return DocGradients(
        log_likelihood=float(ll), W=gW, U=gU, b=gb, e=ge, W_deep=gWd, e_deep=ged
    )


def doc_representation(doc, params: DocNADEParams) -> np.ndarray:
    """Whole-document hidden state g(e + sum_{k<=D} W[:, v_k]).

    Permutation-invariant: only the bag of words enters the sum.
    """
    tokens = as_token_array(doc)
    act = PrefixActivation(
        a=params.e + params.W[:, tokens].sum(axis=1), position=tokens.shape[0] + 1
    )
    return hidden(act, params)


@dataclass
class TrainConfig:
    hidden: int = 200
    depth: int = 1
    activation: str = "sigmoid"
    learning_rate: float = 1e-3
    epochs: int = 1000
    batch_size: int = 1
    seed: int = 1
    optimizer: str = "adam"
    patience: int = 10  # 0 disables validation-based early stopping
    vocab_size: int | None = None  # required when training from raw id lists
    precision: str = "float64"  # float32 runs on the numpy backend


@dataclass
class EpochStats:
    epoch: int
    train_nll_per_word: float
    valid_ppl: float = float("nan")
    phase: str = "train"


@dataclass
class TrainResult:
    params: object  # final parameters
    best_params: object  # lowest-validation-PPL snapshot (== params w/o validation)
    history: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1


def _training_dtype(config: TrainConfig):
    if config.precision == "float64":
        return np.float64
    if config.precision == "float32":
        # float32 arrays dispatch to the numpy kernels automatically
        return np.float32
    raise ValueError(f"unknown precision {config.precision!r}")


def _resolve_corpus(corpus, config: TrainConfig):
    if isinstance(corpus, CorpusSplit):
        train = [as_token_array(d) for d in corpus.train]
        valid = [as_token_array(d) for d in corpus.validation]
        K = corpus.vocabulary.size
    else:
        train = [as_token_array(d) for d in corpus]
        valid = []
        K = config.vocab_size
        if K is None:
            raise ValueError("config.vocab_size is required when training from raw documents")
    if not train:
        raise ValueError("training split is empty")
    return train, valid, K


def _run_epochs(
    train_tokens: list[np.ndarray],
    valid_tokens: list[np.ndarray],
    parameters: list[Parameter],
    grad_step,
    valid_logp,
    snapshot,
    config: TrainConfig,
    rng: np.random.Generator,
    history: list[EpochStats],
    epochs: int,
    phase: str,
    state: OptimizerState,
):
    """Shared epoch loop: shuffled per-document (or small-batch) updates,
    per-epoch loss, optional validation perplexity with patience.

    Returns (best_snapshot, best_ppl, best_epoch).
    """
    from .evaluation import perplexity_from_logprobs

    n = len(train_tokens)
    best_snapshot = None
    best_ppl = np.inf
    best_epoch = -1
    stale = 0
    use_valid = bool(valid_tokens)
    for epoch in range(epochs):
        order = rng.permutation(n)
        nll = 0.0
        words = 0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            for p in parameters:
                p.zero_grad()
            batch_ll = 0.0
            for idx in batch:
                batch_ll += grad_step(train_tokens[idx])
                words += train_tokens[idx].shape[0]
            if not np.isfinite(batch_ll):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, documents {list(batch)}"
                )
            if len(batch) > 1:
                for p in parameters:
                    p.grad /= len(batch)
            optimizer_step(parameters, state)
            nll -= batch_ll
        stats = EpochStats(
            epoch=len(history), train_nll_per_word=nll / words, phase=phase
        )
        if use_valid:
            logps = [valid_logp(t) for t in valid_tokens]
            lens = [t.shape[0] for t in valid_tokens]
            stats.valid_ppl = perplexity_from_logprobs(logps, lens)
            if stats.valid_ppl < best_ppl - 1e-12:
                best_ppl = stats.valid_ppl
                best_snapshot = snapshot()
                best_epoch = stats.epoch
                stale = 0
            else:
                stale += 1
        history.append(stats)
        log.debug(
            "epoch %d (%s): train nll/word %.4f valid ppl %.4f",
            stats.epoch,
            phase,
            stats.train_nll_per_word,
            stats.valid_ppl,
        )
        if use_valid and config.patience > 0 and stale >= config.patience:
            log.info("early stopping after epoch %d (patience %d)", stats.epoch, config.patience)
            break
    return best_snapshot, best_ppl, best_epoch


def train(corpus, config: TrainConfig) -> TrainResult:
    """Train from scratch; deterministic given the seed.

    One gradient step per document (or per batch of `batch_size`
    documents with averaged gradients). History records the mean
    negative log-likelihood per word each epoch; when a validation
    split is present its exact perplexity drives patience-based early
    stopping and `best_params`.
    """
    train_tokens, valid_tokens, K = _resolve_corpus(corpus, config)
    dtype = _training_dtype(config)
    params = init_params(
        K, config.hidden, seed=config.seed, activation=config.activation,
        depth=config.depth, dtype=dtype,
    )
    rng = np.random.default_rng(config.seed)
    history: list[EpochStats] = []
    if config.epochs == 0:
        return TrainResult(params=params, best_params=params, history=history)
    parameters = [
        Parameter("W", params.W),
        Parameter("U", params.U),
        Parameter("b", params.b),
        Parameter("e", params.e),
        Parameter("W_deep", params.W_deep),
        Parameter("e_deep", params.e_deep),
    ]

    def grad_step(tokens: np.ndarray) -> float:
        ll, gW, gU, gb, ge, gWd, ged = kernels.docnade_grads(tokens, *params.kernel_args())
        parameters[0].grad += gW
        parameters[1].grad += gU
        parameters[2].grad += gb
        parameters[3].grad += ge
        parameters[4].grad += gWd
        parameters[5].grad += ged
        return float(ll)

    state = OptimizerState(kind=config.optimizer, learning_rate=config.learning_rate)
    best_snapshot, _, best_epoch = _run_epochs(
        train_tokens,
        valid_tokens,
        parameters,
        grad_step,
        lambda t: doc_log_likelihood(t, params),
        params.copy,
        config,
        rng,
        history,
        config.epochs,
        "train",
        state,
    )
    best = best_snapshot if best_snapshot is not None else params
    return TrainResult(params=params, best_params=best, history=history, best_epoch=best_epoch)
