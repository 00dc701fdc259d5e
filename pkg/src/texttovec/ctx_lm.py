"""LSTM language-model component and its mixture with the topic model.

At every autoregressive position the topic-model hidden state is blended
with the state of an LSTM run over the actually ordered prefix:

    h_i = h_i^DN + lam * h_i^LM,   h_i^LM = LSTM([BOS, v_1 .. v_{i-1}])

The LSTM reads its word inputs from the shared representation matrix W
(columns), optionally offset by a frozen pre-trained embedding row; the
mixture weight lam is a fixed hyperparameter. The whole-text vector
(``text_to_vec``) blends the full-document hidden state with the LSTM
state after consuming the entire text.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import docnade, kernels
from .corpus import EmbeddingTable
from .docnade import (
    DocNADEParams,
    TrainConfig,
    TrainResult,
    as_token_array,
)
from .numerics import OptimizerState, Parameter, activate

log = logging.getLogger(__name__)

BOS = -1  # begin-of-document pseudo-token consumed before the first word

EMBEDDING_MODES = ("shared_w", "shared_w_plus_e")


@dataclass
class LSTMParams:
    """Stacked non-peephole LSTM; gate blocks ordered i, f, g, o.

    Layer inputs and hidden states all have width H (layer 1 consumes
    the shared word representations, which are H-dimensional). The
    forget-gate bias starts at 1.0; w_bos is the learned input consumed
    at the start of every document.
    """

    Wx: np.ndarray  # (L, 4H, H) input weights
    Wh: np.ndarray  # (L, 4H, H) recurrent weights
    bias: np.ndarray  # (L, 4H)
    w_bos: np.ndarray  # (H,)

    @property
    def depth(self) -> int:
        return self.Wx.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.Wh.shape[2]

    def copy(self) -> "LSTMParams":
        return LSTMParams(self.Wx.copy(), self.Wh.copy(), self.bias.copy(), self.w_bos.copy())


@dataclass(frozen=True)
class MixtureConfig:
    lam: float
    embedding_mode: str = "shared_w"

    def __post_init__(self) -> None:
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError("mixture weight lam must be finite and >= 0")
        if self.embedding_mode not in EMBEDDING_MODES:
            raise ValueError(f"embedding_mode must be one of {EMBEDDING_MODES}")


@dataclass
class LMState:
    """Per-layer hidden and cell vectors; zero at document start."""

    h: np.ndarray  # (L, H)
    c: np.ndarray  # (L, H)

    @classmethod
    def initial(cls, depth: int, hidden: int) -> "LMState":
        return cls(h=np.zeros((depth, hidden)), c=np.zeros((depth, hidden)))


@dataclass
class CtxModelParams:
    """Topic-model parameters plus the LSTM and mixture settings.

    The embedding table, when present, is a static prior: lookups add
    its rows to W's columns but no gradient ever reaches it.
    """

    dn: DocNADEParams
    lm: LSTMParams
    mix: MixtureConfig
    embeddings: EmbeddingTable | None = None

    def __post_init__(self) -> None:
        if self.lm.hidden_size != self.dn.hidden_size:
            raise ValueError("LSTM width must equal the topic-model hidden size")
        if self.mix.embedding_mode == "shared_w_plus_e":
            if self.embeddings is None:
                raise ValueError("shared_w_plus_e requires an embedding table")
            if self.embeddings.dimension != self.dn.hidden_size:
                raise ValueError("embedding dimension must equal the hidden size")
            if self.embeddings.vectors.shape[0] != self.dn.vocab_size:
                raise ValueError("embedding rows must match the vocabulary size")

    @property
    def hidden_size(self) -> int:
        return self.dn.hidden_size

    @property
    def vocab_size(self) -> int:
        return self.dn.vocab_size

    def copy(self) -> "CtxModelParams":
        return CtxModelParams(
            dn=self.dn.copy(), lm=self.lm.copy(), mix=self.mix, embeddings=self.embeddings
        )

    def _prior_rows(self) -> tuple[np.ndarray, int]:
        if self.mix.embedding_mode == "shared_w_plus_e":
            return self.embeddings.vectors, 1
        return np.zeros((self.dn.vocab_size, self.dn.hidden_size)), 0

    def kernel_args(self, lam: float | None = None) -> tuple:
        E_rows, use_prior = self._prior_rows()
        return (
            *self.dn.kernel_args(),
            self.mix.lam if lam is None else lam,
            self.lm.Wx,
            self.lm.Wh,
            self.lm.bias,
            self.lm.w_bos,
            E_rows,
            use_prior,
        )


def init_lstm_params(
    hidden: int, depth: int, rng: np.random.Generator, dtype=np.float64
) -> LSTMParams:
    bound = np.sqrt(6.0 / (2.0 * hidden))
    Wx = rng.uniform(-bound, bound, size=(depth, 4 * hidden, hidden))
    Wh = rng.uniform(-bound, bound, size=(depth, 4 * hidden, hidden))
    bias = np.zeros((depth, 4 * hidden), dtype=dtype)
    bias[:, hidden : 2 * hidden] = 1.0
    w_bos = rng.uniform(-bound, bound, size=hidden)
    return LSTMParams(
        Wx=Wx.astype(dtype), Wh=Wh.astype(dtype), bias=bias, w_bos=w_bos.astype(dtype)
    )


def init_ctx_params(
    vocab_size: int,
    hidden: int,
    seed: int = 1,
    activation: str = "sigmoid",
    depth: int = 1,
    lam: float = 0.5,
    embedding_mode: str = "shared_w",
    embeddings: EmbeddingTable | None = None,
    dtype=np.float64,
) -> CtxModelParams:
    """Seeded initialization of both components from a single generator."""
    rng = np.random.default_rng(seed)
    dn = docnade.init_params(
        vocab_size, hidden, activation=activation, depth=depth, rng=rng, dtype=dtype
    )
    lm = init_lstm_params(hidden, depth, rng, dtype=dtype)
    return CtxModelParams(
        dn=dn, lm=lm, mix=MixtureConfig(lam=lam, embedding_mode=embedding_mode), embeddings=embeddings
    )


def lm_input_vector(v: int, model: CtxModelParams) -> np.ndarray:
    """The LSTM input for word id v (or BOS): a live view of W's column,
    plus the frozen prior row when enabled."""
    if v == BOS:
        return model.lm.w_bos.copy()
    if not 0 <= v < model.vocab_size:
        raise ValueError(f"word id {v} out of range for vocabulary size {model.vocab_size}")
    x = model.dn.W[:, v].copy()
    if model.mix.embedding_mode == "shared_w_plus_e":
        x += model.embeddings.vectors[v]
    return x


def lstm_step(state: LMState, x: np.ndarray, lm: LSTMParams) -> LMState:
    """One stacked-cell step: c' = f*c + i*g, h' = o*tanh(c')."""
    H = lm.hidden_size
    new_h = np.empty_like(state.h)
    new_c = np.empty_like(state.c)
    inp = x
    for l in range(lm.depth):
        z = lm.Wx[l] @ inp + lm.Wh[l] @ state.h[l] + lm.bias[l]
        i = activate(z[:H], "sigmoid")
        f = activate(z[H : 2 * H], "sigmoid")
        g = np.tanh(z[2 * H : 3 * H])
        o = activate(z[3 * H :], "sigmoid")
        new_c[l] = f * state.c[l] + i * g
        new_h[l] = o * np.tanh(new_c[l])
        inp = new_h[l]
    return LMState(h=new_h, c=new_c)


def lm_hidden_sequence(doc, model: CtxModelParams) -> np.ndarray:
    """Top-layer LSTM outputs [h_1^LM .. h_D^LM].

    h_i^LM is the state after consuming [BOS, v_1 .. v_{i-1}]: the state
    that predicts v_1 has seen only the begin marker.
    """
    tokens = as_token_array(doc)
    state = LMState.initial(model.lm.depth, model.hidden_size)
    out = np.empty((tokens.shape[0], model.hidden_size))
    state = lstm_step(state, lm_input_vector(BOS, model), model.lm)
    out[0] = state.h[-1]
    for i in range(1, tokens.shape[0]):
        state = lstm_step(state, lm_input_vector(int(tokens[i - 1]), model), model.lm)
        out[i] = state.h[-1]
    return out


def combined_hidden(h_dn: np.ndarray, h_lm: np.ndarray, lam: float) -> np.ndarray:
    if h_dn.shape != h_lm.shape:
        raise ValueError("hidden vectors must have equal dimensions")
    return h_dn + lam * h_lm


def ctx_doc_logps(doc, model: CtxModelParams, lam: float | None = None) -> np.ndarray:
    tokens = as_token_array(doc)
    if tokens.max() >= model.vocab_size:
        raise ValueError("document contains out-of-vocabulary ids")
    return kernels.ctx_logps(tokens, *model.kernel_args(lam))


def ctx_doc_log_likelihood(doc, model: CtxModelParams, lam: float | None = None) -> float:
    """log p(v) with the mixed hidden state at every position."""
    return float(ctx_doc_logps(doc, model, lam).sum())


@dataclass
class CtxGradients:
    """Gradients of -log p(v) for every trainable tensor (prior excluded)."""

    log_likelihood: float
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    e: np.ndarray
    W_deep: np.ndarray
    e_deep: np.ndarray
    Wx: np.ndarray
    Wh: np.ndarray
    bias: np.ndarray
    w_bos: np.ndarray


def ctx_doc_gradients(doc, model: CtxModelParams, lam: float | None = None) -> CtxGradients:
    """Exact joint gradients, including truncation-free backpropagation
    through time and both of W's roles (bag-of-words sums and LM
    embedding lookups)."""
    tokens = as_token_array(doc)
    out = kernels.ctx_grads(tokens, *model.kernel_args(lam))
    ll, gW, gU, gb, ge, gWd, ged, gWx, gWh, gbias, gw_bos = out
    return CtxGradients(
        log_likelihood=float(ll),
        W=gW,
        U=gU,
        b=gb,
        e=ge,
        W_deep=gWd,
        e_deep=ged,
        Wx=gWx,
        Wh=gWh,
        bias=gbias,
        w_bos=gw_bos,
    )


def text_to_vec(doc, model: CtxModelParams) -> np.ndarray:
    """Contextualized document vector h^DN(v*) + lam * h^LM over the full text."""
    tokens = as_token_array(doc)
    h_dn = docnade.doc_representation(tokens, model.dn)
    E_rows, use_prior = model._prior_rows()
    backend = kernels.backend_for(model.dn.W)
    X = backend._lm_inputs(tokens, model.dn.W, model.lm.w_bos, E_rows, use_prior, True)
    Hs, _ = kernels.lstm_states(X, model.lm.Wx, model.lm.Wh, model.lm.bias)
    return combined_hidden(h_dn, Hs[-1, -1], model.mix.lam)


@dataclass
class CtxTrainConfig(TrainConfig):
    lam: float = 0.5
    pretrain_epochs: int = 10
    embedding_mode: str = "shared_w"


def _ctx_parameters(model: CtxModelParams) -> list[Parameter]:
    return [
        Parameter("W", model.dn.W),
        Parameter("U", model.dn.U),
        Parameter("b", model.dn.b),
        Parameter("e", model.dn.e),
        Parameter("W_deep", model.dn.W_deep),
        Parameter("e_deep", model.dn.e_deep),
        Parameter("lstm_Wx", model.lm.Wx),
        Parameter("lstm_Wh", model.lm.Wh),
        Parameter("lstm_bias", model.lm.bias),
        Parameter("w_bos", model.lm.w_bos),
    ]


def pretrain_then_train(
    corpus,
    config: CtxTrainConfig,
    embeddings: EmbeddingTable | None = None,
) -> TrainResult:
    """Two-phase optimization: a warm-up with the mixture weight forced
    to zero (which leaves the LSTM untouched since its gradients vanish),
    then joint training at the configured weight.

    Validation perplexity, when available, is exact (mixture ignored)
    and drives early stopping during the joint phase only.
    """
    train_tokens, valid_tokens, K = docnade._resolve_corpus(corpus, config)
    model = init_ctx_params(
        K,
        config.hidden,
        seed=config.seed,
        activation=config.activation,
        depth=config.depth,
        lam=config.lam,
        embedding_mode=config.embedding_mode,
        embeddings=embeddings,
        dtype=docnade._training_dtype(config),
    )
    rng = np.random.default_rng(config.seed)
    history = []
    parameters = _ctx_parameters(model)
    state = OptimizerState(kind=config.optimizer, learning_rate=config.learning_rate)

    def make_grad_step(lam: float):
        def grad_step(tokens: np.ndarray) -> float:
            out = kernels.ctx_grads(tokens, *model.kernel_args(lam))
            ll = out[0]
            for p, g in zip(parameters, out[1:]):
                p.grad += g
            return float(ll)

        return grad_step

    def valid_logp(tokens: np.ndarray) -> float:
        return docnade.doc_log_likelihood(tokens, model.dn)

    if config.pretrain_epochs > 0:
        docnade._run_epochs(
            train_tokens,
            [],
            parameters,
            make_grad_step(0.0),
            valid_logp,
            model.copy,
            config,
            rng,
            history,
            config.pretrain_epochs,
            "pretrain",
            state,
        )
    best_snapshot, _, best_epoch = (None, np.inf, -1)
    if config.epochs > 0:
        best_snapshot, _, best_epoch = docnade._run_epochs(
            train_tokens,
            valid_tokens,
            parameters,
            make_grad_step(config.lam),
            valid_logp,
            model.copy,
            config,
            rng,
            history,
            config.epochs,
            "joint",
            state,
        )
    best = best_snapshot if best_snapshot is not None else model
    return TrainResult(params=model, best_params=best, history=history, best_epoch=best_epoch)
