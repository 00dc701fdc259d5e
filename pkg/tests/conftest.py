"""Shared fixtures and independent oracles.

The oracles here recompute model quantities from scratch (fresh
per-position sums, direct softmax without max subtraction, a separately
written LSTM cell) so that agreement with the package is meaningful.
"""

import numpy as np
import pytest

from texttovec import kernels


def pytest_addoption(parser):
    parser.addoption(
        "--backend",
        default=None,
        choices=["numpy", "numba"],
        help="force a kernel backend for the whole run",
    )


@pytest.fixture(scope="session", autouse=True)
def _configure_backend(request):
    forced = request.config.getoption("--backend")
    if forced:
        kernels.use_backend(forced)
    else:
        kernels.active()
    return kernels.backend_name()


def rel_err(a, b):
    """Per-coordinate |a-b| / max(1, |a|, |b|), reduced to the maximum."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))))


def act_np(x, kind):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64))) if kind == "sigmoid" else np.tanh(x)


def naive_hidden_stack(prefix_ids, params):
    """Fresh bottom-up hidden computation for one prefix (no incremental reuse)."""
    a = params.e.copy()
    for v in prefix_ids:
        a = a + params.W[:, v]
    h = act_np(a, params.activation)
    for d in range(params.W_deep.shape[0]):
        h = act_np(params.e_deep[d] + params.W_deep[d] @ h, params.activation)
    return h


def naive_softmax_logp(h, params, target):
    logits = params.b + params.U @ h
    p = np.exp(logits) / np.exp(logits).sum()
    return float(np.log(p[target]))


def naive_docnade_logp(tokens, params):
    """Position-by-position recomputation of log p(v)."""
    total = 0.0
    for i, v in enumerate(tokens):
        h = naive_hidden_stack(tokens[:i], params)
        total += naive_softmax_logp(h, params, v)
    return total


def oracle_lstm_cell(x, h_prev, c_prev, Wx, Wh, bias):
    """Independently written single-layer LSTM cell (gate order i,f,g,o)."""
    H = h_prev.shape[0]
    z = Wx @ x + Wh @ h_prev + bias
    i = 1.0 / (1.0 + np.exp(-z[:H]))
    f = 1.0 / (1.0 + np.exp(-z[H : 2 * H]))
    g = np.tanh(z[2 * H : 3 * H])
    o = 1.0 / (1.0 + np.exp(-z[3 * H :]))
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def oracle_lstm_run(inputs, Wx, Wh, bias):
    """Top-layer hidden states of the stacked oracle cell over `inputs`."""
    L = Wx.shape[0]
    H = Wh.shape[2]
    layer_in = list(inputs)
    for l in range(L):
        h = np.zeros(H)
        c = np.zeros(H)
        outs = []
        for x in layer_in:
            h, c = oracle_lstm_cell(x, h, c, Wx[l], Wh[l], bias[l])
            outs.append(h)
        layer_in = outs
    return np.array(layer_in)


def naive_ctx_logp(tokens, model, lam=None, W_acc=None, W_emb=None):
    """Position-by-position ctx log-likelihood.

    W_acc/W_emb let the two roles of the shared matrix be detached for
    the gradient-decomposition oracle; by default both are model.dn.W.
    """
    dn = model.dn
    W_acc = dn.W if W_acc is None else W_acc
    W_emb = dn.W if W_emb is None else W_emb
    lam = model.mix.lam if lam is None else lam
    D = len(tokens)
    inputs = [model.lm.w_bos.copy()]
    for v in tokens[: D - 1]:
        x = W_emb[:, v].copy()
        if model.mix.embedding_mode == "shared_w_plus_e":
            x += model.embeddings.vectors[v]
        inputs.append(x)
    h_lm = oracle_lstm_run(inputs, model.lm.Wx, model.lm.Wh, model.lm.bias)
    total = 0.0
    for i, v in enumerate(tokens):
        a = dn.e.copy()
        for k in range(i):
            a = a + W_acc[:, tokens[k]]
        h = act_np(a, dn.activation)
        for d in range(dn.W_deep.shape[0]):
            h = act_np(dn.e_deep[d] + dn.W_deep[d] @ h, dn.activation)
        h_c = h + lam * h_lm[i]
        total += naive_softmax_logp(h_c, dn, v)
    return total


def random_docs(rng, count, vocab_size, min_len=1, max_len=10):
    return [
        rng.integers(0, vocab_size, size=rng.integers(min_len, max_len + 1)).astype(np.int64)
        for _ in range(count)
    ]


def two_topic_corpus(seed, vocab_size=30, n_train=200, n_heldout=50, min_len=8, max_len=20):
    """Synthetic labeled corpus: two disjoint word clusters.

    Topic 0 draws from ids [0, K/2), topic 1 from [K/2, K) with a mild
    within-topic frequency slope; labels alternate deterministically.
    """
    from texttovec.corpus import Document

    rng = np.random.default_rng(seed)
    half = vocab_size // 2
    weights = np.linspace(3.0, 1.0, half)
    weights /= weights.sum()

    def draw(topic, n):
        base = 0 if topic == 0 else half
        length = rng.integers(min_len, max_len + 1)
        ids = rng.choice(np.arange(base, base + half), size=length, p=weights)
        return Document(tokens=ids.astype(np.int64), labels=frozenset([topic]))

    train = [draw(i % 2, i) for i in range(n_train)]
    heldout = [draw(i % 2, i) for i in range(n_heldout)]
    return train, heldout
