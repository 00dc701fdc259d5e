"""Pure-numpy kernel backend.

Vectorized across positions: hidden pre-activations for the whole
document come from one cumulative sum (D accumulator additions), every
layer is evaluated once per document, and the softmax runs as a single
(D, K) block. The ctx kernels share the bag-of-words helpers below, so
with a zero mixture weight they perform the exact same arithmetic as
the plain kernels and reproduce their outputs bitwise.
"""

from __future__ import annotations

import numpy as np

from . import ACT_SIGMOID


def _act(x, act_id):
    if act_id == ACT_SIGMOID:
        out = np.empty_like(x)
        pos = x >= 0
        neg = ~pos
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ez = np.exp(x[neg])
        out[neg] = ez / (1.0 + ez)
        return out
    return np.tanh(x)


def _act_deriv_from_output(y, act_id):
    if act_id == ACT_SIGMOID:
        return y * (1.0 - y)
    return 1.0 - y * y


def _bow_forward(doc, W, e, W_deep, e_deep, act_id):
    """Hidden-layer stack over document prefixes.

    Returns (n_layers, D, H); layer 0 is g(a_i) with
    a_i = e + sum_{k<i} W[:, v_k], deeper layers apply
    g(e_d + W_d h_{d-1}).
    """
    D = doc.shape[0]
    H = W.shape[0]
    cols = W[:, doc].T  # (D, H)
    A = np.empty((D, H), dtype=W.dtype)
    A[0] = e
    if D > 1:
        A[1:] = e + np.cumsum(cols[:-1], axis=0)
    n_layers = W_deep.shape[0] + 1
    layers = np.empty((n_layers, D, H), dtype=W.dtype)
    layers[0] = _act(A, act_id)
    for d in range(W_deep.shape[0]):
        layers[d + 1] = _act(e_deep[d] + layers[d] @ W_deep[d].T, act_id)
    return layers


def _target_logps(logits, doc):
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return logp


def _softmax_grad(logits, doc):
    """Softmax probabilities minus the one-hot targets: d(-ll)/d logits."""
    logp = _target_logps(logits, doc)
    dlogits = np.exp(logp)
    dlogits[np.arange(doc.shape[0]), doc] -= 1.0
    return logp, dlogits


def _bow_backward(doc, W, W_deep, e_deep, act_id, layers, d_top):
    """Backpropagate d_top (D, H) through the hidden stack.

    Returns (gW, ge, gW_deep, ge_deep) for the bag-of-words path only.
    """
    D = doc.shape[0]
    dH = d_top
    gW_deep = np.zeros_like(W_deep)
    ge_deep = np.zeros_like(e_deep)
    for d in range(W_deep.shape[0] - 1, -1, -1):
        dZ = dH * _act_deriv_from_output(layers[d + 1], act_id)
        gW_deep[d] = dZ.T @ layers[d]
        ge_deep[d] = dZ.sum(axis=0)
        dH = dZ @ W_deep[d]
    dZ1 = dH * _act_deriv_from_output(layers[0], act_id)
    ge = dZ1.sum(axis=0)
    # a_i sums W columns over k < i, so W[:, v_k] collects every dZ1 row
    # strictly after position k.
    pref = np.cumsum(dZ1, axis=0)
    suffix = pref[-1] - pref  # suffix[k] = sum_{i>k} dZ1[i]
    gW = np.zeros_like(W)
    np.add.at(gW.T, doc, suffix)
    return gW, ge, gW_deep, ge_deep


def docnade_logps(doc, W, U, b, e, W_deep, e_deep, act_id):
    """Per-position log p(v_i | v_<i) under the bag-of-words model."""
    layers = _bow_forward(doc, W, e, W_deep, e_deep, act_id)
    logits = layers[-1] @ U.T + b
    logp = _target_logps(logits, doc)
    return logp[np.arange(doc.shape[0]), doc]


def docnade_grads(doc, W, U, b, e, W_deep, e_deep, act_id):
    """Log-likelihood and exact gradients of the negative log-likelihood."""
    D = doc.shape[0]
    layers = _bow_forward(doc, W, e, W_deep, e_deep, act_id)
    logits = layers[-1] @ U.T + b
    logp, dlogits = _softmax_grad(logits, doc)
    ll = logp[np.arange(D), doc].sum()
    gb = dlogits.sum(axis=0)
    gU = dlogits.T @ layers[-1]
    d_top = dlogits @ U
    gW, ge, gW_deep, ge_deep = _bow_backward(
        doc, W, W_deep, e_deep, act_id, layers, d_top
    )
    return ll, gW, gU, gb, ge, gW_deep, ge_deep


def lstm_states(X, Wx, Wh, bias):
    """Stacked LSTM forward pass over inputs X (T, H_in).

    Returns hidden and cell states shaped (L, T, H); initial states are
    zero. Gate blocks within the 4H axis are input, forget, candidate,
    output; forward uses the standard non-peephole cell.
    """
    Hs, Cs, _ = _lstm_forward(X, Wx, Wh, bias)
    return Hs, Cs


def _lstm_forward(X, Wx, Wh, bias):
    L = Wx.shape[0]
    T = X.shape[0]
    H = Wh.shape[2]
    Hs = np.zeros((L, T, H), dtype=X.dtype)
    Cs = np.zeros((L, T, H), dtype=X.dtype)
    gates = np.zeros((L, T, 4 * H), dtype=X.dtype)
    for l in range(L):
        inp = X if l == 0 else Hs[l - 1]
        z_in = inp @ Wx[l].T + bias[l]  # input contributions for all steps
        h_prev = np.zeros(H, dtype=X.dtype)
        c_prev = np.zeros(H, dtype=X.dtype)
        for t in range(T):
            z = z_in[t] + Wh[l] @ h_prev
            i = _act(z[:H], ACT_SIGMOID)
            f = _act(z[H : 2 * H], ACT_SIGMOID)
            g = np.tanh(z[2 * H : 3 * H])
            o = _act(z[3 * H :], ACT_SIGMOID)
            c = f * c_prev + i * g
            h = o * np.tanh(c)
            gates[l, t, :H] = i
            gates[l, t, H : 2 * H] = f
            gates[l, t, 2 * H : 3 * H] = g
            gates[l, t, 3 * H :] = o
            Cs[l, t] = c
            Hs[l, t] = h
            h_prev, c_prev = h, c
    return Hs, Cs, gates


def _lstm_backward(X, Wx, Wh, bias, Hs, Cs, gates, d_top):
    """BPTT for the stacked cell; d_top is (T, H) on the top layer's h.

    Only the recurrent matvec stays inside the time loop; the weight
    gradients collapse to one matrix product per layer over the stored
    per-step gate errors.
    """
    L = Wx.shape[0]
    T = X.shape[0]
    H = Wh.shape[2]
    gWx = np.zeros_like(Wx)
    gWh = np.zeros_like(Wh)
    gbias = np.zeros_like(bias)
    d_ext = d_top
    for l in range(L - 1, -1, -1):
        inp = X if l == 0 else Hs[l - 1]
        WhT = Wh[l].T
        dZ = np.empty((T, 4 * H), dtype=X.dtype)
        dh_carry = np.zeros(H, dtype=X.dtype)
        dc_carry = np.zeros(H, dtype=X.dtype)
        for t in range(T - 1, -1, -1):
            i = gates[l, t, :H]
            f = gates[l, t, H : 2 * H]
            g = gates[l, t, 2 * H : 3 * H]
            o = gates[l, t, 3 * H :]
            tc = np.tanh(Cs[l, t])
            c_prev = Cs[l, t - 1] if t > 0 else np.zeros(H, dtype=X.dtype)
            dh = d_ext[t] + dh_carry
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_carry
            dc_carry = dc * f
            dZ[t, :H] = dc * g * i * (1.0 - i)
            dZ[t, H : 2 * H] = dc * c_prev * f * (1.0 - f)
            dZ[t, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
            dZ[t, 3 * H :] = do * o * (1.0 - o)
            dh_carry = WhT @ dZ[t]
        gWx[l] += dZ.T @ inp
        h_shift = np.zeros((T, H), dtype=X.dtype)
        h_shift[1:] = Hs[l, : T - 1]
        gWh[l] += dZ.T @ h_shift
        gbias[l] += dZ.sum(axis=0)
        d_ext = dZ @ Wx[l]
    return gWx, gWh, gbias, d_ext  # d_ext is now dX for the layer-0 inputs


def _lm_inputs(doc, W, w_bos, E_rows, use_prior, include_last):
    """Embedding inputs for the language model: BOS then word vectors.

    The state predicting v_i has consumed [BOS, v_1 .. v_{i-1}]; with
    include_last the whole document is consumed (one extra step).
    """
    D = doc.shape[0]
    T = D + 1 if include_last else D
    X = np.empty((T, W.shape[0]), dtype=W.dtype)
    X[0] = w_bos
    words = doc if include_last else doc[: D - 1]
    if words.shape[0]:
        X[1:] = W[:, words].T
        if use_prior:
            X[1:] += E_rows[words]
    return X


def ctx_logps(doc, W, U, b, e, W_deep, e_deep, act_id, lam, Wx, Wh, bias, w_bos, E_rows, use_prior):
    """Per-position log-probs with the mixed hidden state h_dn + lam * h_lm."""
    layers = _bow_forward(doc, W, e, W_deep, e_deep, act_id)
    X = _lm_inputs(doc, W, w_bos, E_rows, use_prior, include_last=False)
    Hs, _, _ = _lstm_forward(X, Wx, Wh, bias)
    combined = layers[-1] + lam * Hs[-1]
    logits = combined @ U.T + b
    logp = _target_logps(logits, doc)
    return logp[np.arange(doc.shape[0]), doc]


def ctx_grads(doc, W, U, b, e, W_deep, e_deep, act_id, lam, Wx, Wh, bias, w_bos, E_rows, use_prior):
    """Joint gradients: softmax errors flow into both hidden paths, and W
    accumulates from its bag-of-words occurrences and its embedding
    lookups; the static prior rows receive no gradient."""
    D = doc.shape[0]
    layers = _bow_forward(doc, W, e, W_deep, e_deep, act_id)
    X = _lm_inputs(doc, W, w_bos, E_rows, use_prior, include_last=False)
    Hs, Cs, gates = _lstm_forward(X, Wx, Wh, bias)
    combined = layers[-1] + lam * Hs[-1]
    logits = combined @ U.T + b
    logp, dlogits = _softmax_grad(logits, doc)
    ll = logp[np.arange(D), doc].sum()
    gb = dlogits.sum(axis=0)
    gU = dlogits.T @ combined
    d_comb = dlogits @ U
    gW, ge, gW_deep, ge_deep = _bow_backward(
        doc, W, W_deep, e_deep, act_id, layers, d_comb
    )
    gWx, gWh, gbias, dX = _lstm_backward(
        X, Wx, Wh, bias, Hs, Cs, gates, lam * d_comb
    )
    gw_bos = dX[0].copy()
    if D > 1:
        np.add.at(gW.T, doc[: D - 1], dX[1:])
    return ll, gW, gU, gb, ge, gW_deep, ge_deep, gWx, gWh, gbias, gw_bos
