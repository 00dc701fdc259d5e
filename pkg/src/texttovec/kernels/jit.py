"""Numba-jitted kernel backend.

Same contracts as :mod:`texttovec.kernels.reference`. Large matrix
products go through ``np.dot`` (BLAS) on contiguous buffers; the
sequential parts (accumulator recurrence, gate nonlinearities, suffix
sums, scatter-adds, row softmax) are explicit jitted loops. The plain
and ctx kernels share the helpers below, so a zero mixture weight
reproduces the plain kernel arithmetic exactly. All kernels are cached
to disk to amortize compilation across processes.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@njit(cache=True)
def _act_scalar(x, act_id):
    if act_id == 0:
        return _sigmoid(x)
    return math.tanh(x)


@njit(cache=True)
def _act_deriv_from_output(y, act_id):
    if act_id == 0:
        return y * (1.0 - y)
    return 1.0 - y * y


@njit(cache=True)
def _bow_forward(doc, W, e, W_deep, e_deep, act_id):
    D = doc.shape[0]
    H = W.shape[0]
    nd = W_deep.shape[0]
    layers = np.empty((nd + 1, D, H), dtype=np.float64)
    acc = e.copy()
    for t in range(D):
        for j in range(H):
            layers[0, t, j] = _act_scalar(acc[j], act_id)
        v = doc[t]
        for j in range(H):
            acc[j] += W[j, v]
    for d in range(nd):
        z = np.dot(layers[d], np.ascontiguousarray(W_deep[d].T))
        for t in range(D):
            for a in range(H):
                layers[d + 1, t, a] = _act_scalar(z[t, a] + e_deep[d, a], act_id)
    return layers


@njit(cache=True)
def _row_log_softmax(logits, doc):
    """Per-row target log-probs and softmax-minus-onehot (one exp pass,
    exponentials scaled by the row total)."""
    D = logits.shape[0]
    K = logits.shape[1]
    logps = np.empty(D, dtype=np.float64)
    dlogits = np.empty((D, K), dtype=np.float64)
    for t in range(D):
        mx = logits[t, 0]
        for w in range(1, K):
            if logits[t, w] > mx:
                mx = logits[t, w]
        tot = 0.0
        for w in range(K):
            term = math.exp(logits[t, w] - mx)
            dlogits[t, w] = term
            tot += term
        logps[t] = logits[t, doc[t]] - mx - math.log(tot)
        inv = 1.0 / tot
        for w in range(K):
            dlogits[t, w] *= inv
        dlogits[t, doc[t]] -= 1.0
    return logps, dlogits


@njit(cache=True)
def _target_logps(hid, U, b, doc):
    logits = np.dot(hid, np.ascontiguousarray(U.T))
    D = hid.shape[0]
    K = b.shape[0]
    logps = np.empty(D, dtype=np.float64)
    for t in range(D):
        mx = logits[t, 0] + b[0]
        for w in range(K):
            logits[t, w] += b[w]
            if logits[t, w] > mx:
                mx = logits[t, w]
        tot = 0.0
        for w in range(K):
            tot += math.exp(logits[t, w] - mx)
        logps[t] = logits[t, doc[t]] - mx - math.log(tot)
    return logps


@njit(cache=True)
def _bow_backward(doc, W, W_deep, e_deep, act_id, layers, d_top):
    D = doc.shape[0]
    H = W.shape[0]
    nd = W_deep.shape[0]
    gW = np.zeros_like(W)
    gW_deep = np.zeros_like(W_deep)
    ge_deep = np.zeros_like(e_deep)
    dH = d_top
    dZ = np.empty((D, H), dtype=np.float64)
    for d in range(nd - 1, -1, -1):
        for t in range(D):
            for a in range(H):
                dZ[t, a] = dH[t, a] * _act_deriv_from_output(layers[d + 1, t, a], act_id)
                ge_deep[d, a] += dZ[t, a]
        gW_deep[d] += np.dot(np.ascontiguousarray(dZ.T), layers[d])
        dH = np.dot(dZ, W_deep[d])
    dZ1 = np.empty((D, H), dtype=np.float64)
    ge = np.zeros(H, dtype=np.float64)
    for t in range(D):
        for j in range(H):
            dZ1[t, j] = dH[t, j] * _act_deriv_from_output(layers[0, t, j], act_id)
            ge[j] += dZ1[t, j]
    # W[:, v_k] enters every pre-activation strictly after position k.
    suffix = np.zeros(H, dtype=np.float64)
    for k in range(D - 1, -1, -1):
        if k + 1 < D:
            for j in range(H):
                suffix[j] += dZ1[k + 1, j]
        v = doc[k]
        for j in range(H):
            gW[j, v] += suffix[j]
    return gW, ge, gW_deep, ge_deep


@njit(cache=True)
def _softmax_backward(hid, U, b, doc):
    """Returns (ll, gb, gU, d_hid) for logits = hid @ U.T + b."""
    logits = np.dot(hid, np.ascontiguousarray(U.T))
    D = hid.shape[0]
    K = b.shape[0]
    for t in range(D):
        for w in range(K):
            logits[t, w] += b[w]
    logps, dlogits = _row_log_softmax(logits, doc)
    ll = 0.0
    for t in range(D):
        ll += logps[t]
    gb = np.zeros(K, dtype=np.float64)
    for t in range(D):
        for w in range(K):
            gb[w] += dlogits[t, w]
    gU = np.dot(np.ascontiguousarray(dlogits.T), hid)
    d_hid = np.dot(dlogits, U)
    return ll, gb, gU, d_hid


@njit(cache=True)
def docnade_logps(doc, W, U, b, e, W_deep, e_deep, act_id):
    layers = _bow_forward(doc, W, e, W_deep, e_deep, act_id)
    return _target_logps(layers[-1], U, b, doc)


@njit(cache=True)
def docnade_grads(doc, W, U, b, e, W_deep, e_deep, act_id):
    layers = _bow_forward(doc, W, e, W_deep, e_deep, act_id)
    ll, gb, gU, d_top = _softmax_backward(layers[-1], U, b, doc)
    gW, ge, gW_deep, ge_deep = _bow_backward(
        doc, W, W_deep, e_deep, act_id, layers, d_top
    )
    return ll, gW, gU, gb, ge, gW_deep, ge_deep


@njit(cache=True)
def _lm_inputs(doc, W, w_bos, E_rows, use_prior, include_last):
    D = doc.shape[0]
    H = W.shape[0]
    T = D + 1 if include_last else D
    X = np.empty((T, H), dtype=np.float64)
    for j in range(H):
        X[0, j] = w_bos[j]
    for t in range(1, T):
        v = doc[t - 1]
        for j in range(H):
            X[t, j] = W[j, v]
        if use_prior != 0:
            for j in range(H):
                X[t, j] += E_rows[v, j]
    return X


@njit(cache=True)
def _lstm_forward(X, Wx, Wh, bias):
    L = Wx.shape[0]
    T = X.shape[0]
    H = Wh.shape[2]
    Hs = np.zeros((L, T, H), dtype=np.float64)
    Cs = np.zeros((L, T, H), dtype=np.float64)
    gates = np.zeros((L, T, 4 * H), dtype=np.float64)
    for l in range(L):
        inp = X if l == 0 else Hs[l - 1]
        z_in = np.dot(inp, np.ascontiguousarray(Wx[l].T))  # (T, 4H)
        h_prev = np.zeros(H, dtype=np.float64)
        for t in range(T):
            z = np.dot(Wh[l], h_prev)
            for j in range(H):
                ig = _sigmoid(z[j] + z_in[t, j] + bias[l, j])
                fg = _sigmoid(z[H + j] + z_in[t, H + j] + bias[l, H + j])
                gg = math.tanh(z[2 * H + j] + z_in[t, 2 * H + j] + bias[l, 2 * H + j])
                og = _sigmoid(z[3 * H + j] + z_in[t, 3 * H + j] + bias[l, 3 * H + j])
                c_prev = Cs[l, t - 1, j] if t > 0 else 0.0
                c = fg * c_prev + ig * gg
                gates[l, t, j] = ig
                gates[l, t, H + j] = fg
                gates[l, t, 2 * H + j] = gg
                gates[l, t, 3 * H + j] = og
                Cs[l, t, j] = c
                Hs[l, t, j] = og * math.tanh(c)
            h_prev = Hs[l, t]
    return Hs, Cs, gates


@njit(cache=True)
def _lstm_backward(X, Wx, Wh, bias, Hs, Cs, gates, d_top):
    L = Wx.shape[0]
    T = X.shape[0]
    H = Wh.shape[2]
    gWx = np.zeros_like(Wx)
    gWh = np.zeros_like(Wh)
    gbias = np.zeros_like(bias)
    d_ext = d_top
    dZbuf = np.empty((T, 4 * H), dtype=np.float64)
    for l in range(L - 1, -1, -1):
        inp = X if l == 0 else Hs[l - 1]
        WhT = np.ascontiguousarray(Wh[l].T)
        dh_carry = np.zeros(H, dtype=np.float64)
        dc_carry = np.zeros(H, dtype=np.float64)
        for t in range(T - 1, -1, -1):
            for j in range(H):
                ig = gates[l, t, j]
                fg = gates[l, t, H + j]
                gg = gates[l, t, 2 * H + j]
                og = gates[l, t, 3 * H + j]
                tc = math.tanh(Cs[l, t, j])
                c_prev = Cs[l, t - 1, j] if t > 0 else 0.0
                dh = d_ext[t, j] + dh_carry[j]
                do = dh * tc
                dc = dh * og * (1.0 - tc * tc) + dc_carry[j]
                dZbuf[t, j] = dc * gg * ig * (1.0 - ig)
                dZbuf[t, H + j] = dc * c_prev * fg * (1.0 - fg)
                dZbuf[t, 2 * H + j] = dc * ig * (1.0 - gg * gg)
                dZbuf[t, 3 * H + j] = do * og * (1.0 - og)
                dc_carry[j] = dc * fg
            dh_carry = np.dot(WhT, dZbuf[t])
        gWx[l] += np.dot(np.ascontiguousarray(dZbuf.T), inp)
        h_shift = np.zeros((T, H), dtype=np.float64)
        for t in range(1, T):
            for j in range(H):
                h_shift[t, j] = Hs[l, t - 1, j]
        gWh[l] += np.dot(np.ascontiguousarray(dZbuf.T), h_shift)
        for t in range(T):
            for a in range(4 * H):
                gbias[l, a] += dZbuf[t, a]
        d_ext = np.dot(dZbuf, Wx[l])
    return gWx, gWh, gbias, d_ext  # d_ext is dX for the layer-0 inputs


@njit(cache=True)
def lstm_states(X, Wx, Wh, bias):
    Hs, Cs, _ = _lstm_forward(X, Wx, Wh, bias)
    return Hs, Cs


@njit(cache=True)
def _combined_hidden(h_dn, h_lm, lam):
    D = h_dn.shape[0]
    H = h_dn.shape[1]
    out = np.empty((D, H), dtype=np.float64)
    for t in range(D):
        for j in range(H):
            out[t, j] = h_dn[t, j] + lam * h_lm[t, j]
    return out


@njit(cache=True)
def ctx_logps(doc, W, U, b, e, W_deep, e_deep, act_id, lam, Wx, Wh, bias, w_bos, E_rows, use_prior):
    layers = _bow_forward(doc, W, e, W_deep, e_deep, act_id)
    X = _lm_inputs(doc, W, w_bos, E_rows, use_prior, False)
    Hs, _, _ = _lstm_forward(X, Wx, Wh, bias)
    combined = _combined_hidden(layers[-1], Hs[-1], lam)
    return _target_logps(combined, U, b, doc)


@njit(cache=True)
def ctx_grads(doc, W, U, b, e, W_deep, e_deep, act_id, lam, Wx, Wh, bias, w_bos, E_rows, use_prior):
    D = doc.shape[0]
    H = W.shape[0]
    layers = _bow_forward(doc, W, e, W_deep, e_deep, act_id)
    X = _lm_inputs(doc, W, w_bos, E_rows, use_prior, False)
    Hs, Cs, gates = _lstm_forward(X, Wx, Wh, bias)
    combined = _combined_hidden(layers[-1], Hs[-1], lam)
    ll, gb, gU, d_comb = _softmax_backward(combined, U, b, doc)
    gW, ge, gW_deep, ge_deep = _bow_backward(
        doc, W, W_deep, e_deep, act_id, layers, d_comb
    )
    d_lm = np.empty((D, H), dtype=np.float64)
    for t in range(D):
        for j in range(H):
            d_lm[t, j] = lam * d_comb[t, j]
    gWx, gWh, gbias, dX = _lstm_backward(X, Wx, Wh, bias, Hs, Cs, gates, d_lm)
    gw_bos = dX[0].copy()
    for t in range(1, D):
        v = doc[t - 1]
        for j in range(H):
            gW[j, v] += dX[t, j]
    return ll, gW, gU, gb, ge, gW_deep, ge_deep, gWx, gWh, gbias, gw_bos
