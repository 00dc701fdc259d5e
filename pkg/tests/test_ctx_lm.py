"""Language-model mixture contracts: LSTM cell behavior, the mixed
hidden state, exact reduction at zero mixture weight, joint gradients,
pretraining, and the whole-text vector."""

import numpy as np
import pytest

from conftest import (
    naive_ctx_logp,
    oracle_lstm_cell,
    random_docs,
    rel_err,
    two_topic_corpus,
)
from texttovec import docnade
from texttovec.corpus import EmbeddingTable
from texttovec.ctx_lm import (
    BOS,
    CtxTrainConfig,
    LMState,
    MixtureConfig,
    combined_hidden,
    ctx_doc_gradients,
    ctx_doc_log_likelihood,
    init_ctx_params,
    lm_hidden_sequence,
    lm_input_vector,
    lstm_step,
    pretrain_then_train,
    text_to_vec,
)
from texttovec.docnade import doc_gradients, doc_log_likelihood, doc_representation
from texttovec.numerics import finite_difference_gradient


def make_model(seed=1, K=12, H=5, depth=1, lam=0.5, mode="shared_w", activation="sigmoid"):
    emb = None
    if mode == "shared_w_plus_e":
        rng = np.random.default_rng(seed + 1000)
        vecs = rng.normal(0, 0.3, (K, H))
        vecs[K - 1] = 0.0  # one deliberately uncovered word
        emb = EmbeddingTable(
            vectors=vecs, covered=np.arange(K) < K - 1, dimension=H
        )
    return init_ctx_params(
        K, H, seed=seed, activation=activation, depth=depth, lam=lam,
        embedding_mode=mode, embeddings=emb,
    )


class TestMixtureConfig:
    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            MixtureConfig(lam=-0.1)

    def test_plus_e_requires_table(self):
        with pytest.raises(ValueError, match="embedding"):
            init_ctx_params(6, 3, embedding_mode="shared_w_plus_e")

    def test_dimension_checked(self):
        emb = EmbeddingTable(vectors=np.zeros((6, 4)), covered=np.zeros(6, bool), dimension=4)
        with pytest.raises(ValueError, match="dimension"):
            init_ctx_params(6, 3, embedding_mode="shared_w_plus_e", embeddings=emb)


class TestLmInputVector:
    def test_shared_w_is_column(self):
        m = make_model()
        np.testing.assert_array_equal(lm_input_vector(7, m), m.dn.W[:, 7])

    def test_uncovered_word_equals_shared_w(self):
        m = make_model(mode="shared_w_plus_e")
        v = m.vocab_size - 1  # zero prior row
        np.testing.assert_array_equal(lm_input_vector(v, m), m.dn.W[:, v])

    def test_covered_word_adds_prior(self):
        m = make_model(mode="shared_w_plus_e")
        np.testing.assert_allclose(
            lm_input_vector(0, m), m.dn.W[:, 0] + m.embeddings.vectors[0], atol=0
        )

    def test_bos_returns_w_bos_in_both_modes(self):
        for mode in ("shared_w", "shared_w_plus_e"):
            m = make_model(mode=mode)
            np.testing.assert_array_equal(lm_input_vector(BOS, m), m.lm.w_bos)

    def test_out_of_range(self):
        m = make_model()
        with pytest.raises(ValueError):
            lm_input_vector(m.vocab_size, m)


class TestLstmStep:
    def test_all_zero_params_zero_state(self):
        m = make_model()
        m.lm.Wx[:] = 0.0
        m.lm.Wh[:] = 0.0
        m.lm.bias[:] = 0.0
        state = lstm_step(LMState.initial(1, 5), np.ones(5), m.lm)
        np.testing.assert_array_equal(state.h, np.zeros((1, 5)))

    def test_forget_bias_scales_prior_cell(self):
        m = make_model()
        m.lm.Wx[:] = 0.0
        m.lm.Wh[:] = 0.0
        m.lm.bias[:] = 0.0
        m.lm.bias[0, 5:10] = 1.0  # forget gate block
        prior = LMState(h=np.zeros((1, 5)), c=np.full((1, 5), 2.0))
        state = lstm_step(prior, np.zeros(5), m.lm)
        sig1 = 1.0 / (1.0 + np.exp(-1.0))
        np.testing.assert_allclose(state.c[0], sig1 * 2.0, atol=1e-12)
        assert state.c[0, 0] == pytest.approx(0.7311 * 2.0, abs=1e-4)

    def test_random_step_matches_oracle_cell(self):
        m = make_model(seed=3, depth=2)
        rng = np.random.default_rng(0)
        x = rng.normal(0, 1, 5)
        state = LMState(h=rng.normal(0, 1, (2, 5)), c=rng.normal(0, 1, (2, 5)))
        out = lstm_step(state, x, m.lm)
        inp = x
        for l in range(2):
            h, c = oracle_lstm_cell(inp, state.h[l], state.c[l], m.lm.Wx[l], m.lm.Wh[l], m.lm.bias[l])
            np.testing.assert_allclose(out.h[l], h, atol=1e-13)
            np.testing.assert_allclose(out.c[l], c, atol=1e-13)
            inp = h


class TestLmHiddenSequence:
    def test_first_state_sees_only_bos(self):
        m = make_model(seed=5)
        a = lm_hidden_sequence([3, 1, 2], m)
        b = lm_hidden_sequence([9, 9, 9], m)
        np.testing.assert_array_equal(a[0], b[0])

    def test_zero_params_all_zero(self):
        m = make_model()
        m.lm.Wx[:] = 0.0
        m.lm.Wh[:] = 0.0
        m.lm.bias[:] = 0.0
        m.lm.w_bos[:] = 0.0
        np.testing.assert_array_equal(lm_hidden_sequence([1, 2, 3], m), np.zeros((3, 5)))

    def test_order_sensitivity_witness(self):
        m = make_model(seed=7)
        a = lm_hidden_sequence([1, 2, 3], m)
        b = lm_hidden_sequence([2, 1, 3], m)
        assert np.abs(a[2] - b[2]).max() > 1e-8


class TestCombinedHidden:
    def test_lambda_zero(self):
        h = np.array([1.0, 2.0])
        np.testing.assert_array_equal(combined_hidden(h, np.array([5.0, -3.0]), 0.0), h)

    def test_lambda_one_sums(self):
        out = combined_hidden(np.array([1.0, 2.0]), np.array([2.0, -2.0]), 1.0)
        np.testing.assert_array_equal(out, [3.0, 0.0])

    def test_half(self):
        out = combined_hidden(np.array([1.0, 2.0]), np.array([2.0, -2.0]), 0.5)
        np.testing.assert_array_equal(out, [2.0, 1.0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            combined_hidden(np.zeros(2), np.zeros(3), 0.5)


class TestCtxLogLikelihood:
    def test_lambda_zero_equals_docnade_bitwise(self):
        m = make_model(seed=11, lam=0.0, depth=2)
        rng = np.random.default_rng(2)
        for doc in random_docs(rng, 10, m.vocab_size, 1, 9):
            assert ctx_doc_log_likelihood(doc, m) == doc_log_likelihood(doc, m.dn)

    def test_matches_naive_recomputation(self):
        rng = np.random.default_rng(3)
        for mode in ("shared_w", "shared_w_plus_e"):
            m = make_model(seed=13, lam=0.5, mode=mode)
            for doc in random_docs(rng, 8, m.vocab_size, 1, 8):
                assert ctx_doc_log_likelihood(doc, m) == pytest.approx(
                    naive_ctx_logp(doc, m), abs=1e-9
                )

    def test_positionwise_distributions_normalized(self):
        m = make_model(seed=17, lam=0.7)
        doc = np.array([0, 4, 4, 9], dtype=np.int64)
        h_lm = lm_hidden_sequence(doc, m)
        act = docnade.prefix_start(m.dn)
        for i, v in enumerate(doc):
            h = combined_hidden(docnade.hidden(act, m.dn), h_lm[i], m.mix.lam)
            lp = docnade.conditional_log_prob(h, m.dn)
            assert np.exp(lp).sum() == pytest.approx(1.0, abs=1e-12)
            act = docnade.prefix_advance(act, int(v), m.dn)


class TestOrderAndCost:
    def test_permutation_changes_ctx_likelihood_witness(self):
        m = make_model(seed=67, lam=1.0)
        a = ctx_doc_log_likelihood([1, 2, 3, 4], m)
        b = ctx_doc_log_likelihood([4, 3, 2, 1], m)
        assert a != b

    def test_lm_consumes_exactly_d_inputs_for_likelihood(self):
        # the state predicting v_i has seen BOS plus i-1 words, so one
        # document costs exactly D LSTM steps; the whole-text vector
        # takes one step more
        from texttovec.kernels import reference

        m = make_model(seed=71)
        doc = np.array([3, 1, 4, 1, 5], dtype=np.int64)
        E_rows, use_prior = m._prior_rows()
        X_ll = reference._lm_inputs(doc, m.dn.W, m.lm.w_bos, E_rows, use_prior, False)
        X_vec = reference._lm_inputs(doc, m.dn.W, m.lm.w_bos, E_rows, use_prior, True)
        assert X_ll.shape[0] == len(doc)
        assert X_vec.shape[0] == len(doc) + 1
        assert lm_hidden_sequence(doc, m).shape == (len(doc), m.hidden_size)


class TestCtxGradients:
    def test_lambda_zero_lstm_grads_exactly_zero(self):
        m = make_model(seed=19, lam=0.0, depth=2)
        rng = np.random.default_rng(5)
        for doc in random_docs(rng, 5, m.vocab_size, 2, 8):
            g = ctx_doc_gradients(doc, m)
            dn_g = doc_gradients(doc, m.dn)
            for t in (g.Wx, g.Wh, g.bias, g.w_bos):
                assert not np.any(t)
            for name in ("W", "U", "b", "e", "W_deep", "e_deep"):
                np.testing.assert_array_equal(getattr(g, name), getattr(dn_g, name))

    @pytest.mark.parametrize("mode", ["shared_w", "shared_w_plus_e"])
    @pytest.mark.parametrize("depth", [1, 2])
    def test_finite_difference_all_tensors(self, mode, depth):
        m = make_model(seed=23, lam=0.5, mode=mode, depth=depth)
        doc = np.array([1, 5, 5, 0, 11, 7][: 4 + depth], dtype=np.int64)
        g = ctx_doc_gradients(doc, m)
        tensors = {
            "W": (m.dn.W, g.W),
            "U": (m.dn.U, g.U),
            "b": (m.dn.b, g.b),
            "e": (m.dn.e, g.e),
            "W_deep": (m.dn.W_deep, g.W_deep),
            "e_deep": (m.dn.e_deep, g.e_deep),
            "Wx": (m.lm.Wx, g.Wx),
            "Wh": (m.lm.Wh, g.Wh),
            "bias": (m.lm.bias, g.bias),
            "w_bos": (m.lm.w_bos, g.w_bos),
        }
        for name, (arr, analytic) in tensors.items():
            if arr.size == 0:
                continue
            fd = finite_difference_gradient(
                lambda _: -ctx_doc_log_likelihood(doc, m), arr, 1e-5
            )
            assert rel_err(analytic, fd) <= 1e-6, name

    def test_w_gradient_two_path_decomposition(self):
        # dL/dW must equal the sum of the bag-of-words-path gradient and
        # the embedding-lookup-path gradient, each taken with the other
        # occurrence of W held fixed.
        m = make_model(seed=29, lam=0.5, mode="shared_w_plus_e")
        doc = np.array([2, 7, 0, 7, 5], dtype=np.int64)
        g = ctx_doc_gradients(doc, m)
        W0 = m.dn.W.copy()

        def loss_acc(W_acc):
            return -naive_ctx_logp(doc, m, W_acc=W_acc, W_emb=W0)

        def loss_emb(W_emb):
            return -naive_ctx_logp(doc, m, W_acc=W0, W_emb=W_emb)

        probe = W0.copy()
        fd_acc = finite_difference_gradient(lambda _: loss_acc(probe), probe, 1e-5)
        fd_emb = finite_difference_gradient(lambda _: loss_emb(probe), probe, 1e-5)
        assert rel_err(g.W, fd_acc + fd_emb) <= 1e-6


class TestPretrainThenTrain:
    def _split(self, seed=71):
        docs, _ = two_topic_corpus(seed, vocab_size=16, n_train=20, n_heldout=0, min_len=3, max_len=7)
        return docs

    def test_pretraining_leaves_lstm_bitwise_unchanged(self):
        docs = self._split()
        cfg = CtxTrainConfig(
            hidden=5, epochs=0, pretrain_epochs=4, seed=31, vocab_size=16, lam=0.8, patience=0
        )
        result = pretrain_then_train(docs, cfg)
        fresh = init_ctx_params(16, 5, seed=31, lam=0.8)
        np.testing.assert_array_equal(result.params.lm.Wx, fresh.lm.Wx)
        np.testing.assert_array_equal(result.params.lm.Wh, fresh.lm.Wh)
        np.testing.assert_array_equal(result.params.lm.bias, fresh.lm.bias)
        np.testing.assert_array_equal(result.params.lm.w_bos, fresh.lm.w_bos)
        assert not np.array_equal(result.params.dn.W, fresh.dn.W)

    def test_default_pretrain_epochs_is_ten(self):
        assert CtxTrainConfig().pretrain_epochs == 10

    def test_same_seed_identical(self):
        docs = self._split()
        cfg = CtxTrainConfig(
            hidden=4, epochs=2, pretrain_epochs=2, seed=37, vocab_size=16, lam=0.5, patience=0
        )
        a = pretrain_then_train(docs, cfg)
        b = pretrain_then_train(docs, cfg)
        np.testing.assert_array_equal(a.params.dn.W, b.params.dn.W)
        np.testing.assert_array_equal(a.params.lm.Wx, b.params.lm.Wx)

    def test_phases_recorded_in_history(self):
        docs = self._split()
        cfg = CtxTrainConfig(
            hidden=4, epochs=2, pretrain_epochs=3, seed=41, vocab_size=16, patience=0
        )
        result = pretrain_then_train(docs, cfg)
        phases = [s.phase for s in result.history]
        assert phases == ["pretrain"] * 3 + ["joint"] * 2

    def test_static_prior_bitwise_frozen_by_training(self):
        docs = self._split()
        rng = np.random.default_rng(0)
        vecs = rng.normal(0, 0.3, (16, 4))
        emb = EmbeddingTable(vectors=vecs, covered=np.ones(16, bool), dimension=4)
        snapshot = emb.vectors.copy()
        cfg = CtxTrainConfig(
            hidden=4, epochs=3, pretrain_epochs=2, seed=43, vocab_size=16,
            lam=0.5, embedding_mode="shared_w_plus_e", patience=0,
        )
        result = pretrain_then_train(docs, cfg, embeddings=emb)
        np.testing.assert_array_equal(result.params.embeddings.vectors, snapshot)
        np.testing.assert_array_equal(emb.vectors, snapshot)


class TestTextToVec:
    def test_lambda_zero_equals_doc_representation(self):
        m = make_model(seed=47, lam=0.0, depth=2)
        doc = [3, 1, 4, 1, 5]
        np.testing.assert_array_equal(text_to_vec(doc, m), doc_representation(doc, m.dn))

    def test_dimension(self):
        m = make_model(seed=53, lam=0.9)
        assert text_to_vec([0, 1], m).shape == (m.hidden_size,)

    def test_equals_composition_of_parts(self):
        # Assembled from the independently computed pieces: the full-text
        # bag-of-words hidden plus lam times the LSTM state after the
        # whole document (one step past the likelihood inputs).
        for mode in ("shared_w", "shared_w_plus_e"):
            m = make_model(seed=59, lam=0.5, mode=mode, depth=2)
            doc = [2, 9, 4, 4, 0]
            state = LMState.initial(m.lm.depth, m.hidden_size)
            state = lstm_step(state, lm_input_vector(BOS, m), m.lm)
            for v in doc:
                state = lstm_step(state, lm_input_vector(v, m), m.lm)
            expected = combined_hidden(doc_representation(doc, m.dn), state.h[-1], m.mix.lam)
            np.testing.assert_allclose(text_to_vec(doc, m), expected, atol=1e-12)

    def test_order_changes_ctx_vector_but_not_dn_part(self):
        m = make_model(seed=61, lam=1.0)
        a = text_to_vec([1, 2, 3, 4], m)
        b = text_to_vec([4, 3, 2, 1], m)
        assert np.abs(a - b).max() > 1e-9
        np.testing.assert_allclose(
            doc_representation([1, 2, 3, 4], m.dn),
            doc_representation([4, 3, 2, 1], m.dn),
            atol=1e-10,
        )
