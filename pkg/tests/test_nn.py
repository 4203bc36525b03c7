"""Kernel-level checks: layers, attention encoder, losses, Adam, gradient oracle."""

import math

import numpy as np
import pytest

from slatesim.nn import (
    AdamState, AttentionEncoder, Mlp, NondeterministicModelError, ParamStore,
    accumulate_grads, affine_map, attention_encode, bce_loss, bce_with_logits,
    dropout, gradient_check, masked_softmax, mse_loss, read_checkpoint,
    write_checkpoint, BCE_EPS,
)
from slatesim.nn.layers import affine_bwd, embedding_bwd, embedding_lookup


class TestAffine:
    def test_identity_weights(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(5, 4))
        y = affine_map(np.eye(4), np.zeros(4), x)
        np.testing.assert_array_equal(y, x)

    def test_zero_input_gives_bias_rows(self):
        b = np.array([1.0, -2.0])
        y = affine_map(np.zeros((3, 2)), b, np.zeros((4, 3)))
        np.testing.assert_array_equal(y, np.tile(b, (4, 1)))

    def test_matches_naive_triple_loop(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(3, 4))
        w = rng.normal(size=(4, 2))
        b = rng.normal(size=2)
        y = affine_map(w, b, x)
        naive = np.zeros((3, 2))
        for i in range(3):
            for j in range(2):
                acc = b[j]
                for k in range(4):
                    acc += x[i, k] * w[k, j]
                naive[i, j] = acc
        np.testing.assert_allclose(y, naive, atol=1e-12)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            affine_map(np.zeros((3, 2)), np.zeros(2), np.zeros((4, 5)))

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(6, 3))
        w = rng.normal(size=(3, 2))
        b = rng.normal(size=2)
        probe = rng.normal(size=(6, 2))

        def loss(wv):
            return float((affine_map(wv, b, x) * probe).sum())

        dx, dw, db = affine_bwd(probe, x, w)
        h = 1e-6
        for idx in [(0, 0), (2, 1)]:
            wp = w.copy(); wp[idx] += h
            wm = w.copy(); wm[idx] -= h
            fd = (loss(wp) - loss(wm)) / (2 * h)
            assert abs(fd - dw[idx]) < 1e-5


class TestLosses:
    def test_bce_half_prediction(self):
        loss, _ = bce_loss(np.array([0.5]), np.array([1.0]))
        assert abs(loss - math.log(2.0)) < 1e-9

    def test_bce_perfect_prediction_bound(self):
        p = np.array([1.0, 0.0])
        y = np.array([1.0, 0.0])
        loss, _ = bce_loss(p, y)
        assert loss <= -math.log1p(-BCE_EPS) + 1e-12

    def test_bce_gradient_matches_central_differences(self):
        rng = np.random.default_rng(3)
        p = rng.uniform(0.05, 0.95, size=64)
        y = (rng.random(64) < 0.5).astype(float)
        _, grad = bce_loss(p, y)
        h = 1e-7
        worst = 0.0
        for i in range(64):
            pp = p.copy(); pp[i] += h
            pm = p.copy(); pm[i] -= h
            fd = (bce_loss(pp, y)[0] - bce_loss(pm, y)[0]) / (2 * h)
            worst = max(worst, abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-12))
        assert worst < 1e-5

    def test_bce_empty_batch_raises(self):
        with pytest.raises(ValueError):
            bce_loss(np.array([]), np.array([]))

    def test_bce_with_logits_agrees_with_probability_form(self):
        rng = np.random.default_rng(4)
        z = rng.normal(size=(8, 3))
        y = (rng.random((8, 3)) < 0.5).astype(float)
        l1, _ = bce_with_logits(z, y)
        l2, _ = bce_loss(1.0 / (1.0 + np.exp(-z)), y)
        assert abs(l1 - l2) < 1e-9

    def test_mse_simple(self):
        loss, grad = mse_loss(np.array([1.0, 3.0]), np.array([0.0, 0.0]))
        assert abs(loss - 5.0) < 1e-12
        np.testing.assert_allclose(grad, np.array([1.0, 3.0]))


class TestSoftmaxAndDropout:
    def test_masked_rows_sum_to_one_fsum(self):
        rng = np.random.default_rng(5)
        logits = rng.normal(size=(10, 4, 12)) * 3
        mask = rng.random((10, 1, 12)) < 0.7
        mask[..., 0] = True
        p = masked_softmax(logits, mask)
        flat = p.reshape(-1, 12)
        for row in flat:
            assert abs(math.fsum(row.tolist()) - 1.0) < 1e-6

    def test_masked_positions_zero_weight(self):
        logits = np.array([[0.0, 10.0, -1.0]])
        mask = np.array([[True, False, True]])
        p = masked_softmax(logits, mask)
        assert p[0, 1] == 0.0
        assert abs(p[0].sum() - 1.0) < 1e-12

    def test_all_masked_raises(self):
        with pytest.raises(ValueError):
            masked_softmax(np.zeros((1, 3)), np.zeros((1, 3), dtype=bool))

    def test_dropout_rate_and_rescale(self):
        rng = np.random.default_rng(6)
        x = np.ones((1000, 1000))
        y, cache = dropout(x, 0.2, rng, train=True)
        zeros = float((y == 0).mean())
        assert abs(zeros - 0.2) < 0.005
        survivors = y[y != 0]
        np.testing.assert_allclose(survivors, 1.0 / 0.8)
        assert cache is not None

    def test_dropout_inference_identity(self):
        x = np.arange(12.0).reshape(3, 4)
        y, cache = dropout(x, 0.2, None, train=False)
        assert cache is None
        np.testing.assert_array_equal(y, x)


class TestAdam:
    def test_first_step_magnitude(self):
        store = ParamStore(seed=0)
        store.add("theta", (1,), init="zeros")
        opt = AdamState(store, lr=1e-3)
        assert opt.step(store, {"theta": np.array([1.0])})
        delta = abs(float(store["theta"][0]))
        assert abs(delta - 1e-3) < 1e-6

    def test_zero_gradient_no_change(self):
        store = ParamStore(seed=0)
        store.add("w", (3, 3), init="glorot")
        before = store["w"].copy()
        opt = AdamState(store, lr=0.1)
        opt.step(store, {"w": np.zeros((3, 3))})
        np.testing.assert_array_equal(store["w"], before)

    def test_quadratic_descent_matches_scalar_recurrence(self):
        # independent scalar recurrence for f(theta) = theta^2
        def reference(steps, lr):
            theta, m, v = 1.0, 0.0, 0.0
            b1, b2, eps = 0.9, 0.999, 1e-8
            for t in range(1, steps + 1):
                g = 2.0 * theta
                m = b1 * m + (1 - b1) * g
                v = b2 * v + (1 - b2) * g * g
                mhat = m / (1 - b1 ** t)
                vhat = v / (1 - b2 ** t)
                theta -= lr * mhat / (math.sqrt(vhat) + eps)
            return theta

        store = ParamStore(seed=0)
        store.add("theta", (1,), init="zeros")
        store["theta"] = np.array([1.0], dtype=np.float32)
        opt = AdamState(store, lr=0.1)
        for _ in range(100):
            g = 2.0 * store["theta"].astype(np.float64)
            opt.step(store, {"theta": g})
        got = float(store["theta"][0])
        want = reference(100, 0.1)
        assert abs(got - want) < 1e-4
        assert abs(got) < 0.05

    def test_nonfinite_gradient_skips_step(self):
        store = ParamStore(seed=0)
        store.add("w", (2,), init="zeros")
        opt = AdamState(store, lr=0.1)
        ok = opt.step(store, {"w": np.array([np.nan, 0.0])})
        assert not ok
        assert opt.skipped == 1
        assert opt.t == 0
        np.testing.assert_array_equal(store["w"], np.zeros(2))


def _mlp_loss_fn(mlp, x, y):
    def fn(params):
        out, cache = mlp.forward(params, x)
        loss, dout = mse_loss(out, y)
        grads, _ = mlp.backward(params, cache, dout)
        return loss, grads
    return fn


class TestGradientCheck:
    def test_affine_plus_bce_small_error(self):
        store = ParamStore(seed=7)
        mlp = Mlp(store, "head", (5, 1), out_act="sigmoid")
        rng = np.random.default_rng(7)
        x = rng.normal(size=(16, 5))
        y = (rng.random((16, 1)) < 0.5).astype(float)

        def fn(params):
            out, cache = mlp.forward(params, x)
            loss, dout = bce_loss(out, y)
            grads, _ = mlp.backward(params, cache, dout)
            return loss, grads

        err = gradient_check(fn, store.as_dict(np.float64), np.random.default_rng(0))
        assert err < 1e-6

    def test_two_layer_mlp(self):
        store = ParamStore(seed=8)
        mlp = Mlp(store, "m", (6, 12, 3))
        rng = np.random.default_rng(8)
        x = rng.normal(size=(10, 6))
        y = rng.normal(size=(10, 3))
        err = gradient_check(_mlp_loss_fn(mlp, x, y), store.as_dict(np.float64),
                             np.random.default_rng(1))
        assert err < 1e-6

    def test_corrupted_gradient_detected(self):
        store = ParamStore(seed=9)
        mlp = Mlp(store, "m", (4, 8, 2))
        rng = np.random.default_rng(9)
        x = rng.normal(size=(12, 4))
        y = rng.normal(size=(12, 2))
        base = _mlp_loss_fn(mlp, x, y)

        def corrupted(params):
            loss, grads = base(params)
            grads["m.l0.w"] = grads["m.l0.w"] * 2.0
            return loss, grads

        err = gradient_check(corrupted, store.as_dict(np.float64), np.random.default_rng(2))
        assert err > 0.4

    def test_nondeterministic_fn_detected(self):
        state = {"n": 0}

        def fn(params):
            state["n"] += 1
            return float(state["n"]), {"w": np.zeros(1)}

        with pytest.raises(NondeterministicModelError):
            gradient_check(fn, {"w": np.zeros(1)}, np.random.default_rng(3))


class TestAttentionEncoder:
    def _build(self, dim=8, max_len=7, seed=11, dropout_rate=0.0):
        store = ParamStore(seed=seed)
        enc = AttentionEncoder(store, "enc", dim=dim, max_len=max_len,
                               heads=2, blocks=2, dropout_rate=dropout_rate)
        return store, enc

    def test_single_position_softmax_is_one(self):
        store, enc = self._build()
        rng = np.random.default_rng(12)
        seq = rng.normal(size=(1, 8)).astype(np.float64)
        pooled, att = attention_encode(enc, store.as_dict(np.float64), seq,
                                       np.array([True]), return_attention=True)
        for block_att in att:
            np.testing.assert_allclose(block_att, 1.0)
        assert pooled.shape == (8,)

    def test_masked_row_permutation_invariance(self):
        store, enc = self._build()
        params = store.as_dict(np.float64)
        rng = np.random.default_rng(13)
        seq = rng.normal(size=(6, 8))
        mask = np.array([True, True, True, False, False, False])
        out1 = attention_encode(enc, params, seq, mask)
        seq2 = seq.copy()
        seq2[[3, 5]] = seq2[[5, 3]]
        out2 = attention_encode(enc, params, seq2, mask)
        np.testing.assert_allclose(out1, out2, atol=1e-12)

    def test_all_masked_raises(self):
        store, enc = self._build()
        with pytest.raises(ValueError):
            attention_encode(enc, store.as_dict(np.float64), np.zeros((3, 8)),
                             np.zeros(3, dtype=bool))

    def test_attention_rows_sum_to_one(self):
        store, enc = self._build()
        rng = np.random.default_rng(14)
        seq = rng.normal(size=(5, 8)) * 2
        mask = np.array([True, True, False, True, True])
        _, att = attention_encode(enc, store.as_dict(np.float64), seq, mask,
                                  return_attention=True)
        for block_att in att:
            rows = block_att.reshape(-1, block_att.shape[-1])
            for row in rows:
                assert abs(math.fsum(row.tolist()) - 1.0) < 1e-6

    def test_deterministic_forward(self):
        store, enc = self._build()
        params = store.as_dict(np.float64)
        rng = np.random.default_rng(15)
        seq = rng.normal(size=(2, 6, 8))
        mask = np.ones((2, 6), dtype=bool)
        a, _ = enc.forward(params, seq, mask)
        b, _ = enc.forward(params, seq, mask)
        np.testing.assert_array_equal(a, b)

    def test_gradients_match_finite_differences(self):
        store, enc = self._build(dim=8, max_len=5, seed=16)
        rng = np.random.default_rng(16)
        seq = rng.normal(size=(3, 5, 8))
        mask = np.ones((3, 5), dtype=bool)
        mask[0, 3:] = False
        probe = rng.normal(size=(3, 8))

        def fn(params):
            pooled, cache = enc.forward(params, seq, mask)
            loss = float((pooled * probe).sum() + 0.5 * (pooled ** 2).sum())
            dpooled = probe + pooled
            grads, _ = enc.backward(params, cache, dpooled)
            return loss, grads

        err = gradient_check(fn, store.as_dict(np.float64), np.random.default_rng(4),
                             n_coords=300)
        assert err < 1e-4

    def test_training_dropout_changes_output(self):
        store, enc = self._build(dropout_rate=0.5, seed=17)
        params = store.as_dict(np.float64)
        rng = np.random.default_rng(17)
        seq = rng.normal(size=(1, 4, 8))
        mask = np.ones((1, 4), dtype=bool)
        base, _ = enc.forward(params, seq, mask)
        trained, _ = enc.forward(params, seq, mask, train=True,
                                 rng=np.random.default_rng(0))
        assert not np.allclose(base, trained)


class TestParamStoreAndCheckpoint:
    def test_seed_deterministic_init(self):
        def build(seed):
            store = ParamStore(seed=seed)
            store.add("e", (7, 4), init="embed")
            store.add_linear("l", 4, 3)
            return store

        a, b = build(123), build(123)
        for name in a.names():
            np.testing.assert_array_equal(a[name], b[name])
        c = build(124)
        assert not np.array_equal(a["e"], c["e"])

    def test_glorot_bounds(self):
        store = ParamStore(seed=1)
        w = store.add("w", (30, 50), init="glorot")
        limit = np.sqrt(6.0 / 80.0)
        assert np.all(np.abs(w) <= limit)

    def test_duplicate_registration_rejected(self):
        store = ParamStore(seed=1)
        store.add("w", (2,), init="zeros")
        with pytest.raises(KeyError):
            store.add("w", (2,), init="zeros")

    def test_embedding_lookup_and_scatter(self):
        table = np.arange(12.0).reshape(4, 3)
        ids = np.array([[0, 2], [2, 3]])
        vecs = embedding_lookup(table, ids)
        assert vecs.shape == (2, 2, 3)
        dvecs = np.ones((2, 2, 3))
        dtable = embedding_bwd(dvecs, ids, table.shape)
        np.testing.assert_array_equal(dtable[:, 0], np.array([1.0, 0.0, 2.0, 1.0]))

    def test_checkpoint_round_trip_bit_exact(self, tmp_path):
        store = ParamStore(seed=2)
        store.add("a.w", (5, 3), init="glorot")
        store.add("b", (4,), init="embed")
        meta = {"behaviors": ["click", "hate"], "lr": 1e-4, "dim": 32}
        path = tmp_path / "model.bin"
        write_checkpoint(path, {k: store[k] for k in store.names()}, meta)
        arrays, meta2 = read_checkpoint(path)
        assert meta2 == meta
        for name in store.names():
            assert arrays[name].dtype == np.float32
            np.testing.assert_array_equal(arrays[name], store[name])

    def test_checkpoint_reemit_identical_bytes(self, tmp_path):
        store = ParamStore(seed=3)
        store.add("w", (6, 2), init="glorot")
        arrays = {k: store[k] for k in store.names()}
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        write_checkpoint(p1, arrays, {"x": 1})
        write_checkpoint(p2, arrays, {"x": 1})
        assert p1.read_bytes() == p2.read_bytes()


class TestGradAccumulation:
    def test_accumulate(self):
        total = {"w": np.ones(2)}
        accumulate_grads(total, {"w": np.ones(2), "b": np.full(1, 3.0)})
        np.testing.assert_array_equal(total["w"], np.full(2, 2.0))
        np.testing.assert_array_equal(total["b"], np.full(1, 3.0))
