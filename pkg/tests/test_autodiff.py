from __future__ import annotations

import numpy as np
import pytest

from lextrans import autodiff as ad
from lextrans.autodiff import ShapeError, Tape, Tensor

from helpers import numeric_grad, relative_error

TOL = 1e-6


def check_op(build, tensors, tol=TOL):
    """Gradient-check scalar-valued `build()` against central differences."""
    for t in tensors:
        t.zero_grad()
    with Tape() as tape:
        loss = build()
    tape.backward(loss, trainable=tensors)
    for t in tensors:
        num = numeric_grad(build, t)
        assert relative_error(t.grad, num) < tol, f"gradient mismatch for {t.name}"


class TestPrimitiveGradients:
    def setup_method(self):
        self.rng = np.random.default_rng(11)

    def t(self, *shape, name=None):
        return Tensor(self.rng.standard_normal(shape), trainable=True, name=name)

    def test_add_broadcast(self):
        a, b = self.t(3, 4, name="a"), self.t(4, name="b")
        check_op(lambda: ad.sum(ad.mul(ad.add(a, b), ad.add(a, b))), [a, b])

    def test_sub_neg(self):
        a, b = self.t(2, 3, name="a"), self.t(2, 3, name="b")
        check_op(lambda: ad.sum(ad.mul(ad.sub(a, b), ad.neg(b))), [a, b])

    def test_matmul(self):
        a, b = self.t(3, 4, name="a"), self.t(4, 2, name="b")
        check_op(lambda: ad.sum(ad.mul(ad.matmul(a, b), ad.matmul(a, b))), [a, b])

    def test_matmul_shape_error(self):
        with pytest.raises(ShapeError):
            ad.matmul(self.t(3, 4), self.t(3, 4))

    def test_reshape_concat_stack(self):
        a, b = self.t(2, 6, name="a"), self.t(2, 3, name="b")
        def build():
            r = ad.reshape(a, (2, 3, 2))
            s = ad.stack([b, b], axis=2)
            return ad.sum(ad.mul(r, s))
        check_op(build, [a, b])

    def test_concat_axis1(self):
        a, b = self.t(2, 3, name="a"), self.t(2, 5, name="b")
        c = self.t(2, 8, name="c")
        check_op(lambda: ad.sum(ad.mul(ad.concat([a, b], axis=1), c)), [a, b, c])

    def test_sigmoid_tanh_log(self):
        a = self.t(4, 3, name="a")
        check_op(lambda: ad.sum(ad.log(ad.add(ad.sigmoid(a), 0.5))), [a])
        check_op(lambda: ad.sum(ad.tanh(a)), [a])

    def test_softmax(self):
        a = self.t(5, 7, name="a")
        w = Tensor(self.rng.standard_normal((5, 7)))
        check_op(lambda: ad.sum(ad.mul(ad.softmax(a), w)), [a])

    def test_softmax_masked(self):
        a = self.t(4, 6, name="a")
        mask = self.rng.random((4, 6)) > 0.3
        mask[:, 0] = True
        w = Tensor(self.rng.standard_normal((4, 6)))
        def build():
            return ad.sum(ad.mul(ad.softmax(a, mask=mask), w))
        with Tape() as tape:
            loss = build()
        tape.backward(loss, trainable=[a])
        y = ad.softmax(a, mask=mask).data
        assert np.all(y[~mask] == 0.0)
        assert np.all(a.grad[~mask] == 0.0)
        num = numeric_grad(build, a)
        assert relative_error(a.grad, num) < TOL

    def test_softmax_fully_masked_row_rejected(self):
        a = self.t(2, 3)
        mask = np.zeros((2, 3), dtype=bool)
        with pytest.raises(ShapeError):
            ad.softmax(a, mask=mask)

    def test_sum_axis(self):
        a = self.t(3, 4, name="a")
        b = self.t(3, name="b")
        check_op(lambda: ad.sum(ad.mul(ad.sum(a, axis=1), b)), [a, b])

    def test_lookup(self):
        table = self.t(6, 4, name="table")
        ids = np.array([[1, 3, 1], [0, 5, 5]])
        w = Tensor(self.rng.standard_normal((2, 3, 4)))
        check_op(lambda: ad.sum(ad.mul(ad.lookup(table, ids), w)), [table])

    def test_gather_index(self):
        a = self.t(4, 5, name="a")
        idx = np.array([0, 2, 4, 2])
        check_op(lambda: ad.sum(ad.mul(ad.gather_index(a, idx),
                                       ad.gather_index(a, idx))), [a])

    def test_batched_dot(self):
        a, b = self.t(3, 4, name="a"), self.t(3, 5, 4, name="b")
        w = Tensor(self.rng.standard_normal((3, 5)))
        check_op(lambda: ad.sum(ad.mul(ad.batched_dot(a, b), w)), [a, b])

    def test_weighted_sum(self):
        w, v = self.t(3, 5, name="w"), self.t(3, 5, 4, name="v")
        m = Tensor(self.rng.standard_normal((3, 4)))
        check_op(lambda: ad.sum(ad.mul(ad.weighted_sum(w, v), m)), [w, v])

    def test_batched_matmul(self):
        a, b = self.t(3, 2, 4, name="a"), self.t(3, 4, 5, name="b")
        w = Tensor(self.rng.standard_normal((3, 2, 5)))
        check_op(lambda: ad.sum(ad.mul(ad.batched_matmul(a, b), w)), [a, b])

    def test_batched_matmul_t(self):
        a, b = self.t(3, 2, 4, name="a"), self.t(3, 5, 4, name="b")
        w = Tensor(self.rng.standard_normal((3, 2, 5)))
        check_op(lambda: ad.sum(ad.mul(ad.batched_matmul_t(a, b), w)), [a, b])

    def test_batched_matmul_shape_errors(self):
        with pytest.raises(ShapeError):
            ad.batched_matmul(self.t(3, 2, 4), self.t(3, 5, 4))
        with pytest.raises(ShapeError):
            ad.batched_matmul_t(self.t(3, 2, 4), self.t(3, 4, 5))
        with pytest.raises(ShapeError):
            ad.batched_matmul(self.t(2, 4), self.t(2, 4, 5))

    def test_unstack_inverts_stack(self):
        a = self.t(2, 3, 4, name="a")
        parts = ad.unstack(a, axis=1)
        assert len(parts) == 3
        np.testing.assert_array_equal(ad.stack(parts, axis=1).data, a.data)

    def test_unstack_gradients(self):
        a = self.t(2, 3, 4, name="a")
        w = Tensor(self.rng.standard_normal((2, 4)))
        def build():
            parts = ad.unstack(a, axis=1)
            return ad.sum(ad.mul(ad.add(parts[0], parts[2]), w))
        check_op(build, [a])

    def test_unstack_axis_out_of_range(self):
        with pytest.raises(ShapeError):
            ad.unstack(self.t(2, 3), axis=2)

    def test_lstm_gates(self):
        pre = self.t(3, 8, name="pre")
        c0 = self.t(3, 2, name="c0")
        wh = Tensor(self.rng.standard_normal((3, 2)))
        wc = Tensor(self.rng.standard_normal((3, 2)))
        def build():
            h, c = ad.lstm_gates(pre, c0)
            return ad.add(ad.sum(ad.mul(h, wh)), ad.sum(ad.mul(c, wc)))
        check_op(build, [pre, c0])

    def test_lstm_gates_shape_error(self):
        with pytest.raises(ShapeError):
            ad.lstm_gates(self.t(3, 7), self.t(3, 2))
        with pytest.raises(ShapeError):
            ad.lstm_gates(self.t(3, 8), self.t(3, 3))

    def test_lstm_sequence_matches_stepwise_cells(self):
        pre_x = self.t(2, 5, 12, name="pre_x")
        h0, c0 = self.t(2, 3, name="h0"), self.t(2, 3, name="c0")
        u = self.t(3, 12, name="u")
        h_seq, c_seq = ad.lstm_sequence(pre_x, h0, c0, u)
        h, c = h0, c0
        for t in range(5):
            step_pre = ad.add(Tensor(pre_x.data[:, t].copy()), ad.matmul(h, u))
            h, c = ad.lstm_gates(step_pre, c)
            assert h_seq.data[:, t].tobytes() == h.data.tobytes()
            assert c_seq.data[:, t].tobytes() == c.data.tobytes()

    def test_lstm_sequence_gradients(self):
        pre_x = self.t(2, 4, 12, name="pre_x")
        h0, c0 = self.t(2, 3, name="h0"), self.t(2, 3, name="c0")
        u = self.t(3, 12, name="u")
        wh = Tensor(self.rng.standard_normal((2, 4, 3)))
        wc = Tensor(self.rng.standard_normal((2, 4, 3)))
        def build():
            h_seq, c_seq = ad.lstm_sequence(pre_x, h0, c0, u)
            return ad.add(ad.sum(ad.mul(h_seq, wh)), ad.sum(ad.mul(c_seq, wc)))
        check_op(build, [pre_x, h0, c0, u], tol=1e-5)

    def test_lstm_sequence_unused_cell_output(self):
        # gradients still flow when only the hidden sequence is consumed
        pre_x = self.t(1, 3, 8, name="pre_x")
        h0, c0 = self.t(1, 2, name="h0"), self.t(1, 2, name="c0")
        u = self.t(2, 8, name="u")
        w = Tensor(self.rng.standard_normal((1, 3, 2)))
        def build():
            h_seq, _ = ad.lstm_sequence(pre_x, h0, c0, u)
            return ad.sum(ad.mul(h_seq, w))
        check_op(build, [pre_x, h0, c0, u], tol=1e-5)

    def test_lstm_sequence_shape_errors(self):
        with pytest.raises(ShapeError):
            ad.lstm_sequence(self.t(2, 5, 7), self.t(2, 3), self.t(2, 3), self.t(3, 12))
        with pytest.raises(ShapeError):
            ad.lstm_sequence(self.t(2, 5, 12), self.t(2, 4), self.t(2, 3), self.t(3, 12))
        with pytest.raises(ShapeError):
            ad.lstm_sequence(self.t(2, 5, 12), self.t(2, 3), self.t(2, 3), self.t(4, 12))


class TestComposedGraphs:
    def test_two_step_recurrence(self):
        # unrolled two-step LSTM with shared weights exercises gradient
        # accumulation across time
        rng = np.random.default_rng(3)
        W = Tensor(rng.standard_normal((5, 12)) * 0.5, trainable=True, name="W")
        xs = [Tensor(rng.standard_normal((2, 5))) for _ in range(2)]
        target = Tensor(rng.standard_normal((2, 3)))

        def build():
            h = Tensor(np.zeros((2, 3)))
            c = Tensor(np.zeros((2, 3)))
            for x in xs:
                pre = ad.matmul(x, W)
                h, c = ad.lstm_gates(pre, c)
            d = ad.sub(h, target)
            return ad.sum(ad.mul(d, d))

        with Tape() as tape:
            loss = build()
        tape.backward(loss, trainable=[W])
        num = numeric_grad(build, W)
        assert relative_error(W.grad, num) < TOL

    def test_unreached_trainable_gets_zero_grad(self):
        a = Tensor(np.ones((2, 2)), trainable=True)
        b = Tensor(np.ones((2, 2)), trainable=True)
        with Tape() as tape:
            loss = ad.sum(a)
        tape.backward(loss, trainable=[a, b])
        assert np.all(b.grad == 0.0)
        assert np.all(a.grad == 1.0)

    def test_backward_requires_scalar(self):
        a = Tensor(np.ones((2, 2)))
        with Tape() as tape:
            y = ad.mul(a, a)
        with pytest.raises(ShapeError):
            tape.backward(y)

    def test_no_tape_records_nothing(self):
        a = Tensor(np.ones(3))
        tape = Tape()
        y = ad.mul(a, a)  # outside any active tape
        assert tape.nodes == []
        assert y.grad is None

    def test_same_seed_same_gradients(self):
        def run():
            rng = np.random.default_rng(42)
            a = Tensor(rng.standard_normal((4, 4)), trainable=True)
            x = Tensor(rng.standard_normal((4, 4)))
            with Tape() as tape:
                y = ad.softmax(ad.matmul(x, a))
                loss = ad.sum(ad.mul(y, y))
            tape.backward(loss, trainable=[a])
            return a.grad.copy()
        g1, g2 = run(), run()
        assert np.array_equal(g1, g2)


class TestDropout:
    def test_zero_rate_is_identity(self):
        a = Tensor(np.ones((3, 3)))
        assert ad.dropout(a, 0.0, np.random.default_rng(0)) is a

    def test_inverted_scaling_preserves_mean(self):
        rng = np.random.default_rng(5)
        a = Tensor(np.ones((200, 200)))
        out = ad.dropout(a, 0.4, rng)
        kept = out.data[out.data > 0]
        assert np.allclose(kept, 1.0 / 0.6)
        assert abs(out.data.mean() - 1.0) < 0.02

    def test_gradient_masks_match_forward(self):
        rng = np.random.default_rng(5)
        a = Tensor(np.ones((10, 10)), trainable=True)
        with Tape() as tape:
            out = ad.dropout(a, 0.5, rng)
            loss = ad.sum(out)
        tape.backward(loss, trainable=[a])
        assert np.array_equal(a.grad > 0, out.data > 0)


class TestGradientClipping:
    def test_norm_and_clip(self):
        a = Tensor(np.zeros(3), trainable=True)
        b = Tensor(np.zeros(4), trainable=True)
        a.grad = np.array([3.0, 0.0, 0.0])
        b.grad = np.array([0.0, 4.0, 0.0, 0.0])
        assert ad.grad_norm([a, b]) == pytest.approx(5.0)
        factor = ad.clip_gradients([a, b], max_norm=1.0)
        assert factor == pytest.approx(0.2)
        assert ad.grad_norm([a, b]) == pytest.approx(1.0)

    def test_within_bounds_untouched(self):
        a = Tensor(np.zeros(2), trainable=True)
        a.grad = np.array([0.3, 0.4])
        assert ad.clip_gradients([a], max_norm=1.0) == 1.0
        assert np.array_equal(a.grad, [0.3, 0.4])

    def test_none_grads_count_as_zero(self):
        a = Tensor(np.zeros(2), trainable=True)
        assert ad.grad_norm([a]) == 0.0
        assert ad.clip_gradients([a], max_norm=1.0) == 1.0
