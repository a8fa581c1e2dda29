from __future__ import annotations

import numpy as np
import pytest

from lextrans import kernels
from lextrans.kernels import pyref

compiled = pytest.importorskip(
    "lextrans.kernels._ckernels", reason="compiled kernels not built"
)


def rand(rng, *shape, dtype=np.float64):
    return rng.standard_normal(shape).astype(dtype)


class TestCompiledParity:
    @pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-12), (np.float32, 1e-5)])
    def test_lstm_gates_forward(self, dtype, tol):
        rng = np.random.default_rng(0)
        for _ in range(20):
            batch, hidden = rng.integers(1, 9), rng.integers(1, 17)
            pre = rand(rng, batch, 4 * hidden, dtype=dtype) * 3
            c0 = rand(rng, batch, hidden, dtype=dtype)
            h1, c1, g1 = compiled.lstm_gates_forward(pre, c0)
            h2, c2, g2 = pyref.lstm_gates_forward(pre, c0)
            assert h1.dtype == dtype
            np.testing.assert_allclose(h1, h2, atol=tol, rtol=tol)
            np.testing.assert_allclose(c1, c2, atol=tol, rtol=tol)
            np.testing.assert_allclose(g1, g2, atol=tol, rtol=tol)

    @pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-12), (np.float32, 1e-5)])
    def test_lstm_gates_backward(self, dtype, tol):
        rng = np.random.default_rng(1)
        for _ in range(20):
            batch, hidden = rng.integers(1, 9), rng.integers(1, 17)
            pre = rand(rng, batch, 4 * hidden, dtype=dtype) * 3
            c0 = rand(rng, batch, hidden, dtype=dtype)
            _, c, gates = pyref.lstm_gates_forward(pre, c0)
            dh = rand(rng, batch, hidden, dtype=dtype)
            dc = rand(rng, batch, hidden, dtype=dtype)
            d1 = compiled.lstm_gates_backward(gates, c0, c, dh, dc)
            d2 = pyref.lstm_gates_backward(gates, c0, c, dh, dc)
            np.testing.assert_allclose(d1[0], d2[0], atol=tol, rtol=tol)
            np.testing.assert_allclose(d1[1], d2[1], atol=tol, rtol=tol)

    @pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-12), (np.float32, 1e-5)])
    def test_softmax_rows(self, dtype, tol):
        rng = np.random.default_rng(2)
        for _ in range(20):
            rows, cols = rng.integers(1, 20), rng.integers(1, 50)
            x = (rand(rng, rows, cols, dtype=dtype) * 5).astype(dtype)
            np.testing.assert_allclose(
                compiled.softmax_rows(x), pyref.softmax_rows(x), atol=tol, rtol=tol
            )

    def test_softmax_rows_with_neg_inf(self):
        x = np.array([[0.0, -np.inf, 1.0]])
        yc = compiled.softmax_rows(x)
        yp = pyref.softmax_rows(x)
        assert yc[0, 1] == 0.0
        np.testing.assert_allclose(yc, yp, atol=1e-15)

    @pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-12), (np.float32, 1e-5)])
    def test_softmax_rows_backward(self, dtype, tol):
        rng = np.random.default_rng(3)
        for _ in range(20):
            rows, cols = rng.integers(1, 20), rng.integers(1, 50)
            y = pyref.softmax_rows(rand(rng, rows, cols, dtype=dtype))
            dy = rand(rng, rows, cols, dtype=dtype)
            np.testing.assert_allclose(
                compiled.softmax_rows_backward(y, dy),
                pyref.softmax_rows_backward(y, dy),
                atol=tol, rtol=tol,
            )

    @pytest.mark.parametrize("grad_scale", [1.0, 0.37])
    def test_adam_update(self, grad_scale):
        rng = np.random.default_rng(6)
        for _ in range(20):
            n = int(rng.integers(1, 400))
            data = rand(rng, n)
            grad = rand(rng, n)
            m = rand(rng, n) * 0.01
            v = rand(rng, n) ** 2 * 0.01
            d2, g2, m2, v2 = data.copy(), grad.copy(), m.copy(), v.copy()
            args = (0.9, 0.998, 3.1e-4, 7.2e-10, grad_scale)
            pyref.adam_update(data, grad, m, v, *args)
            compiled.adam_update(d2, g2, m2, v2, *args)
            assert data.tobytes() == d2.tobytes()
            assert m.tobytes() == m2.tobytes()
            assert v.tobytes() == v2.tobytes()


class TestReferenceSemantics:
    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            x = rand(rng, rng.integers(1, 10), rng.integers(1, 30)) * 10
            y = pyref.softmax_rows(x)
            np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-12)
            assert (y >= 0).all()

    def test_lstm_cell_matches_direct_formula(self):
        rng = np.random.default_rng(5)
        pre = rand(rng, 2, 8)
        c0 = rand(rng, 2, 2)
        h, c, _ = pyref.lstm_gates_forward(pre, c0)
        sig = lambda v: 1.0 / (1.0 + np.exp(-v))
        i, f, g, o = pre[:, :2], pre[:, 2:4], pre[:, 4:6], pre[:, 6:]
        c_ref = sig(f) * c0 + sig(i) * np.tanh(g)
        h_ref = sig(o) * np.tanh(c_ref)
        np.testing.assert_allclose(c, c_ref, atol=1e-14)
        np.testing.assert_allclose(h, h_ref, atol=1e-14)

    def test_adam_matches_two_stage_bias_correction(self):
        # the fused step_size/eps_hat form equals the textbook
        # m_hat = m/(1-b1^t), v_hat = v/(1-b2^t) update algebraically
        rng = np.random.default_rng(7)
        beta1, beta2, lr, eps = 0.9, 0.998, 1e-3, 1e-9
        n = 64
        data = rand(rng, n)
        m = np.zeros(n)
        v = np.zeros(n)
        ref = data.copy()
        m_ref = np.zeros(n)
        v_ref = np.zeros(n)
        for t in range(1, 6):
            grad = rand(rng, n)
            step_size = lr * np.sqrt(1 - beta2 ** t) / (1 - beta1 ** t)
            eps_hat = eps * np.sqrt(1 - beta2 ** t)
            pyref.adam_update(data, grad, m, v, beta1, beta2, step_size, eps_hat)
            m_ref = beta1 * m_ref + (1 - beta1) * grad
            v_ref = beta2 * v_ref + (1 - beta2) * grad * grad
            m_hat = m_ref / (1 - beta1 ** t)
            v_hat = v_ref / (1 - beta2 ** t)
            ref -= lr * m_hat / (np.sqrt(v_hat) + eps)
            np.testing.assert_allclose(data, ref, rtol=1e-12, atol=1e-15)

    def test_adam_grad_scale_equals_prescaled_gradient(self):
        rng = np.random.default_rng(8)
        n = 32
        data = rand(rng, n); m = np.zeros(n); v = np.zeros(n)
        d2, m2, v2 = data.copy(), m.copy(), v.copy()
        grad = rand(rng, n)
        pyref.adam_update(data, grad, m, v, 0.9, 0.998, 1e-3, 1e-9, 0.25)
        pyref.adam_update(d2, grad * 0.25, m2, v2, 0.9, 0.998, 1e-3, 1e-9)
        np.testing.assert_allclose(data, d2, rtol=1e-14)
        np.testing.assert_allclose(m, m2, rtol=1e-14)
        np.testing.assert_allclose(v, v2, rtol=1e-14)


def test_backend_reports_choice():
    assert kernels.BACKEND in ("python", "compiled", "mixed")
