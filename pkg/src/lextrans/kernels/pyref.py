"""Pure-numpy reference implementations of the hot kernels.

These define the semantics; the compiled extension must match them to
floating-point round-off. Both operate on contiguous 2-d arrays.
"""

from __future__ import annotations

import numpy as np


def lstm_gates_forward(pre: np.ndarray, c_prev: np.ndarray):
    """Elementwise LSTM update. `pre` is (B, 4H) as [i, f, g, o] blocks.

    Returns (h, c, gates) where `gates` holds the post-activation gate
    values in the same layout, kept for the backward pass.
    """
    hidden = pre.shape[1] // 4
    gates = np.empty_like(pre)
    gates[:, : 2 * hidden] = _expit(pre[:, : 2 * hidden])
    gates[:, 2 * hidden : 3 * hidden] = np.tanh(pre[:, 2 * hidden : 3 * hidden])
    gates[:, 3 * hidden :] = _expit(pre[:, 3 * hidden :])
    i = gates[:, :hidden]
    f = gates[:, hidden : 2 * hidden]
    g = gates[:, 2 * hidden : 3 * hidden]
    o = gates[:, 3 * hidden :]
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, gates


def lstm_gates_backward(gates: np.ndarray, c_prev: np.ndarray, c: np.ndarray,
                        dh: np.ndarray, dc: np.ndarray):
    """Adjoint of `lstm_gates_forward`: returns (dpre, dc_prev)."""
    hidden = gates.shape[1] // 4
    i = gates[:, :hidden]
    f = gates[:, hidden : 2 * hidden]
    g = gates[:, 2 * hidden : 3 * hidden]
    o = gates[:, 3 * hidden :]
    tc = np.tanh(c)
    dc_total = dc + dh * o * (1.0 - tc * tc)
    dpre = np.empty_like(gates)
    dpre[:, :hidden] = dc_total * g * i * (1.0 - i)
    dpre[:, hidden : 2 * hidden] = dc_total * c_prev * f * (1.0 - f)
    dpre[:, 2 * hidden : 3 * hidden] = dc_total * i * (1.0 - g * g)
    dpre[:, 3 * hidden :] = dh * tc * o * (1.0 - o)
    dc_prev = dc_total * f
    return dpre, dc_prev


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a 2-d array; -inf entries map to zero."""
    m = np.max(x, axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Adjoint of `softmax_rows` given its output `y`."""
    s = np.sum(y * dy, axis=1, keepdims=True)
    return y * (dy - s)


def adam_update(data: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
                beta1: float, beta2: float, step_size: float, eps_hat: float,
                grad_scale: float = 1.0) -> None:
    """One in-place Adam update on flat buffers.

    `step_size` and `eps_hat` carry the bias corrections, folded in by the
    caller: step_size = lr * sqrt(1 - beta2^t) / (1 - beta1^t) and
    eps_hat = eps * sqrt(1 - beta2^t). `grad_scale` multiplies the gradient
    first, so norm clipping needs no separate pass over the buffers.
    Updates data, m and v in place.
    """
    if grad_scale != 1.0:
        grad = grad * grad_scale
    np.multiply(m, beta1, out=m)
    m += (1.0 - beta1) * grad
    np.multiply(v, beta2, out=v)
    v += (1.0 - beta2) * (grad * grad)
    num = step_size * m
    den = np.sqrt(v)
    den += eps_hat
    num /= den
    data -= num


def _expit(x: np.ndarray) -> np.ndarray:
    # branch-free stable sigmoid: z = exp(-|x|) never overflows, and the
    # two select arms match the sign-split formulas bit for bit
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
