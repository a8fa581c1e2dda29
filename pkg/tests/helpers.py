"""Shared test utilities: numeric gradient checking."""

from __future__ import annotations

import numpy as np

from lextrans.autodiff import Tensor


def numeric_grad(f, t: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar-valued `f()` w.r.t. `t`.

    `f` must recompute the forward pass from the tensors' current data,
    so perturbing `t.data` in place changes its value.
    """
    grad = np.zeros_like(t.data)
    flat = t.data.ravel()
    gflat = grad.ravel()
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        fp = float(f().data)
        flat[k] = orig - eps
        fm = float(f().data)
        flat[k] = orig
        gflat[k] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise |a - n| / max(1, |a|, |n|)."""
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))
