"""Hot numeric kernels with a compiled fast path and a numpy fallback.

The binding is picked once at import time. Set LEXTRANS_KERNELS to
"python" to force the numpy reference everywhere, "compiled" to require
the extension for every kernel (ImportError if missing), or "auto" (the
default) to take the faster implementation of each kernel, falling back
silently to numpy when the extension is missing.

Under "auto" the LSTM forward stays on numpy even when the extension is
present: numpy evaluates exp/tanh over whole arrays with vectorized
loops, while the compiled kernel pays for a scalar libm call per
element. The backward kernels, row softmax, and the Adam update win
compiled: several fold on the short attention rows and small batches of
the Colors/SCAN presets, and for Adam at every size. The one trade-off
is the forward softmax on very wide rows, where numpy pulls ahead by
~1.4x — a regime whose step cost is dominated by the recurrences, so the
compiled binding stays. benchmarks/bench_kernels.py measures both sides
of every kernel; BACKEND reports "mixed" for this split.
"""

from __future__ import annotations

import os

from . import pyref

_choice = os.environ.get("LEXTRANS_KERNELS", "auto").lower()
if _choice not in ("auto", "python", "compiled"):
    raise ValueError(
        f"LEXTRANS_KERNELS must be auto, python or compiled, got {_choice!r}"
    )

_ext = None
if _choice in ("auto", "compiled"):
    try:
        from . import _ckernels as _ext
    except ImportError:
        if _choice == "compiled":
            raise ImportError(
                "LEXTRANS_KERNELS=compiled but the lextrans.kernels._ckernels "
                "extension is not built; reinstall the package or use auto/python"
            ) from None

if _ext is None:
    BACKEND = "python"
    _fast = pyref
    _forward = pyref
elif _choice == "compiled":
    BACKEND = "compiled"
    _fast = _ext
    _forward = _ext
else:
    BACKEND = "mixed"
    _fast = _ext
    _forward = pyref

lstm_gates_forward = _forward.lstm_gates_forward
lstm_gates_backward = _fast.lstm_gates_backward
softmax_rows = _fast.softmax_rows
softmax_rows_backward = _fast.softmax_rows_backward
adam_update = _fast.adam_update

__all__ = [
    "BACKEND",
    "lstm_gates_forward",
    "lstm_gates_backward",
    "softmax_rows",
    "softmax_rows_backward",
    "adam_update",
    "pyref",
]
