"""Time the pure-NumPy kernels against the compiled extension.

The kernels package binds each hot function independently ("auto" policy):
whichever implementation wins at training-relevant shapes is the one the
model actually runs.  This script produces the measurements behind that
choice.  Typical result on one CPU core: NumPy's vectorized exp/tanh beats
the compiled scalar loops on the wide lstm_gates_forward, while the
compiled kernels win the backward pass, row softmax, and the fused Adam
update, where fusion and in-place arithmetic dominate.

Run:  python3 benchmarks/bench_kernels.py [--repeats N] [--loops N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lextrans.kernels import BACKEND, _ext, pyref

# (batch rows, hidden) pairs seen in training: Colors desk scale uses tiny
# batches over a wide recurrence; the base presets use large batches.
LSTM_SHAPES = [(5, 128), (5, 512), (64, 256), (256, 512)]
SOFTMAX_SHAPES = [(35, 9), (320, 48), (2560, 64)]
ADAM_SIZES = [4_096, 262_144, 1_048_576]


def best_of(fn, repeats: int, loops: int) -> float:
    """Median over `repeats` of the mean call time across `loops` calls, in us."""
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(loops):
            fn()
        samples.append((time.perf_counter() - start) / loops * 1e6)
    return float(np.median(samples))


def bench_pair(name: str, shape, make_args, call, repeats: int, loops: int, rows: list) -> None:
    ref_args = make_args()
    ref = best_of(lambda: call(pyref, *ref_args), repeats, loops)
    if _ext is not None:
        ext_args = make_args()
        ext = best_of(lambda: call(_ext, *ext_args), repeats, loops)
        winner = "python" if ref <= ext else "compiled"
        rows.append((name, str(shape), f"{ref:9.1f}", f"{ext:9.1f}", f"{ref / ext:5.2f}x", winner))
    else:
        rows.append((name, str(shape), f"{ref:9.1f}", "-", "-", "python"))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7, help="timing repetitions (median)")
    parser.add_argument("--loops", type=int, default=20, help="calls per repetition")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    rows: list[tuple] = []

    for b, h in LSTM_SHAPES:
        pre = rng.standard_normal((b, 4 * h))
        c_prev = rng.standard_normal((b, h))
        bench_pair(
            "lstm_gates_forward", (b, 4 * h),
            lambda pre=pre, c_prev=c_prev: (pre.copy(), c_prev.copy()),
            lambda mod, p, c: mod.lstm_gates_forward(p, c),
            args.repeats, args.loops, rows,
        )
    for b, h in LSTM_SHAPES:
        pre = rng.standard_normal((b, 4 * h))
        c_prev = rng.standard_normal((b, h))
        h_out, c_out, gates = pyref.lstm_gates_forward(pre, c_prev)
        dh = rng.standard_normal((b, h))
        dc = rng.standard_normal((b, h))
        bench_pair(
            "lstm_gates_backward", (b, 4 * h),
            lambda g=gates, cp=c_prev, c=c_out, dh=dh, dc=dc:
                (g.copy(), cp.copy(), c.copy(), dh.copy(), dc.copy()),
            lambda mod, g, cp, c, dh, dc: mod.lstm_gates_backward(g, cp, c, dh, dc),
            args.repeats, args.loops, rows,
        )
    for shape in SOFTMAX_SHAPES:
        x = rng.standard_normal(shape)
        bench_pair(
            "softmax_rows", shape,
            lambda x=x: (x.copy(),),
            lambda mod, x: mod.softmax_rows(x),
            args.repeats, args.loops, rows,
        )
        y = pyref.softmax_rows(x)
        dy = rng.standard_normal(shape)
        bench_pair(
            "softmax_rows_backward", shape,
            lambda y=y, dy=dy: (y.copy(), dy.copy()),
            lambda mod, y, dy: mod.softmax_rows_backward(y, dy),
            args.repeats, args.loops, rows,
        )
    for size in ADAM_SIZES:
        data = rng.standard_normal(size)
        grad = rng.standard_normal(size)
        m = rng.standard_normal(size) * 1e-2
        v = rng.random(size) * 1e-3  # second moment is nonnegative by construction
        bench_pair(
            "adam_update", (size,),
            lambda d=data, g=grad, m=m, v=v: (d.copy(), g.copy(), m.copy(), v.copy()),
            lambda mod, d, g, m, v: mod.adam_update(d, g, m, v, 0.9, 0.998, 1e-3, 1e-9, 0.77),
            args.repeats, args.loops, rows,
        )

    print(f"kernel backend in this environment: {BACKEND}")
    if _ext is None:
        print("compiled extension not built; showing reference timings only\n")
    headers = ("kernel", "shape", "python us", "compiled us", "py/ext", "winner")
    widths = [max(len(h), *(len(str(r[i])) for r in rows)) for i, h in enumerate(headers)]
    print("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    print("  ".join("-" * w for w in widths))
    for row in rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(row, widths)))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
