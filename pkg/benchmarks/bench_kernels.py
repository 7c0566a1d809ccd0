"""Compare the compiled and pure-numpy LSTM recurrence kernels.

Run ``python benchmarks/bench_kernels.py`` (``--help`` for sizes).  For each
shape it times forward and backward passes of both backends, checks that
they agree, and prints one row per shape.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from sentipanel import kernels

SHAPES = [(20, 32, 16), (60, 32, 16), (140, 32, 32), (140, 64, 64)]  # (steps, batch, hidden)


def inputs(S: int, B: int, H: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    xw = rng.normal(scale=0.5, size=(S, B, 4 * H))
    wh = rng.normal(scale=0.3, size=(H, 4 * H))
    peep = rng.normal(scale=0.3, size=(3, H))
    lengths = rng.integers(S // 2, S + 1, B)
    mask = (np.arange(S)[:, None] < lengths[None, :]).astype(float)
    dhs = rng.normal(size=(S, B, H))
    return xw, wh, peep, mask, dhs


def bench(module, args, repeat: int) -> tuple[float, float, tuple]:
    xw, wh, peep, mask, dhs = args
    fwd = module.lstm_forward(xw, wh, peep, mask)
    bwd = module.lstm_backward(dhs, *fwd, wh, peep, mask)
    t_f = min(timeit.repeat(lambda: module.lstm_forward(xw, wh, peep, mask), number=1, repeat=repeat))
    t_b = min(timeit.repeat(lambda: module.lstm_backward(dhs, *fwd, wh, peep, mask), number=1, repeat=repeat))
    return t_f, t_b, (*fwd, *bwd)


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--repeat", type=int, default=5, help="timing repetitions; the minimum is reported")
    parser.add_argument("--shape", type=int, nargs=3, action="append", metavar=("STEPS", "BATCH", "HIDDEN"))
    args = parser.parse_args(argv)
    shapes = [tuple(s) for s in args.shape] if args.shape else SHAPES
    if kernels.compiled is None:
        print("compiled kernel not built; timing the numpy kernel only")
    print(f"active backend: {kernels.BACKEND}")
    header = f"{'steps':>5} {'batch':>5} {'hidden':>6} {'py fwd ms':>10} {'py bwd ms':>10}"
    if kernels.compiled is not None:
        header += f" {'cy fwd ms':>10} {'cy bwd ms':>10} {'speedup':>8} {'max |diff|':>11}"
    print(header)
    for S, B, H in shapes:
        data = inputs(S, B, H)
        pf, pb, ref = bench(kernels.python, data, args.repeat)
        row = f"{S:>5} {B:>5} {H:>6} {1e3 * pf:>10.3f} {1e3 * pb:>10.3f}"
        if kernels.compiled is not None:
            cf, cb, out = bench(kernels.compiled, data, args.repeat)
            diff = max(float(np.max(np.abs(a - b))) for a, b in zip(ref, out))
            row += f" {1e3 * cf:>10.3f} {1e3 * cb:>10.3f} {(pf + pb) / (cf + cb):>7.1f}x {diff:>11.2e}"
        print(row)


if __name__ == "__main__":
    main()
