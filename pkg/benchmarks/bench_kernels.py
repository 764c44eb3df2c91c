"""Benchmark the compiled kernels against the numpy reference.

Times conv1d, lstm, and gru forward/backward on paper-scale shapes and
prints per-call medians plus the speedup. Each pair is cross-checked for
numerical agreement first, so a silently divergent build fails loudly
before any timing runs.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats 50] [--length 60]
"""

import argparse
import statistics
import sys
import time

import numpy as np

from mbsent.kernels import _ref

try:
    from mbsent.kernels import _fast
except ImportError:
    print("compiled backend not available; build the extension first", file=sys.stderr)
    sys.exit(1)


def time_call(fn, args, repeats):
    fn(*args)  # warmup
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def check_agreement(name, ref_out, fast_out):
    ref_parts = ref_out if isinstance(ref_out, tuple) else (ref_out,)
    fast_parts = fast_out if isinstance(fast_out, tuple) else (fast_out,)
    for i, (r, f) in enumerate(zip(ref_parts, fast_parts)):
        if not np.allclose(r, f, atol=1e-12, rtol=0.0):
            raise SystemExit(f"{name}: output {i} diverges between backends")


def cases(length, dim, rng):
    # conv at the cnn stack's shape, recurrences at the lstm/gru shapes
    K, f = 128, 3
    X = rng.normal(size=(length, dim))
    W = rng.normal(size=(K, f, dim)) * 0.1
    b = rng.normal(size=K) * 0.1
    dY = rng.normal(size=(length - f + 1, K))
    yield "conv1d_forward", (X, W, b)
    yield "conv1d_backward", (X, W, dY)

    H = 128
    Wx = rng.normal(size=(dim, 4 * H)) * 0.1
    Wh = rng.normal(size=(H, 4 * H)) * 0.1
    bl = rng.normal(size=4 * H) * 0.1
    yield "lstm_forward", (X, Wx, Wh, bl)
    Hs, Cs, G = _ref.lstm_forward(X, Wx, Wh, bl)
    dH = rng.normal(size=(length, H))
    yield "lstm_backward", (X, Wx, Wh, Hs, Cs, G, dH)

    Hg = 64
    Wxg = rng.normal(size=(dim, 3 * Hg)) * 0.1
    Whg = rng.normal(size=(Hg, 3 * Hg)) * 0.1
    bg = rng.normal(size=3 * Hg) * 0.1
    yield "gru_forward", (X, Wxg, Whg, bg)
    Hsg, Gg = _ref.gru_forward(X, Wxg, Whg, bg)
    dHg = rng.normal(size=(length, Hg))
    yield "gru_backward", (X, Wxg, Whg, Hsg, Gg, dHg)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=50, help="timed calls per kernel")
    parser.add_argument("--length", type=int, default=60, help="sequence length")
    parser.add_argument("--dim", type=int, default=300, help="embedding dimension")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"shapes: L={args.length} d={args.dim}, median of {args.repeats} calls")
    print(f"{'kernel':16} {'numpy ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for name, call_args in cases(args.length, args.dim, rng):
        ref_fn = getattr(_ref, name)
        fast_fn = getattr(_fast, name)
        check_agreement(name, ref_fn(*call_args), fast_fn(*call_args))
        t_ref = time_call(ref_fn, call_args, args.repeats)
        t_fast = time_call(fast_fn, call_args, args.repeats)
        print(f"{name:16} {t_ref * 1e3:10.3f} {t_fast * 1e3:12.3f} {t_ref / t_fast:7.1f}x")


if __name__ == "__main__":
    main()
