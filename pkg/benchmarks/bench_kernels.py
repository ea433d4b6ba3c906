"""Benchmark the numba kernels against the pure-numpy fallback.

Runs every hot kernel on attack-sized workloads, times both backends after a
warmup pass (the first numba call pays JIT compilation), and cross-checks
that the two implementations agree to float tolerance.

Usage::

    python3 benchmarks/bench_kernels.py [--repeats N] [--batch N]
"""

import argparse
import time

import numpy as np

from hsia import _kernels_np as np_impl

try:
    from hsia import _kernels_nb as nb_impl
except ImportError:
    nb_impl = None


def timeit(fn, repeats):
    """Median wall time over ``repeats`` calls, after one warmup call."""
    fn()
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def rel_diff(a, b):
    """Max |a - b| scaled by the magnitude of the reference output.

    Both backends run float32, so large reductions (e.g. parameter gradients
    summed over a batch) legitimately differ in the last bits; the comparison
    has to be relative to the values being accumulated.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not a.size:
        return 0.0
    scale = max(float(np.abs(a).max()), 1.0)
    return float(np.abs(a - b).max()) / scale


def build_cases(rng, batch):
    """(name, kwargs) for each kernel, sized like one attack chunk."""
    x = rng.random((batch, 20, 11, 11), dtype=np.float32)
    w1 = rng.standard_normal((16, 20, 3, 3)).astype(np.float32) * 0.1
    b1 = np.zeros(16, dtype=np.float32)
    gy1 = rng.standard_normal((batch, 16, 9, 9)).astype(np.float32)
    h1 = rng.random((batch, 16, 9, 9), dtype=np.float32)
    w2 = rng.standard_normal((32, 16, 3, 3)).astype(np.float32) * 0.1
    b2 = np.zeros(32, dtype=np.float32)
    gy2 = rng.standard_normal((batch, 32, 7, 7)).astype(np.float32)
    grad = rng.standard_normal((batch, 20, 11, 11)).astype(np.float32)
    pool_in = rng.random((batch, 16, 8, 8), dtype=np.float32)

    cases = [
        ("conv2d_forward 20ch", "conv2d_forward",
         dict(x=x, w=w1, b=b1, stride=1)),
        ("conv2d_forward 16ch", "conv2d_forward",
         dict(x=h1, w=w2, b=b2, stride=1)),
        ("conv2d_input_gradient", "conv2d_input_gradient",
         dict(gy=gy1, w=w1, in_hw=(11, 11), stride=1)),
        ("conv2d_param_gradients", "conv2d_param_gradients",
         dict(x=h1, gy=gy2, kernel_hw=(3, 3), stride=1)),
        ("maxpool2d_forward", "maxpool2d_forward",
         dict(x=pool_in, size=2, stride=2)),
        ("box_filter_mean w3", "box_filter_mean",
         dict(field=grad, window=3)),
        ("box_filter_mean w11", "box_filter_mean",
         dict(field=grad, window=11)),
        ("downsample_mean f4", "downsample_mean",
         dict(field=grad, factor=4)),
        ("upsample_nearest", "upsample_nearest",
         dict(field=grad[:, :, :3, :3], target_hw=(11, 11))),
    ]
    return cases


def first_output(result):
    return result[0] if isinstance(result, tuple) else result


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=20,
                        help="timed calls per kernel (median reported)")
    parser.add_argument("--batch", type=int, default=256,
                        help="patches per batch (one attack chunk)")
    args = parser.parse_args()

    if nb_impl is None:
        print("numba is not importable; nothing to compare against.")
        print("Timing the pure-numpy backend only.")

    rng = np.random.default_rng(0)
    cases = build_cases(rng, args.batch)

    print("=" * 78)
    print(f"kernel benchmark: batch {args.batch}, median of {args.repeats} runs")
    print("=" * 78)
    header = f"{'kernel':26s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s} {'rel diff':>10s}"
    print(header)
    print("-" * len(header))

    worst = 0.0
    for label, op, kwargs in cases:
        np_fn = getattr(np_impl, op)
        t_np = timeit(lambda: np_fn(**kwargs), args.repeats)
        if nb_impl is None:
            print(f"{label:26s} {t_np * 1e3:8.2f}ms {'-':>10s} {'-':>8s} {'-':>10s}")
            continue
        nb_fn = getattr(nb_impl, op)
        t_nb = timeit(lambda: nb_fn(**kwargs), args.repeats)
        diff = rel_diff(first_output(np_fn(**kwargs)),
                        first_output(nb_fn(**kwargs)))
        worst = max(worst, diff)
        print(f"{label:26s} {t_np * 1e3:8.2f}ms {t_nb * 1e3:8.2f}ms "
              f"{t_np / t_nb:7.2f}x {diff:10.2e}")

    if nb_impl is not None:
        print("-" * len(header))
        ok = worst <= 1e-5
        print(f"backend agreement: worst relative diff {worst:.2e} "
              f"({'OK' if ok else 'MISMATCH'})")
        raise SystemExit(0 if ok else 1)


if __name__ == "__main__":
    main()
