"""Compare the compiled gap-fill and send-on-delta kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--T 20000] [--d 52] [--rate 0.3] [--repeats 7]
"""

import argparse
import statistics
import time

import numpy as np

from sensor_triage import _fallback

try:
    from sensor_triage import _kernels
except ImportError:
    _kernels = None


def bench(fn, args, repeats):
    fn(*args)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return 1e3 * statistics.median(times)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--T", type=int, default=20000)
    p.add_argument("--d", type=int, default=52)
    p.add_argument("--rate", type=float, default=0.3)
    p.add_argument("--repeats", type=int, default=7)
    args = p.parse_args(argv)

    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(np.cumsum(rng.standard_normal((args.T, args.d)), axis=0))
    mask = rng.random(x.shape) < args.rate
    mask[0] = True
    delta = np.full(args.d, 0.5)
    cand = np.ones(x.shape, dtype=bool)
    cases = {
        "forward_fill": (x, mask),
        "linear_fill": (x, mask),
        "send_on_delta": (x, delta, cand),
    }
    print(f"T={args.T} d={args.d} keep-rate={args.rate}")
    print(f"{'kernel':<15}{'python ms':>11}{'compiled ms':>13}{'speedup':>9}")
    for name, fargs in cases.items():
        py = bench(getattr(_fallback, name), fargs, args.repeats)
        if _kernels is None:
            print(f"{name:<15}{py:11.2f}{'n/a':>13}{'':>9}")
            continue
        co = bench(getattr(_kernels, name), fargs, args.repeats)
        same = np.array_equal(getattr(_fallback, name)(*fargs), getattr(_kernels, name)(*fargs))
        print(f"{name:<15}{py:11.2f}{co:13.2f}{py / co:8.1f}x{'' if same else '  MISMATCH'}")


if __name__ == "__main__":
    main()
