"""Benchmark the compiled convolution/pooling kernels against the numpy fallback.

Runs both backends on the conv-stack shapes the default pipeline actually
uses, checks they agree to 1e-12 first, then reports best-of-N wall times
and the speedup.  Works with the fallback alone when the extension is not
built (the speedup column just disappears).

    python3 benchmarks/bench_kernels.py [--batch 32] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from synthlabel.kernels import pyops

try:
    from synthlabel.kernels import _convops
except ImportError:  # extension not built: report the fallback alone
    _convops = None


def _best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(batch: int, rng: np.random.Generator):
    """One case per hot call in the default three-layer stack (32x32 input)."""
    layers = [
        ("L1 3->8 k5 32x32", (batch, 3, 32, 32), (8, 3, 5, 5)),
        ("L2 8->16 k3 14x14", (batch, 8, 14, 14), (16, 8, 3, 3)),
        ("L3 16->32 k3 6x6", (batch, 16, 6, 6), (32, 16, 3, 3)),
    ]
    for name, xshape, kshape in layers:
        x = rng.standard_normal(xshape)
        kern = rng.standard_normal(kshape)
        out = pyops.conv2d_forward(x, kern, 1)
        g = rng.standard_normal(out.shape)
        kh, kw = kshape[2], kshape[3]
        h, w = xshape[2], xshape[3]
        yield f"conv2d_forward      {name}", "conv2d_forward", (x, kern, 1)
        yield (
            f"conv2d_backward_in  {name}",
            "conv2d_backward_input",
            (g, kern, 1, h, w),
        )
        yield (
            f"conv2d_backward_ker {name}",
            "conv2d_backward_kernels",
            (x, g, 1, kh, kw),
        )

    x = rng.standard_normal((batch, 8, 28, 28))
    out, idx = pyops.maxpool2d_forward(x, 2)
    g = rng.standard_normal(out.shape)
    yield "maxpool2d_forward   8ch 28x28 p2", "maxpool2d_forward", (x, 2)
    yield "maxpool2d_backward  8ch 28x28 p2", "maxpool2d_backward", (g, idx, 2, 28, 28)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    if _convops is None:
        print("compiled extension not built; timing the numpy fallback only\n")
    header = f"{'kernel / shape':<40} {'python':>10}"
    if _convops is not None:
        header += f" {'compiled':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))

    for label, fname, call_args in _cases(args.batch, rng):
        py_fn = getattr(pyops, fname)
        t_py = _best_of(lambda: py_fn(*call_args), args.repeats)
        line = f"{label:<40} {t_py * 1e3:>8.2f}ms"
        if _convops is not None:
            c_fn = getattr(_convops, fname)
            want, got = py_fn(*call_args), c_fn(*call_args)
            # summation order differs between BLAS and the C loops, so agree
            # to last-ulp accumulation error rather than bit-exactly
            if fname == "maxpool2d_forward":  # (out, idx) pair
                ok = np.allclose(want[0], got[0], rtol=1e-10, atol=1e-12) and np.array_equal(
                    want[1], got[1]
                )
            else:
                ok = np.allclose(want, got, rtol=1e-10, atol=1e-12)
            if not ok:
                print(f"{label}: BACKENDS DISAGREE")
                return 1
            t_c = _best_of(lambda: c_fn(*call_args), args.repeats)
            line += f" {t_c * 1e3:>8.2f}ms {t_py / t_c:>7.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
