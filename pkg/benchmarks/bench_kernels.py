"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--n 2048] [--repeat 3]

Both kernel modules are imported directly, so the HHMM_DISABLE_JIT flag
does not matter here.  JIT compilation is excluded by a warm-up call.
"""

import argparse
import time

import numpy as np

from helicase_hmm import kernels_jit, kernels_np
from helicase_hmm.clamped import path_tables
from helicase_hmm.decoder import _codes, _model_tables
from helicase_hmm.simulator import sample_read, read_rng, synthetic_model


def _best_of(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--n", type=int, default=2048, help="samples per read")
    ap.add_argument("--beam-width", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    model = synthetic_model(args.k, 0.1, seed=0)
    read = sample_read(model, read_rng(0, 0), target_samples=args.n)
    x = read.signal
    tables = path_tables(model, read.truth_kmers)
    mt = _model_tables(model)
    a = _codes(read.truth_bases)
    b = _codes(read.truth_bases[::2] + read.truth_bases[1::2])

    def cases(kern):
        alpha, logz = kern.clamped_forward(x, *tables)
        beta = kern.clamped_backward(x, *tables)
        return {
            "clamped_forward": lambda: kern.clamped_forward(x, *tables),
            "clamped_backward": lambda: kern.clamped_backward(x, *tables),
            "accumulate": lambda: kern.accumulate(x, alpha, beta, logz, *tables),
            f"mgbs W={args.beam_width}": lambda: kern.mgbs(x, *mt, model.k, args.beam_width),
            "nw_align": lambda: kern.nw_align(a, b, 1.0, -1.0, -1.0),
        }

    jit_cases, np_cases = cases(kernels_jit), cases(kernels_np)
    print(f"k={args.k} N={args.n} M={read.truth_kmers.size}")
    print(f"{'kernel':<20}{'numba (s)':>12}{'numpy (s)':>12}{'speedup':>10}")
    for name in jit_cases:
        tj = _best_of(jit_cases[name], args.repeat)
        tn = _best_of(np_cases[name], args.repeat)
        print(f"{name:<20}{tj:>12.4f}{tn:>12.4f}{tn / tj:>9.1f}x")


if __name__ == "__main__":
    main()
