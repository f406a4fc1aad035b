"""Time the numba kernels against their pure-numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5] [--size 100000]

Each kernel is warmed up once (numba compiles on first call), then the
best of ``--repeat`` runs is reported together with the maximum absolute
difference between the two backends.
"""

import argparse
import time

import numpy as np

from qstbc.channel import alphas, sample_channels
from qstbc.eigen import (build_projectors, eigenvalues_quadratic,
                         hermitian_eig_oracle, structured_matrix)
from qstbc.specfun import (bessel_k0_array, noncentral_gamma_cdf_array,
                           reg_lower_incomplete_gamma_array)
from qstbc.streams import stream


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=100_000)
    args = ap.parse_args(argv)

    rng = stream(2024, "bench")
    n = args.size
    x = rng.gamma(4.0, size=n)
    h8 = sample_channels(8, 2, n, rng)
    proj = build_projectors(8)
    mats = np.stack([structured_matrix(a)
                     for a in alphas(sample_channels(16, 1, 2000, rng))])

    cases = {
        "P(a, x), a=8": lambda b: reg_lower_incomplete_gamma_array(8.0, x, b),
        "K0(x)": lambda b: bessel_k0_array(x + 1e-3, b),
        "noncentral CDF": lambda b: noncentral_gamma_cdf_array(4.0, 6.0, x, b),
        "quadratic forms n_T=8": lambda b: eigenvalues_quadratic(h8, proj, b),
        "Jacobi 2000 x 8x8": lambda b: hermitian_eig_oracle(mats, backend=b)[0],
    }
    print(f"{'kernel':<24}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}"
          f"{'max |diff|':>14}")
    for name, fn in cases.items():
        t_nb, out_nb = best_of(lambda: fn("numba"), args.repeat)
        t_np, out_np = best_of(lambda: fn("numpy"), args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_nb) - np.asarray(out_np))))
        print(f"{name:<24}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>10.1f}"
              f"{diff:>14.2e}")


if __name__ == "__main__":
    main()
