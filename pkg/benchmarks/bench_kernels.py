"""Compare the compiled and pure-Python pointwise kernels.

Usage: python3 benchmarks/bench_kernels.py [--points 32] [--repeat 5]

Prints the best-of-``repeat`` wall time of each kernel for both backends on
a ``points^3`` grid (matrix pairs: ``points^3`` pairs) and the speed-up.
"""

import argparse
import timeit

import numpy as np

from pstokes import _kernels_py

try:
    from pstokes import _ckernels
except ImportError:  # pragma: no cover - extension not built
    _ckernels = None


def _cases(n_nodes: int, rng):
    G = rng.standard_normal((3, 3, n_nodes))
    M = rng.standard_normal((3, 3, 3, n_nodes))
    A = rng.standard_normal((n_nodes, 3, 3))
    B = rng.standard_normal((n_nodes, 3, 3))
    return {
        "weight": lambda m: m.weight(G, 0.1, -0.05),
        "stress": lambda m: m.stress(G, 0.1, 1.8),
        "contract": lambda m: m.contract(G, M),
        "monotonicity_terms": lambda m: m.monotonicity_terms(A, B, 0.1, 1.8),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--points", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    cases = _cases(args.points**3, rng)
    print(f"{'kernel':<20}{'python [ms]':>14}{'cython [ms]':>14}{'speed-up':>10}")
    for name, call in cases.items():
        t_py = min(timeit.repeat(lambda: call(_kernels_py), number=1, repeat=args.repeat))
        if _ckernels is None:
            print(f"{name:<20}{1e3 * t_py:>14.2f}{'n/a':>14}{'':>10}")
            continue
        t_c = min(timeit.repeat(lambda: call(_ckernels), number=1, repeat=args.repeat))
        print(f"{name:<20}{1e3 * t_py:>14.2f}{1e3 * t_c:>14.2f}{t_py / t_c:>10.1f}")


if __name__ == "__main__":
    main()
