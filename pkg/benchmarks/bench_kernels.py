"""Compare the compiled kernel core against the numpy fallback, and check
that the evaluation phase scales linearly in the sample budget and the
mode count.

Usage: python3 benchmarks/bench_kernels.py [--n 256] [--points 2000]
"""

import argparse
import json

from qipfseg import kernels, pipeline


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=256, help="sample count")
    parser.add_argument("--d", type=int, default=3, help="feature dimension")
    parser.add_argument("--points", type=int, default=2000, help="evaluation points")
    parser.add_argument("--modes", type=int, default=12, help="base mode count")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print(f"active backend: {kernels.BACKEND}")
    backends = pipeline.bench_backends(args.n, args.d, args.points, args.seed)
    scaling = pipeline.bench_scaling(
        n_base=args.n // 2, m_base=args.modes, d=args.d,
        points=args.points // 4, seed=args.seed,
    )
    print(json.dumps({"backends": backends, "scaling": scaling}, indent=2))


if __name__ == "__main__":
    main()
