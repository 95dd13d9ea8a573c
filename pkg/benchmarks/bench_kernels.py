"""Time the rollout kernel: compiled extension vs numpy fallback.

    python benchmarks/bench_kernels.py [--samples 64] [--horizon 20] [--repeat 5]

Prints the best-of-``repeat`` wall time per call for each available backend
and the speedup. Both backends are checked for agreement first.
"""

import argparse
import timeit

import numpy as np

from cvmpc import kernels
from cvmpc.kinematics import JointState, load_chain


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--horizon", type=int, default=20)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--number", type=int, default=10)
    args = p.parse_args(argv)

    chain = load_chain()
    rng = np.random.default_rng(0)
    js = JointState(chain.pose("home"), rng.normal(scale=0.3, size=7), np.zeros(7))
    controls = rng.normal(scale=2.0, size=(args.samples, args.horizon, 7))

    backends = ["numpy"] + (["cython"] if kernels.BACKEND == "cython" else [])
    outs = {b: kernels.rollout_kinematics(chain, js, controls, 0.02, b) for b in backends}
    if len(backends) == 2:
        err = max(float(np.max(np.abs(a - b))) for a, b in zip(outs["numpy"], outs["cython"]))
        print(f"max backend difference: {err:.2e}")

    times = {}
    for b in backends:
        t = timeit.repeat(lambda: kernels.rollout_kinematics(chain, js, controls, 0.02, b),
                          repeat=args.repeat, number=args.number)
        times[b] = min(t) / args.number
        print(f"{b:>7s}: {1e3 * times[b]:8.3f} ms per rollout batch "
              f"(N={args.samples}, H={args.horizon})")
    if len(times) == 2:
        print(f"speedup: {times['numpy'] / times['cython']:.1f}x")
    else:
        print("compiled kernels not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
