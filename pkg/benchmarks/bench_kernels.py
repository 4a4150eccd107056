"""Numba versus numpy timings for the hot kernels.

    python benchmarks/bench_kernels.py [--grid 50,50,5] [--agents 100000] [--repeat 5]

Both backends are called directly (the LPMFG_NUMBA switch only picks the
default binding), their outputs are compared for exact equality, and the
best-of-``repeat`` wall time is reported.  Numba compile time is excluded
by a warm-up call.
"""
import argparse
import time

import numpy as np

from lpmfg import kernels
from lpmfg.chain import transitions_from_coefficients
from lpmfg.domain import MomentVector, sample_coefficients
from lpmfg.oracle import dp_from_coefficients, feedback_policy
from lpmfg.registry import random_problem


def best_of(fn, repeat):
    fn()  # warm-up (compiles the numba path)
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", default="50,50,5")
    ap.add_argument("--agents", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()
    t_count, x_count, a_count = (int(v) for v in args.grid.split(","))

    spec = random_problem(args.seed)
    grid = spec.make_grid(t_count, x_count, a_count)
    coeffs = sample_coefficients(spec, grid, MomentVector.zeros(grid, spec.d))
    tr = transitions_from_coefficients(coeffs, grid)
    pol = feedback_policy(dp_from_coefficients(coeffs, grid, tr))
    m0 = spec.initial_weights(grid)
    ps, pu, pd = tr.p_stay, tr.p_up, tr.p_down

    cases = {
        "dp_backward": (
            lambda: kernels.dp_backward_np(ps, pu, pd, coeffs.f, coeffs.g, grid.dt),
            lambda: kernels.dp_backward_nb(ps, pu, pd, coeffs.f, coeffs.g, grid.dt),
        ),
        "push_forward": (
            lambda: kernels.push_forward_np(m0, pol.stop, pol.ctrl, ps, pu, pd),
            lambda: kernels.push_forward_nb(m0, pol.stop, pol.ctrl, ps, pu, pd),
        ),
        f"simulate N={args.agents}": (
            lambda: kernels.simulate_np(np.uint64(args.seed), args.agents, m0, pol.stop, pol.ctrl,
                                        ps, pu, pd, coeffs.f, coeffs.g, grid.dt),
            lambda: kernels.simulate_nb(np.uint64(args.seed), args.agents, m0, pol.stop, pol.ctrl,
                                        ps, pu, pd, coeffs.f, coeffs.g, grid.dt),
        ),
    }

    print(f"grid {args.grid}, best of {args.repeat}")
    print(f"{'kernel':<22}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}  identical")
    for name, (np_fn, nb_fn) in cases.items():
        t_np, out_np = best_of(np_fn, args.repeat)
        t_nb, out_nb = best_of(nb_fn, args.repeat)
        print(f"{name:<22}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}  {same(out_np, out_nb)}")


if __name__ == "__main__":
    main()
