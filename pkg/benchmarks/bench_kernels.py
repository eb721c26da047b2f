"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from rivercontrol import _kernels
from rivercontrol import sparse_grid as sg
from rivercontrol.numerics import UniformGrid1D
from rivercontrol.reservoir import ReservoirParams, _bounds
from rivercontrol.sediment import SedimentParams, _operator_data, default_dt


def cases():
    rng = np.random.default_rng(0)
    v = rng.normal(size=2001)
    xq = rng.uniform(0, 1, 2001)
    h = 1 / 2000

    n = 5000
    sub, sup = rng.normal(size=n - 1), rng.normal(size=n - 1)
    diag, rhs = 4.0 + rng.uniform(size=n), rng.normal(size=n)

    sp = SedimentParams()
    sgrid = UniformGrid1D(0.0, 1.0, 301)
    dt = default_dt(sgrid.spacing)
    foot, chi, repl = _operator_data(sp, sgrid, dt)

    rp = ReservoirParams()
    rgrid = UniformGrid1D(0.0, 1.0, 101)
    Qn, lo, hi = _bounds(rp, rgrid)
    fy = np.ascontiguousarray(rp.f(rgrid.nodes))
    rates = np.ascontiguousarray(rp.chain.rates)

    grid = sg.build(3, 11)
    a = rng.normal(size=grid.n_points)
    x = rng.uniform(size=(20000, 3))

    def sweeps(k):
        phi = np.zeros((len(Qn), rgrid.n_nodes))
        k.reservoir_sweeps(phi, Qn, rp.env_flow * rp.scale, rp.weight, lo, hi, fy, rates,
                           rp.discount, rgrid.spacing, 0.0, 5, 5, 1e-6)

    def iterate(k):
        k.sediment_iterate(np.zeros(sgrid.n_nodes), foot, chi, repl, sgrid.spacing, dt,
                           sp.intensity, sp.discount, 0.0, 200)

    return {
        "weno5_derivatives (2001 nodes)": lambda k: k.weno5_derivatives(v, h),
        "weno3_interpolate (2001 queries)": lambda k: k.weno3_interpolate(v, 0.0, h, xq),
        "thomas (5000 unknowns)": lambda k: k.thomas(sub, diag, sup, rhs, 1e-14),
        "reservoir_sweeps (61 x 101, 5 sweeps)": sweeps,
        "sediment_iterate (301 nodes, 200 its)": iterate,
        "sg_evaluate (6017 pts, 20000 queries)": lambda k: k.sg_evaluate(x, a, grid.levels, grid.offsets, len(grid.levels)),
        "sg_basis_coo (6017 pts, 20000 queries)": lambda k: k.sg_basis_coo(x, grid.levels, grid.offsets, len(grid.levels)),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    found = _kernels.backends()
    names = [b for b in ("compiled", "python") if b in found]
    print(f"{'kernel':<42}" + "".join(f"{b + ' [s]':>14}" for b in names) + ("   speedup" if len(names) == 2 else ""))
    for label, fn in cases().items():
        times = [min(timeit.repeat(lambda: fn(found[b]), number=1, repeat=args.repeat)) for b in names]
        row = f"{label:<42}" + "".join(f"{t:>14.5f}" for t in times)
        if len(times) == 2:
            row += f"{times[1] / times[0]:>10.1f}x"
        print(row)


if __name__ == "__main__":
    main()
