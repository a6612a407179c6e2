"""Time the compiled element kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--n 128] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from rkgfem import Domain, build_dof_map, build_uniform_mesh
from rkgfem import _kernels_py as py
from rkgfem.spaces import element_quadrature

try:
    from rkgfem import _kernels as cy
except ImportError:
    cy = None


def cases(n):
    dofs = build_dof_map(build_uniform_mesh(Domain.square(-8, 8), n, n), "nc")
    eq = element_quadrature(dofs)
    ed = np.ascontiguousarray(dofs.element_dofs, dtype=np.int_)
    table, cw = np.ascontiguousarray(eq.table), np.ascontiguousarray(eq.cw)
    rng = np.random.default_rng(0)
    a = rng.standard_normal(dofs.n_dofs) + 1j * rng.standard_normal(dofs.n_dofs)
    b = rng.standard_normal(dofs.n_dofs) + 1j * rng.standard_normal(dofs.n_dofs)
    w = rng.random((ed.shape[0], table.shape[0]))
    phase = rng.uniform(-np.pi, np.pi, (n + 1, n + 1))
    return {
        "gather_eval": lambda m: m.gather_eval(a, ed, table),
        "weighted_load": lambda m: m.weighted_load(w, a, ed, table, cw, dofs.n_dofs),
        "nonlinear_load": lambda m: m.nonlinear_load(a, b, ed, table, cw, dofs.n_dofs),
        "quartic_sum": lambda m: m.quartic_sum(a, ed, table, cw),
        "plaquette_winding": lambda m: m.plaquette_winding(phase),
    }, dofs.n_dofs


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--n", type=int, default=128, help="cells per side")
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    funcs, ndofs = cases(args.n)
    print(f"{args.n}x{args.n} nonconforming mesh, {ndofs} DOFs; best of {args.repeat}, ms per call")
    print(f"{'kernel':<20}{'numpy':>10}{'compiled':>10}{'speedup':>9}")
    for name, f in funcs.items():
        t_py = min(timeit.repeat(lambda: f(py), number=3, repeat=args.repeat)) / 3 * 1e3
        if cy is None:
            print(f"{name:<20}{t_py:>10.3f}{'-':>10}{'-':>9}")
            continue
        t_cy = min(timeit.repeat(lambda: f(cy), number=3, repeat=args.repeat)) / 3 * 1e3
        print(f"{name:<20}{t_py:>10.3f}{t_cy:>10.3f}{t_py / t_cy:>8.1f}x")


if __name__ == "__main__":
    main()
