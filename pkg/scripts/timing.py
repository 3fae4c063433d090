"""Wall-clock cost of coefficient generation, preconditioning and solve.

Prints the log-log slope against N at fixed degree and against k at fixed N.
"""

import argparse

import numpy as np

from meshfree_heat.pointcloud import generate, spacing_for_nodes
from meshfree_heat.solver import steady_problem


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--geometry", default="annulus")
    p.add_argument("--nodes", type=int, nargs="+", default=[5000, 10000, 20000, 40000])
    p.add_argument("--degree", type=int, default=4)
    p.add_argument("--degree-sweep-nodes", type=int, default=20000)
    args = p.parse_args()

    print("N       k  coefficients  preconditioning  solve")
    ns, tn = [], []
    for n in args.nodes:
        c = generate(args.geometry, spacing_for_nodes(args.geometry, n))
        _, t = steady_problem(c, args.degree)
        ns.append(len(c))
        tn.append(t.coefficients)
        print(f"{len(c):<7} {args.degree}  {t.coefficients:12.3f}  {t.preconditioning:15.3f}  {t.solve:5.3f}")
    print(f"slope of coefficient time vs N: {np.polyfit(np.log(ns), np.log(tn), 1)[0]:.2f}")

    c = generate(args.geometry, spacing_for_nodes(args.geometry, args.degree_sweep_nodes))
    ks, tk = range(2, 7), []
    for k in ks:
        _, t = steady_problem(c, k)
        tk.append(t.coefficients)
        print(f"{len(c):<7} {k}  {t.coefficients:12.3f}  {t.preconditioning:15.3f}  {t.solve:5.3f}")
    print(f"exponent of coefficient time vs k: {np.polyfit(np.log(list(ks)), np.log(tk), 1)[0]:.2f}")


if __name__ == "__main__":
    main()
