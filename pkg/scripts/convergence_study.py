"""Steady convergence sweep: fitted L1 order per polynomial degree.

    python3 scripts/convergence_study.py --geometry annulus --nodes 2000 5000 10000 20000 --degrees 3 4 5 6
    python3 scripts/convergence_study.py --geometry spherical_shell --nodes 10000 30000 80000 --degrees 3 4
"""

import argparse
import logging

from meshfree_heat.pointcloud import generate, spacing_for_nodes
from meshfree_heat.verify import run_convergence


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--geometry", default="annulus")
    p.add_argument("--nodes", type=int, nargs="+", default=[2000, 5000, 10000, 20000])
    p.add_argument("--degrees", type=int, nargs="+", default=[3, 4, 5, 6])
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    clouds = [generate(args.geometry, spacing_for_nodes(args.geometry, n)) for n in args.nodes]
    study = run_convergence(args.geometry, [], args.degrees, clouds=clouds)
    print("k  order  fit-residual  samples (dx, L1)")
    for rec in study.records:
        pairs = " ".join(f"({h:.4f}, {e:.2e})" for h, e in rec.samples)
        print(f"{rec.degree}  {rec.fitted_order:5.2f}  {rec.fit_residual:.3f}  {pairs}")


if __name__ == "__main__":
    main()
