"""Maximum local condition number versus degree and refinement (annulus)."""

import argparse

from meshfree_heat.pointcloud import generate, spacing_for_nodes
from meshfree_heat.rbf_operator import local_condition_numbers


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--geometry", default="annulus")
    p.add_argument("--nodes", type=int, nargs="+", default=[2000, 5000, 10000, 20000])
    p.add_argument("--degrees", type=int, nargs="+", default=[2, 3, 4, 5, 6])
    args = p.parse_args()
    clouds = [generate(args.geometry, spacing_for_nodes(args.geometry, n)) for n in args.nodes]
    print("k  " + "  ".join(f"N={len(c):>6}" for c in clouds))
    for k in args.degrees:
        print(f"{k}  " + "  ".join(f"{local_condition_numbers(c, k).max():8.2e}" for c in clouds))


if __name__ == "__main__":
    main()
