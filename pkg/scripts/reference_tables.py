"""Interpolated temperatures at the shipped reference points, next to the tabulated values."""

import argparse

from meshfree_heat.pointcloud import generate, spacing_for_nodes
from meshfree_heat.solver import steady_problem
from meshfree_heat.verify import interpolate_at, load_reference_table


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--geometry", choices=["ellipse_in_circle", "sphere_in_cuboid"], default="ellipse_in_circle")
    p.add_argument("--nodes", type=int, default=20000)
    p.add_argument("--degree", type=int, default=6)
    args = p.parse_args()
    cloud = generate(args.geometry, spacing_for_nodes(args.geometry, args.nodes))
    sol, _ = steady_problem(cloud, args.degree)
    table = load_reference_table(args.geometry)
    got = interpolate_at(cloud, sol, table.points, args.degree).values
    print(f"N={len(cloud)} k={args.degree}")
    for pt, ref, val in zip(table.points, table.values, got):
        print(" ".join(f"{c:6.3f}" for c in pt), f"{ref:.8e}  {val:.8e}  {abs(val - ref):.2e}")


if __name__ == "__main__":
    main()
