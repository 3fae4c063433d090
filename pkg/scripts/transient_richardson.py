"""Observed order of the transient annulus solution from three refinements.

Explicit Euler from a cold interior, probes on both axes, order from the mean
absolute change between successive refinements.
"""

import argparse
import math

import numpy as np

from meshfree_heat.pointcloud import average_spacing, generate, spacing_for_nodes
from meshfree_heat.rbf_operator import stencil_weights
from meshfree_heat.solver import TransientConfig, solve_transient
from meshfree_heat.verify import interpolate_at, richardson_order_probes


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nodes", type=int, nargs=3, default=[9111, 3035, 1073], help="finest first")
    p.add_argument("--degrees", type=int, nargs="+", default=[3, 4])
    p.add_argument("--dt", type=float, default=1e-6)
    p.add_argument("--time", type=float, default=0.02)
    p.add_argument("--alpha", type=float, default=1.0)
    args = p.parse_args()

    clouds = [generate("annulus", spacing_for_nodes("annulus", n)) for n in args.nodes]
    hs = [average_spacing(c) for c in clouds]
    ratio = math.sqrt(hs[2] / hs[0])
    r = 0.5 + 0.5 * np.arange(1, 8) / 8
    z = np.zeros_like(r)
    probes = np.concatenate([np.column_stack([r, z]), np.column_stack([z, r])])
    cfg = TransientConfig(args.alpha, args.dt, args.time, "euler")
    print(f"N={[len(c) for c in clouds]} dx={[round(h, 4) for h in hs]} ratio={ratio:.3f} steps={cfg.n_steps}")
    for k in args.degrees:
        vals = []
        for c in clouds:
            snap = solve_transient(c, stencil_weights(c, k), cfg, np.zeros(len(c)))[-1][1]
            vals.append(interpolate_at(c, snap, probes, k).values)
        print(f"k={k}: observed order {richardson_order_probes(*vals, ratio=ratio):.2f}")


if __name__ == "__main__":
    main()
