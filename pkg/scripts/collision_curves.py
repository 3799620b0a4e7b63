"""Empirical triple-collision frequencies against epsilon for a few fields.

Prints the sampled diagnostics next to each curve so the frequency trend
can be read against the classification.
"""
import argparse

import numpy as np

from collide.core import RankDiagonalField, identity_field
from collide.diagnostics import build_remark23_field, classify_field
from collide.sde import SimConfig, collision_stats, simulate

LADDER = (0.2, 0.1, 0.05, 0.02, 0.01)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=5000)
    ap.add_argument("--dt", type=float, default=1e-3)
    args = ap.parse_args()
    fields = {
        "identity": identity_field(3),
        "remark23": build_remark23_field(),
        "atlas 1,1,1": RankDiagonalField([1.0, 1.0, 1.0]),
        "atlas var 1,1,2": RankDiagonalField(np.sqrt([1.0, 1.0, 2.0])),
    }
    x0 = np.array([0.2, 0.1, 0.0])
    for name, f in fields.items():
        rep = classify_field(f, samples=2000, seed=0)
        ens = simulate(SimConfig(f, x0, dt=args.dt, T=1.0, paths=args.paths, seed=3, eps_ladder=LADDER))
        curve = ", ".join(f"{e:g}:{p:.3f}" for e, p, _ in collision_stats(ens).curve)
        print(f"{name:16s} R in [{rep.sampled_min_R:.3f}, {rep.sampled_max_R:.3f}] {rep.classification.value:20s} {curve}")


if __name__ == "__main__":
    main()
