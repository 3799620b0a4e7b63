"""Compare Monte Carlo Bessel hitting tails with both kappa conventions.

Usage: python scripts/kappa_conventions.py [--paths 10000] [--dt 1e-4]
"""
import argparse
import json

from collide.bessel import BesselSimConfig, compare_conventions


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=10_000)
    ap.add_argument("--dt", type=float, default=1e-4)
    ap.add_argument("--y", type=float, default=1.0)
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rows = []
    for delta in (0.25, 0.5, 1.0, 1.5, 1.75):
        r = compare_conventions(BesselSimConfig(delta, args.y, args.dt, args.T, args.paths, seed=args.seed))
        rows.append(r)
        z = r["z_scores"]
        print(f"delta={delta:5.2f}  MC {r['tail']:.4f} +- {r['stderr']:.4f}  "
              f"z(paper)={z['paper_delta']:+8.1f}  z(classical)={z['classical_index']:+6.1f}  -> {r['match']}")
    print(json.dumps(rows, indent=1, default=float))


if __name__ == "__main__":
    main()
