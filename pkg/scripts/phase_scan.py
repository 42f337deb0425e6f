"""Classify a (psi, delta) grid and print a coarse text picture of the verdicts.

    python scripts/phase_scan.py curves/h_cos2_01.curve [--grid 48] [--horizon 24] [--genfun S]

``.`` marks m-candidates, ``#`` cells that are certified not to be, ``?`` the rest.
"""
import argparse

import numpy as np

from convex_billiards import ScanConfig, estimate_delta_measure, load_curve
from convex_billiards.maxorbit import MCANDIDATE, NOTM

GLYPH = {MCANDIDATE: ".", NOTM: "#"}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("curve")
    ap.add_argument("--grid", type=int, default=48)
    ap.add_argument("--horizon", type=int, default=24)
    ap.add_argument("--genfun", choices=("S", "L"), default="S")
    args = ap.parse_args()
    curve = load_curve(args.curve).build()
    res = estimate_delta_measure(curve, "full", ScanConfig(args.grid, args.grid, args.horizon,
                                                           genfun=args.genfun))
    v = res.verdict.reshape(args.grid, args.grid)      # rows: psi, columns: delta
    # delta on the vertical axis, pi at the top
    for j in range(args.grid - 1, -1, -1):
        print("".join(GLYPH.get(int(x), "?") for x in v[:, j]))
    print(f"estimate = {res.estimate:.6g}  band = {res.band:.3g}  total = {res.grid.total:.6g}")
    print("counts:", res.counts())
    print("delta rows with a NotM cell:", int(np.any(v == NOTM, axis=0).sum()))


if __name__ == "__main__":
    main()
