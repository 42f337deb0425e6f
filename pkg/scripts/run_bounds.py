"""Bound reports for a small family of tables.

    python scripts/run_bounds.py [--grid 32] [--horizon 24]
"""
import argparse
import time

from convex_billiards import (
    ScanConfig,
    SupportCurve,
    bound_report_thm13,
    bound_report_thm14,
    build_classC,
    ellipse,
)

H_TABLES = {
    "circle": [(0, 1.0, 0.0)],
    "h=1+0.01cos3": [(0, 1.0, 0.0), (3, 0.01, 0.0)],
    "h=1+0.05cos3": [(0, 1.0, 0.0), (3, 0.05, 0.0)],
    "h=1+0.1cos2": [(0, 1.0, 0.0), (2, 0.1, 0.0)],
}
H2_TABLES = {
    "ellipse 2x1": ellipse(2.0, 1.0),
    "h^2=1+0.05cos6": build_classC([(0, 1.0, 0.0), (6, 0.05, 0.0)]),
    "h^2=1+0.02cos10": build_classC([(0, 1.0, 0.0), (10, 0.02, 0.0)]),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=32)
    ap.add_argument("--horizon", type=int, default=24)
    args = ap.parse_args()
    cfg = ScanConfig(args.grid, args.grid, args.horizon)
    print(f"{'table':<18} {'bound':>5} {'rhs':>12} {'estimate':>12} {'band':>10}  verdict")
    for name, terms in H_TABLES.items():
        t0 = time.perf_counter()
        r = bound_report_thm13(SupportCurve(tuple(terms)), cfg)
        print(f"{name:<18} {r.theorem:>5} {r.rhs:12.5g} {r.estimate:12.5g} {r.band:10.3g}  "
              f"{r.verdict} ({time.perf_counter() - t0:.1f}s)")
    for name, spec in H2_TABLES.items():
        t0 = time.perf_counter()
        r = bound_report_thm14(spec, cfg)
        print(f"{name:<18} {r.theorem:>5} {r.rhs:12.5g} {r.estimate:12.5g} {r.band:10.3g}  "
              f"{r.verdict} ({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
