"""How large can the minimum distance of a realizable design be?

For each PCF family we search for the largest coverage radius whose implied
power spectrum stays non-negative, then express it relative to the
densest-packing radius.

    python demos/coverage_search.py --n 500 --dims 2 3 4
"""
import argparse

from covdesign import DesignSpec, max_radius, reference_radius, search_design

parser = argparse.ArgumentParser()
parser.add_argument("--n", type=int, default=500)
parser.add_argument("--dims", type=int, nargs="+", default=[2, 3])
parser.add_argument("--p0", type=float, nargs="+", default=[1.0, 1.3, 1.6, 2.0])
args = parser.parse_args()

print(f"{'d':>2} {'family':>9} {'r_min/rbar':>10} {'rho':>6} {'p0':>5}")
for d in args.dims:
    spec = DesignSpec(args.n, d)
    rbar = reference_radius(spec)
    for family in ("pds", "sfsd", "proposed"):
        rep = search_design(spec, family, p0_grid=args.p0)
        p = rep.params
        print(f"{d:>2} {family:>9} {p.r_min / rbar:>10.4f} {rep.rho:>6.3f} {p.p0:>5.2f}")
    print(f"   densest packing radius r_max = {max_radius(spec) / rbar:.4f} rbar")

# The stair family buys room with a peak just beyond r_min: its spectrum has a
# shallower dip near the first Bessel minimum, so r_min can grow before P < 0.
