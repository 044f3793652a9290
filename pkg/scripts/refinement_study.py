"""Grid refinement of the recovered density, potential and ergodic constant."""

import argparse

from discount_mfg import vanishing_discount_sweep
from discount_mfg.acceptance import SCHEDULE
from discount_mfg.example import example_density, example_selected_limit, example_spec
from discount_mfg.grid import TorusGrid, l1_distance_to_function, sup_norm


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[128, 256, 512])
    args = ap.parse_args()
    spec = example_spec()
    print(f"{'n':>6} {'|m - m*|_L1':>14} {'|u - u*|_inf':>14} {'|lambda|':>12} {'seconds':>9}")
    for n in args.sizes:
        g = TorusGrid(n)
        erg = vanishing_discount_sweep(spec, g, SCHEDULE)
        secs = sum(r.wall_time for r in erg.sweep)
        print(f"{n:6d} {l1_distance_to_function(erg.m, example_density):14.6e} "
              f"{sup_norm(erg.u - example_selected_limit(g)):14.6e} {abs(erg.lam):12.4e} {secs:9.2f}")


if __name__ == "__main__":
    main()
