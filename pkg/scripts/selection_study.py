"""Selection value over the theta family versus the value reached by the solver."""

import argparse

from discount_mfg import selection_functional, vanishing_discount_sweep
from discount_mfg.acceptance import SCHEDULE
from discount_mfg.example import SELECTED_THETA, example_selection_value, example_spec, selection_study
from discount_mfg.grid import TorusGrid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--theta-grid", type=int, default=65)
    ap.add_argument("--n", type=int, default=256, help="grid size for the solver run (0 skips it)")
    args = ap.parse_args()
    study = selection_study(args.theta_grid)
    print(f"{'theta':>10} {'value':>14} {'d/dtheta (half)':>16}")
    for t, v, d in zip(study["theta"], study["value"], study["derivative_half"]):
        print(f"{t:10.6f} {v:14.8f} {d:16.8f}")
    print(f"argmin theta = {study['argmin']:.6f} (grid step {study['step']:.3g})")
    if args.n:
        erg = vanishing_discount_sweep(example_spec(), TorusGrid(args.n), SCHEDULE)
        value = selection_functional(erg.u, erg.m)
        oracle = example_selection_value(SELECTED_THETA)
        print(f"solver value {value:.8f}, oracle minimum {oracle:.8f}, difference {abs(value - oracle):.2e}")


if __name__ == "__main__":
    main()
