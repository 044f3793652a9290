"""Vanishing-discount sweep on the worked example; prints the per-discount table."""

import argparse

from discount_mfg import RunConfig, load_config, vanishing_discount_sweep
from discount_mfg.grid import TorusGrid
from discount_mfg.io import sweep_rows, write_sweep_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="TOML run configuration")
    ap.add_argument("--n", type=int, help="override the grid size")
    ap.add_argument("--csv", help="also write the table here")
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.n:
        cfg = cfg.with_changes(grid=TorusGrid(args.n, cfg.grid.d))
    erg = vanishing_discount_sweep(cfg.problem, cfg.grid, cfg.sweep.schedule, cfg.solver,
                                   warm_start=cfg.sweep.warm_start)
    header, rows = sweep_rows(erg)
    print(" ".join(f"{h:>14}" for h in header))
    for row in rows:
        print(" ".join(f"{v:>14.6g}" for v in row))
    if args.csv:
        write_sweep_table(args.csv, erg)


if __name__ == "__main__":
    main()
