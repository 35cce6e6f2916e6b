#!/usr/bin/env python3
"""Disk sweep: continuation over the default p grid, diagnostics, and plots.

Writes branch.csv, checks.json, and SVG plots into the output directory.
"""

import argparse
import time

from spikelab import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=1.0 / 64)
    ap.add_argument("--p", default="10,15,20,30,40,60,80")
    ap.add_argument("--out", default="out/disk")
    args = ap.parse_args()

    cfg = harness.RunConfig(
        domain_kind="disk",
        domain_params={"r": 1.0},
        h_list=[args.h],
        p_list=[float(t) for t in args.p.split(",")],
        out_dir=args.out,
    )
    t0 = time.time()
    sweep = harness.run_sweep(cfg)
    paths = harness.emit_reports(
        sweep["records"], cfg.out_dir, branch=sweep["branch"], plots=sweep["plots"]
    )
    print(f"finished in {time.time() - t0:.1f}s; wrote:")
    for p in paths:
        print(" ", p)


if __name__ == "__main__":
    main()
