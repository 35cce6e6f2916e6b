#!/usr/bin/env python3
"""Ellipse sweep: spike drift toward the Robin minimum and force balance."""

import argparse
import time

from spikelab import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--a", type=float, default=2.0)
    ap.add_argument("--b", type=float, default=1.0)
    ap.add_argument("--h", type=float, default=1.0 / 64)
    ap.add_argument("--p", default="10,20,40,80")
    ap.add_argument("--out", default="out/ellipse")
    args = ap.parse_args()

    cfg = harness.RunConfig(
        domain_kind="ellipse",
        domain_params={"a": args.a, "b": args.b},
        h_list=[args.h],
        p_list=[float(t) for t in args.p.split(",")],
        out_dir=args.out,
    )
    t0 = time.time()
    sweep = harness.run_sweep(cfg)
    harness.emit_reports(sweep["records"], cfg.out_dir, branch=sweep["branch"], plots=sweep["plots"])
    print(f"finished in {time.time() - t0:.1f}s; reports in {cfg.out_dir}/")
    for d in next(r for r in sweep["records"] if r.identifier == "sweep-diagnostics").measured["entries"]:
        print(d)


if __name__ == "__main__":
    main()
