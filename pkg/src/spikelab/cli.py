"""Command-line interface: spikelab {green|kr|liouville|solve|sweep|pohozaev|spectrum|verify}."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import greens, harness, kirchhoff_routh, lane_emden, liouville, mesh as mesh_mod, pohozaev, spectrum


def parse_domain(text: str) -> mesh_mod.DomainSpec:
    """Parse 'disk,r=1' / 'ellipse,a=2,b=1' / 'annulus,r_in=0.5,r_out=1'."""
    parts = [t.strip() for t in text.split(",") if t.strip()]
    kind = parts[0]
    params = {}
    for part in parts[1:]:
        k, v = part.split("=", 1)
        params[k.strip()] = float(v)
    return mesh_mod.make_domain(kind, **params)


def parse_points(text: str) -> np.ndarray:
    pts = []
    for chunk in text.split(";"):
        x, y = chunk.split(",")
        pts.append([float(x), float(y)])
    return np.array(pts)


def parse_p_range(text: str) -> list[float]:
    if ":" in text:
        a, b = text.split(":")
        lo, hi = float(a), float(b)
        return [p for p in harness.DEFAULT_P_LIST if lo - 1e-9 <= p <= hi + 1e-9] or [lo, hi]
    return [float(t) for t in text.split(",")]


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=float)
    if out:
        with open(out, "w") as f:
            f.write(text + "\n")
    else:
        print(text)


def cmd_green(args) -> int:
    dom = parse_domain(args.domain)
    msh = mesh_mod.build_mesh(dom, args.h)
    x0 = np.array([float(t) for t in args.source.split(",")])
    gd = greens.regular_part(msh, x0)
    grad, hess = greens.robin_derivatives(msh, x0)
    _emit(
        {
            "source": x0.tolist(),
            "R": gd.R_value,
            "grad_R": grad.tolist(),
            "hess_R": hess.tolist(),
            "mesh": msh.summary(),
        },
        args.out,
    )
    return 0


def cmd_kr(args) -> int:
    dom = parse_domain(args.domain)
    msh = mesh_mod.build_mesh(dom, args.h)
    if args.start:
        starts = parse_points(args.start)
    else:
        cx, cy = dom.center()
        starts = np.array([[cx + 0.1, cy + 0.05]])
    if len(starts) != args.k:
        raise SystemExit(f"need {args.k} start points, got {len(starts)}")
    cfg = kirchhoff_routh.find_critical_point(msh, starts)
    _emit(
        {
            "k": cfg.k,
            "points": cfg.points.tolist(),
            "psi_parts": cfg.psi_parts.tolist(),
            "psi_total": cfg.psi_total,
            "grad": cfg.grad.tolist(),
            "hess": cfg.hess.tolist(),
            "nondeg_margin": cfg.nondeg_margin,
            "eigenvalues": cfg.eigenvalues.tolist(),
            "classification": cfg.classification,
        },
        args.out,
    )
    return 0


def cmd_liouville(args) -> int:
    prof = liouville.solve_w0()
    if args.dump_w0:
        with open(args.dump_w0, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["r", "w0", "w0_prime"])
            for r, wv, wp in zip(prof.r, prof.w0_values, prof.w0_prime_values):
                w.writerow([repr(r), repr(wv), repr(wp)])
        print(f"wrote {args.dump_w0}")
    if args.verify or not args.dump_w0:
        rec = liouville.universal_constants(profile=prof)
        _emit(rec, args.out)
        return 0 if all(v["rel_err"] < 0.01 for v in rec.values()) else 1
    return 0


def _solve_at(dom, h, k, p, tol):
    msh = mesh_mod.build_mesh(dom, h)
    cx, cy = dom.center()
    starts = np.array([[cx + 0.1, cy + 0.05]][:k])
    cfg = kirchhoff_routh.find_critical_point(msh, starts)
    branch = lane_emden.continue_in_p(msh, cfg, min(10.0, p), p, record_at=[p], tol=tol)
    return msh, cfg, branch


def cmd_solve(args) -> int:
    dom = parse_domain(args.domain)
    msh, cfg, branch = _solve_at(dom, args.h, args.k, args.p, args.tol)
    e = branch.at_p(args.p)
    _emit(
        {
            "p": e.p,
            "spikes": [
                {"position": s.position.tolist(), "u_max": s.u_max, "eps": s.eps, "C": s.C}
                for s in e.spikes
            ],
            "energy": e.energy,
            "residual": e.residual,
            "kr_points": cfg.points.tolist(),
        },
        args.out,
    )
    return 0


def cmd_sweep(args) -> int:
    dom = parse_domain(args.domain)
    p_list = parse_p_range(args.p)
    msh = mesh_mod.build_mesh(dom, args.h)
    cx, cy = dom.center()
    starts = np.array([[cx + 0.1, cy + 0.05]][: args.k])
    cfg = kirchhoff_routh.find_critical_point(msh, starts)
    branch = lane_emden.continue_in_p(msh, cfg, min(p_list[0], 10.0), p_list[-1],
                                      record_at=p_list, tol=args.tol)
    out = args.out or "branch.csv"
    with open(out, "w") as f:
        f.write(harness.branch_csv_text(branch))
    print(f"wrote {out} ({len(branch.entries)} entries)")
    return 0


def _read_branch_ps(path: str) -> list[float]:
    with open(path) as f:
        rows = list(csv.DictReader(f))
    return sorted({float(r["p"]) for r in rows})


def cmd_pohozaev(args) -> int:
    dom = parse_domain(args.domain)
    p_list = _read_branch_ps(args.branch)
    msh = mesh_mod.build_mesh(dom, args.h)
    cx, cy = dom.center()
    starts = np.array([[cx + 0.1, cy + 0.05]][: args.k])
    cfg = kirchhoff_routh.find_critical_point(msh, starts)
    branch = lane_emden.continue_in_p(msh, cfg, min(p_list[0], 10.0), p_list[-1],
                                      record_at=p_list, tol=args.tol)
    out = args.out or (os.path.splitext(args.branch)[0] + "_pohozaev.csv")
    with open(out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["p", "j", "theta", "q1_residual", "q2_residual", "p_residual",
                    "balance_x", "balance_y", "balance_ratio"])
        for e in branch.entries:
            gb = pohozaev.gradient_balance(e)
            for j, s in enumerate(e.spikes):
                rep = pohozaev.pohozaev_residuals(msh, e.u, e.p, s.position, 8 * msh.h)
                w.writerow([e.p, j + 1, rep.theta, repr(rep.q_residuals[0]),
                            repr(rep.q_residuals[1]), repr(rep.p_residual),
                            repr(gb.residuals[j][0]), repr(gb.residuals[j][1]),
                            repr(gb.ratios[j])])
    print(f"wrote {out}")
    return 0


def cmd_spectrum(args) -> int:
    dom = parse_domain(args.domain)
    p_list = _read_branch_ps(args.branch) if args.branch else [args.p]
    msh = mesh_mod.build_mesh(dom, args.h)
    cx, cy = dom.center()
    starts = np.array([[cx + 0.1, cy + 0.05]][: args.k])
    cfg = kirchhoff_routh.find_critical_point(msh, starts)
    branch = lane_emden.continue_in_p(msh, cfg, min(p_list[0], 10.0), p_list[-1],
                                      record_at=p_list, tol=args.tol)
    rows = []
    for e in branch.entries:
        rep = spectrum.analyse_entry(e, m=args.m, tol=args.eigen_tol)
        rows.append(
            {
                "p": e.p,
                "eigenvalues": rep.eigenvalues.tolist(),
                "residuals": rep.residuals.tolist(),
                "morse_index": rep.morse_index,
                "nondeg_margin": rep.nondeg_margin,
                "giants": rep.giants,
                "projections": rep.projections,
                "coefficients": rep.coefficients,
                "notes": rep.notes,
            }
        )
    _emit(rows, args.out)
    return 0


def cmd_verify(args) -> int:
    from . import verify

    cfg = harness.load_config(args.config) if args.config else harness.RunConfig()
    out_dir = args.out or cfg.out_dir
    records = verify.acceptance_records(full=not args.quick)
    plots = {}
    branch = None
    if not args.no_sweep:
        sweep = harness.run_sweep(cfg)
        records.extend(sweep["records"])
        plots = sweep["plots"]
        branch = sweep["branch"]
    harness.emit_reports(records, out_dir, branch=branch, plots=plots)
    failed = [r for r in records if not r.passed]
    for r in records:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.identifier}: {r.description}")
    print(f"{len(records) - len(failed)}/{len(records)} checks passed; reports in {out_dir}/")
    return 0 if not failed else 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="spikelab",
                                 description="Lane-Emden spike asymptotics laboratory")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, domain=True):
        if domain:
            sp.add_argument("--domain", default="disk,r=1")
        sp.add_argument("--h", type=lambda s: eval(s, {"__builtins__": {}}), default=1.0 / 64,
                        help="grid spacing (fractions like 1/128 accepted)")
        sp.add_argument("--k", type=int, default=1)
        sp.add_argument("--tol", type=float, default=1e-10)
        sp.add_argument("--out", default=None)

    sp = sub.add_parser("green", help="Robin data at a source point")
    common(sp)
    sp.add_argument("--source", required=True, help="x,y")
    sp.set_defaults(func=cmd_green)

    sp = sub.add_parser("kr", help="Kirchhoff-Routh critical point search")
    common(sp)
    sp.add_argument("--start", default=None, help="x,y[;x,y...]")
    sp.set_defaults(func=cmd_kr)

    sp = sub.add_parser("liouville", help="bubble constants and w0 table")
    sp.add_argument("--verify", action="store_true")
    sp.add_argument("--dump-w0", default=None, metavar="FILE.csv")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_liouville)

    sp = sub.add_parser("solve", help="solve at a single exponent")
    common(sp)
    sp.add_argument("--p", type=float, required=True)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("sweep", help="continuation sweep, writes branch.csv")
    common(sp)
    sp.add_argument("--p", default="10:80", help="range a:b or comma list")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("pohozaev", help="identity residuals along a branch")
    common(sp)
    sp.add_argument("--branch", required=True)
    sp.set_defaults(func=cmd_pohozaev)

    sp = sub.add_parser("spectrum", help="bottom spectrum along a branch")
    common(sp)
    sp.add_argument("--branch", default=None)
    sp.add_argument("--p", type=float, default=10.0)
    sp.add_argument("--m", type=int, default=4)
    sp.add_argument("--eigen-tol", type=float, default=2e-6)
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("verify", help="run the acceptance suite")
    sp.add_argument("--config", default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--quick", action="store_true", help="skip the slowest criteria")
    sp.add_argument("--no-sweep", action="store_true", help="acceptance records only")
    sp.set_defaults(func=cmd_verify)

    args = ap.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
