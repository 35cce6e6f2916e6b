"""Run configuration, sweep orchestration, rate fitting, and report emission.

Configs are flat key=value text with dotted sections (diff-friendly, no
parser dependencies); reports are a JSON list of verification records, a
branch CSV with fixed columns, and self-contained SVG plots assembled by
string, so a browser is the only viewer needed.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kirchhoff_routh, lane_emden, liouville, mesh as mesh_mod, pohozaev


class ConfigError(ValueError):
    pass


def worker_count() -> int:
    env = os.environ.get("SPIKELAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


DEFAULT_P_LIST = [10.0, 15.0, 20.0, 30.0, 40.0, 60.0, 80.0]


@dataclass
class RunConfig:
    domain_kind: str = "disk"
    domain_params: dict = field(default_factory=lambda: {"r": 1.0})
    k: int = 1
    h_list: list = field(default_factory=lambda: [1.0 / 64])
    p_list: list = field(default_factory=lambda: list(DEFAULT_P_LIST))
    p_start: float = 10.0
    newton_tol: float = 1e-10
    linsolve_tol: float = 1e-10
    eigen_tol: float = 2e-6
    quadrature_tol: float = 1e-10
    out_dir: str = "out"
    checks: list = field(default_factory=lambda: ["all"])
    start_points: list | None = None
    spectrum_enabled: bool = True

    def validate(self) -> None:
        if not self.p_list:
            raise ConfigError("p list must not be empty")
        if sorted(self.p_list) != list(self.p_list):
            raise ConfigError("p list must be ascending")
        if sorted(self.h_list, reverse=True) != list(self.h_list):
            raise ConfigError("h list must be descending")
        for name in ("newton_tol", "linsolve_tol", "eigen_tol", "quadrature_tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    def domain(self) -> mesh_mod.DomainSpec:
        return mesh_mod.make_domain(self.domain_kind, **self.domain_params)


def _parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [_parse_value(t) for t in text.split(",") if t.strip()]
    if "/" in text:
        try:
            num, den = text.split("/")
            return float(num) / float(den)
        except ValueError:
            pass
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    cfg.domain_params = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"bad config line: {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        value = _parse_value(val)
        if key == "domain.kind":
            cfg.domain_kind = str(value)
        elif key.startswith("domain."):
            cfg.domain_params[key.split(".", 1)[1]] = value
        elif key == "run.k":
            cfg.k = int(value)
        elif key == "run.h_list":
            cfg.h_list = [float(v) for v in (value if isinstance(value, list) else [value])]
        elif key == "run.p_list":
            cfg.p_list = [float(v) for v in (value if isinstance(value, list) else [value])]
        elif key == "run.p_start":
            cfg.p_start = float(value)
        elif key == "run.start_points":
            cfg.start_points = value
        elif key == "run.spectrum":
            cfg.spectrum_enabled = bool(value) if isinstance(value, int) else value == "on"
        elif key == "tol.newton":
            cfg.newton_tol = float(value)
        elif key == "tol.linsolve":
            cfg.linsolve_tol = float(value)
        elif key == "tol.eigen":
            cfg.eigen_tol = float(value)
        elif key == "tol.quadrature":
            cfg.quadrature_tol = float(value)
        elif key == "out.dir":
            cfg.out_dir = str(value)
        elif key == "checks.enable":
            cfg.checks = value if isinstance(value, list) else [str(value)]
        else:
            raise ConfigError(f"unknown config key: {key}")
    if not cfg.domain_params and cfg.domain_kind == "disk":
        cfg.domain_params = {"r": 1.0}
    cfg.validate()
    return cfg


def load_config(path: str) -> RunConfig:
    with open(path) as f:
        return parse_config_text(f.read())


@dataclass
class VerificationRecord:
    identifier: str
    description: str
    target: float | str | None
    measured: dict
    tolerance: str
    passed: bool
    instrument: str = "2d"
    fitted_rate: float | None = None
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "identifier": self.identifier,
            "description": self.description,
            "target": self.target,
            "measured": self.measured,
            "tolerance": self.tolerance,
            "passed": bool(self.passed),
            "instrument": self.instrument,
            "fitted_rate": self.fitted_rate,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationRecord":
        return cls(
            identifier=d["identifier"],
            description=d["description"],
            target=d["target"],
            measured=d["measured"],
            tolerance=d["tolerance"],
            passed=d["passed"],
            instrument=d.get("instrument", "2d"),
            fitted_rate=d.get("fitted_rate"),
            notes=d.get("notes", ""),
        )


def fit_rate(x, y) -> tuple[float, float, float]:
    """Least-squares slope/intercept/R^2 of log|y| against log x.

    Zero or negative residuals are excluded (they carry no rate information);
    at least 4 usable points are required.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(y)
    if keep.sum() < 4:
        raise ValueError(f"need at least 4 positive residuals, have {int(keep.sum())}")
    lx = np.log(x[keep])
    ly = np.log(y[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


# ---------------------------------------------------------------- reports


def _svg_escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def svg_line_plot(series, title: str, xlabel: str, ylabel: str,
                  logx: bool = False, logy: bool = False,
                  width: int = 640, height: int = 440) -> str:
    """Self-contained SVG polyline plot (inline styles, no external refs).

    ``series`` is a list of (x array, y array, label).
    """
    ml, mr, mt, mb = 64, 16, 36, 48
    pw, ph = width - ml - mr, height - mt - mb

    def tx(v):
        return math.log10(v) if logx else v

    def ty(v):
        return math.log10(v) if logy else v

    xs_all = [tx(float(v)) for x, _, _ in series for v in x if (not logx or v > 0)]
    ys_all = [ty(float(v)) for _, y, _ in series for v in y if (not logy or v > 0) and np.isfinite(v)]
    if not xs_all or not ys_all:
        xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 - x0 < 1e-12:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(v):
        return ml + (tx(v) - x0) / (x1 - x0) * pw

    def py(v):
        return mt + ph - (ty(v) - y0) / (y1 - y0) * ph

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width/2:.1f}" y="20" text-anchor="middle" '
        f'style="font:14px sans-serif">{_svg_escape(title)}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>',
    ]
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4
        fy = y0 + (y1 - y0) * i / 4
        vx = 10**fx if logx else fx
        vy = 10**fy if logy else fy
        X = ml + pw * i / 4
        Y = mt + ph - ph * i / 4
        parts.append(f'<line x1="{X:.1f}" y1="{mt+ph}" x2="{X:.1f}" y2="{mt+ph+5}" stroke="#333"/>')
        parts.append(
            f'<text x="{X:.1f}" y="{mt+ph+18}" text-anchor="middle" '
            f'style="font:10px sans-serif">{vx:.3g}</text>'
        )
        parts.append(f'<line x1="{ml-5}" y1="{Y:.1f}" x2="{ml}" y2="{Y:.1f}" stroke="#333"/>')
        parts.append(
            f'<text x="{ml-8}" y="{Y+3:.1f}" text-anchor="end" '
            f'style="font:10px sans-serif">{vy:.3g}</text>'
        )
    for s_idx, (x, y, label) in enumerate(series):
        pts = [
            (px(float(a)), py(float(b)))
            for a, b in zip(x, y)
            if (not logx or a > 0) and (not logy or b > 0) and np.isfinite(b)
        ]
        if not pts:
            continue
        poly = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
        col = colors[s_idx % len(colors)]
        parts.append(f'<polyline points="{poly}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        for a, b in pts:
            parts.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2.5" fill="{col}"/>')
        parts.append(
            f'<text x="{ml+10}" y="{mt+16+14*s_idx}" style="font:11px sans-serif" '
            f'fill="{col}">{_svg_escape(str(label))}</text>'
        )
    parts.append(
        f'<text x="{ml+pw/2:.1f}" y="{height-10}" text-anchor="middle" '
        f'style="font:12px sans-serif">{_svg_escape(xlabel)}</text>'
    )
    parts.append(
        f'<text x="16" y="{mt+ph/2:.1f}" text-anchor="middle" '
        f'style="font:12px sans-serif" transform="rotate(-90 16 {mt+ph/2:.1f})">'
        f"{_svg_escape(ylabel)}</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts)


BRANCH_COLUMNS = ["p", "j", "x_j", "y_j", "u_max_j", "eps_j", "C_j", "energy", "residual"]


def branch_csv_text(branch: lane_emden.SolutionBranch) -> str:
    lines = [",".join(BRANCH_COLUMNS)]
    for row in branch.csv_rows():
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                              for c in BRANCH_COLUMNS))
    return "\n".join(lines) + "\n"


def emit_reports(records: list[VerificationRecord], out_dir: str,
                 branch: lane_emden.SolutionBranch | None = None,
                 plots: dict[str, str] | None = None) -> list[str]:
    """Write checks.json (+ branch.csv and SVG plots when given); returns paths."""
    if not records:
        raise ValueError("no verification records to emit")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    checks_path = os.path.join(out_dir, "checks.json")
    with open(checks_path, "w") as f:
        json.dump([r.to_dict() for r in records], f, indent=2, sort_keys=True)
        f.write("\n")
    paths.append(checks_path)
    if branch is not None:
        bp = os.path.join(out_dir, "branch.csv")
        with open(bp, "w") as f:
            f.write(branch_csv_text(branch))
        paths.append(bp)
    for name, svg in (plots or {}).items():
        sp = os.path.join(out_dir, name)
        with open(sp, "w") as f:
            f.write(svg)
        paths.append(sp)
    return paths


def load_records(path: str) -> list[VerificationRecord]:
    with open(path) as f:
        return [VerificationRecord.from_dict(d) for d in json.load(f)]


# ---------------------------------------------------------------- sweep


def run_sweep(cfg: RunConfig) -> dict:
    """KR search, continuation over the p list, per-p diagnostics, law fits.

    Returns {records, branch, plots, kr}; a failing stage is recorded and the
    sweep continues with whatever remains.
    """
    cfg.validate()
    records: list[VerificationRecord] = []
    dom = cfg.domain()
    h = cfg.h_list[-1] if cfg.h_list else 1.0 / 64
    msh = mesh_mod.build_mesh(dom, h)

    # Kirchhoff-Routh critical point
    if cfg.start_points:
        starts = np.asarray(cfg.start_points, dtype=float).reshape(-1, 2)
    else:
        if cfg.k != 1:
            raise ConfigError("k >= 2 sweeps need explicit run.start_points")
        cx, cy = dom.center()
        starts = np.array([[cx + 0.12, cy + 0.07]])
    try:
        kr_cfg = kirchhoff_routh.find_critical_point(msh, starts)
        records.append(
            VerificationRecord(
                "kr-critical-point",
                "Kirchhoff-Routh critical point found with nondegenerate Hessian",
                None,
                {
                    "points": kr_cfg.points.tolist(),
                    "grad_norm": float(np.linalg.norm(kr_cfg.grad)),
                    "margin": kr_cfg.nondeg_margin,
                    "classification": kr_cfg.classification,
                },
                "margin > 1e-6",
                kr_cfg.nondeg_margin > 1e-6,
            )
        )
    except Exception as exc:  # noqa: BLE001 - failure is itself the record
        records.append(
            VerificationRecord(
                "kr-critical-point", "Kirchhoff-Routh search", None,
                {"error": f"{type(exc).__name__}: {exc}"}, "completes", False,
            )
        )
        return {"records": records, "branch": None, "plots": {}, "kr": None}

    # continuation
    try:
        branch = lane_emden.continue_in_p(
            msh, kr_cfg, cfg.p_start, cfg.p_list[-1], record_at=cfg.p_list, tol=cfg.newton_tol
        )
    except Exception as exc:  # noqa: BLE001
        records.append(
            VerificationRecord(
                "continuation", "branch continuation over the p list", None,
                {"error": f"{type(exc).__name__}: {exc}"}, "completes", False,
            )
        )
        return {"records": records, "branch": None, "plots": {}, "kr": kr_cfg}

    # per-entry diagnostics (pure given the entry; safe to thread)
    prof = liouville.solve_w0()

    def diagnose(entry):
        out = {"p": entry.p}
        s = entry.spikes[0]
        theta = 8 * msh.h
        try:
            rep = pohozaev.pohozaev_residuals(msh, entry.u, entry.p, s.position, theta)
            out["pohozaev_q"] = float(np.max(np.abs(rep.q_residuals)))
            out["pohozaev_p"] = abs(rep.p_residual)
        except Exception as exc:  # noqa: BLE001
            out["pohozaev_error"] = f"{type(exc).__name__}: {exc}"
        try:
            gb = pohozaev.gradient_balance(entry)
            out["gradient_balance"] = [float(np.hypot(*r)) for r in gb.residuals]
            out["gradient_balance_ratio"] = gb.ratios
        except Exception as exc:  # noqa: BLE001
            out["gradient_balance_error"] = f"{type(exc).__name__}: {exc}"
        try:
            radius = min(10.0, 0.9 * entry.d / s.eps)
            rp = lane_emden.rescale_profile(entry, 0, radius, w0_profile=prof)
            out["sup_v_minus_w0"] = float(np.max(np.abs(rp.v - prof.w0(rp.radii)[:, None])))
        except Exception as exc:  # noqa: BLE001
            out["profile_error"] = f"{type(exc).__name__}: {exc}"
        return out

    with ThreadPoolExecutor(max_workers=worker_count()) as ex:
        diags = list(ex.map(diagnose, branch.entries))

    ps = np.array(branch.p_values)
    umax = np.array([e.spikes[0].u_max for e in branch.entries])
    psi1 = float(kr_cfg.psi_parts[0])
    pred = np.array([lane_emden.predicted_umax(p, psi1) for p in ps])
    peak_resid = np.abs(umax - pred)
    records.append(
        VerificationRecord(
            "peak-law",
            "peak height follows sqrt(e)(1 - log p/(p-1) + (4 pi Psi + 3 log 2 + 2)/p)",
            None,
            {"p": ps.tolist(), "u_max": umax.tolist(), "residual": peak_resid.tolist()},
            "informational",
            True,
            notes="2-D grid values; under-resolved beyond eps ~ h",
        )
    )
    try:
        slope, intercept, r2 = fit_rate(ps, peak_resid)
        records.append(
            VerificationRecord(
                "peak-law-rate", "log-log rate of the peak-law residual", None,
                {"slope": slope, "intercept": intercept, "r2": r2}, "informational", True,
            )
        )
    except ValueError as exc:
        records.append(
            VerificationRecord(
                "peak-law-rate", "log-log rate of the peak-law residual", None,
                {"error": str(exc)}, "informational", True,
            )
        )

    eps1 = np.array([e.spikes[0].eps for e in branch.entries])
    energy = np.array([e.energy for e in branch.entries])
    plots = {
        "u_max_vs_p.svg": svg_line_plot(
            [(ps, umax, "computed"), (ps, pred, "peak law")],
            "peak height against p", "p", "u_max",
        ),
        "peak_residual.svg": svg_line_plot(
            [(ps, np.maximum(peak_resid, 1e-300), "|residual|")],
            "peak-law residual", "p", "|u_max - prediction|", logx=True, logy=True,
        ),
        "energy_vs_p.svg": svg_line_plot(
            [(ps, energy, "p * grad-energy"), (ps, np.full_like(ps, 8 * np.pi * np.e), "8 pi e")],
            "energy against p", "p", "energy",
        ),
        "eps_vs_p.svg": svg_line_plot(
            [(ps, eps1, "eps_1")], "spike scale against p", "p", "eps", logy=True,
        ),
    }
    sup_v = [d.get("sup_v_minus_w0") for d in diags]
    if all(v is not None for v in sup_v):
        plots["profile_correction.svg"] = svg_line_plot(
            [(ps, np.array(sup_v), "sup |v - w0|")],
            "first-order profile correction", "p", "sup |v - w0|", logx=True, logy=True,
        )
    records.append(
        VerificationRecord(
            "sweep-diagnostics", "per-p diagnostics (Pohozaev, balance, profiles)", None,
            {"entries": diags}, "informational", True,
        )
    )
    return {"records": records, "branch": branch, "plots": plots, "kr": kr_cfg}
