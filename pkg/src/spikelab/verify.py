"""The acceptance suite: each numbered check with its pinned tolerance.

Instruments are chosen per check and recorded on every result.  Checks whose
targets live beyond what a fixed 2-D grid can represent (the spike scale is
e^(-p/4), six orders below h = 1/256 already at p = 40) are measured with the
rescaled radial oracle on the disk; the 2-D solver is cross-validated against
the oracle in the resolved regime and used directly wherever the check names
it.  A failing record is an honest outcome, not a crash: the suite always
returns the complete list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import (
    greens,
    harness,
    kirchhoff_routh,
    lane_emden,
    liouville,
    mesh as mesh_mod,
    pohozaev,
    radial,
    spectrum,
)
from .harness import VerificationRecord, fit_rate

SQRT_E = math.sqrt(math.e)
EIGHT_PI_E = 8 * np.pi * np.e


@dataclass
class AcceptanceContext:
    """Shared lazily-built artifacts (meshes, branches, oracle solutions)."""

    _cache: dict = field(default_factory=dict)

    def oracle(self, p: float) -> radial.RadialSolution:
        key = ("oracle", p)
        if key not in self._cache:
            self._cache[key] = radial.solve_radial(p)
        return self._cache[key]

    def w0(self) -> liouville.LiouvilleProfile:
        if "w0" not in self._cache:
            self._cache["w0"] = liouville.solve_w0()
        return self._cache["w0"]

    def disk_mesh(self, n: int) -> mesh_mod.GridMesh:
        key = ("disk-mesh", n)
        if key not in self._cache:
            self._cache[key] = mesh_mod.build_mesh(mesh_mod.make_domain("disk", r=1.0), 1.0 / n)
        return self._cache[key]

    def disk_kr(self, n: int) -> kirchhoff_routh.SpikeConfig:
        key = ("disk-kr", n)
        if key not in self._cache:
            self._cache[key] = kirchhoff_routh.psi_eval(self.disk_mesh(n), [(0.0, 0.0)])
        return self._cache[key]

    def disk_entry(self, n: int, p: float) -> lane_emden.BranchEntry:
        """Branch entry at (h = 1/n, p) via the mesh ladder.

        The coarsest mesh runs p-continuation (with its arclength fallback
        through the under-resolution folds); finer meshes Newton-solve from
        the interpolated next-coarser solution.  The ladder lands on the
        same discrete solution as pure p-continuation (checked to 2e-15 at
        h = 1/128, p = 20) at a fraction of the factorization cost.
        """
        key = ("disk-entry", n, p)
        if key not in self._cache:
            if n <= 64:
                branch = self._cache.get("disk-branch-64")
                if branch is None or not any(abs(q - p) < 1e-9 for q in branch.p_values):
                    branch = lane_emden.continue_in_p(
                        self.disk_mesh(64), self.disk_kr(64), 10.0, max(40.0, p),
                        record_at=[10.0, 20.0, 40.0],
                    )
                    self._cache["disk-branch-64"] = branch
                self._cache[key] = branch.at_p(p)
            else:
                coarse = self.disk_entry(n // 2, p)
                msh = self.disk_mesh(n)
                guess = coarse.mesh.interp(coarse.u, msh.coords, fill=0.0)
                u, info = lane_emden.newton_solve(msh, guess, p)
                d = lane_emden.default_spike_radius(msh, np.zeros((1, 2)))
                self._cache[key] = lane_emden.make_entry(msh, u, p, 1, d, info["residual"])
        return self._cache[key]

    def ellipse_mesh(self, n: int) -> mesh_mod.GridMesh:
        key = ("ellipse-mesh", n)
        if key not in self._cache:
            self._cache[key] = mesh_mod.build_mesh(
                mesh_mod.make_domain("ellipse", a=2.0, b=1.0), 1.0 / n
            )
        return self._cache[key]

    def ellipse_entry(self, n: int, p: float) -> lane_emden.BranchEntry:
        key = ("ellipse-entry", n, p)
        if key not in self._cache:
            if n <= 64:
                branch = self._cache.get("ellipse-branch-64")
                if branch is None:
                    msh = self.ellipse_mesh(64)
                    cfg = kirchhoff_routh.find_critical_point(msh, [(0.25, 0.12)])
                    branch = lane_emden.continue_in_p(
                        msh, cfg, 10.0, 80.0, record_at=[20.0, 40.0, 80.0]
                    )
                    self._cache["ellipse-branch-64"] = branch
                self._cache[key] = branch.at_p(p)
            else:
                coarse = self.ellipse_entry(n // 2, p)
                msh = self.ellipse_mesh(n)
                guess = coarse.mesh.interp(coarse.u, msh.coords, fill=0.0)
                u, info = lane_emden.newton_solve(msh, guess, p)
                pts = np.array([s.position for s in coarse.spikes])
                d = lane_emden.default_spike_radius(msh, pts)
                self._cache[key] = lane_emden.make_entry(msh, u, p, 1, d, info["residual"])
        return self._cache[key]


def _rec(identifier, description, target, measured, tolerance, passed,
         instrument, rate=None, notes="") -> VerificationRecord:
    return VerificationRecord(identifier, description, target, measured, tolerance,
                              bool(passed), instrument, rate, notes)


# ---------------------------------------------------------------- criteria


def criterion_1_universal_constants(ctx: AcceptanceContext) -> list[VerificationRecord]:
    rec = liouville.universal_constants(1e-12, profile=ctx.w0())
    out = []
    spec = {
        "mass": ("bubble mass equals 8 pi", 1e-8),
        "log_moment": ("log moment equals 12 pi log 2", 1e-6),
        "flux_integral": ("rescaled forcing flux integral equals 12", 1e-8),
        "w0_flux": ("r w0'(r) at r = 1e3 equals 12", 1e-2),
        "w0_boundary_integral": ("normal-derivative circle integral equals 24 pi", 1e-2),
    }
    for key, (desc, tol) in spec.items():
        entry = rec[key]
        out.append(
            _rec(
                f"C1-{key}", desc, entry["target"],
                {"value": entry["measured"], "rel_err": entry["rel_err"]},
                f"rel {tol:g}", entry["rel_err"] <= tol, "quadrature/ode",
            )
        )
    return out


def criterion_2_green_oracle(ctx: AcceptanceContext) -> list[VerificationRecord]:
    pts = [np.array(q) for q in
           [(0.0, 0.0), (0.5, 0.0), (0.3, 0.2), (-0.45, 0.15), (0.1, -0.55), (0.55, -0.2)]]
    errs = {}
    for n in (64, 128, 256):
        msh = ctx.disk_mesh(n)
        errs[n] = max(
            abs(greens.regular_part(msh, q).R_value - greens.unit_disk_R(q)) for q in pts
        )
    order = math.log2(errs[64] / errs[256]) / 2.0
    return [
        _rec(
            "C2-accuracy", "Robin values match the disk closed form at h = 1/256",
            0.0, {"errors": {str(k): v for k, v in errs.items()}},
            "max err <= 5e-4 at |x| <= 0.6", errs[256] <= 5e-4, "2d-greens",
        ),
        _rec(
            "C2-order", "Robin convergence order over h in {1/64, 1/128, 1/256}",
            ">= 1.5", {"order": order}, "order >= 1.5", order >= 1.5, "2d-greens",
            rate=order,
        ),
    ]


def criterion_3_kr_certification(ctx: AcceptanceContext) -> list[VerificationRecord]:
    msh = ctx.disk_mesh(128)
    cfg = kirchhoff_routh.find_critical_point(msh, [(0.3, 0.2)])
    dist = float(np.hypot(*cfg.points[0]))
    eigs = cfg.eigenvalues
    eig_err = float(np.max(np.abs(eigs - 1.0 / np.pi)) * np.pi)
    return [
        _rec(
            "C3-location", "disk critical point sits within 2h of the center",
            0.0, {"point": cfg.points[0].tolist(), "distance": dist, "2h": 2 * msh.h},
            "|x| <= 2h", dist <= 2 * msh.h, "2d-kr",
        ),
        _rec(
            "C3-hessian", "Hessian eigenvalues within 3% of 1/pi",
            1.0 / np.pi, {"eigenvalues": eigs.tolist(), "max_rel_err": eig_err},
            "rel 3e-2", eig_err <= 0.03, "2d-kr",
        ),
    ]


def criterion_4_solver_vs_oracle(ctx: AcceptanceContext) -> list[VerificationRecord]:
    out = []
    for p in (10.0, 20.0, 40.0):
        e = ctx.disk_entry(256, p)
        orc = ctx.oracle(p)
        rel = abs(e.spikes[0].u_max - orc.u0) / orc.u0
        eps_ratio = e.spikes[0].eps / orc.eps0
        note = ""
        if orc.eps0 < 2 * e.mesh.h:
            note = (
                f"spike scale eps = {orc.eps0:.2e} below the grid h = "
                f"{e.mesh.h:.2e}; a fixed grid cannot represent the peak"
            )
        out.append(
            _rec(
                f"C4-p{int(p)}", f"2-D peak height matches the radial oracle at p = {int(p)}",
                orc.u0,
                {"u_max_2d": e.spikes[0].u_max, "u_max_oracle": orc.u0,
                 "rel_err": rel, "eps_ratio_2d_over_oracle": eps_ratio},
                "rel 1e-3 at h = 1/256", rel <= 1e-3, "2d-vs-oracle", notes=note,
            )
        )
    return out


def criterion_5_peak_law(ctx: AcceptanceContext) -> list[VerificationRecord]:
    ps = [20.0, 30.0, 40.0, 60.0, 80.0]
    resid = []
    for p in ps:
        orc = ctx.oracle(p)
        resid.append(abs(orc.u0 - lane_emden.predicted_umax(p, 0.0)))
    slope, intercept, r2 = fit_rate(ps, resid)
    return [
        _rec(
            "C5-rate", "peak-law residual decays with log-log slope <= -1.5",
            "<= -1.5", {"p": ps, "residuals": resid, "slope": slope, "r2": r2},
            "slope <= -1.5", slope <= -1.5, "radial-oracle", rate=slope,
        ),
        _rec(
            "C5-p80", "peak-law residual at p = 80 below 2e-3",
            0.0, {"residual": resid[-1]}, "abs 2e-3", resid[-1] <= 2e-3, "radial-oracle",
        ),
    ]


def criterion_6_energy_mass(ctx: AcceptanceContext) -> list[VerificationRecord]:
    ps = [20.0, 30.0, 40.0, 60.0, 80.0]
    energies = [ctx.oracle(p).energy() for p in ps]
    rel80 = abs(energies[-1] - EIGHT_PI_E) / EIGHT_PI_E
    gaps = [EIGHT_PI_E - e for e in energies]
    monotone = bool(np.all(np.diff(gaps) < 0))
    rho80 = ctx.oracle(80.0).mass_deficit()
    return [
        _rec(
            "C6-energy", "p-weighted gradient energy within 5% of 8 pi e at p = 80",
            EIGHT_PI_E, {"p": ps, "energies": energies, "rel_err_80": rel80},
            "rel 5e-2", rel80 <= 0.05, "radial-oracle",
            notes="true gap is 2 log p/p + (1 - 6 log 2)/p ~ 6.8% at p = 80; "
                  "the window cannot be met by the exact solution",
        ),
        _rec(
            "C6-monotone", "energy approaches 8 pi e monotonically along the sweep",
            EIGHT_PI_E, {"gaps": gaps}, "decreasing gap", monotone, "radial-oracle",
        ),
        _rec(
            "C6-mass-deficit", "rho_p = p(1 - I_p/(8 pi)) lies in [2.5, 3.5] at p = 80",
            3.0, {"rho_80": rho80}, "[2.5, 3.5]", 2.5 <= rho80 <= 3.5, "radial-oracle",
        ),
    ]


def criterion_7_eps_law(ctx: AcceptanceContext) -> list[VerificationRecord]:
    orc = ctx.oracle(80.0)
    val = -4.0 * math.log(orc.eps0) / 80.0
    target_sub = -(2 * np.pi * 0.0 + 1.5 * math.log(2.0) + 0.75)
    sub = math.log(orc.eps0) + 20.0
    sub_rel = abs(sub - target_sub) / abs(target_sub)
    return [
        _rec(
            "C7-leading", "-4 log(eps)/p lies in [0.97, 1.03] at p = 80",
            1.0, {"value": val}, "[0.97, 1.03]", 0.97 <= val <= 1.03, "radial-oracle",
            notes="the subleading constant adds 4(2 pi Psi + 1.5 log 2 + 0.75)/p "
                  "= 0.0895 at p = 80, so the exact solution sits at 1.086; "
                  "the window is met only as p -> 240",
        ),
        _rec(
            "C7-subleading", "log eps + p/4 matches -(2 pi Psi + 1.5 log 2 + 3/4) within 15%",
            target_sub, {"value": sub, "rel_err": sub_rel},
            "rel 0.15", sub_rel <= 0.15, "radial-oracle",
        ),
    ]


def criterion_8_profile_correction(ctx: AcceptanceContext) -> list[VerificationRecord]:
    prof = ctx.w0()
    ps = [20.0, 30.0, 40.0, 60.0, 80.0]
    y = np.linspace(1e-3, 10.0, 400)
    w0y = prof.w0(y)
    sup_v, sup_k = [], []
    for p in ps:
        orc = ctx.oracle(p)
        v = p * (orc.w(y) - liouville.U(y))
        sup_v.append(float(np.max(np.abs(v - w0y))))
        sup_k.append(float(np.max(np.abs(p * (v - w0y)))))
    decreasing = bool(np.all(np.diff(sup_v) < 0))
    within = all(s <= 30.0 / p for s, p in zip(sup_v, ps) if p >= 40.0)
    bounded = max(sup_k) <= 5.0
    return [
        _rec(
            "C8-first-order", "sup_{|y|<=10} |v_p - w0| decreases and is <= 30/p for p >= 40",
            0.0, {"p": ps, "sup_v_minus_w0": sup_v},
            "decreasing, <= 30/p", decreasing and within, "radial-oracle+w0",
        ),
        _rec(
            "C8-second-order", "sup_{|y|<=10} |p(v_p - w0)| stays bounded along the sweep",
            None, {"p": ps, "sup_k": sup_k}, "<= 5 uniformly", bounded, "radial-oracle+w0",
        ),
    ]


def criterion_9_pohozaev(ctx: AcceptanceContext, deep: bool = True) -> list[VerificationRecord]:
    out = []
    msh = ctx.disk_mesh(256)
    gd = greens.regular_part(msh, (0.0, 0.0))
    G = pohozaev.GreenField(gd)
    h = msh.h
    vals = [pohozaev.p_form(G, G, (0.0, 0.0), t, mesh=msh) for t in (8 * h, 16 * h)]
    err = max(abs(v + 1.0 / (2 * np.pi)) for v in vals)
    spread = abs(vals[0] - vals[1])
    out.append(
        _rec(
            "C9-pform", "P(G, G) equals -1/(2 pi) at theta in {8h, 16h}, h = 1/256",
            -1.0 / (2 * np.pi),
            {"values": vals, "max_err": err, "spread": spread},
            "abs 1e-3, spread 1e-3", err <= 1e-3 and spread <= 1e-3, "2d-greens",
        )
    )
    if deep:
        errs = {}
        theta = 0.125
        for n in (64, 128, 256):
            e = ctx.disk_entry(n, 20.0)
            rep = pohozaev.pohozaev_residuals(
                e.mesh, e.u, 20.0, e.spikes[0].position, theta
            )
            errs[n] = max(abs(rep.p_residual), float(np.max(np.abs(rep.q_residuals))))
        order = math.log2(errs[64] / errs[256]) / 2.0
        out.append(
            _rec(
                "C9-identities", "Pohozaev identity residuals shrink with order >= 1 in h at p = 20",
                ">= 1", {"errors": {str(k): v for k, v in errs.items()}, "order": order},
                "order >= 1", order >= 1.0, "2d-solver", rate=order,
            )
        )
    return out


def criterion_10_gradient_balance(ctx: AcceptanceContext) -> list[VerificationRecord]:
    ratios = []
    for p in (20.0, 40.0, 80.0):
        e = ctx.ellipse_entry(128, p)
        gb = pohozaev.gradient_balance(e)
        ratios.append(gb.ratios[0])
    monotone = ratios[0] > ratios[1] > ratios[2]
    return [
        _rec(
            "C10-balance",
            "ellipse |C grad R(x_p)| / (eps/p) decreases monotonically over p in {20, 40, 80}",
            0.0, {"ratios": ratios}, "monotone decreasing", monotone, "2d-solver",
            notes="eps is the 2-D branch scale; beyond the resolved regime it is "
                  "grid-limited (see ledger)",
        )
    ]


def criterion_11_spectrum(ctx: AcceptanceContext) -> list[VerificationRecord]:
    out = []
    morse_ok = True
    margins = {}
    for p in (20.0, 40.0, 80.0):
        orc = ctx.oracle(p)
        spec = radial.disk_spectrum(orc, m_max=3, n=4000)
        spec_fine = radial.disk_spectrum(orc, m_max=3, n=8000)
        morse_ok &= spec.morse_index == 1
        margins[p] = (spec.margin(), spec_fine.margin())
    out.append(
        _rec(
            "C11-morse", "disk Morse index equals 1 at p in {20, 40, 80}",
            1, {"morse": {str(p): 1 if morse_ok else None for p in (20, 40, 80)}},
            "== 1", morse_ok, "radial-modes",
        )
    )
    stab = max(abs(a - b) / abs(a) for a, b in margins.values())
    out.append(
        _rec(
            "C11-margin", "near-zero margin positive and stable to 20% under grid refinement",
            None,
            {"margins": {str(p): list(v) for p, v in margins.items()}, "max_rel_change": stab},
            "margin > 0, change <= 20%",
            all(a > 0 for a, _ in margins.values()) and stab <= 0.2,
            "radial-modes",
        )
    )
    # kernel-coefficient consistency on the near-null translation mode
    orc = ctx.oracle(80.0)
    lam, rg, xi = radial.mode1_eigenvalue(orc, index=1)
    kd = radial.mode1_kernel_data(orc, xi, rg)
    gap_b = abs(kd["B"] + 8 * np.pi * kd["b"]) / abs(8 * np.pi * kd["b"])
    out.append(
        _rec(
            "C11-coefficients",
            "A vs 16 pi a and B vs -8 pi b agree within 15% at p = 80 (near-null modes)",
            None,
            {"lambda": lam, "b": kd["b"], "B": kd["B"], "gap_B_rel": gap_b,
             "a": 0.0, "A": 0.0},
            "rel 0.15", gap_b <= 0.15, "radial-modes",
            notes="near-null modes are the translation pair; their a and A vanish "
                  "identically by angular symmetry, so the substantive check is B vs -8 pi b",
        )
    )
    # cross-validate the 2-D spectrum machinery in the resolved regime
    msh = ctx.disk_mesh(96)
    cfg = kirchhoff_routh.psi_eval(msh, [(0.0, 0.0)])
    u, info = lane_emden.newton_solve(msh, lane_emden.ansatz(msh, cfg, 6.0), 6.0)
    entry = lane_emden.make_entry(msh, u, 6.0, 1, 0.25, info["residual"])
    rep = spectrum.bottom_spectrum(
        spectrum.assemble_Lp(msh, u, 6.0), m=4, tol=2e-6, mesh=msh, spikes=entry.spikes
    )
    spec1d = radial.disk_spectrum(ctx.oracle(6.0), m_max=3)
    lam1d = np.sort([v for v, _ in spec1d.eigenvalues_near_zero(4)])
    mism = float(np.max(np.abs(np.sort(rep.eigenvalues) - lam1d) / np.abs(lam1d)))
    out.append(
        _rec(
            "C11-2d-crosscheck",
            "2-D bottom spectrum matches the radial instrument at p = 6 (resolved regime)",
            None,
            {"eigs_2d": rep.eigenvalues.tolist(), "eigs_radial": lam1d.tolist(),
             "max_rel_mismatch": mism, "morse_2d": rep.morse_index},
            "rel 2e-2, morse == 1", mism <= 0.02 and rep.morse_index == 1, "2d-vs-radial",
        )
    )
    return out


def criterion_12_property_suites(ctx: AcceptanceContext) -> list[VerificationRecord]:
    out = []
    # discrete maximum principle
    msh = ctx.disk_mesh(64)
    A = greens.laplacian_operator(msh)
    rng = np.random.default_rng(11)
    f = rng.random(msh.n_nodes)
    from .linsolve import solve

    u = solve(A, f, tol=1e-12)
    out.append(
        _rec(
            "C12-max-principle", "nonnegative source gives nonnegative solution",
            None, {"min_u": float(np.min(u))}, ">= -1e-12", float(np.min(u)) >= -1e-12,
            "2d-linsolve",
        )
    )
    # bilinearity and symmetry of the circle forms
    f1 = pohozaev.NodeField(msh, msh.coords[:, 0] ** 2 - msh.coords[:, 1] ** 2, fill=None)
    f2 = pohozaev.NodeField(msh, msh.coords[:, 0] * msh.coords[:, 1], fill=None)
    a, b = 1.3, -0.7
    combo = pohozaev.NodeField(msh, a * f1.node_values + b * f2.node_values, fill=None)
    c, t = (0.05, 0.0), 0.2
    lin_err = abs(
        pohozaev.p_form(combo, f1, c, t)
        - a * pohozaev.p_form(f1, f1, c, t)
        - b * pohozaev.p_form(f2, f1, c, t)
    ) + abs(
        pohozaev.q_form(f1, combo, c, t, 1)
        - a * pohozaev.q_form(f1, f1, c, t, 1)
        - b * pohozaev.q_form(f1, f2, c, t, 1)
    )
    sym_err = abs(pohozaev.p_form(f1, f2, c, t) - pohozaev.p_form(f2, f1, c, t)) + abs(
        pohozaev.q_form(f1, f2, c, t, 2) - pohozaev.q_form(f2, f1, c, t, 2)
    )
    out.append(
        _rec(
            "C12-forms", "P and Q are bilinear and symmetric to round-off",
            0.0, {"linearity_err": lin_err, "symmetry_err": sym_err},
            "<= 1e-9", lin_err <= 1e-9 and sym_err <= 1e-9, "quadrature",
        )
    )
    # Jacobian against directional finite differences
    cfg = ctx.disk_kr(64)
    u10, _ = lane_emden.newton_solve(msh, lane_emden.ansatz(msh, cfg, 10.0), 10.0)
    Asp = A.to_scipy()
    v = rng.standard_normal(msh.n_nodes)
    v /= np.linalg.norm(v)
    eps = 1e-6 * float(np.linalg.norm(u10))
    F = lambda w: Asp @ w - np.maximum(w, 0.0) ** 10.0
    fd = (F(u10 + eps * v) - F(u10)) / eps
    Jv = Asp @ v - 10.0 * np.maximum(u10, 0.0) ** 9.0 * v
    jac_err = float(np.linalg.norm(fd - Jv) / np.linalg.norm(Jv))
    out.append(
        _rec(
            "C12-jacobian", "analytic Jacobian matches directional differences",
            0.0, {"rel_err": jac_err}, "rel 1e-5 at eps = 1e-6 scaled",
            jac_err <= 1e-5, "2d-solver",
        )
    )
    # determinism of the sweep
    cfg_run = harness.RunConfig(h_list=[1.0 / 32], p_list=[8.0, 10.0], p_start=8.0)
    s1 = harness.run_sweep(cfg_run)
    s2 = harness.run_sweep(cfg_run)
    same = harness.branch_csv_text(s1["branch"]) == harness.branch_csv_text(s2["branch"])
    out.append(
        _rec(
            "C12-determinism", "identical configs give bit-identical branch output",
            None, {"identical": same}, "bit-identical", same, "harness",
        )
    )
    return out


def acceptance_records(full: bool = True, ctx: AcceptanceContext | None = None) -> list[VerificationRecord]:
    """All acceptance records; ``full=False`` skips the 2-D sweeps at the
    finest grids (criteria 4, the 9-refinement study, and 10)."""
    ctx = ctx or AcceptanceContext()
    records = []
    records += criterion_1_universal_constants(ctx)
    records += criterion_2_green_oracle(ctx) if full else []
    records += criterion_3_kr_certification(ctx)
    if full:
        records += criterion_4_solver_vs_oracle(ctx)
    records += criterion_5_peak_law(ctx)
    records += criterion_6_energy_mass(ctx)
    records += criterion_7_eps_law(ctx)
    records += criterion_8_profile_correction(ctx)
    records += criterion_9_pohozaev(ctx, deep=full)
    if full:
        records += criterion_10_gradient_balance(ctx)
    records += criterion_11_spectrum(ctx)
    records += criterion_12_property_suites(ctx)
    return records
