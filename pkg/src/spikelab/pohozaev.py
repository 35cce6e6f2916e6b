"""Circle quadratic forms P and Q, their theta-independence for harmonic
inputs, Pohozaev identity residuals on solved fields, and the gradient
balance of spike configurations.

P(u,v) = -2 theta * int <grad u, nu><grad v, nu> + theta * int <grad u, grad v>
Q_i(u,v) = -int (dv/dnu du/dx_i + du/dnu dv/dx_i) + int <grad u, grad v> nu_i

with all integrals over the circle of radius theta (arc measure).  Fields are
anything exposing values(pts) and gradients(pts); node fields interpolate the
mesh (gradients by central differences then bilinear interpolation), Green
fields combine the analytic singular part with the interpolated regular part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import greens
from .lane_emden import BranchEntry, _cell_cover_fraction, log_eps
from .mesh import GridMesh


class CircleHitsBoundaryError(ValueError):
    pass


@dataclass
class NodeField:
    mesh: GridMesh
    node_values: np.ndarray
    fill: float | None = 0.0  # 0 is right for fields vanishing on the boundary

    def values(self, pts):
        return self.mesh.interp(self.node_values, pts, fill=self.fill)

    def gradients(self, pts):
        return self.mesh.interp_gradient(self.node_values, pts, fill=self.fill)


@dataclass
class GreenField:
    gd: greens.GreenData

    def values(self, pts):
        return self.gd.green_values(pts)

    def gradients(self, pts):
        return self.gd.green_gradients(pts)


@dataclass
class SourceDerivativeField:
    """Central difference of G(x0, .) in the source: approximates the field
    y -> dG/dx0_h (x0, y)."""

    mesh: GridMesh
    x0: np.ndarray
    h_index: int  # 0 or 1
    delta: float

    def __post_init__(self):
        e = np.zeros(2)
        e[self.h_index] = self.delta
        self._plus = greens.regular_part(self.mesh, np.asarray(self.x0) + e)
        self._minus = greens.regular_part(self.mesh, np.asarray(self.x0) - e)

    def values(self, pts):
        return (self._plus.green_values(pts) - self._minus.green_values(pts)) / (2 * self.delta)

    def gradients(self, pts):
        return (self._plus.green_gradients(pts) - self._minus.green_gradients(pts)) / (
            2 * self.delta
        )


@dataclass
class CircleProbe:
    """Uniform angular samples on the circle of radius theta about a center.

    Trapezoid quadrature on the periodic samples integrates trigonometric
    polynomials of degree < n_theta/2 exactly.
    """

    center: np.ndarray
    theta: float
    n_theta: int = 256

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.n_theta < 64:
            raise ValueError("need at least 64 angular samples")
        ang = np.linspace(0.0, 2 * np.pi, self.n_theta, endpoint=False)
        self.normals = np.column_stack([np.cos(ang), np.sin(ang)])
        self.points = self.center + self.theta * self.normals

    def check_inside(self, mesh: GridMesh) -> None:
        phi = mesh.domain.levelset(self.points[:, 0], self.points[:, 1])
        if np.any(phi >= 0):
            raise CircleHitsBoundaryError(
                f"probe circle (r={self.theta}) leaves the domain"
            )

    def integrate(self, samples: np.ndarray) -> float:
        # arc measure: d sigma = theta * d phi
        return float(np.mean(samples) * 2 * np.pi * self.theta)


def p_form(u, v, center, theta: float, n_theta: int = 256, mesh: GridMesh | None = None) -> float:
    probe = CircleProbe(center, theta, n_theta)
    if mesh is not None:
        probe.check_inside(mesh)
    gu = u.gradients(probe.points)
    gv = v.gradients(probe.points)
    gun = np.sum(gu * probe.normals, axis=1)
    gvn = np.sum(gv * probe.normals, axis=1)
    dot = np.sum(gu * gv, axis=1)
    return -2.0 * theta * probe.integrate(gun * gvn) + theta * probe.integrate(dot)


def q_form(u, v, center, theta: float, i: int, n_theta: int = 256, mesh: GridMesh | None = None) -> float:
    """i is the coordinate index (1 or 2)."""
    probe = CircleProbe(center, theta, n_theta)
    if mesh is not None:
        probe.check_inside(mesh)
    gu = u.gradients(probe.points)
    gv = v.gradients(probe.points)
    gun = np.sum(gu * probe.normals, axis=1)
    gvn = np.sum(gv * probe.normals, axis=1)
    dot = np.sum(gu * gv, axis=1)
    ii = i - 1
    return probe.integrate(-gvn * gu[:, ii] - gun * gv[:, ii] + dot * probe.normals[:, ii])


def theta_independence(u, v, center, thetas, mesh: GridMesh | None = None, tol: float = 1e-6) -> dict:
    """Spread (max - min) of P and both Q components over the theta list.

    When node fields are supplied, their discrete harmonicity on the spanned
    annulus is checked and a warning string is attached if it fails.
    """
    thetas = list(thetas)
    ps = [p_form(u, v, center, t, mesh=mesh) for t in thetas]
    q1 = [q_form(u, v, center, t, 1, mesh=mesh) for t in thetas]
    q2 = [q_form(u, v, center, t, 2, mesh=mesh) for t in thetas]
    out = {
        "p_values": ps,
        "q1_values": q1,
        "q2_values": q2,
        "p_spread": max(ps) - min(ps),
        "q1_spread": max(q1) - min(q1),
        "q2_spread": max(q2) - min(q2),
        "warning": None,
    }
    for f in (u, v):
        if isinstance(f, NodeField) and mesh is not None:
            A = greens.laplacian_operator(mesh)
            res = A @ f.node_values
            c = np.asarray(center, dtype=float)
            rho = np.hypot(mesh.coords[:, 0] - c[0], mesh.coords[:, 1] - c[1])
            ring = (rho >= 0.5 * min(thetas)) & (rho <= 1.5 * max(thetas))
            ring &= np.all(mesh.nbr >= 0, axis=1)  # skip rows with boundary data
            rn = mesh.h * float(np.linalg.norm(res[ring]))
            if rn > tol:
                out["warning"] = f"inputs not discrete-harmonic on the annulus (residual {rn:.2e})"
    return out


@dataclass
class PohozaevReport:
    center: np.ndarray
    theta: float
    q_residuals: np.ndarray  # per coordinate, Eq. Q(u,u) identity
    p_residual: float
    q_values: np.ndarray
    p_value: float
    rhs_scale: float


def _ball_sum(mesh: GridMesh, values: np.ndarray, center, radius: float) -> float:
    c = np.asarray(center, dtype=float)
    rho = np.hypot(mesh.coords[:, 0] - c[0], mesh.coords[:, 1] - c[1])
    near = np.nonzero(rho <= radius + mesh.h)[0]
    total = 0.0
    for idx in near:
        frac = _cell_cover_fraction(
            mesh.coords[idx, 0] - c[0], mesh.coords[idx, 1] - c[1], mesh.h, radius
        )
        if frac > 0:
            total += frac * values[idx]
    return total * mesh.h**2


def pohozaev_residuals(mesh: GridMesh, u: np.ndarray, p: float, center, theta: float,
                       n_theta: int = 256) -> PohozaevReport:
    """LHS - RHS of the two local Pohozaev identities for a solved field:

    Q_i(u,u) = 2/(p+1) * circle integral of u^(p+1) nu_i
    P(u,u)   = 2 theta/(p+1) * circle integral of u^(p+1) - 4/(p+1) * ball integral
    """
    f = NodeField(mesh, u)
    probe = CircleProbe(center, theta, n_theta)
    probe.check_inside(mesh)
    uvals = np.maximum(f.values(probe.points), 0.0)
    upp = uvals ** (p + 1.0)
    q_res = np.empty(2)
    q_vals = np.empty(2)
    for i in (1, 2):
        lhs = q_form(f, f, center, theta, i, n_theta, mesh=mesh)
        rhs = 2.0 / (p + 1.0) * probe.integrate(upp * probe.normals[:, i - 1])
        q_vals[i - 1] = lhs
        q_res[i - 1] = lhs - rhs
    p_lhs = p_form(f, f, center, theta, n_theta, mesh=mesh)
    ball = _ball_sum(mesh, np.maximum(u, 0.0) ** (p + 1.0), center, theta)
    p_rhs = 2.0 * theta / (p + 1.0) * probe.integrate(upp) - 4.0 / (p + 1.0) * ball
    return PohozaevReport(
        np.asarray(center, dtype=float),
        theta,
        q_res,
        p_lhs - p_rhs,
        q_vals,
        p_lhs,
        abs(p_rhs) + float(np.max(np.abs(q_res))) + 1e-300,
    )


def linearized_residuals(mesh: GridMesh, u: np.ndarray, p: float, xi: np.ndarray,
                         center, theta: float, n_theta: int = 256) -> dict:
    """Residuals of the eigenfunction variants:
    Q_i(xi,u) = circle integral of u^p xi nu_i
    P(xi,u)   = theta * circle integral of u^p xi - 2 * ball integral of u^p xi
    """
    fu = NodeField(mesh, u)
    fxi = NodeField(mesh, xi)
    probe = CircleProbe(center, theta, n_theta)
    probe.check_inside(mesh)
    uvals = np.maximum(fu.values(probe.points), 0.0)
    xivals = fxi.values(probe.points)
    out = {}
    for i in (1, 2):
        lhs = q_form(fxi, fu, center, theta, i, n_theta, mesh=mesh)
        rhs = probe.integrate(uvals**p * xivals * probe.normals[:, i - 1])
        out[f"q{i}_residual"] = lhs - rhs
    lhs = p_form(fxi, fu, center, theta, n_theta, mesh=mesh)
    ball = _ball_sum(mesh, np.maximum(u, 0.0) ** p * xi, center, theta)
    rhs = theta * probe.integrate(uvals**p * xivals) - 2.0 * ball
    out["p_residual"] = lhs - rhs
    return out


@dataclass
class GradientBalance:
    residuals: list  # per spike, 2-vector of the balance left side
    ratios: list  # |residual| / (eps_p / p)
    eps_p: float


def gradient_balance(entry: BranchEntry, delta: float | None = None) -> GradientBalance:
    """Left side of the spike force balance, per spike j and component i:

        C_j dR(x_j)/dx_i - 2 sum_{m != j} C_m D_{x_i} G(x_m, x_j)

    which the asymptotics drive to O(eps_p / p^(2-delta)).
    """
    mesh = entry.mesh
    pts = [s.position for s in entry.spikes]
    grads = []
    for s in entry.spikes:
        g, _ = greens.robin_derivatives(mesh, s.position, delta)
        grads.append(g)
    gds = [greens.regular_part(mesh, a) for a in pts]
    residuals = []
    for j, sj in enumerate(entry.spikes):
        bal = sj.C * grads[j].copy()
        for m, sm in enumerate(entry.spikes):
            if m == j:
                continue
            _, dg = greens.green_eval(gds[m], sj.position)
            bal -= 2.0 * sm.C * dg
        residuals.append(bal)
    eps_p = max(s.eps for s in entry.spikes)
    ratios = [float(np.hypot(*r)) / (eps_p / entry.p) for r in residuals]
    return GradientBalance(residuals, ratios, eps_p)
