"""High-precision radial instruments for the unit disk.

The radial Lane-Emden solution is integrated in rescaled peak variables:
with u(r) = u0 (1 + w(y)/p), y = r/eps0, eps0 = (p u0^(p-1))^(-1/2), the
profile solves the universal initial-value problem

    w'' + w'/y + (1 + w/p)_+^p = 0,   w(0) = w'(0) = 0,

independent of u0.  The zero of u fixes the boundary radius y_b (directly, or
through the flux-frozen logarithmic tail when y_b is astronomically large),
and u(1) = 0 then pins u0 = (y_b^2/p)^(1/(p-1)) by scale invariance.  This
resolves spike scales like eps ~ e^(-p/4) exactly, far below what any 2-D
grid can represent.

The same profile feeds a one-dimensional eigensolver for the linearized
operator -Δ - p u^(p-1) decomposed into angular Fourier modes, with exact
negative-eigenvalue counts by Sturm sequences on the tridiagonal forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded

from . import liouville


class BracketFailureError(RuntimeError):
    pass


Y_START = 1e-4
Y_CAP = 4e6


@dataclass
class RadialSolution:
    """Unit-disk radial solution in rescaled peak variables."""

    p: float
    u0: float
    eps0: float
    y_boundary: float  # u = 0 at y_b = 1/eps0
    y_far: float  # last integrated y; beyond it w' = -alpha/y exactly
    alpha: float  # frozen flux -y w'(y) at y_far
    tail_active: bool
    _dense: object  # solve_ivp dense output over [Y_START, y_far]

    # cumulative integrals at y_far: mass int (1+w/p)^p y dy, energy int w'^2 y dy
    mass_cum: float
    energy_cum: float

    def w(self, y):
        y = np.asarray(y, dtype=float)
        out = np.empty(y.shape)
        small = y < Y_START
        mid = (~small) & (y <= self.y_far)
        far = y > self.y_far
        out[small] = -y[small] ** 2 / 4.0 + y[small] ** 4 / 64.0
        if np.any(mid):
            out[mid] = self._dense.sol(y[mid])[0]
        if np.any(far):
            wf = float(self._dense.sol(self.y_far)[0])
            out[far] = wf - self.alpha * np.log(y[far] / self.y_far)
        return out

    def w_prime(self, y):
        y = np.asarray(y, dtype=float)
        out = np.empty(y.shape)
        small = y < Y_START
        mid = (~small) & (y <= self.y_far)
        far = y > self.y_far
        out[small] = -y[small] / 2.0 + y[small] ** 3 / 16.0
        if np.any(mid):
            out[mid] = self._dense.sol(y[mid])[1]
        if np.any(far):
            out[far] = -self.alpha / y[far]
        return out

    def u(self, r):
        """Solution values on [0, 1]; exactly u0 at 0 and 0 at r = 1."""
        r = np.asarray(r, dtype=float)
        y = np.minimum(r / self.eps0, self.y_boundary)
        return self.u0 * np.maximum(1.0 + self.w(y) / self.p, 0.0)

    def u_prime(self, r):
        r = np.asarray(r, dtype=float)
        y = r / self.eps0
        return self.u0 * self.w_prime(np.minimum(y, self.y_boundary)) / (self.p * self.eps0)

    def u_max(self) -> float:
        return self.u0

    def mass(self, y_upper: float | None = None) -> float:
        """2 pi * integral of (1 + w/p)^p y dy up to y_upper (default: all)."""
        if y_upper is None or y_upper >= self.y_far:
            return 2.0 * np.pi * self.mass_cum  # tail mass is below integration tolerance
        m = float(self._dense.sol(y_upper)[2])
        return 2.0 * np.pi * m

    def peak_integral(self, d: float = 0.25) -> float:
        """C_p = integral of u^p over the ball of radius d (in r units)."""
        return (self.u0 / self.p) * self.mass(d / self.eps0)

    def energy(self) -> float:
        """p * integral of |grad u|^2 over the unit disk."""
        e = self.energy_cum
        if self.tail_active:
            e += self.alpha**2 * math.log(self.y_boundary / self.y_far)
        return 2.0 * np.pi * self.u0**2 * e / self.p

    def mass_deficit(self, d: float = 0.25) -> float:
        """rho_p = p (1 - I_p / 8 pi), tending to 3."""
        return self.p * (1.0 - self.mass(d / self.eps0) / (8.0 * np.pi))


def solve_radial(p: float, tol: float = 1e-12) -> RadialSolution:
    """Radial oracle for the unit disk at exponent p (> 1)."""
    if p <= 1:
        raise ValueError("p must exceed 1")

    def rhs(y, s):
        w, v, _, _ = s
        base = max(1.0 + w / p, 0.0)
        f = base**p
        return (v, -f - v / y, f * y, v * v * y)

    def hit_zero(y, s):
        return s[0] + p

    hit_zero.terminal = True
    hit_zero.direction = -1.0

    y0 = Y_START
    s0 = (
        -(y0**2) / 4.0 + y0**4 / 64.0,
        -y0 / 2.0 + y0**3 / 16.0,
        y0 * y0 / 2.0,  # mass integral of y dy from 0 (integrand ~ 1 near 0)
        y0**4 / 16.0,  # int (y/2)^2 y dy
    )
    sol = solve_ivp(
        rhs,
        (y0, Y_CAP),
        s0,
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-2,
        events=hit_zero,
        dense_output=True,
    )
    if not sol.success:
        raise BracketFailureError(f"radial integration failed: {sol.message}")
    if sol.t_events[0].size:
        y_b = float(sol.t_events[0][0])
        y_far = y_b
        tail = False
        alpha = -y_b * float(sol.sol(y_b)[1])
    else:
        y_far = float(sol.t[-1])
        wf, vf = (float(sol.sol(y_far)[0]), float(sol.sol(y_far)[1]))
        alpha = -y_far * vf
        if alpha <= 0:
            raise BracketFailureError("flux did not freeze; cannot place the boundary")
        y_b = y_far * math.exp((p + wf) / alpha)
        tail = True

    log_u0 = (2.0 * math.log(y_b) - math.log(p)) / (p - 1.0)
    u0 = math.exp(log_u0)
    eps0 = 1.0 / y_b
    wend = sol.sol(y_far)
    return RadialSolution(
        p=p,
        u0=u0,
        eps0=eps0,
        y_boundary=y_b,
        y_far=y_far,
        alpha=alpha,
        tail_active=tail,
        _dense=sol,
        mass_cum=float(wend[2]),
        energy_cum=float(wend[3]),
    )


# ---- linearized operator on the disk, per angular Fourier mode -----------


@dataclass
class ModeOperator:
    """Finite-volume form of -d2/dr2 - (1/r)d/dr + m^2/r^2 - V(r) on (0, 1).

    Generalized eigenproblem K xi = lambda M xi with diagonal mass M;
    kappa are the edge conductances, pot the potential-weighted masses.

    Adequate for eigenvalues that are not the result of near-cancellation
    between the gradient and potential energies (the giant negative mode and
    the domain-scale modes).  The translation sector m = 1, whose near-null
    eigenvalue is a ~1e-9 relative cancellation at large p, uses the
    factorized form below instead.
    """

    m: int
    r: np.ndarray  # interior nodes
    kappa: np.ndarray  # len n+1; kappa[0] is the inner edge (0 for m = 0 regularity)
    mass: np.ndarray
    pot: np.ndarray  # (m^2/r^2 - V) * mass

    def diagonals(self, sigma: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        d = self.kappa[:-1] + self.kappa[1:] + self.pot - sigma * self.mass
        e = -self.kappa[1:-1]
        return d, e

    def quadratic_form(self, xi: np.ndarray) -> float:
        bulk = float(np.sum(self.kappa[1:-1] * np.diff(xi) ** 2))
        bulk += float(self.kappa[0] * xi[0] ** 2 + self.kappa[-1] * xi[-1] ** 2)
        return bulk + float(np.sum(self.pot * xi * xi))

    def rayleigh(self, xi: np.ndarray) -> float:
        return self.quadratic_form(xi) / float(np.sum(self.mass * xi * xi))

    def count_below(self, lam: float) -> int:
        """Sturm-sequence count of eigenvalues below lam (exact inertia)."""
        d, e = self.diagonals(lam)
        count = 0
        t = d[0]
        if t == 0.0:
            t = -1e-300
        if t < 0:
            count += 1
        for i in range(1, len(d)):
            t = d[i] - e[i - 1] ** 2 / t
            if t == 0.0:
                t = -1e-300
            if t < 0:
                count += 1
        return count

    def solve_shifted(self, sigma: float, b: np.ndarray) -> np.ndarray:
        d, e = self.diagonals(sigma)
        ab = np.zeros((3, len(d)))
        ab[0, 1:] = e
        ab[1, :] = d
        ab[2, :-1] = e
        return solve_banded((1, 1), ab, b)

    def eigs_near(self, sigma: float, k: int = 1, tol: float = 1e-11, max_iter: int = 300):
        """k eigenpairs nearest sigma by inverse iteration with M-orthogonal deflation."""
        vals, vecs = [], []
        n = len(self.r)
        for j in range(k):
            xi = np.cos(0.37 * (j + 1) * np.arange(n))
            xi /= math.sqrt(float(np.sum(self.mass * xi * xi)))
            lam_old = np.inf
            for _ in range(max_iter):
                y = self.solve_shifted(sigma, self.mass * xi)
                for v in vecs:
                    y -= float(np.sum(self.mass * v * y)) * v
                nrm = math.sqrt(float(np.sum(self.mass * y * y)))
                xi = y / nrm
                lam = self.rayleigh(xi)
                if abs(lam - lam_old) <= tol * max(1.0, abs(lam)):
                    break
                lam_old = lam
            vals.append(lam)
            vecs.append(xi)
        order = np.argsort(vals)
        return [vals[i] for i in order], [vecs[i] for i in order]


def mode_operator(rad: RadialSolution, m: int, n: int = 4000, r_min_factor: float = 1e-3) -> ModeOperator:
    r_min = max(rad.eps0 * r_min_factor, 1e-14)
    nodes = np.geomspace(r_min, 1.0, n + 1)  # last node is the Dirichlet boundary
    r = nodes[:-1]
    edges = np.empty(n + 1)
    edges[1:-1] = 0.5 * (nodes[1:-1] + nodes[:-2])
    edges[0] = 0.0
    edges[-1] = 0.5 * (1.0 + nodes[-2])
    kappa = np.empty(n + 1)
    kappa[0] = 0.0  # zero flux through r = 0 (regularity; m >= 1 is pinned by m^2/r^2)
    kappa[1:-1] = edges[1:-1] / np.diff(r)
    kappa[-1] = edges[-1] / (1.0 - r[-1])
    mass = r * (edges[1:] - edges[:-1])
    y = r / rad.eps0
    lw = (rad.p - 1.0) * np.log1p(rad.w(y) / rad.p)
    V = np.exp(lw) / rad.eps0**2
    pot = (m * m / (r * r) - V) * mass
    return ModeOperator(m, r, kappa, mass, pot)


class _Mode1Shooter:
    """Batched fixed-step RK4 shooter for the factorized m = 1 sector.

    phi* = -u'(r) solves the m = 1 equation exactly (differentiate the radial
    Lane-Emden equation) and is positive on (0, 1], so xi = phi* g turns the
    sector into -(sigma g')' = lam rho g with sigma = rho = r phi*^2 > 0.
    Integrated in t = log r with flux F = sigma g': dg/dt = F/phi*^2,
    dF/dt = -lam r^2 phi*^2 g.  The huge phi*^2 in the spike core merely
    freezes g there, so the dynamics stay O(1) across all scales and a fixed
    logarithmic step suffices; the rhs is linear in the state, so trial
    eigenvalues integrate as one vectorized batch.
    """

    def __init__(self, rad: RadialSolution, n_steps: int = 6000):
        t0 = math.log(max(rad.eps0 * 1e-3, 1e-14))
        self.t = np.linspace(t0, 0.0, 2 * n_steps + 1)  # includes half-steps
        r = np.exp(self.t)
        self.phi2 = rad.u_prime(r) ** 2
        self.w_r2phi2 = r * r * self.phi2
        self.n_steps = n_steps
        self.dt = (0.0 - t0) / n_steps

    def run(self, lams: np.ndarray, keep_path: bool = False):
        lams = np.atleast_1d(np.asarray(lams, dtype=float))
        g = np.ones_like(lams)
        F = np.zeros_like(lams)
        flips = np.zeros(lams.shape, dtype=int)
        path = np.empty((self.n_steps + 1, lams.size)) if keep_path else None
        if keep_path:
            path[0] = g
        dt = self.dt
        for i in range(self.n_steps):
            i0, im, i1 = 2 * i, 2 * i + 1, 2 * i + 2
            g_prev = g
            k1g = F / self.phi2[i0]
            k1f = -lams * self.w_r2phi2[i0] * g
            g2 = g + 0.5 * dt * k1g
            f2 = F + 0.5 * dt * k1f
            k2g = f2 / self.phi2[im]
            k2f = -lams * self.w_r2phi2[im] * g2
            g3 = g + 0.5 * dt * k2g
            f3 = F + 0.5 * dt * k2f
            k3g = f3 / self.phi2[im]
            k3f = -lams * self.w_r2phi2[im] * g3
            g4 = g + dt * k3g
            f4 = F + dt * k3f
            k4g = f4 / self.phi2[i1]
            k4f = -lams * self.w_r2phi2[i1] * g4
            g = g + (dt / 6.0) * (k1g + 2 * k2g + 2 * k3g + k4g)
            F = F + (dt / 6.0) * (k1f + 2 * k2f + 2 * k3f + k4f)
            flips += (g_prev * g < 0).astype(int)
            if keep_path:
                path[i + 1] = g
        return g, flips, path


def _mode1_shooter(rad: RadialSolution) -> _Mode1Shooter:
    sh = rad.__dict__.get("_mode1_shooter")
    if sh is None:
        sh = _Mode1Shooter(rad)
        rad.__dict__["_mode1_shooter"] = sh
    return sh


def mode1_eigenvalue(rad: RadialSolution, index: int = 1, lam_hi: float = 64.0):
    """index-th eigenvalue (1-based) of the disk m = 1 sector by shooting,
    with the eigenfunction xi = phi* g on a log radial grid.

    The factorized form is positive definite for every p (the sector never
    contributes to the Morse index on the disk); the returned eigenvalues are
    therefore positive, the near-null translation mode being index = 1.
    """
    sh = _mode1_shooter(rad)
    while True:
        grid = np.geomspace(1e-6, lam_hi, 96)
        _, flips, _ = sh.run(grid)
        above = np.nonzero(flips >= index)[0]
        if above.size:
            break
        lam_hi *= 4.0
        if lam_hi > 1e7:
            raise BracketFailureError("mode-1 eigenvalue bracket not found")
    blo = grid[above[0] - 1] if above[0] > 0 else 1e-9
    bhi = grid[above[0]]

    # batched interval refinement on the single sign change of g(1);
    # 4 rounds of 16x shrink leave the midpoint within ~1e-6 relative
    for _ in range(4):
        grid = np.linspace(blo, bhi, 17)
        g1, _, _ = sh.run(grid)
        crossings = np.nonzero(g1[:-1] * g1[1:] < 0)[0]
        if crossings.size == 0:
            break
        blo, bhi = grid[crossings[0]], grid[crossings[0] + 1]
    lam = 0.5 * (blo + bhi)
    _, _, path = sh.run(np.array([lam]), keep_path=True)
    r = np.exp(sh.t[::2])
    xi = -rad.u_prime(r) * path[:, 0]
    return lam, r, xi


@dataclass
class DiskSpectrum:
    """Bottom spectrum of the linearized disk operator, resolved per mode."""

    p: float
    modes: dict  # m -> (eigenvalues list, eigenvectors list, operator or None)
    morse_index: int

    def eigenvalues_near_zero(self, count: int = 4) -> list[tuple[float, int]]:
        """(eigenvalue, m) pairs nearest zero, repeated for m >= 1 multiplicity."""
        items = []
        for m, (vals, _, _) in self.modes.items():
            for lam in vals:
                items.append((lam, m))
                if m >= 1:
                    items.append((lam, m))
        items.sort(key=lambda t: abs(t[0]))
        return items[:count]

    def margin(self, count: int = 4) -> float:
        return min(abs(lam) for lam, _ in self.eigenvalues_near_zero(count))


def disk_spectrum(rad: RadialSolution, m_max: int = 3, per_mode: int = 2, n: int = 4000) -> DiskSpectrum:
    """Eigenvalues nearest zero for modes m = 0..m_max and the Morse index.

    m = 0 and m >= 2 use the finite-volume form with Sturm counts (their
    eigenvalues are cancellation-free on the scale-free geometric grid);
    m = 1 uses factorized shooting, positive definite on the disk for every p.
    """
    modes = {}
    morse = 0
    for m in range(m_max + 1):
        if m == 1:
            vals, vecs, grids = [], [], []
            for idx in range(1, per_mode + 1):
                lam, rgrid, xi = mode1_eigenvalue(rad, index=idx)
                vals.append(lam)
                vecs.append(xi)
                grids.append(rgrid)
            modes[m] = (vals, vecs, grids)
            continue
        op = mode_operator(rad, m, n=n)
        neg = op.count_below(0.0)
        morse += neg * (1 if m == 0 else 2)
        vals, vecs = op.eigs_near(0.0, k=per_mode)
        if m == 0 and neg > 0:
            # pull in the strongly negative ground mode for reporting
            lo = -1.05 / rad.eps0**2
            hi = 0.0
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if op.count_below(mid) >= 1:
                    hi = mid
                else:
                    lo = mid
            gvals, gvecs = op.eigs_near(0.5 * (lo + hi), k=1)
            vals = gvals + vals
            vecs = gvecs + vecs
        modes[m] = (vals, vecs, op)
    return DiskSpectrum(rad.p, modes, morse)


# ---- kernel projections and spike coefficients from the 1-D instrument ----


def mode1_kernel_data(rad: RadialSolution, xi: np.ndarray, r_grid: np.ndarray, R: float = 10.0):
    """Fit f(s) = xi(eps0 s) against dU/dr(s) = -4s/(8+s^2) on s <= R under
    the bubble weight, for an m = 1 eigenfunction given on r_grid (2-D field
    xi(r) cos(theta)); returns (b, residual, sup_norm_used).

    Also computes B = (p/eps) * integral of x_1 u^(p-1) xi(r) cos^2(theta):
    returns them as a dict.
    """
    sup = float(np.max(np.abs(xi)))
    xi = xi / sup
    s = np.linspace(1e-3, R, 400)
    f = np.interp(s * rad.eps0, r_grid, xi)
    basis = -4.0 * s / (8.0 + s * s)  # radial factor of dU/dx_i at angle 0
    wgt = liouville.eU(s) * s  # radial measure with bubble weight
    b = float(np.sum(wgt * f * basis) / np.sum(wgt * basis * basis))
    resid = math.sqrt(float(np.sum(wgt * (f - b * basis) ** 2) / np.sum(wgt)))
    # B_1 = (p/eps) int x_1 u^{p-1} xi cos(theta) dx; angular integral gives pi
    y = r_grid / rad.eps0
    with np.errstate(divide="ignore"):
        lw = (rad.p - 1.0) * np.log1p(rad.w(y) / rad.p)  # -inf at u = 0 is fine
    upm1 = np.exp(lw + (rad.p - 1.0) * math.log(rad.u0))
    integrand = r_grid * upm1 * xi * r_grid  # x_1 = r cos(theta); r dr measure
    B = np.pi * rad.p / rad.eps0 * np.trapezoid(integrand, r_grid)
    return {"b": b, "residual": resid, "B": B, "sup": sup}


def mode0_kernel_data(rad: RadialSolution, xi: np.ndarray, r_grid: np.ndarray, R: float = 10.0):
    """Z0-fit and A coefficient for an m = 0 eigenfunction xi(r)."""
    sup = float(np.max(np.abs(xi)))
    xi = xi / sup
    s = np.linspace(1e-3, R, 400)
    f = np.interp(s * rad.eps0, r_grid, xi)
    basis = liouville.Z0(s)
    wgt = liouville.eU(s) * s
    a = float(np.sum(wgt * f * basis) / np.sum(wgt * basis * basis))
    resid = math.sqrt(float(np.sum(wgt * (f - a * basis) ** 2) / np.sum(wgt)))
    y = r_grid / rad.eps0
    with np.errstate(divide="ignore"):
        lw = (rad.p - 1.0) * np.log1p(rad.w(y) / rad.p)  # -inf at u = 0 is fine
    upm1 = np.exp(lw + (rad.p - 1.0) * math.log(rad.u0))
    A = 2.0 * np.pi * rad.p * np.trapezoid(r_grid * upm1 * xi, r_grid)
    return {"a": a, "residual": resid, "A": A, "sup": sup}
