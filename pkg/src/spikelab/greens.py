"""Green function G = S - H on a meshed domain: regular part by a harmonic
solve with log Dirichlet data, Robin function and its derivatives by
source-perturbation finite differences.

The unit disk admits closed forms (image charges), used as the test oracle:
G(x,y) = -(1/2pi) log(|x-y| / (|x| |x* - y|)) with x* = x/|x|^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linsolve import SparseOperator
from .mesh import GridMesh, assemble_laplacian, dirichlet_rhs

TWO_PI = 2.0 * np.pi


class SourceNearBoundaryError(ValueError):
    pass


class StencilLeavesDomainError(ValueError):
    pass


class QueryAtSourceError(ValueError):
    pass


def fundamental(x0: np.ndarray, x, y):
    """S(x0, (x,y)) = -(1/2pi) log |x0 - (x,y)|."""
    return -np.log(np.hypot(x - x0[0], y - x0[1])) / TWO_PI


def laplacian_operator(mesh: GridMesh) -> SparseOperator:
    """Shortley-Weller -Δ for the mesh, assembled once and cached on it."""
    op = mesh.__dict__.get("_lap_op")
    if op is None:
        op = assemble_laplacian(mesh)
        mesh.__dict__["_lap_op"] = op
    return op


def laplacian_factorization(mesh: GridMesh):
    """Cached sparse LU of the mesh Laplacian (one factorization, many sources)."""
    lu = mesh.__dict__.get("_lap_lu")
    if lu is None:
        lu = laplacian_operator(mesh).factorized()
        mesh.__dict__["_lap_lu"] = lu
    return lu


@dataclass
class GreenData:
    """Regular part H(x0, .) as a node field plus Robin data at the source."""

    mesh: GridMesh
    source: np.ndarray
    H_field: np.ndarray
    R_value: float
    grad_R: np.ndarray | None = None
    hess_R: np.ndarray | None = None

    def green_values(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return fundamental(self.source, pts[:, 0], pts[:, 1]) - self.mesh.interp(self.H_field, pts)

    def green_gradients(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = pts - self.source
        r2 = np.sum(d * d, axis=1)
        grad_S = -d / (TWO_PI * r2[:, None])
        return grad_S - self.mesh.interp_gradient(self.H_field, pts)


def regular_part(mesh: GridMesh, x0, min_depth_factor: float = 3.0) -> GreenData:
    """Solve ΔH = 0 with H = S(x0, .) on the boundary; fill R(x0) by interpolation.

    The source must sit at least ``min_depth_factor * h`` inside the domain so
    the log data on the boundary stays smooth.
    """
    x0 = np.asarray(x0, dtype=float)
    if not bool(mesh.domain.inside(x0[0], x0[1])):
        raise SourceNearBoundaryError(f"source {x0} is not inside the domain")
    if mesh.boundary_distance(x0[0], x0[1]) < min_depth_factor * mesh.h:
        raise SourceNearBoundaryError(
            f"source {x0} is closer than {min_depth_factor}h to the boundary"
        )
    b = dirichlet_rhs(mesh, lambda x, y: fundamental(x0, x, y))
    H = laplacian_factorization(mesh).solve(b)
    R = float(mesh.interp(H, x0[None, :])[0])
    return GreenData(mesh, x0, H, R)


def robin_value(mesh: GridMesh, x0) -> float:
    return regular_part(mesh, x0).R_value


def robin_derivatives(mesh: GridMesh, x0, delta: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Gradient and Hessian of the Robin function at x0 by central differences
    over re-solves of the regular part (4 + 5 extra solves; delta defaults to 2h)."""
    x0 = np.asarray(x0, dtype=float)
    if delta is None:
        delta = 2.0 * mesh.h
    stencil = [x0 + delta * np.array(s) for s in
               [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]]
    for p in stencil:
        if mesh.boundary_distance(p[0], p[1]) < 3.0 * mesh.h or not bool(mesh.domain.inside(*p)):
            raise StencilLeavesDomainError(f"Robin FD stencil point {p} leaves the domain")
    R0 = robin_value(mesh, x0)
    Rp = [robin_value(mesh, p) for p in stencil]
    Re, Rw, Rn, Rs, Rne, Rse, Rnw, Rsw = Rp
    grad = np.array([(Re - Rw), (Rn - Rs)]) / (2 * delta)
    hxx = (Re - 2 * R0 + Rw) / delta**2
    hyy = (Rn - 2 * R0 + Rs) / delta**2
    hxy = (Rne - Rse - Rnw + Rsw) / (4 * delta**2)
    hess = np.array([[hxx, hxy], [hxy, hyy]])
    return grad, hess


def green_eval(gd: GreenData, y) -> tuple[float, np.ndarray]:
    """Value and gradient (w.r.t. the field point) of G(x0, .) at y."""
    y = np.asarray(y, dtype=float)
    if np.hypot(*(y - gd.source)) < 1e-12:
        raise QueryAtSourceError("Green function evaluated at its source")
    val = float(gd.green_values(y[None, :])[0])
    grad = gd.green_gradients(y[None, :])[0]
    return val, grad


# ---- closed-form unit-disk oracle ---------------------------------------


def unit_disk_G(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rx = np.hypot(*x)
    d = np.hypot(*(x - y))
    if rx < 1e-14:
        return float(-np.log(np.hypot(*y)) / TWO_PI)
    xstar = x / rx**2
    return float(-np.log(d / (rx * np.hypot(*(xstar - y)))) / TWO_PI)


def unit_disk_grad_G(x, y) -> np.ndarray:
    """Gradient of G(x, .) at y, unit disk closed form."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = y - x
    g = -d / (TWO_PI * (d @ d))
    rx = np.hypot(*x)
    if rx < 1e-14:
        return g
    xstar = x / rx**2
    ds = y - xstar
    return g + ds / (TWO_PI * (ds @ ds))


def unit_disk_R(x) -> float:
    r2 = float(np.dot(x, x))
    return -np.log(1.0 - r2) / TWO_PI


def unit_disk_grad_R(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r2 = float(x @ x)
    return x / (np.pi * (1.0 - r2))


def unit_disk_hess_R(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r2 = float(x @ x)
    eye = np.eye(2)
    return (eye / (1.0 - r2) + 2.0 * np.outer(x, x) / (1.0 - r2) ** 2) / np.pi
