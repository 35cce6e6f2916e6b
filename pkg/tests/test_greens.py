import numpy as np
import pytest

from spikelab import greens
from spikelab.greens import (
    QueryAtSourceError,
    SourceNearBoundaryError,
    unit_disk_G,
    unit_disk_grad_R,
    unit_disk_hess_R,
    unit_disk_R,
)
from spikelab.mesh import build_mesh, make_domain


@pytest.fixture(scope="module")
def disk64():
    return build_mesh(make_domain("disk", r=1.0), 1.0 / 64)


def test_robin_at_center_is_zero(disk64):
    gd = greens.regular_part(disk64, (0.0, 0.0))
    assert abs(gd.R_value) < 1e-10


def test_robin_closed_form(disk64):
    gd = greens.regular_part(disk64, (0.5, 0.0))
    assert gd.R_value == pytest.approx(unit_disk_R(np.array([0.5, 0.0])), abs=3e-5)


def test_regular_part_max_on_boundary_ring(disk64):
    gd = greens.regular_part(disk64, (0.3, 0.2))
    ring = np.any(disk64.nbr < 0, axis=1)
    assert gd.H_field.max() <= gd.H_field[ring].max() + 1e-12


def test_green_eval_closed_form(disk64):
    gd = greens.regular_part(disk64, (0.0, 0.0))
    val, grad = greens.green_eval(gd, (0.5, 0.0))
    assert val == pytest.approx(-np.log(0.5) / (2 * np.pi), abs=1e-9)
    assert grad[0] == pytest.approx(-1.0 / (np.pi), rel=1e-6, abs=1e-6)


def test_log_singularity_structure(disk64):
    gd = greens.regular_part(disk64, (0.0, 0.0))
    for r in (0.05, 0.1, 0.2):
        val, _ = greens.green_eval(gd, (r, 0.0))
        assert abs(val + np.log(r) / (2 * np.pi)) < 0.05


def test_boundary_limit_small(disk64):
    gd = greens.regular_part(disk64, (0.0, 0.0))
    val, _ = greens.green_eval(gd, (0.98, 0.0))
    assert abs(val) < 5e-3


def test_positivity(disk64):
    gd = greens.regular_part(disk64, (0.4, -0.1))
    vals = gd.green_values(disk64.coords[:: 17])
    mask = np.hypot(*(disk64.coords[::17] - gd.source).T) > 2 * disk64.h
    assert np.min(vals[mask]) > -1e-6


def test_symmetry(disk64):
    x, y = np.array([0.3, 0.1]), np.array([-0.2, -0.4])
    gx = greens.regular_part(disk64, x)
    gy = greens.regular_part(disk64, y)
    gxy = float(gx.green_values(y[None, :])[0])
    gyx = float(gy.green_values(x[None, :])[0])
    assert abs(gxy - gyx) < 5 * disk64.h * abs(gxy)


def test_robin_derivatives_center(disk64):
    grad, hess = greens.robin_derivatives(disk64, (0.0, 0.0))
    assert np.max(np.abs(grad)) < 1e-8
    assert np.allclose(hess, np.eye(2) / np.pi, atol=6e-3)


def test_robin_derivatives_off_center(disk64):
    grad, hess = greens.robin_derivatives(disk64, (0.3, 0.0))
    assert grad == pytest.approx(unit_disk_grad_R(np.array([0.3, 0.0])), abs=5e-4)
    assert hess == pytest.approx(unit_disk_hess_R(np.array([0.3, 0.0])), abs=3e-3)


def test_robin_gradient_antisymmetry(disk64):
    gp, _ = greens.robin_derivatives(disk64, (0.25, 0.15))
    gm, _ = greens.robin_derivatives(disk64, (-0.25, -0.15))
    assert np.allclose(gp, -gm, atol=1e-6)


def test_oracle_convergence_order():
    errs = []
    hs = (1.0 / 32, 1.0 / 64, 1.0 / 128)
    pts = [np.array(p) for p in [(0.0, 0.0), (0.3, 0.2), (-0.45, 0.1), (0.1, -0.55)]]
    for h in hs:
        m = build_mesh(make_domain("disk", r=1.0), h)
        err = max(
            abs(greens.regular_part(m, p).R_value - unit_disk_R(p)) for p in pts
        )
        errs.append(err)
    order = np.log2(errs[0] / errs[2]) / 2
    assert order >= 1.5


def test_source_near_boundary_rejected(disk64):
    with pytest.raises(SourceNearBoundaryError):
        greens.regular_part(disk64, (0.999, 0.0))
    with pytest.raises(SourceNearBoundaryError):
        greens.regular_part(disk64, (1.5, 0.0))


def test_query_at_source_rejected(disk64):
    gd = greens.regular_part(disk64, (0.2, 0.2))
    with pytest.raises(QueryAtSourceError):
        greens.green_eval(gd, (0.2, 0.2))


def test_closed_form_sanity():
    x = np.array([0.5, 0.0])
    assert unit_disk_R(x) == pytest.approx(-np.log(0.75) / (2 * np.pi))
    assert unit_disk_G(np.zeros(2), x) == pytest.approx(0.110318, abs=1e-6)
    assert unit_disk_grad_R(np.array([0.3, 0.0]))[0] == pytest.approx(0.104937, abs=1e-6)
    assert unit_disk_hess_R(np.zeros(2))[0, 0] == pytest.approx(1 / np.pi)
