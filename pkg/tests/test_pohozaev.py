import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikelab import greens, kirchhoff_routh as kr, lane_emden as le, pohozaev as pz
from spikelab.mesh import build_mesh, make_domain

INV_2PI = 1.0 / (2 * np.pi)


@pytest.fixture(scope="module")
def disk96():
    return build_mesh(make_domain("disk", r=1.0), 1.0 / 96)


@pytest.fixture(scope="module")
def green_center(disk96):
    return pz.GreenField(greens.regular_part(disk96, (0.0, 0.0)))


@pytest.fixture(scope="module")
def solved_p8(disk96):
    cfg = kr.psi_eval(disk96, [(0.0, 0.0)])
    u, info = le.newton_solve(disk96, le.ansatz(disk96, cfg, 8.0), 8.0)
    return le.make_entry(disk96, u, 8.0, 1, 0.25, info["residual"])


def test_p_form_green_diagonal(disk96, green_center):
    h = disk96.h
    vals = [pz.p_form(green_center, green_center, (0, 0), t, mesh=disk96) for t in (8 * h, 16 * h)]
    for v in vals:
        assert v == pytest.approx(-INV_2PI, abs=1e-3)
    assert abs(vals[0] - vals[1]) < 1e-3


def test_p_form_affine_cancellation(disk96):
    f = pz.NodeField(disk96, 0.7 * disk96.coords[:, 0] - 0.2 * disk96.coords[:, 1] + 0.3, fill=None)
    assert abs(pz.p_form(f, f, (0.1, 0.0), 0.2, mesh=disk96)) < 1e-10


def test_p_form_green_source_derivative(disk96):
    # closed-form quadrature fixes the value at -(1/2) dR/dh for the
    # source-perturbation derivative field (the paper's Appendix derivation
    # differentiates the singular part in the other slot, flipping the sign
    # it prints); the magnitude |dR/dh|/2 is common to both conventions
    x0 = np.array([0.3, 0.0])
    G = pz.GreenField(greens.regular_part(disk96, x0))
    dG = pz.SourceDerivativeField(disk96, x0, 0, 2 * disk96.h)
    val = pz.p_form(G, dG, x0, 8 * disk96.h, mesh=disk96)
    target = -0.5 * greens.unit_disk_grad_R(x0)[0]
    assert val == pytest.approx(target, rel=2e-3)


def test_q_form_green_diagonal_center(disk96, green_center):
    for i in (1, 2):
        assert abs(pz.q_form(green_center, green_center, (0, 0), 8 * disk96.h, i, mesh=disk96)) < 1e-8


def test_q_form_green_diagonal_off_center(disk96):
    x0 = np.array([0.3, 0.0])
    G = pz.GreenField(greens.regular_part(disk96, x0))
    got = pz.q_form(G, G, x0, 8 * disk96.h, 1, mesh=disk96)
    assert got == pytest.approx(-greens.unit_disk_grad_R(x0)[0], rel=3e-3)


def test_q_form_green_source_derivative(disk96):
    # verified closed-form value: -(1/2) d2R/dx_i dx_h (-(1/2pi) delta at 0)
    x0 = np.array([0.0, 0.0])
    G = pz.GreenField(greens.regular_part(disk96, x0))
    dG = pz.SourceDerivativeField(disk96, x0, 0, 2 * disk96.h)
    q11 = pz.q_form(G, dG, x0, 8 * disk96.h, 1, mesh=disk96)
    q21 = pz.q_form(G, dG, x0, 8 * disk96.h, 2, mesh=disk96)
    assert q11 == pytest.approx(-0.5 / np.pi, rel=3e-3)  # -(1/2) * (1/pi)
    assert abs(q21) < 1e-6


def test_q_form_two_sources(disk96):
    x0 = np.array([0.3, 0.0])
    x1 = np.array([-0.4, 0.1])
    Gj = pz.GreenField(greens.regular_part(disk96, x0))
    Gm = pz.GreenField(greens.regular_part(disk96, x1))
    dg = greens.unit_disk_grad_G(x1, x0)
    for i in (1, 2):
        got = pz.q_form(Gm, Gj, x0, 8 * disk96.h, i, mesh=disk96)
        assert got == pytest.approx(dg[i - 1], abs=3e-4)


def test_zero_cases_vanish_with_theta(disk96):
    # probe centered away from both sources: values tend to zero with theta
    x1 = np.array([-0.4, 0.1])
    c = np.array([0.35, -0.2])
    Gm = pz.GreenField(greens.regular_part(disk96, x1))
    h = disk96.h
    vals = [abs(pz.p_form(Gm, Gm, c, t, mesh=disk96)) for t in (16 * h, 8 * h, 4 * h)]
    assert vals[2] < vals[0] + 1e-6
    assert vals[2] < 2e-3


def test_theta_independence_harmonic_pair(disk96):
    re_z2 = pz.NodeField(disk96, disk96.coords[:, 0] ** 2 - disk96.coords[:, 1] ** 2, fill=None)
    im_z2 = pz.NodeField(disk96, 2 * disk96.coords[:, 0] * disk96.coords[:, 1], fill=None)
    out = pz.theta_independence(re_z2, im_z2, (0.1, 0.05), [0.1, 0.2, 0.3], mesh=disk96)
    assert out["p_spread"] < 1e-10
    assert out["q1_spread"] < 1e-10
    assert out["warning"] is None


def test_theta_independence_green_pair(disk96, green_center):
    h = disk96.h
    out = pz.theta_independence(
        green_center, green_center, (0.0, 0.0), [8 * h, 12 * h, 16 * h], mesh=disk96
    )
    assert out["p_spread"] <= 1e-3


def test_theta_independence_warns_on_nonharmonic(disk96, solved_p8):
    f = pz.NodeField(disk96, solved_p8.u)
    out = pz.theta_independence(f, f, (0.0, 0.0), [0.1, 0.2], mesh=disk96)
    assert out["warning"] is not None


@settings(max_examples=10, deadline=None)
@given(a=st.floats(-2, 2), b=st.floats(-2, 2))
def test_bilinearity(a, b):
    m = build_mesh(make_domain("disk", r=1.0), 1.0 / 24)
    c = (0.05, 0.0)
    f1 = pz.NodeField(m, m.coords[:, 0] ** 2 - m.coords[:, 1] ** 2, fill=None)
    f2 = pz.NodeField(m, m.coords[:, 0] * m.coords[:, 1], fill=None)
    combo = pz.NodeField(m, a * f1.node_values + b * f2.node_values, fill=None)
    lhs = pz.p_form(combo, f1, c, 0.2)
    rhs = a * pz.p_form(f1, f1, c, 0.2) + b * pz.p_form(f2, f1, c, 0.2)
    assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + abs(a) + abs(b)))
    lq = pz.q_form(f1, combo, c, 0.2, 1)
    rq = a * pz.q_form(f1, f1, c, 0.2, 1) + b * pz.q_form(f1, f2, c, 0.2, 1)
    assert lq == pytest.approx(rq, abs=1e-9 * (1 + abs(a) + abs(b)))


def test_symmetry_in_arguments(disk96, green_center):
    f = pz.NodeField(disk96, disk96.coords[:, 0] ** 2 - disk96.coords[:, 1] ** 2, fill=None)
    c, t = (0.0, 0.0), 0.25
    assert pz.p_form(f, green_center, c, t) == pytest.approx(
        pz.p_form(green_center, f, c, t), rel=1e-12
    )
    assert pz.q_form(f, green_center, c, t, 1) == pytest.approx(
        pz.q_form(green_center, f, c, t, 1), rel=1e-12
    )


def test_quadrature_convergence_in_angles(disk96, green_center):
    v1 = pz.p_form(green_center, green_center, (0, 0), 0.1, n_theta=128)
    v2 = pz.p_form(green_center, green_center, (0, 0), 0.1, n_theta=256)
    assert abs(v1 - v2) < 1e-10


def test_circle_hits_boundary(disk96, green_center):
    with pytest.raises(pz.CircleHitsBoundaryError):
        pz.p_form(green_center, green_center, (0.9, 0.0), 0.3, mesh=disk96)


def test_pohozaev_residuals_decrease_with_h(solved_p8):
    reports = {}
    for h in (1.0 / 48, 1.0 / 96):
        m = build_mesh(make_domain("disk", r=1.0), h)
        cfg = kr.psi_eval(m, [(0.0, 0.0)])
        u, info = le.newton_solve(m, le.ansatz(m, cfg, 8.0), 8.0)
        e = le.make_entry(m, u, 8.0, 1, 0.25, info["residual"])
        rep = pz.pohozaev_residuals(m, e.u, 8.0, e.spikes[0].position, 0.125)
        reports[h] = max(abs(rep.p_residual), float(np.max(np.abs(rep.q_residuals))))
    assert reports[1.0 / 96] < reports[1.0 / 48]


def test_pohozaev_rhs_is_order_one_over_p(disk96, solved_p8):
    rep = pz.pohozaev_residuals(disk96, solved_p8.u, 8.0, solved_p8.spikes[0].position, 0.125)
    # both sides of the dilation identity carry the 1/(p+1) factor; the
    # numerator is the O(1) spike mass integral (~ 4 * 8 pi e / p)
    assert rep.rhs_scale < 30.0 / (8.0 + 1.0)


def test_linearized_residuals_small(disk96, solved_p8):
    from spikelab import spectrum as sp

    Lp = sp.assemble_Lp(disk96, solved_p8.u, 8.0)
    from spikelab.linsolve import smallest_eigenpairs

    pairs = smallest_eigenpairs(Lp, m=1, sigma=0.0, tol=2e-6)
    xi = pairs.eigenvectors[:, 0]
    out = pz.linearized_residuals(
        disk96, solved_p8.u, 8.0, xi, solved_p8.spikes[0].position, 0.125
    )
    # the eigenfunction satisfies the linearized equation only up to its
    # eigenvalue; the identity residual is of that size, not zero
    lam = pairs.eigenvalues[0]
    assert abs(out["p_residual"]) < 0.5 * abs(lam) + 0.05


def test_gradient_balance_disk_symmetric(disk96, solved_p8):
    gb = pz.gradient_balance(solved_p8)
    assert len(gb.residuals) == 1
    assert np.hypot(*gb.residuals[0]) < 5e-4
