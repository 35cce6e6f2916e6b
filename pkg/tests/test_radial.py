import math

import numpy as np
import pytest

from spikelab import radial


@pytest.fixture(scope="module")
def rad20():
    return radial.solve_radial(20.0)


@pytest.fixture(scope="module")
def rad80():
    return radial.solve_radial(80.0)


def test_boundary_and_peak(rad20):
    assert float(rad20.u(1.0)) == 0.0
    assert float(rad20.u(0.0)) == pytest.approx(rad20.u0)
    assert rad20.eps0 * rad20.y_boundary == pytest.approx(1.0)


def test_monotone_decrease(rad20):
    r = np.linspace(0.0, 1.0, 200)
    u = rad20.u(r)
    assert np.all(np.diff(u) <= 1e-12)


def test_peak_heights_decrease_to_sqrt_e():
    vals = [radial.solve_radial(p).u0 for p in (10, 20, 40, 80)]
    assert all(np.diff(vals) < 0)
    # the height crosses sqrt(e) near p ~ 60: the 1/p term outweighs the
    # -log p/(p-1) term below that, and the approach is from below beyond
    assert all(v > math.sqrt(math.e) for v in vals[:3])
    assert vals[3] < math.sqrt(math.e)
    assert vals[-1] == pytest.approx(math.sqrt(math.e), rel=0.01)


def test_defining_relation(rad80):
    # eps = (p u0^(p-1))^(-1/2) reproduced from the stored pieces
    assert math.log(rad80.eps0) == pytest.approx(
        -0.5 * (math.log(80) + 79 * math.log(rad80.u0)), abs=1e-10
    )
    assert rad80.tail_active


def test_mass_deficit_tends_to_three():
    rhos = [radial.solve_radial(p).mass_deficit() for p in (20, 40, 80)]
    assert all(np.diff(rhos) > 0)
    assert 2.5 <= rhos[-1] <= 3.5


def test_energy_toward_8pie():
    es = [radial.solve_radial(p).energy() for p in (20, 40, 80)]
    target = 8 * np.pi * np.e
    assert all(np.diff(es) > 0)
    assert abs(es[-1] - target) / target < 0.1


def test_w_is_bounded_by_minus_p(rad20):
    y = np.geomspace(1e-3, rad20.y_boundary * 0.999, 500)
    w = rad20.w(y)
    assert np.all(w <= 0)
    assert np.all(w / rad20.p > -1.0 + 1e-12)


def test_decay_envelope(rad80):
    # w <= (4 - delta) log(1/|y|) + C with delta = 0.5
    y = np.geomspace(10.0, min(rad80.y_boundary, 1e6), 200)
    margin = rad80.w(y) + 3.5 * np.log(y)
    assert np.max(margin) < 10.0


def test_flux_follows_mass_deficit(rad20, rad80):
    # total flux = mass/(2 pi), so alpha = 4(1 - 3/p) + o(1/p)
    assert rad20.alpha < rad80.alpha < 4.0
    assert rad80.alpha == pytest.approx(4.0 * (1 - 3.0 / 80.0), rel=0.01)


def test_mode_counts_and_margins(rad20):
    spec = radial.disk_spectrum(rad20, m_max=3)
    assert spec.morse_index == 1
    near = spec.eigenvalues_near_zero(4)
    assert near[0][1] == 1  # translation pair is nearest zero
    assert near[0][0] > 0
    assert spec.margin() == pytest.approx(near[0][0])


def test_mode1_eigenvalue_scales_like_8_over_p():
    lams = []
    for p in (20.0, 40.0):
        r = radial.solve_radial(p)
        lam, _, _ = radial.mode1_eigenvalue(r, index=1)
        lams.append(lam)
    assert lams[0] == pytest.approx(2 * lams[1], rel=0.15)


def test_mode0_sturm_count(rad20):
    op = radial.mode_operator(rad20, 0)
    assert op.count_below(0.0) == 1  # the concentrated ground mode only
    op2 = radial.mode_operator(rad20, 2)
    assert op2.count_below(0.0) == 0


def test_grid_refinement_stability(rad20):
    s1 = radial.disk_spectrum(rad20, m_max=2, n=3000)
    s2 = radial.disk_spectrum(rad20, m_max=2, n=6000)
    assert s1.margin() == pytest.approx(s2.margin(), rel=1e-4)


def test_mode1_kernel_data(rad80):
    lam, rg, xi = radial.mode1_eigenvalue(rad80, index=1)
    kd = radial.mode1_kernel_data(rad80, xi, rg)
    assert kd["residual"] < 0.02
    assert abs(kd["B"] + 8 * np.pi * kd["b"]) < 0.05 * abs(8 * np.pi * kd["b"])


def test_invalid_p_rejected():
    with pytest.raises(ValueError):
        radial.solve_radial(1.0)
