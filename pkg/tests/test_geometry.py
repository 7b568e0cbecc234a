import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mcte_lab import (
    DegenerateIntensityError,
    MetricPoint,
    QuadraticDiagonalSurface,
    ToyGranularParams,
    ToyGranularSurface,
    correction_estimate,
    levelset_flow_rhs,
    metric_at,
    normal_projection,
    omega_at,
    stability_at,
    stability_det,
)
from mcte_lab.geometry import zero_band

coupled_toy = st.builds(
    ToyGranularParams,
    c=st.floats(0.01, 1.0),
)
in_domain_q = st.tuples(st.floats(0.78, 1.6), st.floats(0.01, 0.9)).map(np.array)


def mk_point(g, beta, q=(0.0, 0.0)):
    """Hand-built MetricPoint for synthetic-matrix cases."""
    g = np.asarray(g, dtype=float)
    beta = np.asarray(beta, dtype=float)
    with np.errstate(divide="ignore"):
        T = 1.0 / beta
    return MetricPoint(q=np.asarray(q, dtype=float), g=g, beta=beta, T=T)


def test_metric_fixture_decoupled():
    s = ToyGranularSurface(ToyGranularParams(c=0.0, V_J=0.0))
    mp = metric_at(s, np.array([0.5, 0.5]))
    assert np.allclose(mp.g, [[4.0, 0.0], [0.0, 4.0]], rtol=1e-13)
    assert np.allclose(mp.beta, [2.0, -2.0], rtol=1e-13)
    assert np.allclose(mp.T, [0.5, -0.5], rtol=1e-13)


def test_metric_fixture_coupled():
    s = ToyGranularSurface(ToyGranularParams(c=0.3, V_J=0.7))
    mp = metric_at(s, np.array([0.78, 0.2]))
    assert math.isclose(mp.g[0, 1], -46.875, rel_tol=1e-12)
    assert math.isclose(stability_det(mp), -1586.9140625, rel_tol=1e-12)


def test_metric_constant_on_quadratic():
    s = QuadraticDiagonalSurface(k=(2.0, 3.0))
    for q in ([0.4, -1.2], [2.0, 0.7]):
        mp = metric_at(s, np.array(q))
        assert np.allclose(mp.g, [[2.0, 0.0], [0.0, 3.0]], atol=1e-14)


@given(params=coupled_toy, q=in_domain_q)
def test_offdiagonal_sign_contract(params, q):
    # positive cross-derivative of S means negative g_Vsigma, always
    q = q + np.array([params.V_J - 0.75, 0.0])
    mp = metric_at(ToyGranularSurface(params), q)
    assert mp.g[0, 1] < 0.0
    assert mp.g[0, 1] == mp.g[1, 0]


def test_offdiagonal_exactly_zero_decoupled(toy_decoupled):
    mp = metric_at(toy_decoupled, np.array([0.82, 0.4]))
    assert mp.g[0, 1] == 0.0


@given(q=in_domain_q)
def test_T_beta_inverse(q):
    mp = metric_at(ToyGranularSurface(ToyGranularParams(c=0.3)), q)
    assert np.allclose(mp.T * mp.beta, 1.0, rtol=1e-15)


def test_omega_own_component_zero(toy_c03):
    mp = metric_at(toy_c03, np.array([0.8, 0.2]))
    assert omega_at(mp, 0).components[0] == 0.0
    assert omega_at(mp, 1).components[1] == 0.0


def test_omega_decoupled_sigma_coefficient_V_independent(toy_decoupled):
    # with g_Vsigma = 0 the coefficient reduces to beta_sigma/a
    vals = []
    for v in (0.80, 0.95, 1.4):
        mp = metric_at(toy_decoupled, np.array([v, 0.3]))
        vals.append(omega_at(mp, 0).components[1])
    assert math.isclose(vals[0], -1.0 / 0.7, rel_tol=1e-13)
    assert math.isclose(vals[0], vals[1], rel_tol=1e-13)
    assert math.isclose(vals[1], vals[2], rel_tol=1e-13)


def test_omega_vanishes_when_decoupled_and_flat():
    mp = mk_point([[5.0, 0.0], [0.0, 1.0]], [2.0, 0.0])
    # beta_sigma = 0 and g_Vsigma = 0: both terms die
    assert np.all(omega_at(mp, 0).components == 0.0)


def test_flow_rhs_fixture():
    s = QuadraticDiagonalSurface(k=(1.0, 1.0))
    mp = metric_at(s, np.array([0.3, 0.4]))
    assert math.isclose(levelset_flow_rhs(mp, 0, 1), 4.0 / 3.0, rel_tol=1e-14)


def test_flow_rhs_same_channel_rejected(toy_c03):
    mp = metric_at(toy_c03, np.array([0.8, 0.2]))
    with pytest.raises(IndexError):
        levelset_flow_rhs(mp, 1, 1)


@given(params=coupled_toy, q=in_domain_q)
def test_flow_rhs_is_beta_times_omega(params, q):
    q = q + np.array([params.V_J - 0.75, 0.0])
    mp = metric_at(ToyGranularSurface(params), q)
    for i, j in ((0, 1), (1, 0)):
        lhs = levelset_flow_rhs(mp, i, j)
        rhs = mp.beta[i] * omega_at(mp, i).components[j]
        assert math.isclose(lhs, rhs, rel_tol=1e-14, abs_tol=1e-300)


def test_two_channel_reduction_100_points(toy_c03):
    """The dsigma coefficient of omega_V written with compactivity chi and
    angoricity A: chi^2 (g_VV/A - g_Vsigma/chi)."""
    rng = np.random.default_rng(8)
    for _ in range(100):
        q = np.array([rng.uniform(0.78, 1.5), rng.uniform(0.01, 0.9)])
        mp = metric_at(toy_c03, q)
        chi, A = mp.T
        expect = chi * chi * (mp.g[0, 0] / A - mp.g[0, 1] / chi)
        got = omega_at(mp, 0).components[1]
        assert math.isclose(got, expect, rel_tol=1e-14)


def test_stability_det_decoupled_positive(toy_decoupled):
    mp = metric_at(toy_decoupled, np.array([0.9, 0.4]))
    assert stability_det(mp) > 0.0
    assert stability_at(mp).is_stable
    assert not stability_at(mp).is_critical


def test_stability_det_rank_one_is_zero():
    mp = mk_point([[1.0, 1.0], [1.0, 1.0]], [1.0, 1.0])
    assert stability_det(mp) == 0.0
    assert stability_at(mp).is_critical


def test_stability_synthetic_indefinite_unstable():
    mp = mk_point([[1.0, 2.0], [2.0, 1.0]], [1.0, 1.0])
    flags = stability_at(mp)
    assert not flags.is_stable
    assert flags.det_g == -3.0


def test_stability_minors_reported_for_n3():
    g = np.diag([1.0, -2.0, 3.0])
    mp = MetricPoint(q=np.zeros(3), g=g, beta=np.ones(3), T=np.ones(3))
    flags = stability_at(mp)
    assert not flags.is_stable
    assert flags.first_failing_minor == 2


def test_zero_band_scales_with_metric():
    mp_small = mk_point([[1.0, 0.0], [0.0, 1.0]], [1.0, 1.0])
    mp_big = mk_point([[100.0, 0.0], [0.0, 100.0]], [1.0, 1.0])
    assert zero_band(mp_big) == 1e4 * zero_band(mp_small)


def test_correction_zero_when_decoupled(toy_decoupled):
    mp = metric_at(toy_decoupled, np.array([0.85, 0.3]))
    assert correction_estimate(mp) == 0.0


def test_correction_fixture():
    s = ToyGranularSurface(ToyGranularParams(c=0.3, V_J=0.7))
    mp = metric_at(s, np.array([0.78, 0.2]))
    # (c/x^2)/(1/x^2 + 2 c sigma/x^3) * |beta_sigma/beta_V| by hand
    assert math.isclose(correction_estimate(mp), 0.6 / 21.875, rel_tol=1e-12)


def test_correction_scale_shrinks_toward_jamming(toy_c03):
    """The Eq-style fractional estimate |g_Vs/g_VV||chi/A| goes to zero at
    the jamming wall: g_VV grows like 1/x^2 faster than the cross term.
    The growing near-jamming effect lives in zeta, not in this local
    ratio (see the sweep fixtures)."""
    vals = [correction_estimate(metric_at(toy_c03, np.array([v, 0.2])))
            for v in (0.90, 0.85, 0.80, 0.79)]
    assert vals[0] > vals[1] > vals[2] > vals[3]
    assert math.isclose(vals[3], 0.0105, rel_tol=1e-12)


def test_degenerate_intensity_guard():
    s = QuadraticDiagonalSurface(k=(1.0, 1.0))
    with pytest.raises(DegenerateIntensityError):
        metric_at(s, np.array([0.0, 1e-13]))


def test_correction_needs_nonzero_g00():
    mp = mk_point([[0.0, 1.0], [1.0, 1.0]], [1.0, 1.0])
    with pytest.raises(DegenerateIntensityError):
        correction_estimate(mp)


def test_normal_projection_trivial_for_scalar_stress(toy_c03):
    mp = metric_at(toy_c03, np.array([0.8, 0.2]))
    proj = normal_projection(mp)
    assert proj.n_hat == 1.0
    assert proj.g_Vsigma == mp.g[0, 1]
    assert proj.A == mp.T[1]


def test_critical_contour_bisection_reproducible(toy_c06):
    """det g = 0 along a fixed sigma is a 1-d root; bisection must land on
    the closed-form contour x = c(sqrt(sigma^2+(1-sigma)^2) - sigma) and
    give bit-identical answers on repeated runs."""
    sigma = 0.5
    det = lambda v: stability_det(metric_at(toy_c06, np.array([v, sigma])))

    def bisect():
        lo, hi = 0.755, 1.3
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if det(lo) * det(mid) <= 0.0:
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-14:
                break
        return 0.5 * (lo + hi)

    v1, v2 = bisect(), bisect()
    assert v1 == v2
    expect = 0.75 + 0.6 * (math.sqrt(0.5**2 + 0.5**2) - 0.5)
    assert math.isclose(v1, expect, abs_tol=1e-10)
