import math

import numpy as np
import pytest

from mcte_lab import (
    ConfigError,
    DomainEscapeError,
    LoopSpec,
    QuadraticDiagonalSurface,
    StepControl,
    StiffnessError,
    TabulatedSurface,
    ToyGranularParams,
    ToyGranularSurface,
    cross_channel_lambdas,
    holonomy,
    invariant_check,
    rectangle_loop,
    sign_flip_diagnostic,
    trace_level_set,
    zeta_along_path,
)
from mcte_lab.flow import write_path_csv

from conftest import C_GRID, V0_GRID, write_table


def traced(surface, q0, span, ctrl=None, channels=(0, 1)):
    q0 = np.asarray(q0, dtype=float)
    path = trace_level_set(surface, q0, 1, span, ctrl or StepControl())
    lams = cross_channel_lambdas(surface, q0)
    for i in channels:
        zeta_along_path(surface, path, i, float(lams[i]))
    return path


def closed_form_V(sigma, V0, sigma0, params):
    ratio = (params.sigma_max - sigma0) / (params.sigma_max - sigma)
    return params.V_J + (V0 - params.V_J) * ratio ** (params.b / params.a)


# ---------------------------------------------------------------------------
# tracing


@pytest.mark.parametrize("a,b", [(1.0, 1.0), (1.3, 0.7)])
def test_decoupled_level_set_matches_closed_form(a, b):
    params = ToyGranularParams(a=a, b=b)
    s = ToyGranularSurface(params)
    path = trace_level_set(s, np.array([0.80, 0.1]), 1, (0.1, 0.7))
    for q in path.qs:
        expect = closed_form_V(q[1], 0.80, 0.1, params)
        assert abs(q[0] - expect) <= 1e-10 * max(1.0, abs(expect))


def test_entropy_conserved_along_paths(toy_c03):
    path = trace_level_set(toy_c03, np.array([0.78, 0.1]), 1, (0.1, 0.6))
    assert np.max(np.abs(path.S_drifts)) <= 1e-13
    assert path.S_drifts[0] == 0.0


def test_path_lands_exactly_on_span_end(toy_c03):
    path = trace_level_set(toy_c03, np.array([0.78, 0.1]), 1, (0.1, 0.6))
    assert path.qs[-1, 1] == 0.6
    assert not path.truncated


def test_param_must_match_q0():
    s = ToyGranularSurface(ToyGranularParams())
    with pytest.raises(ConfigError):
        trace_level_set(s, np.array([0.78, 0.2]), 1, (0.1, 0.6))


def test_circle_oracle():
    # isotropic quadratic: level sets are circles around q*
    s = QuadraticDiagonalSurface(k=(1.0, 1.0), s0=1.0)
    path = trace_level_set(s, np.array([0.6, 0.1]), 1, (0.1, 0.55))
    r2 = 0.6**2 + 0.1**2
    assert np.max(np.abs(np.sum(path.qs**2, axis=1) - r2)) <= 1e-10


def test_near_vertical_segment_traced_through():
    """Driving sigma to where dV/dsigma ~ 56 forces the internal channel
    swap; the endpoint must still match the circle."""
    s = QuadraticDiagonalSurface(k=(1.0, 1.0), s0=1.0)
    path = trace_level_set(s, np.array([0.6, 0.1]), 1, (0.1, 0.60818))
    x_exact = math.sqrt(0.37 - 0.60818**2)
    assert path.qs[-1, 1] == 0.60818
    assert abs(path.qs[-1, 0] - x_exact) <= 1e-10
    assert np.max(np.abs(path.S_drifts)) <= 1e-13


def test_unreachable_span_is_stiff():
    s = QuadraticDiagonalSurface(k=(1.0, 1.0), s0=1.0)
    with pytest.raises(StiffnessError):
        trace_level_set(s, np.array([0.6, 0.1]), 1, (0.1, 0.7))


def test_domain_escape_truncates(toy_decoupled):
    path = trace_level_set(toy_decoupled, np.array([0.80, 0.2]), 1, (0.2, -0.5))
    assert path.truncated
    assert path.escape_note
    assert path.qs[-1, 1] < 0.01


def test_reversal_returns_to_start(toy_c03):
    q0 = np.array([0.78, 0.1])
    fwd = trace_level_set(toy_c03, q0, 1, (0.1, 0.6))
    back = trace_level_set(toy_c03, fwd.qs[-1], 1, (0.6, 0.1))
    assert np.max(np.abs(back.qs[-1] - q0)) <= 1e-9


def test_refinement_has_no_drift_plateau_above_target(toy_c03):
    # the Newton projection pins the drift at the rounding floor for any
    # step tolerance, so the whole ladder must sit below 1e-10
    drifts = []
    for rtol in (1e-6, 1e-8, 1e-10, 1e-12):
        ctrl = StepControl(rtol=rtol, atol=rtol * 1e-2)
        path = traced(toy_c03, [0.78, 0.1], (0.1, 0.6), ctrl)
        drifts.append(float(invariant_check(path).max_rel_drift.max()))
    assert max(drifts) <= 1e-10


# ---------------------------------------------------------------------------
# zeta and the invariant


def test_zeta_starts_at_lambda_exactly(toy_c03):
    path = trace_level_set(toy_c03, np.array([0.78, 0.1]), 1, (0.1, 0.6))
    zeta_along_path(toy_c03, path, 0, 2.5)
    assert path.zetas[0, 0] == 2.5
    assert path.lam[0] == 2.5


def test_zeta_closed_form_decoupled():
    params = ToyGranularParams(a=1.3, b=0.7)
    s = ToyGranularSurface(params)
    path = trace_level_set(s, np.array([0.82, 0.15]), 1, (0.15, 0.65))
    zeta_along_path(s, path, 0, 1.0)
    for q, z in zip(path.qs, path.zetas[:, 0]):
        expect = ((1.0 - q[1]) / (1.0 - 0.15)) ** (params.b / params.a)
        assert abs(z - expect) <= 1e-10 * expect


@pytest.mark.parametrize("c", C_GRID)
@pytest.mark.parametrize("V0", V0_GRID)
def test_beta_ratio_identity_grid(c, V0):
    # exp of the line integral must reproduce beta_i(q)/beta_i(q0):
    # the one-form is d log beta_i restricted to the level set
    s = ToyGranularSurface(ToyGranularParams(c=c))
    path = traced(s, [V0, 0.1], (0.1, 0.6))
    for i in (0, 1):
        ratio = path.zetas[:, i] / path.zetas[0, i]
        beta_ratio = path.betas[:, i] / path.betas[0, i]
        assert np.max(np.abs(ratio - beta_ratio) / np.abs(beta_ratio)) <= 1e-10


@pytest.mark.parametrize("c", C_GRID)
@pytest.mark.parametrize("V0", V0_GRID)
def test_invariant_flat_across_grid(c, V0):
    s = ToyGranularSurface(ToyGranularParams(c=c))
    path = traced(s, [V0, 0.1], (0.1, 0.6))
    inv = invariant_check(path)
    assert float(inv.max_rel_drift.max()) <= 1e-10
    # cross-channel normalization makes C a single scalar
    assert math.isclose(inv.C_mean[0], inv.C_mean[1], rel_tol=1e-12)


def test_zeta_varies_even_with_constant_metric():
    """On the constant-diagonal surface the g_ii beta_j term keeps the
    one-form nonzero, so zeta moves; the product zeta*T still holds flat.
    Endpoint recorded: beta_V ratio on the circle gives x(0.5)/x(0.1)."""
    s = QuadraticDiagonalSurface(k=(1.0, 1.0), s0=1.0)
    path = traced(s, [0.6, 0.1], (0.1, 0.5))
    assert float(invariant_check(path).max_rel_drift.max()) <= 1e-10
    z_end = path.zetas[-1, 0]
    assert abs(z_end - path.zetas[0, 0]) > 0.4  # far from constant
    assert math.isclose(z_end, math.sqrt(0.12) / 0.6, rel_tol=1e-10)


def test_cross_channel_lambdas_share_C(toy_c03):
    q0 = np.array([0.78, 0.1])
    lams = cross_channel_lambdas(toy_c03, q0)
    assert lams[0] == 1.0
    from mcte_lab import metric_at
    mp = metric_at(toy_c03, q0)
    assert math.isclose(lams[1] * mp.T[1], 1.0 * mp.T[0], rel_tol=1e-14)


# ---------------------------------------------------------------------------
# holonomy


def test_holonomy_zero_when_decoupled(toy_decoupled):
    loop = rectangle_loop(0.78, 0.82, 0.1, 0.3, 8)
    assert abs(holonomy(toy_decoupled, loop, 0)) <= 1e-10


def test_holonomy_nonzero_when_coupled(toy_c03):
    loop = rectangle_loop(0.78, 0.82, 0.1, 0.3, 8)
    h = holonomy(toy_c03, loop, 0)
    assert abs(h) > 1e-3
    assert math.isclose(h, 0.1793799206613606, rel_tol=1e-11)


def test_holonomy_matches_area_integral_oracle(toy_c03):
    """Independent oracle: curl of the closed-form one-form coefficient by
    complex-step differentiation, integrated over the rectangle with a
    48x48 Gauss product rule."""
    a = b = 1.0
    c, VJ, sm = 0.3, 0.75, 1.0

    def omega_sigma_coeff(V, sig):
        # closed forms, complex-analytic in V
        x = V - VJ
        bV = a / x + c * sig / x**2
        bs = -b / (sm - sig) - c / x
        gVV = a / x**2 + 2 * c * sig / x**3
        gVs = -c / x**2
        return (gVV * bs - gVs * bV) / bV**2

    h = 1e-30
    curl = lambda V, sig: omega_sigma_coeff(V + 1j * h, sig).imag / h
    nodes, weights = np.polynomial.legendre.leggauss(48)
    v0, v1, s0, s1 = 0.78, 0.82, 0.1, 0.3
    vm, vr = 0.5 * (v0 + v1), 0.5 * (v1 - v0)
    sm_, sr = 0.5 * (s0 + s1), 0.5 * (s1 - s0)
    area = 0.0
    for u, wu in zip(nodes, weights):
        for t, wt in zip(nodes, weights):
            area += wu * wt * curl(vm + vr * u, sm_ + sr * t)
    area *= vr * sr

    loop = rectangle_loop(v0, v1, s0, s1, 8)
    assert abs(holonomy(toy_c03, loop, 0) - area) <= 1e-8


def test_holonomy_additive_over_subrectangles(toy_c03):
    full = holonomy(toy_c03, rectangle_loop(0.78, 0.82, 0.1, 0.3, 8), 0)
    left = holonomy(toy_c03, rectangle_loop(0.78, 0.80, 0.1, 0.3, 8), 0)
    right = holonomy(toy_c03, rectangle_loop(0.80, 0.82, 0.1, 0.3, 8), 0)
    assert abs(full - (left + right)) <= 1e-10


def test_holonomy_zero_area_loop(toy_c03):
    loop = LoopSpec(vertices=(np.array([0.78, 0.1]), np.array([0.80, 0.2]),
                              np.array([0.82, 0.3])), samples_per_edge=8)
    assert abs(holonomy(toy_c03, loop, 0)) <= 1e-12


def test_holonomy_loop_validation(toy_c03):
    with pytest.raises(ConfigError):
        holonomy(toy_c03, LoopSpec(vertices=(np.array([0.78, 0.1]),
                                             np.array([0.80, 0.2]))), 0)
    bad = LoopSpec(vertices=(np.array([0.70, 0.1]), np.array([0.80, 0.1]),
                             np.array([0.80, 0.3])))
    with pytest.raises(DomainEscapeError):
        holonomy(toy_c03, bad, 0)


def test_rectangle_loop_vertices():
    loop = rectangle_loop(0.78, 0.82, 0.1, 0.3, 5)
    assert loop.samples_per_edge == 5
    vs = np.array(loop.vertices)
    assert vs.shape == (4, 2)
    assert np.array_equal(vs[0], [0.78, 0.1])
    assert np.array_equal(vs[2], [0.82, 0.3])


# ---------------------------------------------------------------------------
# sign-flip diagnostic


def test_sign_flip_is_loud(toy_c03):
    rep = sign_flip_diagnostic(toy_c03, np.array([0.78, 0.1]), (0.1, 0.6), 1, 0)
    assert rep.drift_correct <= 1e-10
    assert rep.drift_flipped >= 0.1
    assert rep.S_drift_max <= 1e-12


def test_sign_flip_noop_when_decoupled(toy_decoupled):
    rep = sign_flip_diagnostic(toy_decoupled, np.array([0.80, 0.1]),
                               (0.1, 0.6), 1, 0)
    assert rep.drift_correct == rep.drift_flipped


def test_sign_flip_grows_with_coupling(toy_c03, toy_c06):
    r3 = sign_flip_diagnostic(toy_c03, np.array([0.78, 0.1]), (0.1, 0.6), 1, 0)
    r6 = sign_flip_diagnostic(toy_c06, np.array([0.78, 0.1]), (0.1, 0.6), 1, 0)
    assert r6.drift_flipped > r3.drift_flipped


def test_sign_flip_requires_full_path(tmp_path, toy_c03):
    t = TabulatedSurface.from_csv(
        write_table(tmp_path / "t.csv", toy_c03, 0.77, 0.84, 0.05, 0.35))
    with pytest.raises(DomainEscapeError):
        sign_flip_diagnostic(t, np.array([0.78, 0.1]), (0.1, 0.6), 1, 0)


# ---------------------------------------------------------------------------
# export


def test_path_csv_round_trips(tmp_path, toy_c03):
    path = traced(toy_c03, [0.78, 0.1], (0.1, 0.6))
    out = tmp_path / "path.csv"
    write_path_csv(path, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "param,q0,q1,S_drift,beta0,beta1,zeta0,zeta1,zT0,zT1"
    assert len(lines) == len(path) + 1
    row = lines[1].split(",")
    assert float(row[1]) == path.qs[0, 0]
    assert float(row[6]) == path.zetas[0, 0]
    # shortest round-trip representation: re-repr gives the same token
    for tok in lines[3].split(","):
        assert repr(float(tok)) == tok
