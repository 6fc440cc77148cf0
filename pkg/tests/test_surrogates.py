import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavrelay import surrogates as sg
from uavrelay.scenario import ChannelParams
from uavrelay.validation import SURROGATES, _gradient, surrogate_checks

pos = st.floats(0.1, 100.0)
frac = st.floats(0.0, 1.0)

# hand evaluation: ln 2 - 1 + 2*sqrt(2) - 3/2
H_AT_TWO = 0.6931471805599453 - 1 + 2.8284271247461903 - 1.5


def test_sqrt_bilinear_examples():
    assert sg.sqrt_bilinear_upper(1, 1, 1, 1) == 1.0
    assert sg.sqrt_bilinear_upper(4, 9, 1, 1) == 6.5


@given(pos, pos, pos, pos)
def test_sqrt_bilinear_upper_bound(x, y, x0, y0):
    assert sg.sqrt_bilinear_upper(x, y, x0, y0) >= math.sqrt(x * y) * (1 - 1e-12)


@given(pos, pos, st.floats(0.1, 10.0))
def test_sqrt_bilinear_equal_on_ray(x0, y0, t):
    # equality holds whenever (x, y) is a positive multiple of (x0, y0)
    assert sg.sqrt_bilinear_upper(t * x0, t * y0, x0, y0) == pytest.approx(t * math.sqrt(x0 * y0), rel=1e-12)


@pytest.mark.parametrize("fn, args", [
    (sg.sqrt_bilinear_upper, (0.0, 1.0, 1.0, 1.0)),
    (sg.log_ratio_lower_h2, (1.0, -1.0, 1.0, 1.0)),
    (sg.log_quotient_lower_h1, (1.0, 1.0, 0.0, 1.0, 1.0, 1.0)),
])
def test_nonpositive_inputs_rejected(fn, args):
    with pytest.raises(ValueError):
        fn(*args)


@pytest.mark.parametrize("fn, args", [
    (sg.sqrt_bilinear_upper, (1.0, 1.0, 1e-13, 1.0)),
    (sg.log_ratio_lower_h2, (1.0, 1.0, 1.0, 0.0)),
    (sg.h1_lower_coefficients, (1.0, 1e-20, 1.0)),
])
def test_degenerate_expansion_is_an_error(fn, args):
    with pytest.raises(sg.DegenerateExpansionError):
        fn(*args)


def test_h2_examples():
    assert sg.log_ratio_lower_h2(3.0, 2.0, 3.0, 2.0) == pytest.approx(math.log(2.5), rel=1e-14)
    assert sg.log_ratio_lower_h2(2.0, 1.0, 1.0, 1.0) == pytest.approx(H_AT_TWO, rel=1e-14)
    assert H_AT_TWO <= math.log(3.0)


def test_h1_examples():
    assert sg.log_quotient_lower_h1(3.0, 2.0, 5.0, 3.0, 2.0, 5.0) == pytest.approx(math.log(1.3), rel=1e-14)
    v = sg.log_quotient_lower_h1(2.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    assert v == pytest.approx(H_AT_TWO, rel=1e-14)
    assert v <= math.log(3.0)


@given(*[pos] * 6)
@settings(max_examples=300)
def test_h1_sandwich(x, y, z, x0, y0, z0):
    h1 = sg.log_quotient_lower_h1(x, y, z, x0, y0, z0)
    pre = sg.log_quotient_lower_h1_presub(x, y, z, x0, y0, z0)
    truth = math.log1p(x / (y * z))
    assert h1 <= pre + 1e-12 * max(1.0, abs(pre))
    assert pre <= truth + 1e-12 * max(1.0, abs(truth))


@given(*[pos] * 4)
@settings(max_examples=300)
def test_h2_lower_bound(x, z, x0, z0):
    assert sg.log_ratio_lower_h2(x, z, x0, z0) <= math.log1p(x / z) + 1e-12


def test_random_dominance_h1_grid():
    rng = np.random.default_rng(0)
    v = rng.uniform(0.1, 100.0, (6, 10_000))
    assert np.all(sg.log_quotient_lower_h1(*v) <= np.log1p(v[0] / (v[1] * v[2])) + 1e-12)


@given(*[pos] * 4)
def test_h2_coefficients_match(x, z, x0, z0):
    c, c_sqrt, c_lin = sg.h2_lower_coefficients(x0, z0)
    direct = sg.log_ratio_lower_h2(x, z, x0, z0)
    assert c + c_sqrt * math.sqrt(x) - c_lin * (x + z) == pytest.approx(direct, rel=1e-10, abs=1e-10)


@given(*[pos] * 6)
def test_h1_coefficients_match(x, y, z, x0, y0, z0):
    c, c_sqrt, c_x, c_sq = sg.h1_lower_coefficients(x0, y0, z0)
    direct = sg.log_quotient_lower_h1(x, y, z, x0, y0, z0)
    coef = c + c_sqrt * math.sqrt(x) - c_x * x - c_sq * ((y / y0) ** 2 + (z / z0) ** 2)
    assert coef == pytest.approx(direct, rel=1e-9, abs=1e-9)


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_dc_coefficients_match(a, phi, a0, phi0):
    c, c_lin = sg.dc_lower_coefficients(a0, phi0)
    direct = sg.bilinear_dc_lower(a, phi, a0, phi0)
    assert c + c_lin * (a + phi) - (a - phi) ** 2 / 4 == pytest.approx(direct, rel=1e-9, abs=1e-9)


def test_dc_examples():
    assert sg.bilinear_dc_lower(0.3, 7.0, 0.3, 7.0) == pytest.approx(2.1, rel=1e-14)
    assert sg.bilinear_dc_lower(2.0, 2.0, 1.0, 1.0) == 3.0


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.floats(0, 10))
def test_dc_lower_bound(a, phi, a0, phi0):
    assert sg.bilinear_dc_lower(a, phi, a0, phi0) <= a * phi + 1e-9 * max(1.0, a * phi)


UNIT = ChannelParams(bandwidth=1.0, noise_power=1.0, ref_gain=1.0)


def _pt(p1, z1, t1, p2, z2):
    return sg.ExpansionPoint(p1, z1, t1, p2, z2)


@given(*[pos] * 5)
def test_xi_terms_tight(p1, z1, t1, p2, z2):
    e = _pt(p1, z1, t1, p2, z2)
    xi = sg.xi_terms_fd(e, e, UNIT)
    phi1, phi2 = sg.phi_fd(e, UNIT)
    assert xi[0] + xi[1] - xi[2] == pytest.approx(phi1, rel=1e-10, abs=1e-12)
    assert xi[3] + xi[4] - xi[5] == pytest.approx(phi2, rel=1e-10, abs=1e-12)


@given(st.lists(pos, min_size=10, max_size=10))
@settings(max_examples=300)
def test_xi_terms_lower_bound_and_match_phi_bar(v):
    pt, e = _pt(*v[:5]), _pt(*v[5:])
    xi = sg.xi_terms_fd(pt, e, UNIT)
    phi1, phi2 = sg.phi_fd(pt, UNIT)
    bar1, bar2 = sg.phi_bar_fd(pt, e, UNIT)
    assert xi[0] + xi[1] - xi[2] <= phi1 + 1e-10
    assert xi[3] + xi[4] - xi[5] <= phi2 + 1e-10
    assert xi[0] + xi[1] - xi[2] == pytest.approx(bar1, rel=1e-9, abs=1e-9)
    assert xi[3] + xi[4] - xi[5] == pytest.approx(bar2, rel=1e-9, abs=1e-9)


def test_phi_bar_fd_tight_with_physical_constants():
    params = ChannelParams()
    e = _pt(0.01, 100.0 ** 2.4, params.noise_power * 3, 0.02, 300.0 ** 2.4)
    np.testing.assert_allclose(sg.phi_bar_fd(e, e, params), sg.phi_fd(e, params), rtol=1e-12)


def test_phi_bar_hd_tight_and_below():
    params = ChannelParams()
    z0 = 200.0 ** 2.4
    assert sg.phi_bar_hd(0.01, z0, 0.01, z0, params) == pytest.approx(sg.phi_hd(0.01, z0, params), rel=1e-12)
    assert sg.phi_bar_hd(0.03, z0 * 2, 0.01, z0, params) <= sg.phi_hd(0.03, z0 * 2, params)


def test_xi_rejects_negative_power():
    e = _pt(1, 1, 1, 1, 1)
    with pytest.raises(ValueError):
        sg.xi_terms_fd(_pt(-1, 1, 1, 1, 1), e, UNIT)


@pytest.mark.parametrize("name", sorted(SURROGATES))
def test_gradient_match(name):
    sur, true, arity, _ = SURROGATES[name]
    rng = np.random.default_rng(1)
    x0 = [np.exp(rng.uniform(-3, 3, 50)) for _ in range(arity)]
    gs = _gradient(lambda *v: sur(*v, *x0), x0)
    gf = _gradient(true, x0)
    err = np.linalg.norm(gs - gf, axis=-1) / np.linalg.norm(gf, axis=-1)
    assert err.max() <= 1e-5


def test_penalty_examples():
    assert sg.penalty_value([0, 1, 1, 0]) == 0.0
    assert sg.penalty_value([0.5] * 4) == -1.0
    grid = np.linspace(0, 1, 101)
    vals = [sg.penalty_value([g]) for g in grid]
    assert grid[int(np.argmin(vals))] == 0.5


@given(st.lists(frac, min_size=1, max_size=8))
def test_penalty_nonpositive_zero_iff_binary(lam):
    v = sg.penalty_value(lam)
    assert v <= 0
    binary = all(x in (0.0, 1.0) for x in lam)
    assert (v == 0) == binary


@given(st.lists(st.tuples(frac, frac), min_size=1, max_size=8))
def test_penalty_linearization(pairs):
    lam, lam0 = map(np.array, zip(*pairs))
    assert sg.penalty_linearized(lam, lam0) <= sg.penalty_value(lam) + 1e-12
    assert sg.penalty_linearized(lam0, lam0) == pytest.approx(sg.penalty_value(lam0), abs=1e-14)


@given(st.lists(frac, min_size=1, max_size=8))
def test_penalty_linearization_at_half_is_constant(lam):
    assert sg.penalty_linearized(lam, [0.5] * len(lam)) == pytest.approx(-0.25 * len(lam), abs=1e-14)


@pytest.mark.parametrize("lam", [[-0.1], [1.2]])
def test_penalty_range(lam):
    with pytest.raises(ValueError):
        sg.penalty_value(lam)
    with pytest.raises(ValueError):
        sg.penalty_linearized([0.5], lam)


def test_full_surrogate_suite_passes():
    checks = surrogate_checks(seed=4)
    assert all(c.passed for c in checks), [c.line() for c in checks if not c.passed]
