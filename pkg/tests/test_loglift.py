import math

import numpy as np
import pytest

import tractdim as td
from tractdim.loglift import branch_growth_bound, expansion_margin
from tractdim.numerics import TWO_PI


def test_normalize_identity_for_flagship():
    f = td.exponential_family(1.0, math.e)
    g = td.normalize_family(f)
    assert g.r0 == f.r0
    assert g.tract_threshold == pytest.approx(1.0)


def test_normalize_lam_2_5_keeps_tract_off_origin():
    g = td.normalize_family(td.exponential_family(2.5, math.e))
    assert g.tract_threshold == pytest.approx(1.0 - math.log(2.5))
    assert g.tract_threshold > 0  # 0 stays outside the closed tract
    assert abs(g.plane_map(0.0 + 0.0j)) < g.r0


def test_normalize_enlarges_radius_when_needed():
    g = td.normalize_family(td.exponential_family(10.0, math.e))
    assert g.r0 > abs(g.lam)
    assert abs(g.plane_map(0.0 + 0.0j)) < g.r0


def test_user_family_missing_callbacks_is_config_error():
    with pytest.raises(td.ConfigError):
        td.user_family(td.UserCallbacks(plane_map=lambda z: z), r0=3.0)


def test_user_family_roundtrip():
    # wire the exponential closed forms through the callback surface
    lam = 1.0
    cbs = td.UserCallbacks(
        plane_map=lambda z: lam * np.exp(z),
        lift=lambda w: np.exp(w),
        lift_deriv=lambda w: np.exp(w),
        inv0=lambda z: np.log(np.asarray(z, dtype=complex)),
        inv0_deriv=lambda z: 1.0 / np.asarray(z, dtype=complex),
    )
    f = td.normalize_family(td.user_family(cbs, r0=math.e))
    pt, dv = td.inv_branch(f, 0, 100.0)
    assert pt == pytest.approx(math.log(100.0))
    assert dv == pytest.approx(0.01)


def test_eval_lift_closed_form(fam):
    val, dv = td.eval_lift(fam, math.log(100.0))
    assert val == pytest.approx(100.0, rel=1e-12)
    assert dv == pytest.approx(100.0, rel=1e-12)


def test_eval_lift_periodicity(fam):
    w = math.log(100.0) + 0.3j
    v1, _ = td.eval_lift(fam, w)
    v2, _ = td.eval_lift(fam, w + TWO_PI * 1j)
    assert abs(v1 - v2) <= 1e-12 * (1.0 + abs(v1))


def test_eval_lift_outside_tracts_raises(fam):
    with pytest.raises(td.DomainError):
        td.eval_lift(fam, math.log(0.5))


@pytest.mark.parametrize("lam", [1.0, 2.5])
def test_conjugacy_residual(lam):
    f = td.normalize_family(td.exponential_family(lam, math.e))
    rng = np.random.default_rng(11)
    for s in range(-3, 4):
        zeta = f.ln_r0 + 0.2 + 19.8 * rng.random(1000) \
            + 1j * (rng.random(1000) * 60.0 - 30.0)
        w, _ = td.inv_branch(f, s, zeta)
        lhs = f.plane_map(np.exp(w))
        rhs = np.exp(np.asarray(f.lift(w)))
        assert np.all(np.abs(lhs - rhs) <= 1e-10 * (1.0 + np.abs(rhs)))


def test_inv_branch_examples(fam):
    pt, dv = td.inv_branch(fam, 0, 100.0)
    assert pt == pytest.approx(4.60517, abs=1e-5)
    assert dv == pytest.approx(0.01, rel=1e-12)
    pt2, _ = td.inv_branch(fam, 2, 100.0)
    assert pt2 == pytest.approx(pt + 4j * math.pi, rel=1e-12)
    with pytest.raises(td.DomainError):
        td.inv_branch(fam, 0, fam.ln_r0 - 1.0)


def test_branch_inversion_property(fam):
    rng = np.random.default_rng(5)
    zeta = fam.ln_r0 + 0.1 + 40.0 * rng.random(1000) \
        + 1j * (rng.random(1000) * 80.0 - 40.0)
    for s in (-3, 0, 2):
        w, _ = td.inv_branch(fam, s, zeta)
        back = np.asarray(fam.lift(w))
        assert np.all(np.abs(back - zeta) <= 1e-9 * (1.0 + np.abs(zeta)))


def test_branch_periodicity_property(fam):
    rng = np.random.default_rng(6)
    zeta = fam.ln_r0 + 0.1 + 10.0 * rng.random(200) + 1j * rng.random(200)
    base, _ = td.inv_branch(fam, 0, zeta)
    for s in (-5, 1, 3):
        w, _ = td.inv_branch(fam, s, zeta)
        err = np.abs((w - base) - TWO_PI * 1j * s)
        assert np.all(err <= 1e-12 * (1.0 + TWO_PI * abs(s)))


def test_branch_derivative_against_finite_differences(fam):
    rng = np.random.default_rng(7)
    zeta = fam.ln_r0 + 0.5 + 30.0 * rng.random(1000) \
        + 1j * (rng.random(1000) * 40.0 - 20.0)
    worst = td.fd_derivative_check(lambda z: td.inv_branch(fam, 1, z), zeta)
    assert worst <= 1e-6


def test_expansion_margin_positive(fam):
    rng = np.random.default_rng(8)
    zeta = fam.ln_r0 + 0.1 + 30.0 * rng.random(2000) \
        + 1j * (rng.random(2000) * 100.0 - 50.0)
    w, _ = td.inv_branch(fam, 1, zeta)
    assert np.all(expansion_margin(fam, w) > 0)


def test_growth_report_closed_form(fam):
    xs = [10.0 ** k for k in range(1, 13)]
    rep = td.check_growth(fam, xs)
    assert rep.strictly_increasing
    for k, val in zip(range(1, 13), rep.re_values):
        assert val == pytest.approx(k * math.log(10.0), rel=1e-12)


def test_growth_report_flags_repeat(fam):
    rep = td.check_growth(fam, [10.0, 10.0, 100.0])
    assert not rep.strictly_increasing
    assert rep.nondecreasing


def test_growth_threshold_crossing(fam):
    # threshold ln R0 + 2D with D = 25 is first exceeded at x = 10^23
    xs = [10.0 ** k for k in range(1, 31)]
    rep = td.check_growth(fam, xs, thresholds=[fam.ln_r0 + 50.0])
    idx = rep.first_exceeding(fam.ln_r0 + 50.0)
    assert xs[idx] == pytest.approx(1e23)


def test_growth_bound_shared_constant(fam, fam25):
    for f in (fam, fam25):
        xs = np.geomspace(f.ln_r0 + 1.0, 1e6, 100)
        bound, c0 = branch_growth_bound(f, xs)
        re_vals = np.real(np.asarray(f.inv0(xs.astype(complex))))
        assert np.all(re_vals <= bound + 1e-9)
    _, c0 = branch_growth_bound(fam, np.array([2.0]))
    assert c0 == pytest.approx(math.log(2.0), rel=1e-12)
