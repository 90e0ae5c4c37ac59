import json

import numpy as np
import pytest

from ossfield import homog
from ossfield.cells import QuadratureSpec
from ossfield.errors import DomainError
from ossfield.fields import HARMONIZABLE, FieldSpec, simulate
from ossfield.stable import ecf_panel
from ossfield.verify import (ECFReport, increments_negative_control, lebesgue_scaling_check,
                             norm_bound_slopes, oss_mc_test, oss_negative_control,
                             properness_test, stationary_increments_mc_test, theta_panel,
                             z_threshold)

FAST = QuadratureSpec(angular=8, radial_per_shell=2, tail_tol=1e-3)
E2 = np.diag([2.0, 1.25])
K2 = homog.sum_powers([0.5, 0.8])


def spec(variant="moving_average", alpha=1.5):
    return FieldSpec(E=E2, D=np.diag([0.4, 0.6]), alpha=alpha, kernel=K2, variant=variant,
                     quad=FAST)


def degenerate_spec():
    """d = 1, q / alpha = 0.625 is an eigenvalue of D: first component vanishes."""
    return FieldSpec(E=[[1.25]], D=np.diag([0.625, 0.4]), alpha=2.0,
                     kernel=homog.sum_powers([0.8]), quad=FAST)


def test_z_threshold():
    assert z_threshold(1) == 4.0
    assert z_threshold(40) == 4.0
    assert z_threshold(10 ** 4) > 4.0


def test_one_sample_report_recomputes():
    rng = np.random.default_rng(0)
    x = rng.standard_cauchy((4000, 1))
    th = np.array([[0.5], [1.0], [2.0]])
    est, se = ecf_panel(x, th)
    rep = ECFReport("cauchy", th, est, se, theoretical_exponent=np.abs(th[:, 0])).finalize()
    zr, zi = rep.recompute_z()
    np.testing.assert_array_equal(zr, rep.z_scores)
    assert rep.passed and rep.max_abs_z < 4
    assert len(rep.rows()) == 3
    json.dumps(rep.to_dict())
    bad = ECFReport("cauchy", th, est, se, theoretical_exponent=2 * np.abs(th[:, 0])).finalize()
    assert not bad.passed


def test_theta_panel_hits_target_range():
    s = simulate(spec(), [[0.5, 0.0], [0.0, 0.5]], 2, 0)
    th = theta_panel(s.design, n=12, seed=3)
    gam = s.design.exponent(th)
    assert th.shape == (12, 2, 2)
    assert np.all((gam >= 0.3 - 1e-9) & (gam <= 2.0 + 1e-9))


def test_oss_with_unit_scaling_passes_and_control_fails():
    s = spec()
    rep = oss_mc_test(s, 1.0, [[0.5, 0.0], [0.0, 0.5]], n_rep=3000, seed=1)
    assert rep.passed
    ctrl = oss_negative_control(rep, s, factor=1.0)
    assert ctrl.max_abs_z == pytest.approx(rep.max_abs_z)
    with pytest.raises(DomainError):
        oss_mc_test(s, -2.0, [[0.5, 0.0]], n_rep=10)


def test_oss_control_detects_wrong_exponent():
    s = spec()
    rep = oss_mc_test(s, 4.0, [[0.5, 0.0], [0.0, 0.5]], n_rep=3000, seed=2)
    assert rep.passed
    assert not oss_negative_control(rep, s, factor=1.5).passed


def test_increments_with_zero_shift_passes():
    rep = stationary_increments_mc_test(spec(), [0.0, 0.0], [[0.5, 0.0]], n_rep=3000, seed=1)
    assert rep.passed


def test_increments_control_detects_missing_base_point():
    rep = stationary_increments_mc_test(spec(), [0.6, 0.6], [[0.5, 0.0]], n_rep=3000, seed=4)
    assert rep.passed
    assert not increments_negative_control(rep).passed


def test_origin_only_is_degenerate_pass():
    rep = oss_mc_test(spec(), 2.0, [[0.0, 0.0]], n_rep=50, seed=0)
    assert rep.passed and rep.max_abs_z == 0.0
    np.testing.assert_array_equal(rep.empirical, 1.0)


def test_properness_full_for_harmonizable():
    x = simulate(spec(HARMONIZABLE), [[0.5, 0.3]], 4000, 3).replicates[:, 0, :]
    assert properness_test(x).verdict == "full"


def test_properness_flags_degenerate_control():
    s = degenerate_spec()
    assert not s.proper
    x = simulate(s, [[0.7]], 4000, 3).replicates[:, 0, :]
    np.testing.assert_array_equal(x[:, 0], 0.0)
    rep = properness_test(x)
    assert rep.verdict == "suspect"
    assert abs(rep.offending[0]) == pytest.approx(1.0)


def test_properness_needs_enough_replicates():
    with pytest.raises(DomainError):
        properness_test(np.ones((10, 2)))


def test_norm_bound_diagonal_and_jordan():
    small, large = np.geomspace(1e-6, 1e-2, 41), np.geomspace(1e2, 1e6, 41)
    diag = norm_bound_slopes(np.diag([0.4, 0.6]), small, large)
    assert diag.slope_small == pytest.approx(0.4, abs=1e-9)
    assert diag.slope_large == pytest.approx(0.6, abs=1e-9)
    J = [[0.5, 1.0], [0.0, 0.5]]
    # ||r^J|| ~ r^0.5 |ln r|: the log factor only fades on very wide grids
    near = norm_bound_slopes(J, small, large)
    assert not near.within_slack
    far = norm_bound_slopes(J, np.geomspace(1e-24, 1e-20, 41), np.geomspace(1e20, 1e24, 41))
    assert far.within_slack
    with pytest.raises(DomainError):
        norm_bound_slopes(J, np.geomspace(1e-3, 1e-1, 5), large)
    with pytest.raises(DomainError):
        norm_bound_slopes(np.diag([0.0, 1.0]), small, large)


@pytest.mark.parametrize("E", [np.diag([2.0, 1.25]), np.array([[1.5, 0.4], [-0.2, 1.0]]),
                               np.array([[1.0, 0.3, 0.0], [0.0, 1.2, 0.1], [0.2, 0.0, 0.8]])])
def test_lebesgue_scaling(E):
    rep = lebesgue_scaling_check(E, 20000, seed=1, r=2.0)
    assert rep.passed and rep.det_residual < 1e-12
    assert rep.exact == pytest.approx(2 ** np.trace(E))
