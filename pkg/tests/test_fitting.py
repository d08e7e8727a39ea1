import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbeat.beat_model import PulseModel, simulate
from qbeat.dataset import BeatDataset
from qbeat.errors import ConvergenceError, InvalidArgument, ProfileError
from qbeat.fitting import (
    BeatModel,
    FitConfig,
    FitParams,
    FitResult,
    chi2,
    chi2_gradient,
    fit,
    profile_half_widths,
    residual_report,
    uncertainties,
)
from qbeat.hyperfine import HyperfineSystem

TABLE2 = FitParams(7.42, 0.14, 0.02, 2.4)


def synthetic(table1, params, sigma=None):
    sys_ = HyperfineSystem("7/2", "3/2", params.A, params.B)
    rows = simulate(sys_, PulseModel(params.W, params.dt_offset), table1.t)
    return BeatDataset.from_arrays(table1.t, [p for _, p, _ in rows],
                                   table1.sigma if sigma is None else sigma, table1.index)


def test_chi2_zero_at_generating_params(table1, cs):
    data = synthetic(table1, TABLE2)
    assert chi2(TABLE2, cs, data) == pytest.approx(0.0, abs=1e-25)


def test_chi2_single_unit_residual(cs):
    t = np.array([1.0, 5.0, 10.0, 20.0, 40.0])
    model = BeatModel(cs.I, cs.J)
    pl = model.polarization(TABLE2.as_array(), t)
    sigma = np.full(5, 0.02)
    pl[2] += 0.02
    assert chi2(TABLE2, cs, BeatDataset.from_arrays(t, pl, sigma)) == pytest.approx(1.0, rel=1e-12)


def test_chi2_table1_at_table2_params(table1, cs):
    # term-by-term evaluation with exact 6-j amplitudes (independent script)
    assert chi2(TABLE2, cs, table1) == pytest.approx(0.6335656088228806, rel=1e-12)


def test_chi2_needs_more_than_four_points(cs):
    d = BeatDataset.from_arrays([1.0, 2.0, 3.0, 4.0], [0.1] * 4, 0.01)
    with pytest.raises(InvalidArgument):
        chi2(TABLE2, cs, d)
    with pytest.raises(InvalidArgument):
        fit(d, cs)


def test_fit_table1_matches_reported_values(table1_fit):
    p = table1_fit.params
    assert abs(p.A - 7.42) <= 0.06
    assert abs(p.B - 0.14) <= 0.29
    assert abs(p.dt_offset - 0.02) <= 0.52
    assert abs(p.W - 2.4) <= 3.3
    assert table1_fit.n_points == 37 and table1_fit.n_dof == 33
    assert 0.3 < table1_fit.red_chi2 < 1.0


def test_fit_result_invariants(table1_fit, table1, cs):
    model = BeatModel(cs.I, cs.J)
    r = (model.polarization(table1_fit.params.as_array(), table1.t) - table1.pl) / table1.sigma
    np.testing.assert_allclose(table1_fit.residuals, r, rtol=0, atol=1e-15)
    assert table1_fit.n_dof == table1_fit.n_points - 4
    assert table1_fit.red_chi2 == pytest.approx(chi2(table1_fit.params, cs, table1), rel=1e-14)


def test_uncertainties_close_to_reported(table1_fit):
    assert table1_fit.uncertainty_method == "profile"
    assert table1_fit.two_sigma["A"] == pytest.approx(0.06, rel=0.5)
    assert table1_fit.two_sigma["B"] == pytest.approx(0.29, rel=0.5)


def test_w_profile_is_wide(table1_fit):
    lo, hi = table1_fit.intervals["W"]
    assert hi - lo > 2.0
    assert table1_fit.two_sigma["W"] > 1.0


def test_w_interval_overlaps_zero(table1_fit):
    assert table1_fit.intervals["W"][0] <= 0.0


def test_covariance_switch(table1, cs, table1_fit):
    cfg = FitConfig(uncertainty="covariance")
    unc = uncertainties(table1_fit.params, table1, cs, cfg)
    assert unc.method == "covariance"
    # near-parabolic directions agree with the profile
    assert unc.two_sigma["A"] == pytest.approx(table1_fit.two_sigma["A"], rel=0.05)
    assert unc.two_sigma["B"] == pytest.approx(table1_fit.two_sigma["B"], rel=0.05)


def test_noiseless_recovery(table1, cs):
    truth = FitParams(7.42, 0.14, 0.0, 0.0)
    res = fit(synthetic(table1, truth), cs)
    assert res.params.A == pytest.approx(7.42, rel=1e-4)
    assert res.params.B == pytest.approx(0.14, rel=1e-4)
    assert abs(res.params.dt_offset) <= 1e-4
    assert abs(res.params.W) <= 1e-4
    assert res.red_chi2 < 1e-12


def test_profile_matches_analytic_parabola():
    # linear residuals -> exactly quadratic chi2 with known curvature
    rng = np.random.default_rng(1)
    M = rng.normal(size=(30, 3))
    y = rng.normal(size=30)
    x0, *_ = np.linalg.lstsq(M, y, rcond=None)
    cov = np.linalg.inv(M.T @ M)
    lower, upper = np.full(3, -np.inf), np.full(3, np.inf)
    for k in range(3):
        down, up, db, ub = profile_half_widths(lambda x: M @ x - y, lambda x: M, x0, k, lower, upper)
        sigma = np.sqrt(cov[k, k])
        assert down == pytest.approx(sigma, rel=1e-2)
        assert up == pytest.approx(sigma, rel=1e-2)
        assert not db and not ub


def test_profile_truncated_at_bound():
    M = np.eye(2)
    y = np.array([0.1, 0.0])
    down, up, db, ub = profile_half_widths(lambda x: M @ x - y, lambda x: M, np.array([0.1, 0.0]), 0,
                                           np.array([0.0, -np.inf]), np.array([np.inf, np.inf]))
    assert db and not ub
    assert down == pytest.approx(0.1)
    assert up == pytest.approx(1.0, rel=1e-6)


def test_profile_error_when_flat():
    flat = lambda x: np.array([x[1] - 1.0, 0.0])  # noqa: E731
    jac = lambda x: np.array([[0.0, 1.0], [0.0, 0.0]])  # noqa: E731
    lower, upper = np.full(2, -np.inf), np.full(2, np.inf)
    with pytest.raises(ProfileError):
        profile_half_widths(flat, jac, np.array([0.0, 1.0]), 0, lower, upper,
                            FitConfig(profile_max_doublings=3), step=0.1)


def test_convergence_error(table1, cs):
    cfg = FitConfig(max_nfev=1, n_refine=2, uncertainty="none")
    with pytest.raises(ConvergenceError):
        fit(table1, cs, cfg)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"grid": {"A": (10.0, 5.0, 0.25)}},
        {"grid": {"A": (5.0, 10.0, 0.0)}},
        {"grid": {"Q": (0.0, 1.0, 1.0)}},
        {"grid": {"W": (-1.0, 5.0, 1.0)}},
        {"W_min": -0.5},
        {"n_refine": 0},
        {"uncertainty": "bootstrap"},
        {"grid": {"dt_offset": (-9.0, 0.0, 1.0)}},
    ],
)
def test_bad_config(kwargs):
    with pytest.raises(InvalidArgument):
        FitConfig(**kwargs)


def test_pinned_grid_axis():
    cfg = FitConfig(grid={"A": (7.42, 7.42, 0.0)})
    assert list(cfg.axis_values("A")) == [7.42]
    assert len(cfg.grid_nodes()) == 9 * 5 * 6


def test_residual_report_examples():
    def result(res):
        return FitResult(TABLE2, {}, 0.0, tuple(res), len(res), len(res) - 4)

    rep = residual_report(result([0.0] * 6))
    assert rep.mean == 0.0 and rep.fraction_within_1sigma == 1.0
    rep = residual_report(result([1.5, -1.5]))
    assert rep.mean == 0.0 and rep.fraction_within_1sigma == 0.0
    assert [r for _, _, r in rep.per_point] == [1.5, -1.5]


def test_sigma_rescaling_keeps_argmin(table1, cs, table1_fit):
    scaled = fit(table1.scaled_sigma(3.0), cs, FitConfig(uncertainty="none"))
    np.testing.assert_allclose(scaled.params.as_array(), table1_fit.params.as_array(), atol=1e-6)
    assert scaled.red_chi2 == pytest.approx(table1_fit.red_chi2 / 9.0, rel=1e-8)


def test_permutation_invariance(table1, cs, table1_fit):
    order = np.random.default_rng(11).permutation(len(table1))
    shuffled = table1.subset(order)
    assert chi2(TABLE2, cs, shuffled) == pytest.approx(chi2(TABLE2, cs, table1), rel=1e-13)
    res = fit(shuffled, cs, FitConfig(uncertainty="none"))
    np.testing.assert_allclose(res.params.as_array(), table1_fit.params.as_array(), atol=1e-6)


def test_determinism(table1, cs):
    a = fit(table1, cs)
    b = fit(table1, cs)
    assert a == b
    assert a.to_dict() == b.to_dict()


def test_gradient_matches_central_differences(table1, cs):
    rng = np.random.default_rng(2024)
    for _ in range(20):
        x = np.array([rng.uniform(5, 10), rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(0, 5)])
        grad = chi2_gradient(x, cs, table1)
        num = np.empty(4)
        for k in range(4):
            h = 1e-5 * max(1.0, abs(x[k]))
            e = np.zeros(4)
            e[k] = h
            num[k] = (chi2(x + e, cs, table1) - chi2(x - e, cs, table1)) / (2 * h)
        scale = np.max(np.abs(num))
        np.testing.assert_allclose(grad, num, rtol=1e-6, atol=1e-6 * scale)


@settings(max_examples=40, deadline=None)
@given(st.floats(5, 10), st.floats(-2, 2), st.floats(-1, 1), st.floats(0, 5))
def test_chi2_nonnegative(A, B, dt, W):
    from qbeat.dataset import load_table1

    assert chi2(FitParams(A, B, dt, W), HyperfineSystem("7/2", "3/2"), load_table1()) >= 0.0
