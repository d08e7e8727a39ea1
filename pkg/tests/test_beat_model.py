import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbeat.beat_model import (
    CS_GEOMETRY,
    MHZ_NS,
    DetectionGeometry,
    PulseModel,
    g2,
    polarization_cs,
    polarization_general,
    simulate,
    smear_factor,
    smear_factor_derivative,
)
from qbeat.errors import DomainError, InvalidArgument
from qbeat.hyperfine import HyperfineSystem, beat_spectrum

PRINTED_CONST = 0.2187
PRINTED_AMPS = [0.09375, 0.2009, 0.0375, 0.16042, 0.28875]


def printed_g2(A, B, t):
    """Printed five-cosine expansion, evaluated verbatim."""
    nus = [3 * A - 5 / 7 * B, 7 * A - B, 4 * A - 2 / 7 * B, 9 * A + 3 / 7 * B, 5 * A + 5 / 7 * B]
    return PRINTED_CONST + sum(a * math.cos(2 * math.pi * nu * 1e-3 * t) for a, nu in zip(PRINTED_AMPS, nus))


def test_smear_factor_limits():
    assert smear_factor(37.0, 0.0) == 1.0
    assert smear_factor(500.0, 1.0) == pytest.approx(4 / math.pi**2, abs=1e-12)
    assert smear_factor(1000.0, 1.0) == pytest.approx(0.0, abs=1e-15)


def test_smear_factor_continuity_at_series_cut():
    W = 1.0
    below = smear_factor(1e-6 * (1 - 1e-9) / MHZ_NS, W)
    above = smear_factor(1e-6 * (1 + 1e-9) / MHZ_NS, W)
    assert below == 1.0
    assert abs(above - below) < 1e-10
    for x in (1e-6 * (1 + 1e-9), 1e-5, 1e-3):
        series = 1 - x**2 / 12 + x**4 / 360
        assert abs(smear_factor(x / MHZ_NS, W) - series) < 1e-15


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 200.0), st.floats(0.0, 20.0))
def test_smear_factor_range_and_formula(nu, W):
    s = smear_factor(nu, W)
    assert 0.0 <= s <= 1.0
    x = MHZ_NS * nu * W
    if x > 1e-2:
        assert s == pytest.approx(2 * (1 - math.cos(x)) / x**2, abs=1e-12)


def test_smear_factor_derivative_matches_finite_difference():
    for nu, W in [(22.0, 2.4), (66.8, 3.0), (5.0, 0.01), (37.2, 1e-4)]:
        d_nu, d_W = smear_factor_derivative(nu, W)
        h = 1e-6
        fd_nu = (smear_factor(nu + h, W) - smear_factor(nu - h, W)) / (2 * h)
        fd_W = (smear_factor(nu, W + h) - smear_factor(nu, W - h)) / (2 * h)
        assert float(d_nu) == pytest.approx(fd_nu, rel=1e-6, abs=1e-9)
        assert float(d_W) == pytest.approx(fd_W, rel=1e-6, abs=1e-9)


def test_g2_at_zero_is_one(cs):
    assert g2(beat_spectrum(cs), PulseModel(), 0.0) == pytest.approx(1.0, abs=1e-12)


def test_g2_matches_printed_expansion(cs):
    spec = beat_spectrum(cs)
    assert g2(spec, PulseModel(), 10.0) == pytest.approx(printed_g2(7.42, 0.14, 10.0), abs=1e-4)
    assert printed_g2(7.42, 0.14, 10.0) == pytest.approx(-0.2540393198258032, abs=1e-12)
    ts = np.linspace(0, 120, 61)
    ours = g2(spec, PulseModel(), ts)
    printed = np.array([printed_g2(7.42, 0.14, t) for t in ts])
    assert np.max(np.abs(ours - printed)) < 1e-4


def test_g2_long_time_average(cs):
    spec = beat_spectrum(cs)
    t = np.linspace(0, 2.0e5, 400001)
    assert np.mean(g2(spec, PulseModel(), t)) == pytest.approx(spec.constant, abs=2e-4)
    assert spec.constant == pytest.approx(0.2187, abs=5e-4)


@pytest.mark.parametrize(
    "h2, a, expected",
    [(-0.25, -0.8, 1 / 7), (-0.25, 0.0, 0.0), (-0.25, 0.16, -0.030303030303)],
)
def test_polarization_general(h2, a, expected):
    assert polarization_general(DetectionGeometry(h2, -0.8), a) == pytest.approx(expected, abs=1e-12)


def test_polarization_general_domain():
    with pytest.raises(DomainError):
        polarization_general(DetectionGeometry(h2=1.0, a0=1.0), -4.0)
    with pytest.raises(DomainError):
        DetectionGeometry(h2=-2.0, a0=-2.0)


def test_polarization_cs_values(cs):
    spec = beat_spectrum(cs)
    assert polarization_cs(spec, PulseModel(), 0.0) == pytest.approx(1 / 7, abs=1e-12)
    assert 3 * 0.2187 / (20 + 0.2187) == pytest.approx(0.03245, abs=1e-5)
    # long-time limit of the model follows from the constant term
    assert polarization_general(CS_GEOMETRY, spec.constant * CS_GEOMETRY.a0) == pytest.approx(
        3 * spec.constant / (20 + spec.constant), abs=1e-15
    )


def test_polarization_identity_random():
    rng = np.random.default_rng(7)
    for g in rng.uniform(-1, 1, 100):
        assert polarization_general(CS_GEOMETRY, g * -0.8) == pytest.approx(3 * g / (20 + g), abs=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.floats(-19.5, 100), st.floats(1e-3, 10))
def test_polarization_monotone(g, dg):
    lo = polarization_general(CS_GEOMETRY, g * -0.8)
    hi = polarization_general(CS_GEOMETRY, (g + dg) * -0.8)
    assert hi > lo


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 150), st.floats(0, 5), st.floats(-2, 2))
def test_g2_bounded(t, W, dt):
    spec = beat_spectrum(HyperfineSystem("7/2", "3/2", 7.42, 0.14))
    v = g2(spec, PulseModel(W, dt), t)
    assert -1.0 <= v <= 1.0 + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0, 120))
def test_frequency_time_scaling(c, t):
    base = beat_spectrum(HyperfineSystem("7/2", "3/2", 7.42, 0.14))
    scaled = beat_spectrum(HyperfineSystem("7/2", "3/2", 7.42 * c, 0.14 * c))
    assert g2(scaled, PulseModel(), t / c) == pytest.approx(g2(base, PulseModel(), t), abs=1e-10)


def test_simulate_noiseless_and_seeded(cs):
    rows = simulate(cs, PulseModel(), [0.0])
    assert rows[0][0] == 0.0 and rows[0][1] == pytest.approx(1 / 7, abs=1e-12) and rows[0][2] is None
    times = np.linspace(0, 50, 11)
    assert simulate(cs, PulseModel(), times, 0.0, 3) == simulate(cs, PulseModel(), times)
    a = simulate(cs, PulseModel(), times, 0.01, 3)
    b = simulate(cs, PulseModel(), times, 0.01, 3)
    c = simulate(cs, PulseModel(), times, 0.01, 4)
    assert a == b and a != c
    assert all(s == 0.01 for _, _, s in a)
    with pytest.raises(InvalidArgument):
        simulate(cs, PulseModel(), times, -0.1)
    with pytest.raises(InvalidArgument):
        simulate(cs, PulseModel(), [])


def test_simulate_sign_changes_on_table1_grid(cs, table1):
    rows = simulate(cs, PulseModel(), table1.t)
    pl = np.array([p for _, p, _ in rows])
    t = table1.t
    crossings = t[1:][np.sign(pl[1:]) != np.sign(pl[:-1])]
    assert any(4.1 <= x <= 8.1 for x in crossings)
    assert any(62.0 <= x <= 68.2 for x in crossings)


def test_pulse_model_rejects_negative_width():
    with pytest.raises(InvalidArgument):
        PulseModel(W=-1.0)
