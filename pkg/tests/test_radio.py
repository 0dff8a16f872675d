import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfidsim import radio
from rfidsim.radio import RadioParams


def fspl_db(d_m, f_hz):
    # textbook form with distance in km and frequency in MHz
    return 20 * math.log10(d_m / 1000) + 20 * math.log10(f_hz / 1e6) + 32.45


def phi(x):
    return 0.5 * (1 + math.erf(x / math.sqrt(2)))


def test_physical_defaults():
    p = RadioParams()
    assert (p.tag_power, p.reader_power) == (0.040, 10.0)
    assert (p.tag_tx, p.reader_tx) == (-10.0, 0.0)
    assert (p.tag_sensitivity, p.reader_sensitivity) == (-70.0, -82.0)
    assert (p.tag_antenna_height, p.reader_antenna_height) == (1.0, 5.0)
    assert p.frequency == 900e6 and p.coverage_radius == 10.0
    assert (p.path_loss_exponent, p.shadowing_sigma) == (4.0, 2.0)


def test_reference_loss_is_free_space():
    assert radio.reference_path_loss(RadioParams()) == pytest.approx(fspl_db(1.0, 900e6), abs=0.01)


@given(st.floats(1.0, 100.0))
def test_log_distance_slope(d):
    p = RadioParams()
    assert radio.mean_path_loss(d, p) - radio.mean_path_loss(1.0, p) == pytest.approx(40 * math.log10(d))


@given(st.floats(-20, 20), st.booleans())
def test_distance_for_margin_inverts(margin, uplink):
    p = RadioParams()
    d = radio.distance_for_margin(margin, p, uplink)
    assert radio.link_margin(d, p, uplink) == pytest.approx(margin, abs=1e-9)


@given(st.integers(1, 5000), st.floats(1e3, 1e7))
def test_tx_duration(bits, bw):
    assert radio.tx_duration(bits, bw) == pytest.approx(bits / bw)


def test_handshake_air_time_at_1mbps():
    assert radio.tx_duration(1344, 1e6) == pytest.approx(1.344e-3)
    with pytest.raises(ValueError):
        radio.tx_duration(10, 0)


def test_coverage_boundary_inclusive():
    p = RadioParams()
    assert radio.in_range((10.0, 0.0), p)
    assert radio.in_range((6.0, 8.0), p)
    assert not radio.in_range((10.0 + 1e-9, 0.0), p)


def test_deterministic_link_without_shadowing():
    p = RadioParams()
    assert radio.link_success(9.9, p) and not radio.link_success(10.1, p)


@pytest.mark.parametrize("margin", [-2.0, 0.0, 1.0, 3.0])
@pytest.mark.parametrize("uplink", [True, False])
def test_shadowed_success_matches_gaussian_tail(margin, uplink):
    p = RadioParams(shadowing=True)
    d = radio.distance_for_margin(margin, p, uplink)
    rng = np.random.default_rng(int(10 * margin) + 100 * uplink + 50)
    n = 20_000
    hits = sum(radio.link_success(d, p, rng, uplink) for _ in range(n))
    expected = phi(margin / p.shadowing_sigma)
    assert abs(hits / n - expected) <= 4 * math.sqrt(expected * (1 - expected) / n)


def test_validate():
    for bad in (dict(bandwidth=-1), dict(coverage_radius=0), dict(frequency=0), dict(shadowing_sigma=-1)):
        with pytest.raises(ValueError):
            RadioParams(**bad).validate()
