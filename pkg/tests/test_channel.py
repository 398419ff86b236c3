import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wbanima.channel import (ChannelModel, Position, dbm_to_mw, mw_to_dbm, outage_probability,
                             path_loss_db, received_power_dbm, sample_is_valid, sinr_db, snr_db)

MODEL = ChannelModel()
dbm = st.floats(min_value=-150, max_value=30, allow_nan=False)


@pytest.mark.parametrize("d, expected, tol", [(1.0, 40.05, 1e-12), (2.0, 52.75, 0.01),
                                              (3.0, 60.18, 0.01)])
def test_path_loss_examples(d, expected, tol):
    assert path_loss_db(d, MODEL) == pytest.approx(expected, abs=tol)


def test_path_loss_clamps_short_distances():
    assert path_loss_db(0.0, MODEL) == path_loss_db(0.1, MODEL)
    assert path_loss_db(0.05, MODEL) == path_loss_db(0.1, MODEL)


@pytest.mark.parametrize("bad", [-1.0, math.nan, math.inf])
def test_path_loss_rejects_bad_distance(bad):
    with pytest.raises(ValueError):
        path_loss_db(bad, MODEL)


@given(st.floats(0.1, 10), st.floats(0.1, 10))
def test_path_loss_monotone(a, b):
    if a < b:
        assert path_loss_db(a, MODEL) < path_loss_db(b, MODEL)


@pytest.mark.parametrize("d, shadow, expected, tol", [(1.0, 0.0, -50.05, 1e-9),
                                                      (2.0, 0.0, -62.75, 0.01),
                                                      (2.0, 6.81, -55.94, 0.01)])
def test_received_power(d, shadow, expected, tol):
    assert received_power_dbm(-10.0, d, shadow, MODEL) == pytest.approx(expected, abs=tol)


def test_sinr_examples():
    assert sinr_db(-50.05, [], -102.0) == pytest.approx(51.95, abs=1e-9)
    assert sinr_db(-50.0, [-70.0], -102.0) == pytest.approx(20.00, abs=0.01)
    assert sinr_db(-60.0, [-60.0], -102.0) == pytest.approx(-0.0003, abs=0.001)


def test_snr_examples():
    assert snr_db(-50.0, -102.0) == pytest.approx(52.0)
    assert snr_db(-84.7, -102.0) == pytest.approx(17.3)
    assert snr_db(-102.0, -102.0) == 0.0


@given(dbm)
def test_dbm_round_trip(p):
    assert mw_to_dbm(dbm_to_mw(p)) == pytest.approx(p, abs=1e-9)


def test_mw_to_dbm_rejects_non_positive():
    with pytest.raises(ValueError):
        mw_to_dbm(0.0)


@given(dbm, st.lists(dbm, max_size=6), dbm)
def test_sinr_never_exceeds_snr(p, interferers, n0):
    assert sinr_db(p, interferers, n0) <= snr_db(p, n0) + 1e-9


@given(dbm, st.lists(dbm, max_size=6), dbm, dbm)
def test_adding_interferer_lowers_sinr(p, interferers, n0, extra):
    assert sinr_db(p, interferers + [extra], n0) <= sinr_db(p, interferers, n0) + 1e-12


@pytest.mark.parametrize("beacon, rts, expected", [(100, 550, True), (100, 600, False),
                                                   (0, 0, True)])
def test_sample_validity(beacon, rts, expected):
    assert sample_is_valid(beacon, rts, 500) is expected


def test_sample_validity_rejects_rts_before_sample():
    with pytest.raises(ValueError):
        sample_is_valid(10, 5, 500)


def test_outage_examples():
    assert outage_probability([10, 20, 30], 15) == pytest.approx(1 / 3)
    assert outage_probability([10, 20, 30], 5) == 0.0
    assert outage_probability([10, 20, 30], 30) == 1.0
    with pytest.raises(ValueError):
        outage_probability([], 10)


@given(st.lists(st.floats(-50, 80), min_size=1, max_size=50), st.floats(-60, 90),
       st.floats(-60, 90))
def test_outage_monotone_in_threshold(samples, t1, t2):
    lo, hi = sorted((t1, t2))
    assert 0.0 <= outage_probability(samples, lo) <= outage_probability(samples, hi) <= 1.0


def test_outage_matches_numpy_count():
    rng = np.random.default_rng(3)
    x = rng.normal(20, 5, 500)
    assert outage_probability(list(x), 17.3) == np.count_nonzero(x <= 17.3) / 500


def test_position_and_model_validation():
    assert Position(0, 0, 0).distance_to(Position(3, 4, 0)) == 5.0
    assert not Position(5, 0, 0).within((3, 3, 3))
    with pytest.raises(ValueError):
        ChannelModel(path_loss_exponent=-1)
