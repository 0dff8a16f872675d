import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfidsim.anticollision import (
    FrameState, SlotKind, adjust_q, classify_slot, expected_success_fraction, simulate_frames,
)


def brute_force_success(n, L):
    """Fraction of (slot, assignment) pairs with exactly one tag in the slot, by enumeration."""
    hits = sum(sum(1 for s in range(L) if picks.count(s) == 1) for picks in itertools.product(range(L), repeat=n))
    return hits / (L * L**n)


@pytest.mark.parametrize("n,L", [(1, 1), (2, 2), (3, 4), (4, 3), (5, 2), (2, 8)])
def test_analytic_matches_enumeration(n, L):
    assert expected_success_fraction(n, L) == pytest.approx(brute_force_success(n, L), rel=1e-12)


@pytest.mark.parametrize("n", [1, 4, 16, 64])
@pytest.mark.parametrize("L", [4, 16, 64])
def test_monte_carlo_within_three_sigma(n, L):
    rng = np.random.default_rng(100 * n + L)
    trials = 20_000
    picks = rng.integers(0, L, (trials, n))
    # one fixed slot per frame keeps the trials independent
    freq = ((picks == 0).sum(axis=1) == 1).mean()
    p = expected_success_fraction(n, L)
    sigma = math.sqrt(p * (1 - p) / trials)
    assert abs(freq - p) <= 3 * sigma


def test_success_fraction_peaks_near_n_equals_L():
    values = {L: expected_success_fraction(64, L) for L in (16, 32, 64, 128, 256)}
    assert max(values, key=values.get) == 64
    assert expected_success_fraction(0, 8) == 0.0
    with pytest.raises(ValueError):
        expected_success_fraction(3, 0)


@given(st.integers(0, 50))
def test_classify(r):
    kind = classify_slot(r).kind
    assert kind is (SlotKind.IDLE if r == 0 else SlotKind.SUCCESS if r == 1 else SlotKind.COLLISION)


def test_classify_negative():
    with pytest.raises(ValueError):
        classify_slot(-1)


@given(st.floats(0, 15), st.integers(0, 5), st.floats(0.1, 0.5))
def test_adjust_q_bounded_and_directional(q, r, c):
    new = adjust_q(q, classify_slot(r), c)
    assert 0.0 <= new <= 15.0
    if r == 0:
        assert new <= q
    elif r == 1:
        assert new == q
    else:
        assert new >= q


@pytest.mark.parametrize("c", [0.05, 0.6])
def test_adjust_q_rejects_bad_step(c):
    with pytest.raises(ValueError):
        adjust_q(4.0, classify_slot(0), c)


def test_query_adjust_cuts_frame_short():
    f = FrameState(q_fp=4.0)
    assert f.start_frame() == 16
    f.record(classify_slot(0))
    assert not f.frame_done
    f.record(classify_slot(0))  # 3.4 rounds to 3
    assert f.adjust_due and f.frame_done
    assert f.start_frame(adjust=True) == 8


def test_round_heard_survives_query_adjust():
    f = FrameState(q_fp=4.0)
    f.start_frame()
    f.record(classify_slot(2))
    f.record(classify_slot(3))
    assert f.frame_done and f.round_heard
    f.start_frame(adjust=True)
    assert f.round_heard
    f.start_frame()
    assert not f.round_heard


def test_adaptive_q_converges_near_population():
    for seed in range(5):
        sizes, _ = simulate_frames(64, 4, 80, np.random.default_rng(seed))
        tail = sizes[-30:]
        assert all(32 <= s <= 128 for s in tail)


def test_all_tags_identified_with_removal():
    sizes, first = simulate_frames(40, 4, 200, np.random.default_rng(7), remove_identified=True)
    assert (first > 0).all()
    assert first.max() <= len(sizes)


@given(st.integers(1, 30), st.integers(0, 1000))
def test_simulate_frames_is_deterministic(n, seed):
    a = simulate_frames(n, 4, 10, np.random.default_rng(seed))
    b = simulate_frames(n, 4, 10, np.random.default_rng(seed))
    assert a[0] == b[0] and (a[1] == b[1]).all()
