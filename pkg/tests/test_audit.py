"""Relay-count audit primitives: token trail append, count check, replay."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from antroute.audit import (
    CheatDetected,
    EMPTY_TRAIL,
    append_token,
    fresh_token,
    replay_step,
    verify_count,
)


def test_fresh_token_is_64_bit_and_seeded():
    a = fresh_token(random.Random(1))
    b = fresh_token(random.Random(1))
    assert a == b
    assert 0 <= a < 2**64


def test_append_preserves_order():
    t = append_token(EMPTY_TRAIL, 10)
    t = append_token(t, 20)
    t = append_token(t, 30)
    assert t == (10, 20, 30)


def test_verify_count_exact():
    t = (1, 2, 3)
    assert verify_count(t, 3)
    assert not verify_count(t, 2)
    assert not verify_count(t, 4)
    assert verify_count(EMPTY_TRAIL, 0)


def test_replay_consumes_front():
    t = (7, 8, 9)
    t = replay_step(t, 7)
    assert t == (8, 9)
    t = replay_step(t, 8)
    t = replay_step(t, 9)
    assert t == EMPTY_TRAIL


def test_replay_wrong_token_detected():
    with pytest.raises(CheatDetected):
        replay_step((7, 8), 8)


def test_replay_empty_trail_detected():
    with pytest.raises(CheatDetected):
        replay_step(EMPTY_TRAIL, 1)


@given(st.lists(st.integers(0, 2**64 - 1), max_size=12))
@settings(max_examples=100)
def test_honest_relay_chain_replays_clean(tokens):
    """Appending in relay order then replaying in the same order always
    verifies: count matches and every step consumes its own token."""
    trail = EMPTY_TRAIL
    for tok in tokens:
        trail = append_token(trail, tok)
    assert verify_count(trail, len(tokens))
    for tok in tokens:
        trail = replay_step(trail, tok)
    assert trail == EMPTY_TRAIL


@given(st.lists(st.integers(0, 2**32), min_size=1, max_size=8),
       st.integers(1, 8))
@settings(max_examples=100)
def test_front_deletion_always_caught(tokens, delete):
    """Deleting any prefix of the trail either breaks the count or breaks
    the replay of whoever appended the deleted tokens."""
    delete = min(delete, len(tokens))
    trail = EMPTY_TRAIL
    for tok in tokens:
        trail = append_token(trail, tok)
    forged = trail[delete:]
    if len(forged) != len(tokens):
        assert not verify_count(forged, len(tokens))
    caught = not verify_count(forged, len(tokens))
    if not caught:
        with pytest.raises(CheatDetected):
            t = forged
            for tok in tokens:
                t = replay_step(t, tok)
    # the deleted front tokens belong to real relays, so the count check
    # alone already fails whenever anything was removed
    assert len(forged) < len(tokens)
