"""
Tests for seeded stream derivation.
"""
import numpy as np
import pytest

from conclique_gof import rng as rngs


def test_streams_are_reproducible():
    a = rngs.stream(5, rngs.STAGE_NULL, 2).random(4)
    b = rngs.stream(5, rngs.STAGE_NULL, 2).random(4)
    np.testing.assert_array_equal(a, b)


def test_streams_differ_by_stage_index_and_seed():
    draws = {
        key: rngs.stream(*key).random()
        for key in [(5, rngs.STAGE_NULL, 0), (5, rngs.STAGE_NULL, 1), (5, rngs.STAGE_CHAIN, 0), (6, rngs.STAGE_NULL, 0)]
    }
    assert len(set(draws.values())) == 4


def test_make_rng_requires_seed():
    with pytest.raises(ValueError):
        rngs.make_rng(None)


def test_chunk_bounds():
    chunks = rngs.chunk_bounds(25, 10)
    assert [(c.start, c.stop) for c in chunks] == [(0, 10), (10, 20), (20, 25)]
    assert rngs.chunk_bounds(0, 10) == []
    with pytest.raises(ValueError):
        rngs.chunk_bounds(5, 0)


def test_derive_seed():
    assert rngs.derive_seed(1, 6, 0, 1) == rngs.derive_seed(1, 6, 0, 1)
    assert rngs.derive_seed(1, 6, 0, 1) != rngs.derive_seed(1, 6, 1, 0)
    assert 0 <= rngs.derive_seed(123, 3) < 2**32
