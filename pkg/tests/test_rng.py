import numpy as np
import pytest
from hypothesis import given, strategies as st

from hmaxconv.rng import RngState


# first three outputs for seed 42; pins the generator across platforms
GOLDEN_SEED42 = [
    13679457532755275413,
    2949826092126892291,
    5139283748462763858,
]


def test_golden_stream():
    rng = RngState(42)
    assert [rng.next_u64() for _ in range(3)] == GOLDEN_SEED42


def test_same_seed_same_stream():
    a, b = RngState(987654321), RngState(987654321)
    assert [a.next_u64() for _ in range(100)] == [b.next_u64() for _ in range(100)]


def test_random_unit_interval():
    rng = RngState(7)
    vals = [rng.random() for _ in range(1000)]
    assert all(0.0 <= v < 1.0 for v in vals)
    assert 0.3 < np.mean(vals) < 0.7


@given(st.integers(min_value=0, max_value=2**64 - 1), st.integers(min_value=1, max_value=97))
def test_below_range(seed, n):
    rng = RngState(seed)
    assert 0 <= rng.below(n) < n


def test_below_rejects_nonpositive():
    with pytest.raises(ValueError):
        RngState(0).below(0)


def test_uniform_array_shape_and_range():
    arr = RngState(3).uniform_array(-2.0, 5.0, (4, 3))
    assert arr.shape == (4, 3)
    assert np.all(arr >= -2.0) and np.all(arr < 5.0)


def test_shuffle_is_permutation():
    rng = RngState(11)
    items = list(range(50))
    shuffled = items.copy()
    rng.shuffle(shuffled)
    assert sorted(shuffled) == items
    assert shuffled != items  # astronomically unlikely to be identity


def test_choice_weighted_frequencies():
    rng = RngState(5)
    probs = (0.2, 0.5, 0.3)
    counts = np.zeros(3)
    for _ in range(20_000):
        counts[rng.choice_weighted(probs)] += 1
    freq = counts / counts.sum()
    assert np.all(np.abs(freq - probs) < 0.02)


def test_derive_gives_distinct_independent_streams():
    rng = RngState(1234)
    children = [rng.derive(i) for i in range(8)]
    seeds = {c.seed for c in children}
    assert len(seeds) == 8
    # deriving twice gives the same child stream
    again = rng.derive(3)
    assert [again.next_u64() for _ in range(5)] == [
        children[3].next_u64() for _ in range(5)
    ]
