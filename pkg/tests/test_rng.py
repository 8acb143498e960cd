import numpy as np
from hypothesis import given, settings, strategies as st

from s3gnn.rng import Rng


def test_equal_seeds_equal_streams_bulk():
    a = Rng(1234).next_u64_array(1_000_000)
    b = Rng(1234).next_u64_array(1_000_000)
    assert np.array_equal(a, b)


def test_scalar_and_bulk_paths_agree():
    r1, r2 = Rng(99), Rng(99)
    scalars = [r1.next_u64() for _ in range(257)]
    assert scalars == r2.next_u64_array(257).tolist()


def test_stream_is_frozen():
    # first three words of seed 0 == the published SplitMix64 reference
    # sequence; pinned forever
    r = Rng(0)
    assert [r.next_u64() for _ in range(3)] == [
        16294208416658607535,
        7960286522194355700,
        487617019471545679,
    ]


def test_uniform_range_and_grid():
    u = Rng(7).uniform_array(10000)
    assert np.all((0.0 <= u) & (u < 1.0))
    # 53-bit mantissa scaling: values must sit on the 2**-53 grid
    assert np.array_equal(u * (1 << 53), np.round(u * (1 << 53)))


@given(st.integers(min_value=0, max_value=2**64 - 1))
@settings(max_examples=50, deadline=None)
def test_determinism_over_seeds(seed):
    assert Rng(seed).next_u64() == Rng(seed).next_u64()


def test_different_seeds_differ():
    assert Rng(1).next_u64_array(4).tolist() != Rng(2).next_u64_array(4).tolist()


def test_uniform_bounds_scaling():
    vals = Rng(3).uniform_array(1000, -2.0, 5.0)
    assert np.all((-2.0 <= vals) & (vals < 5.0))


def test_randrange_bounds_and_error():
    r = Rng(11)
    draws = [r.randrange(7) for _ in range(500)]
    assert set(draws) == set(range(7))
    try:
        r.randrange(0)
    except ValueError:
        pass
    else:
        raise AssertionError("randrange(0) must fail")


def test_spawn_independent_streams():
    base = Rng(5)
    c1 = base.spawn(0)
    c2 = base.spawn(1)
    assert c1.next_u64() != c2.next_u64()
    assert Rng(5).spawn(0).next_u64() == Rng(5).spawn(0).next_u64()
