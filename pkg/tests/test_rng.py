import numpy as np

from stmix.rng import Rng


def test_splitmix64_reference_stream():
    assert [int(v) for v in Rng(0).next_u64(3)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_chunking_does_not_change_stream():
    a = Rng(42).next_u64(10)
    r = Rng(42)
    b = np.concatenate([r.next_u64(3), r.next_u64(7)])
    assert np.array_equal(a, b)


def test_same_seed_same_draws():
    assert np.array_equal(Rng(7).normal((3, 4)), Rng(7).normal((3, 4)))
    assert not np.array_equal(Rng(7).normal(5), Rng(8).normal(5))


def test_uniform_range_and_moments():
    u = Rng(1).uniform(200_000)
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.005


def test_normal_moments():
    z = Rng(2).normal(200_000, mean=1.0, std=2.0)
    assert abs(z.mean() - 1.0) < 0.02 and abs(z.std() - 2.0) < 0.02


def test_integers_and_permutation():
    r = Rng(3)
    ints = r.integers(2, 5, 1000)
    assert set(ints.tolist()) == {2, 3, 4}
    p = r.permutation(10)
    assert sorted(p.tolist()) == list(range(10))


def test_fork_gives_distinct_streams():
    r = Rng(5)
    a, b = r.fork(), r.fork()
    assert not np.array_equal(a.next_u64(4), b.next_u64(4))
