import numpy as np
import pytest

from stmix._validation import ConfigError
from stmix.synthetic import SyntheticSpec, gen_synthetic


def test_reversed_pairs_are_exact_reversals():
    X, y = gen_synthetic(SyntheticSpec(num_samples=6, seed=3))
    assert y.tolist() == [0, 1] * 3
    for i in range(0, 6, 2):
        for t in range(8):
            assert np.array_equal(X[i + 1, t], X[i, 7 - t])


def test_same_seed_identical():
    spec = SyntheticSpec(task="moving_dot", noise=0.0, num_samples=2, seed=9)
    a, b = gen_synthetic(spec), gen_synthetic(spec)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_moving_dot_mass_constant_and_direction():
    X, y = gen_synthetic(SyntheticSpec(task="moving_dot", noise=0.0, num_samples=10, seed=1))
    sums = X.sum(axis=(2, 3, 4))
    assert np.all(sums == sums[:, :1])
    cols = X[..., 0].sum(axis=2)  # [n, T, W]
    centre = (cols * np.arange(32)).sum(-1) / cols.sum(-1)
    step = np.sign(np.diff(centre, axis=1))
    assert np.all(step == np.where(y == 1, 1, -1)[:, None])


def test_spec_errors():
    with pytest.raises(ConfigError):
        gen_synthetic(SyntheticSpec(task="moving_dot", T=16, speed=2))
    with pytest.raises(ConfigError):
        gen_synthetic(SyntheticSpec(num_samples=3))
    with pytest.raises(ConfigError):
        gen_synthetic(SyntheticSpec(task="spinning"))
