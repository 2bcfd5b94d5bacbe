import math

import numpy as np
import pytest
from scipy import stats

from avgspde.errors import InvalidArgumentError
from avgspde.models import CovarianceSpec
from avgspde.noise import (
    NoiseStream,
    ProcessTag,
    derive_keys,
    stoch_conv_increment,
    stoch_conv_variance,
    wiener_increment,
)
from avgspde.spectral import eigenvalues

UNIT = CovarianceSpec("constant", 1.0)


def test_stoch_conv_variance_examples():
    slow = stoch_conv_variance(1.0, 1.0, 1.0, 0.1, 1.0)
    assert slow == pytest.approx((1 - math.exp(-0.2)) / 2, rel=1e-12)
    assert slow == pytest.approx(0.0906346234, abs=1e-10)
    fast = stoch_conv_variance(1.0, 1.0, 1.0, 0.01, 0.01, fast=True)
    assert fast == pytest.approx((1 - math.exp(-2)) / 2, rel=1e-12)
    assert fast == pytest.approx(0.4323323584, abs=1e-10)
    assert stoch_conv_variance(1.0, 1.0, 0.0, 0.1) == 0.0
    with pytest.raises(InvalidArgumentError):
        stoch_conv_variance(1.0, 1.0, 1.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        stoch_conv_variance(1.0, 1.0, 1.0, 0.1, scale=0.0)


def test_stoch_conv_variance_small_step_limit():
    # h -> 0: variance ~ sigma^2 lambda h (slow) and sigma^2 lambda h / eps (fast)
    v = stoch_conv_variance(4.0, 0.5, 2.0, 1e-12, 1.0)
    assert v == pytest.approx(4 * 0.5 * 1e-12, rel=1e-9)
    v = stoch_conv_variance(4.0, 0.5, 2.0, 1e-12, 0.01, fast=True)
    assert v == pytest.approx(4 * 0.5 * 1e-10, rel=1e-9)


def test_degenerate_noise_is_zero():
    s = NoiseStream(1, 0)
    assert np.all(wiener_increment(s, CovarianceSpec("constant", 0.0), 0.1, 5).coeffs == 0)
    assert np.all(stoch_conv_increment(s, UNIT, 0.0, 0.1, 1.0, 5).coeffs == 0)
    assert s.counter == 10  # draws are consumed regardless
    with pytest.raises(InvalidArgumentError):
        wiener_increment(s, UNIT, 0.0, 5)


def test_stream_determinism_and_replay():
    a, b = NoiseStream(42, 7, ProcessTag.W1), NoiseStream(42, 7, ProcessTag.W1)
    assert np.array_equal(wiener_increment(a, UNIT, 0.3, 6).coeffs, wiener_increment(b, UNIT, 0.3, 6).coeffs)
    first = NoiseStream(42, 7, ProcessTag.W1).normals(20)
    r = a.replay()
    assert r.counter == 0 and np.array_equal(r.normals(20), first)


def test_batch_rows_equal_individual_streams():
    batch = NoiseStream(3, np.array([5, 0, 11]), ProcessTag.W2)
    z = np.concatenate([batch.normals(7), batch.normals(4)], axis=1)
    for row, idx in enumerate([5, 0, 11]):
        single = NoiseStream(3, idx, ProcessTag.W2)
        assert np.array_equal(z[row], np.concatenate([single.normals(3), single.normals(8)]))


def test_distinct_triples_give_distinct_keys():
    keys = {tuple(derive_keys(s, [i], t)[0]) for s in (0, 1) for i in range(50) for t in ProcessTag}
    assert len(keys) == 2 * 50 * 3
    with pytest.raises(InvalidArgumentError):
        derive_keys(0, [-1], ProcessTag.AUX)


def test_wiener_increment_variance():
    # one draw per independent stream: 10^5 samples of Normal(0, 0.25)
    s = NoiseStream(11, np.arange(100_000), ProcessTag.AUX)
    c = wiener_increment(s, UNIT, 0.25, 1).coeffs[:, 0]
    var = c.var(ddof=1)
    se = math.sqrt(2.0 / (c.size - 1)) * 0.25
    assert abs(var - 0.25) <= 5 * se


def test_stoch_conv_empirical_variance_and_diagonal():
    q = CovarianceSpec("power", 1.0, 2.0)
    n, h, M = 4, 0.05, 100_000
    s = NoiseStream(5, np.arange(M), ProcessTag.AUX)
    inc = stoch_conv_increment(s, q, 0.7, h, 1.0, n).coeffs
    v = stoch_conv_variance(eigenvalues(n, math.pi), q.lambdas(n), 0.7, h, 1.0)
    emp = inc.var(axis=0, ddof=1)
    assert np.all(np.abs(emp - v) <= 4 * v * math.sqrt(2.0 / (M - 1)))
    cov = np.cov(inc, rowvar=False)
    sd = np.sqrt(np.outer(v, v) / M)  # standard error of an off-diagonal sample covariance
    off = ~np.eye(n, dtype=bool)
    assert np.all(np.abs(cov[off]) <= 4 * sd[off])


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_ks_mode_one_marginal(seed):
    h, eps = 0.01, 0.05
    s = NoiseStream(seed, np.arange(20_000), ProcessTag.W2)
    inc = stoch_conv_increment(s, UNIT, 1.0, h, eps, 3, fast=True).coeffs[:, 0]
    v1 = stoch_conv_variance(1.0, 1.0, 1.0, h, eps, fast=True)
    assert stats.kstest(inc / math.sqrt(v1), "norm").pvalue > 0.001


def test_scalar_stream_shapes():
    s = NoiseStream(0, 3)
    assert s.normals(5).shape == (5,)
    b = NoiseStream(0, [3])
    assert b.normals(5).shape == (1, 5)
