import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from itostrat.noise import TimeGrid, coarsen, sample_batch, sample_increments


def test_reproducible_and_prefix_stable():
    g = TimeGrid(1.0, 64)
    a = sample_batch(3, g, 11, range(5))
    b = sample_batch(3, g, 11, range(5))
    assert np.array_equal(a.values, b.values)
    # adding modes or paths never changes already-drawn components
    c = sample_batch(5, g, 11, range(8))
    assert np.array_equal(c.values[:5, :3], a.values)
    single = sample_increments(3, g, 11, stream=4)
    assert np.array_equal(single.values, a.values[4])


def test_gaussian_increments_ks():
    g = TimeGrid(2.0, 4096)
    inc = sample_increments(2, g, 0)
    z = inc.values.ravel() / math.sqrt(g.dt)
    assert stats.kstest(z, "norm").pvalue > 1e-3
    # components uncorrelated
    r = np.corrcoef(inc.values)[0, 1]
    assert abs(r) < 4 / math.sqrt(g.steps)


def test_coarsen_sums_blocks():
    inc = sample_batch(2, TimeGrid(1.0, 32), 1, range(3))
    c = coarsen(inc, 4)
    assert c.grid.steps == 8 and c.factor == 4
    ref = inc.values.reshape(3, 2, 8, 4).sum(-1)
    assert np.allclose(c.values, ref, rtol=0, atol=1e-15)
    assert np.allclose(c.path()[..., -1], inc.path()[..., -1], atol=1e-14)
    with pytest.raises(ValueError):
        coarsen(inc, 5)


def test_path_leading_zero_and_readonly():
    inc = sample_increments(1, TimeGrid(1.0, 8), 2)
    p = inc.path()
    assert p.shape == (1, 9) and p[0, 0] == 0.0
    with pytest.raises(ValueError):
        inc.values[0, 0] = 1.0


def test_grid_errors():
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 4)
    with pytest.raises(ValueError):
        sample_increments(0, TimeGrid(1.0, 4), 0)


@given(st.integers(0, 2**31), st.sampled_from([1, 2, 4, 8]))
def test_coarsening_preserves_endpoint(seed, factor):
    inc = sample_increments(2, TimeGrid(1.0, 64), seed)
    c = coarsen(inc, factor)
    assert np.allclose(c.path()[:, -1], inc.path()[:, -1], rtol=0, atol=1e-14)
    assert np.allclose(c.path(), inc.path()[:, ::factor], rtol=0, atol=1e-14)


def test_select():
    inc = sample_batch(1, TimeGrid(1.0, 4), 0, [10, 11, 12])
    sub = inc.select(slice(1, 3))
    assert sub.streams == (11, 12)
    assert np.array_equal(sub.values, inc.values[1:3])
