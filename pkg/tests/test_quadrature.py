import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from crciv.exceptions import ConfigurationError
from crciv.quadrature import (KernelSpec, RSet, halton, halton_sequence, kernel_eval,
                              kernel_weights, nodes_over)

FAMILIES = ["biweight", "triweight", "epanechnikov", "uniform"]


def make_kernel(family):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return KernelSpec(family)


@pytest.mark.parametrize("family", FAMILIES)
def test_kernel_integrates_to_one(family):
    k = make_kernel(family)
    val, _ = quad(lambda u: kernel_eval(k, u), -1, 1, epsabs=1e-13, epsrel=1e-13)
    assert abs(val - 1) < 1e-10


@pytest.mark.parametrize("family", FAMILIES)
def test_kernel_symmetric_and_supported(family):
    k = make_kernel(family)
    u = np.linspace(-2, 2, 401)
    np.testing.assert_array_equal(k(u), k(-u))
    assert np.all(k(u[np.abs(u) > 1]) == 0)


def test_biweight_values():
    k = KernelSpec()
    assert kernel_eval(k, 0.0) == 0.9375
    assert kernel_eval(k, 1.5) == 0.0


def test_uniform_warns():
    with pytest.warns(UserWarning):
        KernelSpec("uniform")


def test_unknown_family():
    with pytest.raises(ConfigurationError):
        KernelSpec("gaussian")


def test_weights_examples():
    k = KernelSpec()
    assert kernel_weights(k, np.array([0.3]), 0.3, 0.2)[0] == pytest.approx(0.9375 / 0.2)
    assert np.all(kernel_weights(k, np.array([0.0, 0.9]), 0.5, 0.1) == 0)
    w = kernel_weights(k, np.array([0.5, 0.6]), 0.55, 0.1)
    # independent scalar evaluation of (15/16)(1-u^2)^2 / h at u = +-0.5
    expected = (15 / 16) * (1 - 0.25) ** 2 / 0.1
    assert expected == pytest.approx(5.2734375, abs=1e-12)
    np.testing.assert_allclose(w, [expected, expected], rtol=1e-12)


def test_weights_need_positive_bandwidth():
    with pytest.raises(ConfigurationError):
        kernel_weights(KernelSpec(), np.array([0.5]), 0.5, 0.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.1, 0.6), min_size=1, max_size=30),
       st.floats(0.1, 0.6), st.floats(0.01, 0.3), st.floats(-0.1, 0.35))
def test_weights_translation_consistent(ranks, r, h, c):
    k = KernelSpec()
    ranks = np.array(ranks)
    # shift by a dyadic amount so the differences are computed exactly
    c = round(c * 1024) / 1024
    a = kernel_weights(k, ranks, r, h)
    b = kernel_weights(k, ranks + c, r + c, h)
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)


def test_halton_examples():
    assert [halton(i, 2) for i in range(1, 5)] == [0.5, 0.25, 0.75, 0.125]
    assert halton(1, 3) == pytest.approx(1 / 3)
    seq = halton_sequence(1000, 2)
    assert len(set(seq.tolist())) == 1000
    assert np.all((seq > 0) & (seq < 1))
    with pytest.raises(ConfigurationError):
        halton(0)


def test_nodes_examples():
    np.testing.assert_allclose(nodes_over(RSet(((0.0, 1.0),)), 2).nodes, [0.5, 0.25])
    assert nodes_over(RSet(((0.1, 0.4),)), 1).nodes[0] == pytest.approx(0.25)
    split = RSet(((0.1, 0.4), (0.6, 0.9)))
    assert split.inverse_cdf(np.array([0.5]))[0] == pytest.approx(0.6)


def test_split_set_uniform_per_interval():
    split = RSet(((0.1, 0.4), (0.6, 0.9)))
    u = np.random.default_rng(0).random(100_000)
    r = split.inverse_cdf(u)
    assert np.all(split.contains(r))
    left = r[r <= 0.4]
    assert abs(left.size / r.size - 0.5) < 0.01
    # each interval uniform: compare deciles with the affine image
    for a, b, part in ((0.1, 0.4, left), (0.6, 0.9, r[r >= 0.6])):
        q = np.quantile(part, np.linspace(0.1, 0.9, 9))
        np.testing.assert_allclose(q, a + (b - a) * np.linspace(0.1, 0.9, 9), atol=0.005)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=8, unique=True),
       st.floats(0, 1), st.floats(0, 1))
def test_halton_nodes_preserve_measure(cuts, s, t):
    cuts = sorted(cuts)
    if len(cuts) % 2:
        cuts = cuts[:-1]
    ivs = tuple((a, b) for a, b in zip(cuts[::2], cuts[1::2]) if b - a > 1e-3)
    if not ivs:
        return
    rset = RSet(ivs)
    nodes = nodes_over(rset, 10_000).nodes
    assert np.all(rset.contains(nodes))
    # subinterval I of one component
    a, b = ivs[int(s * len(ivs)) % len(ivs)]
    lo, hi = sorted((a + s * (b - a), a + t * (b - a)))
    frac = np.mean((nodes >= lo) & (nodes <= hi))
    assert abs(frac - (hi - lo) / rset.measure) < 0.01


def test_polynomial_quadrature():
    nodes = nodes_over(RSet(((0.1, 0.4),)), 2000).nodes
    assert abs(nodes.mean() * 0.3 - 0.075) < 1e-3


def test_grid_scheme_midpoints():
    nodes = nodes_over(RSet(((0.0, 1.0),)), 4, scheme="grid").nodes
    np.testing.assert_allclose(nodes, [0.125, 0.375, 0.625, 0.875])


def test_rset_validation():
    with pytest.raises(ConfigurationError):
        RSet(((0.3, 0.5), (0.4, 0.6)))
    with pytest.raises(ConfigurationError):
        RSet(((0.0, 0.5),), delta=0.05)
    with pytest.raises(ConfigurationError):
        RSet(())
    with pytest.raises(ConfigurationError):
        nodes_over(RSet(((0.3, 0.3),)), 10)
    assert RSet.parse("0.1:0.4,0.6:0.9").intervals == ((0.1, 0.4), (0.6, 0.9))
    assert RSet.trimmed().intervals == ((0.05, 0.95),)
