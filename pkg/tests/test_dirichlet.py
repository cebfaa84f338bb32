import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import digamma

from oracles import dirichlet_logpdf_mp
from weakseq.dirichlet import (
    clamp_simplex,
    dirichlet_log_density,
    dirichlet_mle,
    fit_dirichlet,
    inverse_digamma,
    moment_match,
)
from weakseq.hmm import inv_logit


def test_density_closed_forms():
    assert dirichlet_log_density([0.5, 0.5], [1.0, 1.0]) == pytest.approx(0.0, abs=1e-15)
    assert dirichlet_log_density([0.75, 0.25], [2.0, 1.0]) == pytest.approx(math.log(1.5), abs=1e-12)
    assert math.log(1.5) == pytest.approx(0.405465, abs=1e-6)


def test_density_matches_high_precision_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        k = rng.integers(2, 8)
        alpha = rng.gamma(1.0, 3.0, size=k) + 0.05
        x = clamp_simplex(rng.dirichlet(np.ones(k)))
        assert dirichlet_log_density(x, alpha) == pytest.approx(dirichlet_logpdf_mp(x, alpha), abs=1e-10, rel=1e-12)


def test_density_requires_clamped_input():
    with pytest.raises(ValueError):
        dirichlet_log_density([1.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        dirichlet_log_density([0.5, 0.5], [0.0, 1.0])


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=9).filter(lambda v: sum(v) > 0))
def test_clamp_stays_on_simplex(v):
    x = clamp_simplex(np.array(v) / sum(v), 1e-3)
    assert abs(x.sum() - 1.0) < 1e-12 and x.min() > 0


def test_inv_logit():
    assert inv_logit(0.0) == 0.5
    assert inv_logit(1000.0) == pytest.approx(1.0, abs=1e-12)
    assert inv_logit(-1000.0) == pytest.approx(0.0, abs=1e-300)
    assert inv_logit(1.0) == pytest.approx(0.7310585786300049, abs=1e-12)


def test_inverse_digamma():
    x = np.array([1e-3, 0.1, 1.0, 7.5, 300.0])
    np.testing.assert_allclose(inverse_digamma(digamma(x)), x, rtol=1e-10)


def test_mle_recovers_known_concentrations():
    rng = np.random.default_rng(1)
    alpha = np.array([0.5, 1.5, 3.0, 6.0, 2.0])
    est = fit_dirichlet(rng.dirichlet(alpha, size=10_000))
    assert np.all(np.abs(est - alpha) / alpha < 0.05)


def test_weighted_mle_equals_repeated_samples():
    rng = np.random.default_rng(2)
    x = rng.dirichlet([2.0, 1.0, 4.0], size=50)
    w = rng.integers(1, 4, size=50)
    np.testing.assert_allclose(fit_dirichlet(x, w.astype(float)), fit_dirichlet(np.repeat(x, w, axis=0)), rtol=1e-8)


def test_moment_match_uniform_gives_one():
    rng = np.random.default_rng(3)
    x = rng.dirichlet(np.ones(4), size=200_000)
    start = moment_match(x.mean(0), (x ** 2).mean(0))
    np.testing.assert_allclose(start, np.ones(4), rtol=0.05)


def test_mle_batched_statistics():
    rng = np.random.default_rng(4)
    a = rng.dirichlet([3.0, 1.0], size=3000)
    b = rng.dirichlet([1.0, 5.0], size=3000)
    stats = [np.array([len(s) for s in (a, b)], dtype=float)]
    stats += [np.stack([f(s) for s in (a, b)]) for f in (lambda s: np.log(s).sum(0), lambda s: s.sum(0),
                                                         lambda s: (s ** 2).sum(0))]
    batched = dirichlet_mle(*stats)
    # the fixed point stops at a 1e-8 relative step, so both runs agree to about that level
    np.testing.assert_allclose(batched[0], fit_dirichlet(a), rtol=1e-6)
    np.testing.assert_allclose(batched[1], fit_dirichlet(b), rtol=1e-6)
