import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from vinemix import ranking, simdindex
from vinemix.simdindex import RateDomainInput, WeightedZDomain

HEALTH_RANKS = (3, 2, 4, 4, 3, 5, 1)
HEALTH_WEIGHTS = (0.06, 0.08, 0.07, 0.46, 0.19, 0.13, 0.01)


def test_rate_score():
    assert simdindex.rate_score(RateDomainInput((100, 150, 80), 2000)) == 0.165
    assert simdindex.rate_score((0, 0), 10) == 0
    assert simdindex.rate_score((1,), 4) == 0.25
    with pytest.raises(ValueError):
        simdindex.rate_score((1,), 0)
    with pytest.warns(UserWarning):
        simdindex.rate_score((5, 6), 10)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1000), min_size=1, max_size=5), st.integers(1, 1000))
def test_rate_score_scale_invariance(counts, factor):
    pop = sum(counts) + 1
    a = simdindex.rate_score(counts, pop)
    b = simdindex.rate_score([c * factor for c in counts], pop * factor)
    assert a == pytest.approx(b, rel=1e-14)


def test_standardize_rank_vector():
    z = simdindex.standardize_rank_vector(HEALTH_RANKS)
    assert_allclose(z, [-0.1061988, -0.8495908, 0.6371931, 0.6371931, -0.1061988,
                        1.3805850, -1.5929827], atol=1e-6)
    # hand oracle: mean 22/7, sample sd from the sum of squares
    r = np.array(HEALTH_RANKS, float)
    sd = np.sqrt((np.sum(r ** 2) - 7 * (22 / 7) ** 2) / 6)
    assert_allclose(z, (r - 22 / 7) / sd, rtol=1e-14)
    assert_allclose(simdindex.standardize_rank_vector([1, 2, 3]), [-1, 0, 1])
    with pytest.raises(ValueError):
        simdindex.standardize_rank_vector([2, 2, 2])
    with pytest.raises(ValueError):
        simdindex.standardize_rank_vector([1])


def test_health_domain_score():
    s = simdindex.weighted_domain_score(HEALTH_RANKS, HEALTH_WEIGHTS)
    assert s == pytest.approx(0.4067416, abs=1e-6)
    dom = WeightedZDomain(tuple("abcdefg"), np.array(HEALTH_RANKS), np.array(HEALTH_WEIGHTS))
    assert simdindex.weighted_domain_score(dom) == s


def test_weights_on_one_indicator_and_zero_weights():
    z = simdindex.standardize_rank_vector(HEALTH_RANKS)
    w = np.zeros(7)
    w[5] = 1
    assert simdindex.weighted_domain_score(HEALTH_RANKS, w) == pytest.approx(z[5])
    assert simdindex.weighted_domain_score(HEALTH_RANKS, np.zeros(7)) == 0


def test_axes_on_a_matrix():
    ranks = np.array([[1, 2, 3, 4, 5, 6], [2, 1, 4, 3, 6, 5],
                      [6, 5, 4, 3, 2, 1], [3, 1, 2, 6, 4, 5]]).T   # 6 zones x 4 indicators
    w = np.array([0.4, 0.3, 0.2, 0.1])
    within_ind = simdindex.weighted_domain_score(ranks, w)
    cols = (ranks - ranks.mean(axis=0)) / ranks.std(axis=0, ddof=1)
    assert_allclose(within_ind, cols @ w)
    within_zone = simdindex.weighted_domain_score(ranks, w, axis="within-zone")
    assert_allclose(within_zone, [simdindex.weighted_domain_score(r, w) for r in ranks])
    with pytest.raises(ValueError):
        simdindex.weighted_domain_score(ranks, w, axis="diagonal")
    with pytest.raises(ValueError):
        simdindex.weighted_domain_score(ranks, [0.9, 0.9, 0, 0])


def test_domain_rank():
    scores = np.array([16.5, 43.9, 3.5, 30.0, 11.3])
    assert simdindex.domain_rank(scores).tolist() == [3, 1, 5, 2, 4]
    assert simdindex.domain_rank([2.0, 2.0]).tolist() == [1, 1]
    assert simdindex.domain_rank([7.0]).tolist() == [1]
    # agrees with the posterior ranking applied to the same scores
    assert np.array_equal(simdindex.domain_rank(scores), ranking.rank_zones(scores, 0).rank)
