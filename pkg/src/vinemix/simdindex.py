"""Domain-score arithmetic of the Scottish Index of Multiple Deprivation."""

import warnings
from dataclasses import dataclass

import numpy as np

from .ranking import competition_rank

# percent weights of the seven domains in the overall index
DOMAIN_WEIGHTS = {"Income": 28, "Employment": 28, "Health": 14, "Education": 14,
                  "Access": 9, "Crime": 5, "Housing": 2}


@dataclass
class RateDomainInput:
    counts: tuple
    population: float


def rate_score(counts, population=None):
    """Share of the population counted by any indicator of a rate domain.

    Accepts either a :class:`RateDomainInput` or ``(counts, population)``.
    """
    if isinstance(counts, RateDomainInput):
        counts, population = counts.counts, counts.population
    counts = np.asarray(counts, dtype=float)
    if population is None or population <= 0:
        raise ValueError("population must be positive")
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    total = counts.sum()
    if total > population:
        warnings.warn("summed counts exceed the population", stacklevel=2)
    return float(total / population)


def standardize_rank_vector(ranks, axis=None):
    """z-scores of ranks using the sample (n - 1) standard deviation.

    For a 2-d array, ``axis=0`` standardises each indicator column across
    zones and ``axis=1`` standardises each zone's row across its indicators.
    """
    r = np.asarray(ranks, dtype=float)
    if r.ndim == 1:
        axis = 0
    elif axis is None:
        axis = 0
    if r.shape[axis] < 2:
        raise ValueError("need at least two ranks")
    sd = r.std(axis=axis, ddof=1, keepdims=True)
    if np.any(sd == 0):
        raise ValueError("constant rank vector")
    return (r - r.mean(axis=axis, keepdims=True)) / sd


@dataclass
class WeightedZDomain:
    names: tuple
    ranks: np.ndarray
    weights: np.ndarray


def weighted_domain_score(ranks, weights=None, axis="within-indicator"):
    """Weighted sum of rank z-scores.

    Parameters
    ----------
    ranks : array_like or WeightedZDomain
        A 1-d vector of one zone's indicator ranks, or an ``(n_zones,
        n_indicators)`` matrix.
    weights : array_like
        One weight per indicator.
    axis : {"within-zone", "within-indicator"}
        Standardise across a zone's indicators or across zones per indicator.
        A 1-d input is always standardised across its entries.
    """
    if isinstance(ranks, WeightedZDomain):
        ranks, weights = ranks.ranks, ranks.weights
    w = np.asarray(weights, dtype=float)
    r = np.asarray(ranks, dtype=float)
    if r.shape[-1] != w.size:
        raise ValueError("one weight per indicator is required")
    if np.any(w < 0) or w.sum() > 1 + 1e-9:
        raise ValueError("weights must be nonnegative and sum to at most one")
    if axis not in ("within-zone", "within-indicator"):
        raise ValueError("axis must be 'within-zone' or 'within-indicator'")
    if r.ndim == 1:
        z = standardize_rank_vector(r)
    else:
        z = standardize_rank_vector(r, axis=1 if axis == "within-zone" else 0)
    return z @ w


def domain_rank(scores, higher_is_more_deprived=True):
    """Competition ranks with rank 1 for the most deprived score."""
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise ValueError("no scores")
    return competition_rank(s, descending=higher_is_more_deprived)
