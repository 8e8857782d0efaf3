"""Cluster-driven deprivation ranking from posterior probabilities."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

log = logging.getLogger(__name__)

HIGHER_IS_DEPRIVED = "higher-is-deprived"
LOWER_IS_DEPRIVED = "lower-is-deprived"
ORIENTATIONS = (HIGHER_IS_DEPRIVED, LOWER_IS_DEPRIVED)


def oriented_scale(values, orientation):
    """Standardise columns and orient them so that lower means more deprived.

    Columns are centred and divided by their sample standard deviation, then
    ``higher-is-deprived`` columns are negated.
    """
    x = np.asarray(values, dtype=float)
    orientation = list(orientation)
    if len(orientation) != x.shape[1]:
        raise ValueError("one orientation flag per column is required")
    bad = [j for j, o in enumerate(orientation) if o not in ORIENTATIONS]
    if bad:
        raise ValueError(f"orientation metadata missing or invalid for columns {bad}")
    sd = x.std(axis=0, ddof=1)
    if np.any(sd == 0):
        raise ValueError("zero-variance column")
    z = (x - x.mean(axis=0)) / sd
    sign = np.array([-1.0 if o == HIGHER_IS_DEPRIVED else 1.0 for o in orientation])
    return z * sign


@dataclass
class DeprivedClusterScore:
    scores: np.ndarray
    k_star: int


def identify_deprived_cluster(r, x_scaled):
    """Cluster scores ``s_k = sum_i sum_p r_ik x_ip`` and their argmin.

    ``x_scaled`` must already be oriented so that lower values are more
    deprived; pass a :class:`Dataset` to have :func:`oriented_scale` applied
    from its orientation metadata.
    """
    if hasattr(x_scaled, "orientation"):
        x_scaled = oriented_scale(x_scaled.values, x_scaled.orientation)
    r = np.asarray(r, dtype=float)
    x = np.asarray(x_scaled, dtype=float)
    if r.shape[0] != x.shape[0]:
        raise ValueError("responsibilities and data have different row counts")
    s = r.T @ x.sum(axis=1)
    k_star = int(np.argmin(s))
    if np.sum(s == s[k_star]) > 1:
        log.info("tie in cluster deprivation scores; choosing cluster %d", k_star)
    return DeprivedClusterScore(s, k_star)


@dataclass
class DeprivationRanking:
    zone_ids: list
    posterior: np.ndarray
    rank: np.ndarray

    def to_rows(self):
        return [{"zone_id": z, "posterior": float(p), "rank": int(k)}
                for z, p, k in zip(self.zone_ids, self.posterior, self.rank)]


def competition_rank(values, descending=True, tol=0.0):
    """Competition ranks ("1, 2, 2, 4"); rank 1 goes to the largest value.

    With ``tol > 0`` a value joins the current tie block when it lies within
    ``tol`` of the block's first value.
    """
    v = np.asarray(values, dtype=float)
    key = -v if descending else v
    if tol == 0:
        return stats.rankdata(key, method="min").astype(int)
    order = np.argsort(key, kind="stable")
    ranks = np.empty(v.size, dtype=int)
    start = None
    for pos, i in enumerate(order):
        if start is None or key[i] - key[order[start]] > tol:
            start = pos
        ranks[i] = start + 1
    return ranks


def rank_zones(r, k_star, zone_ids=None, tol=0.0):
    """Rank zones by their posterior probability of the most deprived cluster."""
    r = np.asarray(r, dtype=float)
    post = r[:, k_star] if r.ndim == 2 else r
    if zone_ids is None:
        zone_ids = [str(i) for i in range(post.size)]
    return DeprivationRanking(list(zone_ids), post.copy(), competition_rank(post, tol=tol))


@dataclass
class RankComparison:
    spearman: float
    kendall: float
    table: list


def compare_rankings(a, b, ids_a=None, ids_b=None):
    """Spearman and Kendall agreement of two rank vectors aligned by zone id."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if ids_a is not None or ids_b is not None:
        ids_a = list(ids_a if ids_a is not None else range(a.size))
        ids_b = list(ids_b if ids_b is not None else range(b.size))
        if sorted(map(str, ids_a)) != sorted(map(str, ids_b)) or len(set(ids_a)) != len(ids_a):
            raise ValueError("zone ids of the two rankings do not match")
        pos = {str(z): i for i, z in enumerate(ids_b)}
        b = b[[pos[str(z)] for z in ids_a]]
        ids = ids_a
    else:
        if a.size != b.size:
            raise ValueError("rankings have different lengths")
        ids = list(range(a.size))
    rho = stats.spearmanr(a, b).statistic
    tau = stats.kendalltau(a, b).statistic
    table = [{"zone_id": z, "rank_a": float(x), "rank_b": float(y)}
             for z, x, y in zip(ids, a, b)]
    return RankComparison(float(rho), float(tau), table)
