import math

import numpy as np
import pytest

from vinemix import mixture, selection
from vinemix.mixture import FitConfig
from vinemix.synthetic import example_model


def stub(bic_of, fail=()):
    calls = []

    def fit_fn(data, cfg):
        key = (cfg.n_components, cfg.vine_kind, cfg.init)
        calls.append(key)
        if cfg.n_components in fail:
            raise RuntimeError("boom")
        return f"model-{key}", bic_of(*key)
    fit_fn.calls = calls
    return fit_fn


def test_monotone_bic_evaluates_three_next():
    f = stub(lambda k, v, i: 100.0 + k)
    model, rep = selection.search_k(None, candidates=(2, 4, 6, 10), fit_fn=f)
    assert rep.evaluated_ks() == [2, 4, 6, 10, 3]
    assert rep.chosen == (2, "rvine", "kmeans")
    assert model == "model-(2, 'rvine', 'kmeans')"
    # (2, 4) -> 3, then (2, 3) -> 2.5 whose floor and ceiling are both known
    assert [t["average"] for t in rep.trajectory] == [3.0, 2.5]
    assert rep.trajectory[-1]["fitted"] == []


def test_two_candidates():
    f = stub(lambda k, v, i: {2: 1.0, 3: 2.0, 4: 3.0}[k])
    _, rep = selection.search_k(None, candidates=(2, 4), fit_fn=f)
    assert rep.evaluated_ks() == [2, 4, 3]
    assert rep.chosen[0] == 2


def test_single_candidate():
    f = stub(lambda k, v, i: 5.0)
    _, rep = selection.search_k(None, candidates=(2,), fit_fn=f)
    assert f.calls == [(2, "rvine", "kmeans")]
    assert rep.chosen[0] == 2


def test_non_integer_average_fits_floor_and_ceiling():
    f = stub(lambda k, v, i: (k - 3.8) ** 2)
    _, rep = selection.search_k(None, candidates=(2, 5), fit_fn=f)
    assert rep.evaluated_ks() == [2, 5, 3, 4]
    assert rep.trajectory[0]["fitted"] == [3, 4]
    assert rep.chosen[0] == 4


def test_search_moves_towards_interior_minimum():
    f = stub(lambda k, v, i: abs(k - 7.4))
    _, rep = selection.search_k(None, fit_fn=f)
    assert rep.evaluated_ks() == [2, 4, 6, 10, 8, 7]
    assert rep.chosen[0] == 7


def test_round_cap():
    f = stub(lambda k, v, i: float(k))
    _, rep = selection.search_k(None, candidates=(2, 100), fit_fn=f, max_rounds=5)
    assert rep.evaluated_ks() == [2, 100, 51, 26, 27, 14, 8, 5]
    assert len(rep.trajectory) == 5


def test_failures_are_recorded_and_skipped():
    f = stub(lambda k, v, i: float(k), fail=(2,))
    _, rep = selection.search_k(None, candidates=(2, 4, 6), fit_fn=f)
    assert [k for k, *_ in rep.failures] == [2]
    assert rep.chosen[0] == 4
    # 4 and 6 average to 5
    assert 5 in rep.evaluated_ks()
    with pytest.raises(RuntimeError):
        selection.search_k(None, candidates=(2, 4), fit_fn=stub(lambda *a: 0.0, fail=(2, 4)))


def test_kinds_and_inits():
    table = {"rvine": 0.0, "cvine": 10.0}
    f = stub(lambda k, v, i: table[v] + (k - 4) ** 2 + (i == "gmm"))
    _, rep = selection.search_k(None, candidates=(2, 4, 6), vine_kinds=("cvine", "rvine"),
                                inits=("kmeans", "gmm"), fit_fn=f, n_jobs=2)
    assert len(f.calls) == len(set(f.calls))
    assert rep.chosen == (4, "rvine", "kmeans")
    best = min(b for *_, b in rep.evaluated)
    assert all(b >= best for *_, b in rep.evaluated)
    # BIC(2) ties BIC(6); the smaller K wins, so (4, 2) -> 3 and then (4, 3) stops
    assert rep.evaluated_ks("cvine", "gmm") == [2, 4, 6, 3]
    doc = rep.to_dict()
    assert doc["chosen"] == {"K": 4, "vine_kind": "rvine", "init": "kmeans"}


def test_lovo_bookkeeping():
    cost = np.array([5.0, 1.0, 3.0, 1.0])

    def fit_fn(x, cfg):
        # BIC rises by the cost of every dropped column
        kept = {int(round(c)) for c in x[0]}
        return None, 100.0 + sum(cost[j] for j in range(4) if j not in kept)

    x = np.tile(np.arange(4.0), (5, 1))
    rep = selection.lovo(x, FitConfig(), names=list("abcd"), fit_fn=fit_fn)
    assert rep.full_bic == 100.0
    by = {r.name: r for r in rep.rows}
    assert [by[n].delta_bic for n in "abcd"] == [5.0, 1.0, 3.0, 1.0]
    assert [by[n].rank for n in "abcd"] == [1, 3, 2, 4]
    assert [r.name for r in rep.ranked()] == ["a", "c", "b", "d"]
    rows = rep.to_rows()
    assert list(rows[0]) == ["Domain", "Indicator", "BIC(LOVO)", "DeltaBIC", "Rank", "error"]


def test_lovo_failure_flagged():
    def fit_fn(x, cfg):
        if x.shape[1] == 2 and x[0, 0] == 1.0:
            raise ValueError("no")
        return None, float(x.shape[1])

    x = np.tile(np.arange(3.0), (4, 1))
    rep = selection.lovo(x, FitConfig(), full_bic=0.0, fit_fn=fit_fn)
    failed = [r for r in rep.rows if r.error]
    assert [r.name for r in failed] == ["x1"]
    assert math.isnan(failed[0].delta_bic) and failed[0].rank is None
    assert sorted(r.rank for r in rep.ranked()) == [1, 2]


def test_lovo_two_columns_fits_one_dimensional_mixtures():
    x, _ = example_model().simulate(400, 3)
    x = x[:, 1:]
    cfg = FitConfig(margin_families=("normal", "gamma"), max_iter=10)
    rep = selection.lovo(x, cfg)
    assert len(rep.rows) == 2 and all(r.error is None for r in rep.rows)
    for j, row in enumerate(rep.rows):
        model, b = selection.default_fit(x[:, [1 - j]], cfg)
        assert model.d == 1
        assert row.bic_lovo == b
    full = selection.default_fit(x, cfg)[1]
    assert rep.full_bic == full
    # rerun is bitwise identical
    again = selection.lovo(x, cfg)
    assert [r.delta_bic for r in again.rows] == [r.delta_bic for r in rep.rows]
