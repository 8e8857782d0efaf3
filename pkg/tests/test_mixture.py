import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats
from sklearn.base import clone
from sklearn.metrics import adjusted_rand_score

from vinemix import mixture, vine
from vinemix.marginals import MarginalModel
from vinemix.mixture import FitConfig, MixtureModel, VineMixture
from vinemix.synthetic import example_components, example_model
from vinemix.vine import VineDistribution

FAST = dict(margin_families=("normal", "gamma", "logistic"),
            copula_families=("gaussian", "clayton", "gumbel", "frank"))


def normal_component(d, mean=0.0, sd=1.0):
    return VineDistribution(vine.independence_vine(d), [MarginalModel("normal", [mean, sd])] * d)


def blobs(n=200, seed=0, sep=6.0):
    r = np.random.default_rng(seed)
    truth = np.repeat([0, 1], n // 2)
    x = r.normal(size=(n, 2)) + sep * truth[:, None]
    return x, truth


def test_config_validation():
    with pytest.raises(ValueError):
        FitConfig(rel_tol=0)
    with pytest.raises(ValueError):
        FitConfig(n_components=0)
    with pytest.raises(ValueError):
        FitConfig(vine_kind="dvine")


def test_model_invariants():
    with pytest.raises(ValueError, match="sum to one"):
        MixtureModel([0.5, 0.6], [normal_component(2)] * 2)
    with pytest.raises(ValueError, match="dimension"):
        MixtureModel([0.5, 0.5], [normal_component(2), normal_component(3)])


def test_e_step_single_component(rng):
    m = MixtureModel([1.0], [normal_component(2)])
    r, _, _ = mixture.e_step(m, rng.normal(size=(20, 2)))
    assert_allclose(r, 1.0)


def test_e_step_identical_components(rng):
    m = MixtureModel([1 / 3] * 3, [normal_component(2)] * 3)
    r, _, _ = mixture.e_step(m, rng.normal(size=(20, 2)))
    assert_allclose(r, 1 / 3, rtol=1e-14)


def test_e_step_bayes_rule():
    # with unit sd, log N(x; 0) - log N(x; mu) = log 3 at x = mu/2 - log(3)/mu
    mu = 1.0
    x = mu / 2 - np.log(3) / mu
    m = MixtureModel([0.5, 0.5], [normal_component(1, 0.0), normal_component(1, mu)])
    r, _, _ = mixture.e_step(m, np.array([[x]]))
    assert_allclose(r[0], [0.75, 0.25], atol=1e-12)


def test_e_step_rows_sum_to_one(rng):
    m = example_model()
    x, _ = m.simulate(300, 1)
    r, ll, bad = mixture.e_step(m, x, resp_floor=1e-12)
    assert_allclose(r.sum(axis=1), 1.0, atol=1e-12)
    assert bad == 0
    assert ll == pytest.approx(m.loglik(x), rel=1e-13)


def test_e_step_degenerate_rows():
    g = VineDistribution(vine.independence_vine(1), [MarginalModel("gamma", [2, 1])])
    m = MixtureModel([0.5, 0.5], [g, g])
    r, _, bad = mixture.e_step(m, np.array([[1.0], [-1.0]]))
    assert bad == 1
    assert_allclose(r[1], [0.5, 0.5])


def test_cm1_weights(rng):
    m = MixtureModel([0.5, 0.5], [normal_component(2), normal_component(2, 3)])
    x = rng.normal(size=(2000, 2))
    r = np.zeros((2000, 2))
    r[:900, 0] = 1
    r[900:, 1] = 1
    new = mixture.cm_steps(m, x, r)
    assert_allclose(new.weights, [0.45, 0.55], atol=1e-15)


def test_cm_weight_floor(rng):
    m = MixtureModel([0.5, 0.5], [normal_component(2), normal_component(2, 3)])
    x = rng.normal(size=(100, 2))
    r = np.column_stack([np.ones(100), np.zeros(100)])
    new = mixture.cm_steps(m, x, r)
    assert new.weights[1] == pytest.approx(1e-6, rel=1e-5)
    # the empty component keeps its parameters
    assert np.array_equal(new.components[1].margins[0].params, m.components[1].margins[0].params)
    assert new.components[0].margins[0].params[0] == pytest.approx(x[:, 0].mean(), abs=1e-4)


def test_cm_steps_do_not_decrease_expected_loglik():
    m = example_model()
    x, _ = m.simulate(600, 2)
    start = mixture.initial_model(x, mixture.init_partition(x, 2, seed=1),
                                  FitConfig(**FAST))
    r, _, _ = mixture.e_step(start, x)

    def q(model):
        return float(np.sum(r * model.joint_logpdf(x)))

    new = mixture.cm_steps(start, x, r)
    assert q(new) >= q(start) - 1e-8 * abs(q(start))


def test_symmetric_uniform_responsibilities(rng):
    m = MixtureModel([0.5, 0.5], [normal_component(2, -1), normal_component(2, 1)])
    x = rng.normal(size=(400, 2))
    new = mixture.cm_steps(m, x, np.full((400, 2), 0.5))
    a = [mm.params for mm in new.components[0].margins]
    b = [mm.params for mm in new.components[1].margins]
    assert_allclose(a, b, atol=1e-4)


def test_init_partition_blobs():
    x, truth = blobs()
    for method in ("kmeans", "gmm"):
        labels = mixture.init_partition(x, 2, method, seed=3)
        # oracle: nearest of the two true centres
        centres = np.array([x[truth == k].mean(axis=0) for k in (0, 1)])
        nearest = np.argmin(((x[:, None, :] - centres) ** 2).sum(axis=2), axis=1)
        assert adjusted_rand_score(labels, nearest) == 1.0
        assert adjusted_rand_score(labels, truth) == 1.0


def test_init_partition_single_cluster_and_determinism():
    x, _ = blobs()
    assert np.all(mixture.init_partition(x, 1) == 0)
    a = mixture.init_partition(x, 3, seed=5)
    assert np.array_equal(a, mixture.init_partition(x, 3, seed=5))
    with pytest.raises(ValueError):
        mixture.init_partition(x[:2], 3)


def test_single_component_fit(rng):
    x = rng.normal(size=(300, 2)) @ np.array([[1, 0.6], [0, 0.8]])
    model, r, trace = mixture.fit(x, FitConfig(n_components=1, **FAST))
    assert_allclose(r, 1.0)
    comp = model.components[0]
    assert model.loglik(x) == pytest.approx(float(np.sum(comp.logpdf(x))), rel=1e-13)
    assert model.bic(x) == pytest.approx(-2 * model.loglik(x) + comp.n_params * np.log(300))


def test_closed_form_loglik_and_bic():
    d, n = 3, 50
    m = MixtureModel([1.0], [normal_component(d)])
    x = np.zeros((n, d))
    assert mixture.loglik(m, x) == pytest.approx(n * d * stats.norm.logpdf(0), rel=1e-14)
    assert m.n_params == 2 * d
    assert mixture.bic(m, x) == pytest.approx(-2 * n * d * stats.norm.logpdf(0)
                                              + 2 * d * np.log(n), rel=1e-14)


def test_loglik_doubles_with_duplicated_rows():
    m = example_model()
    x, _ = m.simulate(200, 4)
    assert m.loglik(np.vstack([x, x])) == pytest.approx(2 * m.loglik(x), rel=1e-14)


def test_parameter_count():
    m = example_model()
    expected = 1 + sum(sum(len(mm.params) for mm in c.margins) + c.copula.n_params
                       for c in m.components)
    assert m.n_params == expected == 1 + (2 + 2 + 4 + 1 + 1 + 1) + (3 + 2 + 2 + 1 + 1 + 2)


def test_classify_ties_to_lowest_index():
    assert mixture.classify([[0.5, 0.5], [0.2, 0.8], [1 / 3, 1 / 3]]).tolist() == [0, 1, 0]


def test_document_round_trip():
    m = example_model()
    x, _ = m.simulate(50, 1)
    back = MixtureModel.from_dict(m.to_dict())
    assert_allclose(back.logpdf(x), m.logpdf(x), rtol=1e-14)
    doc = m.to_dict()
    doc["version"] = 99
    with pytest.raises(ValueError, match="version"):
        MixtureModel.from_dict(doc)


def test_simulate_labels_follow_weights():
    m = example_model()
    _, labels = m.simulate(20000, 0)
    assert abs(labels.mean() - m.weights[1]) < 3 * np.sqrt(0.25 / 20000)


@pytest.mark.slow
def test_fit_ascent_and_recovery():
    m = example_model()
    x, truth = m.simulate(800, 11)
    model, r, trace = mixture.fit(x, FitConfig(seed=2, **FAST))
    ll = np.array(trace.loglik)
    assert np.all(np.diff(ll) >= -1e-6 * np.abs(ll[:-1]))
    assert adjusted_rand_score(truth, mixture.classify(r)) > 0.8
    assert_allclose(r.sum(axis=1), 1.0, atol=1e-12)
    assert len(trace.weights) == len(trace.loglik) == len(trace.wall_time)


def test_fit_is_deterministic():
    m = example_model()
    x, _ = m.simulate(300, 12)
    cfg = FitConfig(seed=4, max_iter=3, **FAST)
    a, ra, _ = mixture.fit(x, cfg)
    b, rb, _ = mixture.fit(x, cfg)
    assert np.array_equal(ra, rb)
    c, rc, _ = mixture.fit(x, FitConfig(seed=4, max_iter=3, n_jobs=2, **FAST))
    assert np.array_equal(ra, rc)


def test_given_partition_requires_labels():
    x, truth = blobs()
    with pytest.raises(ValueError):
        mixture.fit(x, FitConfig(init="given"))
    model, _, _ = mixture.fit(x, FitConfig(init="given", max_iter=2, **FAST), labels=truth)
    assert model.n_components == 2


def test_estimator_api():
    x, truth = blobs(300, 1)
    est = VineMixture(n_components=2, max_iter=5, **FAST)
    assert clone(est).get_params() == est.get_params()
    labels = est.fit_predict(x)
    assert adjusted_rand_score(labels, truth) == 1.0
    assert est.predict_proba(x).shape == (300, 2)
    assert est.score(x) == pytest.approx(est.score_samples(x).mean())
    assert est.bic(x) == pytest.approx(est.model_.bic(x))
    xs, ls = est.sample(10, seed=0)
    assert xs.shape == (10, 2) and ls.shape == (10,)
    assert est.n_iter_ == est.trace_.n_iter


def test_example_components_have_strong_dependence():
    for comp in example_components():
        for c in comp.copula.copulas.values():
            assert abs(c.tau()) >= 0.4 - 5e-3
