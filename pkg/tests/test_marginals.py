import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate, optimize, stats

from vinemix import marginals
from vinemix.marginals import MarginalModel, MarginalFitError

# family, parameters; several values are taken from fitted margins of the
# SIMD application and the three-variable simulation example
MODELS = [
    ("normal", [9.12, 2.60]),
    ("lognormal", [5.2, 0.57]),
    ("logistic", [0.5, 1.3]),
    ("loglogistic", [6.47, 0.16]),
    ("loglogistic", [4.68, 0.01]),
    ("gamma", [6.22, 0.77]),
    ("gamma", [7.17, 40.46]),
    ("exponential", [2.5]),
    ("cauchy", [1.0, 0.3]),
    ("student_t", [2.0, 1.5, 4.0]),
    ("skew_normal", [3.26, 1.02, 1.15]),
    ("skew_normal", [0.07, 0.05, 5.0]),
    ("skew_student_t", [17.46, 4.27, 4.60, 1.85]),
    ("skew_student_t", [0.0, 1.0, 3.0, 0.6]),
]
IDS = [f"{f}{p}" for f, p in MODELS]


def _support(m):
    lo = m.ppf(1e-9)
    hi = m.ppf(1 - 1e-9)
    return lo, hi


@pytest.mark.parametrize("family,params", MODELS, ids=IDS)
def test_density_integrates_to_one(family, params):
    m = MarginalModel(family, params)
    pos = marginals.get_family(family).support == "positive"
    lo = 0.0 if pos else -np.inf
    # split at the median so quad sees the bulk of the mass
    mid = float(m.ppf(0.5))
    total = sum(integrate.quad(m.pdf, a, b, limit=400, epsabs=1e-12)[0]
                for a, b in [(lo, mid), (mid, np.inf)])
    assert abs(total - 1) < 1e-5


@pytest.mark.parametrize("family,params", MODELS, ids=IDS)
def test_cdf_derivative_is_pdf(family, params):
    m = MarginalModel(family, params)
    x = m.ppf(np.linspace(0.02, 0.98, 25))
    h = 1e-6 * np.maximum(1.0, np.abs(x))
    fd = (m.cdf(x + h) - m.cdf(x - h)) / (2 * h)
    assert_allclose(fd, m.pdf(x), rtol=1e-5, atol=1e-5 * m.pdf(x).max())


@pytest.mark.parametrize("family,params", MODELS, ids=IDS)
def test_quantile_inverts_cdf(family, params):
    m = MarginalModel(family, params)
    q = np.arange(1, 100) / 100
    assert_allclose(m.cdf(m.ppf(q)), q, atol=1e-10)
    x = m.ppf(np.linspace(0.005, 0.995, 41))
    assert_allclose(m.ppf(m.cdf(x)), x, rtol=1e-8)
    assert np.all(np.diff(m.cdf(np.sort(x))) >= 0)


def test_standard_normal_mode():
    m = MarginalModel("normal", [0.0, 1.0])
    assert m.logpdf(0.0) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-15)


def test_normal_median():
    assert MarginalModel("normal", [9.12, 2.60]).cdf(9.12) == pytest.approx(0.5, abs=1e-15)


def test_lognormal_outside_support_is_minus_inf():
    m = MarginalModel("lognormal", [5.2, 0.57])
    assert np.all(m.logpdf(np.array([0.0, -1.0])) == -np.inf)


def test_gamma_median_against_bisection_of_quadrature_cdf():
    m = MarginalModel("gamma", [5.56, 0.49])
    qcdf = lambda x: integrate.quad(m.pdf, 0, x, epsabs=1e-13, epsrel=1e-12)[0]
    root = optimize.bisect(lambda x: qcdf(x) - 0.5, 1e-6, 100.0, xtol=1e-10)
    assert float(m.ppf(0.5)) == pytest.approx(root, abs=1e-6)


def test_agrees_with_scipy_parameterisations():
    x = np.linspace(0.1, 20, 17)
    assert_allclose(MarginalModel("gamma", [6.22, 0.77]).logpdf(x),
                    stats.gamma(6.22, scale=1 / 0.77).logpdf(x), rtol=1e-12)
    assert_allclose(MarginalModel("loglogistic", [6.47, 0.16]).cdf(x / 50),
                    stats.fisk(6.47, scale=0.16).cdf(x / 50), rtol=1e-12)
    assert_allclose(MarginalModel("lognormal", [1.0, 0.5]).logpdf(x),
                    stats.lognorm(0.5, scale=np.e).logpdf(x), rtol=1e-12)
    assert_allclose(MarginalModel("student_t", [1.0, 2.0, 5.0]).cdf(x),
                    stats.t(5.0, loc=1.0, scale=2.0).cdf(x), rtol=1e-12)


@pytest.mark.parametrize("family,params", [("skew_normal", [3.26, 1.02, 1.15]),
                                           ("skew_student_t", [17.46, 4.27, 4.60, 1.85])])
def test_skewed_families_have_stated_mean_and_sd(family, params):
    m = MarginalModel(family, params)
    mean = integrate.quad(lambda x: x * m.pdf(x), -np.inf, np.inf, limit=400)[0]
    var = integrate.quad(lambda x: (x - mean) ** 2 * m.pdf(x), -np.inf, np.inf, limit=400)[0]
    assert mean == pytest.approx(params[0], abs=1e-6)
    assert np.sqrt(var) == pytest.approx(params[1], rel=1e-6)


def test_skew_with_unit_xi_is_symmetric():
    sn = MarginalModel("skew_normal", [1.0, 2.0, 1.0])
    x = np.linspace(-5, 7, 9)
    assert_allclose(sn.logpdf(x), stats.norm(1, 2).logpdf(x), rtol=1e-12)


@pytest.mark.parametrize("family", ["normal", "logistic", "cauchy", "student_t"])
def test_symmetric_logpdf_decreases_away_from_mode(family):
    m = MarginalModel(family, {"normal": [1, 2], "logistic": [1, 2], "cauchy": [1, 2],
                               "student_t": [1, 2, 4]}[family])
    d = np.linspace(0, 10, 50)
    assert np.all(np.diff(m.logpdf(1 + d)) < 0)
    assert_allclose(m.logpdf(1 + d), m.logpdf(1 - d), rtol=1e-12)


def test_ppf_rejects_levels_outside_open_interval():
    m = MarginalModel("normal", [0, 1])
    with pytest.raises(ValueError):
        m.ppf(1.0)
    with pytest.raises(ValueError):
        m.ppf(-0.1)


@pytest.mark.parametrize("family,params", [("gamma", [1.0, -1.0]), ("normal", [0, 0]),
                                           ("skew_student_t", [0, 1, 1.5, 1])])
def test_invalid_parameters_rejected(family, params):
    with pytest.raises(ValueError):
        MarginalModel(family, params)


def test_unknown_family():
    with pytest.raises(ValueError, match="unknown marginal family"):
        MarginalModel("weibull", [1, 1])


# -- fitting -----------------------------------------------------------------------

def test_normal_fit_is_closed_form(rng):
    x = rng.normal(3, 2, size=500)
    m = marginals.fit_weighted("normal", x)
    assert_allclose(m.params, [x.mean(), x.std(ddof=0)], rtol=1e-12)


def test_exponential_fit_is_closed_form(rng):
    x = rng.exponential(2.0, size=500)
    assert marginals.fit_weighted("exponential", x).params[0] == pytest.approx(1 / x.mean())


def test_gamma_fit_recovers_truth(rng):
    x = rng.gamma(7.17, 1 / 40.46, size=10000)
    m = marginals.fit_weighted("gamma", x)
    assert_allclose(m.params, [7.17, 40.46], rtol=0.10)


@pytest.mark.parametrize("family,params", MODELS[2:], ids=IDS[2:])
def test_fit_improves_on_moment_start(family, params, rng):
    truth = MarginalModel(family, params)
    x = truth.ppf(rng.uniform(size=3000))
    w = rng.uniform(0.2, 1.0, size=x.size)
    fit = marginals.fit_weighted(family, x, w)
    fam = marginals.get_family(family)
    xs, ws = x, w * x.size / w.sum()
    start = MarginalModel(family, fam.start(xs, ws))
    assert (marginals.weighted_loglik(fit, x, w)
            >= marginals.weighted_loglik(start, x, w) - 1e-9)
    # local maximiser: small perturbations do not improve the objective
    base = marginals.weighted_loglik(fit, x, w)
    z = fam.to_free(fit.params)
    for j in range(z.size):
        for s in (-1e-3, 1e-3):
            zz = z.copy()
            zz[j] += s
            pert = MarginalModel(family, fam.from_free(zz))
            assert marginals.weighted_loglik(pert, x, w) <= base + 1e-6 * abs(base)


def test_fit_is_invariant_to_weight_scale(rng):
    x = rng.gamma(3.0, 2.0, size=800)
    a = marginals.fit_weighted("gamma", x, np.ones_like(x))
    b = marginals.fit_weighted("gamma", x, np.full_like(x, 7.5))
    assert_allclose(a.params, b.params, rtol=1e-10)


def test_zero_weights_select_a_subsample(rng):
    x = rng.gamma(3.0, 2.0, size=600)
    w = np.r_[np.ones(300), np.zeros(300)]
    a = marginals.fit_weighted("loglogistic", x, w)
    b = marginals.fit_weighted("loglogistic", x[:300])
    assert_allclose(a.params, b.params, rtol=1e-10)


def test_fit_rejects_data_outside_support():
    with pytest.raises(ValueError):
        marginals.fit_weighted("gamma", np.array([1.0, -2.0, 3.0]))


def test_nonconvergence_carries_best_fit(rng):
    x = rng.standard_t(4, size=300)
    with pytest.raises(MarginalFitError) as info:
        marginals.fit_weighted("skew_student_t", x, maxiter=3)
    assert isinstance(info.value.model, MarginalModel)


# -- selection ---------------------------------------------------------------------

def test_select_lognormal_over_normal(rng):
    x = rng.lognormal(0.0, 1.0, size=2000)
    best, scores = marginals.select_family(x, None, ["normal", "lognormal"],
                                           return_scores=True)
    assert best.family == "lognormal"
    assert scores["lognormal"] < scores["normal"]
    direct = {f: marginals.weighted_bic(marginals.fit_weighted(f, x), x) for f in scores}
    assert_allclose([scores[f] for f in direct], list(direct.values()))


def test_select_skips_positive_families_for_real_data(rng):
    x = rng.normal(0, 1, size=500)
    best, scores = marginals.select_family(x, None, ["gamma", "exponential", "normal"],
                                           return_scores=True)
    assert best.family == "normal"
    assert set(scores) == {"normal"}


def test_select_uses_weighted_bic(rng):
    x = rng.normal(0, 1, size=400)
    w = rng.uniform(size=400)
    best, scores = marginals.select_family(x, w, ["normal", "logistic"], return_scores=True)
    for f, s in scores.items():
        m = marginals.fit_weighted(f, x, w)
        expected = -2 * np.dot(w, m.logpdf(x)) + m.n_params * np.log(w.sum())
        assert s == pytest.approx(expected, rel=1e-10)


def test_select_with_no_candidates():
    with pytest.raises(ValueError):
        marginals.select_family(np.ones(5), None, [])


def test_serialisation_round_trip():
    m = MarginalModel("skew_student_t", [17.46, 4.27, 4.60, 1.85])
    doc = m.to_dict()
    assert doc["family"] == "skew_student_t" and "convention" in doc
    back = MarginalModel.from_dict(doc)
    assert back.family == m.family
    assert_allclose(back.params, m.params)
