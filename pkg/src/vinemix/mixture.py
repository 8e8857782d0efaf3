"""Finite mixtures of vine distributions fitted by ECM.

One ECM iteration runs an E-step and then three conditional maximisations:

* CM1 sets the mixing weights to the mean responsibilities.
* CM2 updates each marginal model given the responsibilities.
* CM3 refits the pair-copula parameters on PIT values of the CM2 margins,
  tree by tree.

Families and vine structures are chosen once, from the initial hard
partition, and only parameters move afterwards.
"""

import logging
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.cluster import KMeans
from sklearn.mixture import GaussianMixture
from sklearn.utils.validation import check_array, check_is_fitted

from . import marginals, vine
from ._utils import derive_seed

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class FitError(RuntimeError):
    """Raised when a fit cannot produce a finite log-likelihood."""


@dataclass
class FitConfig:
    n_components: int = 2
    init: str = "kmeans"
    seed: int = 0
    rel_tol: float = 1e-5
    max_iter: int = 100
    vine_kind: str = "rvine"
    margin_families: tuple = None
    copula_families: tuple = None
    n_init: int = 20
    weight_floor: float = 1e-6
    resp_floor: float = 1e-12
    indep_test: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be at least 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.init not in ("kmeans", "gmm", "given"):
            raise ValueError("init must be 'kmeans', 'gmm' or 'given'")
        if self.vine_kind not in ("rvine", "cvine"):
            raise ValueError("vine_kind must be 'rvine' or 'cvine'")
        if self.margin_families is not None:
            self.margin_families = tuple(self.margin_families)
        if self.copula_families is not None:
            self.copula_families = tuple(self.copula_families)

    def to_dict(self):
        out = asdict(self)
        for key in ("margin_families", "copula_families"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out


@dataclass
class FitTrace:
    loglik: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    converged: bool = False
    n_degenerate_rows: int = 0

    @property
    def n_iter(self):
        return max(len(self.loglik) - 1, 0)

    def to_dict(self):
        return {"loglik": [float(v) for v in self.loglik],
                "weights": [[float(v) for v in w] for w in self.weights],
                "wall_time": [float(v) for v in self.wall_time],
                "converged": self.converged,
                "n_degenerate_rows": self.n_degenerate_rows}


def _as_matrix(data):
    values = getattr(data, "values", data)
    x = np.asarray(values, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if not np.isfinite(x).all():
        raise ValueError("data contain missing or non-finite values")
    return x


class MixtureModel:
    """Mixing weights plus one :class:`vine.VineDistribution` per component."""

    def __init__(self, weights, components):
        weights = np.asarray(weights, dtype=float)
        if len(weights) != len(components):
            raise ValueError("one weight per component is required")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to one")
        dims = {c.d for c in components}
        if len(dims) != 1:
            raise ValueError("all components must share the same dimension")
        self.weights = weights
        self.components = list(components)

    @property
    def n_components(self):
        return len(self.components)

    @property
    def d(self):
        return self.components[0].d

    @property
    def n_params(self):
        return self.n_components - 1 + sum(c.n_params for c in self.components)

    def joint_logpdf(self, x):
        """``log pi_k + log g_k(x_i)`` as an ``(n, K)`` array."""
        x = _as_matrix(x)
        cols = [np.log(w) + c.logpdf(x) for w, c in zip(self.weights, self.components)]
        return np.column_stack(cols)

    def logpdf(self, x):
        return logsumexp(self.joint_logpdf(x), axis=1)

    def loglik(self, x):
        return float(np.sum(self.logpdf(x)))

    def bic(self, x):
        x = _as_matrix(x)
        return -2.0 * self.loglik(x) + self.n_params * np.log(x.shape[0])

    def simulate(self, n, seed=None):
        """Draw ``n`` rows; returns ``(x, labels)``."""
        rng = np.random.default_rng(seed)
        labels = rng.choice(self.n_components, size=n, p=self.weights)
        x = np.empty((n, self.d))
        for k, comp in enumerate(self.components):
            rows = labels == k
            if rows.any():
                x[rows] = comp.simulate(int(rows.sum()), int(rng.integers(2**63 - 1)))
        return x, labels

    def to_dict(self):
        return {"format": "vinemix-mixture", "version": FORMAT_VERSION,
                "weights": [float(w) for w in self.weights],
                "components": [c.to_dict() for c in self.components]}

    @classmethod
    def from_dict(cls, doc):
        if doc.get("version", FORMAT_VERSION) > FORMAT_VERSION:
            raise ValueError(f"unsupported model document version {doc['version']}")
        comps = [vine.VineDistribution.from_dict(c) for c in doc["components"]]
        return cls(np.asarray(doc["weights"], dtype=float), comps)


# -- initialisation ----------------------------------------------------------------

def _standardize(x):
    sd = x.std(axis=0, ddof=1)
    sd[sd == 0] = 1.0
    return (x - x.mean(axis=0)) / sd


def init_partition(data, n_components, method="kmeans", seed=0, n_init=20, max_restarts=100):
    """Hard initial partition on column-standardised data.

    ``kmeans`` runs Lloyd iterations from k-means++ seeds and keeps the best of
    ``n_init`` restarts by within-cluster sum of squares. ``gmm`` fits a
    diagonal-covariance Gaussian mixture with ``n_init`` restarts and assigns
    each row to its most probable component. Partitions with an empty cluster
    are redrawn with a new seed.
    """
    x = _as_matrix(data)
    n = x.shape[0]
    if n_components > n:
        raise ValueError("more clusters than observations")
    if n_components == 1:
        return np.zeros(n, dtype=int)
    z = _standardize(x)
    for attempt in range(max_restarts):
        rs = derive_seed(seed, f"{method}:{attempt}")
        if method == "kmeans":
            est = KMeans(n_clusters=n_components, init="k-means++", n_init=n_init,
                         random_state=rs % (2**32))
            labels = est.fit_predict(z)
        elif method == "gmm":
            est = GaussianMixture(n_components=n_components, covariance_type="diag",
                                  n_init=n_init, random_state=rs % (2**32))
            est.fit(z)
            labels = np.argmax(est.predict_proba(z), axis=1)
        else:
            raise ValueError(f"unknown init method {method!r}")
        if np.bincount(labels, minlength=n_components).min() > 0:
            return labels.astype(int)
    raise FitError(f"could not form {n_components} nonempty clusters "
                   f"after {max_restarts} restarts")


def _support_ok(families, x):
    out = []
    for p in range(x.shape[1]):
        ok = [f for f in families if np.all(marginals.get_family(f).in_support(x[:, p]))]
        if not ok:
            raise ValueError(f"no candidate margin family supports column {p}")
        out.append(ok)
    return out


def _select_component(x, rows, config, margin_sets):
    xk = x[rows]
    if xk.shape[0] < 2:
        raise FitError("a cluster of the initial partition has fewer than two rows")
    margins = []
    for p in range(x.shape[1]):
        margins.append(marginals.select_family(xk[:, p], None, margin_sets[p]))
    u = np.column_stack([m.cdf(xk[:, p]) for p, m in enumerate(margins)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        vc = vine.select_structure(u, kind=config.vine_kind,
                                   candidates=config.copula_families,
                                   indep_test=config.indep_test)
    return vine.VineDistribution(vc, margins)


def _map(fn, items, n_jobs):
    if n_jobs and n_jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def initial_model(data, labels, config):
    """Model selection and fit on each cluster of a hard partition."""
    x = _as_matrix(data)
    labels = np.asarray(labels, dtype=int)
    K = config.n_components
    families = config.margin_families or marginals.FAMILY_NAMES
    margin_sets = _support_ok(families, x)
    counts = np.bincount(labels, minlength=K).astype(float)
    if len(counts) != K or counts.min() == 0:
        raise FitError("initial partition must have K nonempty clusters")
    if x.shape[0] < 10 * x.shape[1] * K:
        warnings.warn("few observations for the requested mixture size", stacklevel=2)
    comps = _map(lambda k: _select_component(x, labels == k, config, margin_sets),
                 list(range(K)), config.n_jobs)
    return MixtureModel(_floor_weights(counts / counts.sum(), config.weight_floor), comps)


# -- E and CM steps ----------------------------------------------------------------

def e_step(model, data, resp_floor=0.0):
    """Posterior component probabilities.

    Returns ``(r, loglik, n_degenerate)``. Rows where every component has zero
    density get uniform responsibilities and are counted in ``n_degenerate``.
    """
    lp = model.joint_logpdf(data)
    lse = logsumexp(lp, axis=1)
    bad = ~np.isfinite(lse)
    with np.errstate(invalid="ignore"):
        r = np.exp(lp - lse[:, None])
    if bad.any():
        r[bad] = 1.0 / model.n_components
        log.warning("%d rows have zero density under every component", int(bad.sum()))
    if resp_floor > 0:
        r = np.maximum(r, resp_floor)
    r /= r.sum(axis=1, keepdims=True)
    return r, float(np.sum(lse)), int(bad.sum())


def _floor_weights(pi, floor):
    pi = np.maximum(pi, floor)
    return pi / pi.sum()


def _component_q(comp, x, w):
    """Weighted complete-data log-likelihood of one component (without log pi)."""
    ll = comp.margin_logpdf(x).sum(axis=1) + comp.copula.logpdf(comp.pit(x))
    return float(np.dot(w, ll))


def _damped(old, new, t):
    fam = marginals.get_family(old.family)
    z = fam.to_free(old.params) + t * (fam.to_free(new.params) - fam.to_free(old.params))
    return marginals.MarginalModel(old.family, fam.from_free(z))


def _cm_component(comp, x, w):
    if w.sum() <= 1e-300 * len(w):
        return comp
    margins = list(comp.margins)
    copula = comp.copula
    best_q = _component_q(comp, x, w)
    # CM2: one margin at a time; keep a proposal only if the component objective rises
    for p, old in enumerate(margins):
        try:
            prop = marginals.fit_weighted(old.family, x[:, p], w, init=old.params)
        except marginals.MarginalFitError as err:
            prop = err.model
        except ValueError:
            continue
        if prop is None:
            continue
        for t in (1.0, 0.5, 0.25):
            cand = prop if t == 1.0 else _damped(old, prop, t)
            trial = margins[:p] + [cand] + margins[p + 1:]
            q = _component_q(vine.VineDistribution(copula, trial), x, w)
            if q > best_q:
                margins, best_q = trial, q
                break
    # CM3: pair copulas on PIT values of the updated margins
    current = vine.VineDistribution(copula, margins)
    copula = vine.refit_parameters(copula, current.pit(x), w, guarded=True)
    return vine.VineDistribution(copula, margins)


def cm_steps(model, data, r, config=None):
    """CM1, CM2 and CM3 for every component given responsibilities ``r``."""
    config = config or FitConfig(n_components=model.n_components)
    x = _as_matrix(data)
    r = np.asarray(r, dtype=float)
    pi = _floor_weights(r.sum(axis=0) / x.shape[0], config.weight_floor)
    items = list(range(model.n_components))

    def work(k):
        try:
            return _cm_component(model.components[k], x, r[:, k])
        except Exception as err:
            raise FitError(f"component {k}: {err}") from err

    comps = _map(work, items, config.n_jobs)
    return MixtureModel(pi, comps)


def fit(data, config=None, labels=None):
    """Fit a vine mixture by ECM.

    Parameters
    ----------
    data : Dataset or array_like of shape (n, d)
    config : FitConfig
    labels : array_like of int, optional
        Initial hard partition; required when ``config.init == "given"``.

    Returns
    -------
    model : MixtureModel
    r : ndarray of shape (n, K)
    trace : FitTrace
    """
    config = config or FitConfig()
    x = _as_matrix(data)
    t0 = time.perf_counter()
    if labels is None:
        if config.init == "given":
            raise ValueError("init='given' requires labels")
        labels = init_partition(x, config.n_components, config.init,
                                seed=config.seed, n_init=config.n_init)
    model = initial_model(x, labels, config)
    trace = FitTrace()
    r, ll, bad = e_step(model, x, config.resp_floor)
    if not np.isfinite(ll):
        raise FitError("initial model has a non-finite log-likelihood")
    trace.loglik.append(ll)
    trace.weights.append(model.weights.tolist())
    trace.wall_time.append(time.perf_counter() - t0)
    trace.n_degenerate_rows += bad
    for _ in range(config.max_iter):
        model = cm_steps(model, x, r, config)
        r, ll_new, bad = e_step(model, x, config.resp_floor)
        if not np.isfinite(ll_new):
            raise FitError("log-likelihood became non-finite")
        trace.loglik.append(ll_new)
        trace.weights.append(model.weights.tolist())
        trace.wall_time.append(time.perf_counter() - t0)
        trace.n_degenerate_rows += bad
        change = abs(ll_new - ll) / abs(ll)
        log.debug("ecm iteration %d: loglik %.6f change %.3g", trace.n_iter, ll_new, change)
        ll = ll_new
        if change < config.rel_tol:
            trace.converged = True
            break
    # the floor only guards the CM steps; report exact posteriors
    r = e_step(model, x)[0]
    return model, r, trace


def loglik(model, data):
    return model.loglik(data)


def bic(model, data):
    return model.bic(data)


def classify(r):
    """Row-wise argmax; ties go to the lowest component index."""
    return np.argmax(np.asarray(r), axis=1)


class VineMixture(BaseEstimator, ClusterMixin):
    """Vine-copula mixture clustering.

    Parameters
    ----------
    n_components : int
        Number of mixture components.
    vine_kind : {"rvine", "cvine"}
    init : {"kmeans", "gmm"}
        Initial partition used for model selection in each component.
    seed : int
        Top-level seed; initialisation seeds are derived from it.
    rel_tol, max_iter :
        Stop when the relative change in log-likelihood drops below
        ``rel_tol`` or after ``max_iter`` ECM iterations.
    margin_families, copula_families : sequence of str, optional
        Candidate families; all are used when omitted.
    n_jobs : int
        Threads for per-component CM steps.

    Attributes
    ----------
    model_ : MixtureModel
    responsibilities_ : ndarray of shape (n_samples, n_components)
    labels_ : ndarray of shape (n_samples,)
    trace_ : FitTrace
    """

    def __init__(self, n_components=2, vine_kind="rvine", init="kmeans", seed=0,
                 rel_tol=1e-5, max_iter=100, margin_families=None, copula_families=None,
                 n_init=20, n_jobs=1):
        self.n_components = n_components
        self.vine_kind = vine_kind
        self.init = init
        self.seed = seed
        self.rel_tol = rel_tol
        self.max_iter = max_iter
        self.margin_families = margin_families
        self.copula_families = copula_families
        self.n_init = n_init
        self.n_jobs = n_jobs

    def _config(self):
        return FitConfig(n_components=self.n_components, init=self.init, seed=self.seed,
                         rel_tol=self.rel_tol, max_iter=self.max_iter,
                         vine_kind=self.vine_kind, margin_families=self.margin_families,
                         copula_families=self.copula_families, n_init=self.n_init,
                         n_jobs=self.n_jobs)

    def fit(self, X, y=None, labels=None):
        X = check_array(X, dtype=float)
        config = self._config()
        self.model_, self.responsibilities_, self.trace_ = fit(X, config, labels=labels)
        self.labels_ = classify(self.responsibilities_)
        self.n_iter_ = self.trace_.n_iter
        self.converged_ = self.trace_.converged
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        return e_step(self.model_, X)[0]

    def predict(self, X):
        return classify(self.predict_proba(X))

    def score_samples(self, X):
        check_is_fitted(self, "model_")
        return self.model_.logpdf(check_array(X, dtype=float))

    def score(self, X, y=None):
        """Mean log-likelihood per sample."""
        return float(np.mean(self.score_samples(X)))

    def bic(self, X):
        check_is_fitted(self, "model_")
        return self.model_.bic(check_array(X, dtype=float))

    def sample(self, n, seed=None):
        check_is_fitted(self, "model_")
        return self.model_.simulate(n, seed)
