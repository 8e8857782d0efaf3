"""Parametric univariate margins.

Ten families are available, each with a fixed parameter order:

=================  ==============================  =========
family             parameters                      support
=================  ==============================  =========
normal             mean, sd                        real
lognormal          meanlog, sdlog                  positive
logistic           location, scale                 real
loglogistic        shape, scale                    positive
gamma              shape, rate                     positive
exponential        rate                            positive
cauchy             location, scale                 real
student_t          location, scale, df             real
skew_normal        mean, sd, xi                    real
skew_student_t     mean, sd, df, xi                real
=================  ==============================  =========

The two skewed families use the Fernandez-Steel construction on a
unit-variance base density, re-standardised so that the first two
parameters are the mean and the standard deviation of the distribution.
``xi = 1`` gives the symmetric base, ``xi > 1`` skews to the right.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

SKEW_CONVENTION = "fernandez-steel, mean/sd standardised"

DF_BOUNDS = (2.05, 300.0)
_LOG_2PI = np.log(2.0 * np.pi)
_BIG = 1e100


class MarginalFitError(RuntimeError):
    """Raised when a weighted fit does not converge.

    The best parameters found so far are kept on ``model``.
    """

    def __init__(self, message, model=None):
        super().__init__(message)
        self.model = model


def _wmoments(x, w):
    sw = w.sum()
    m = np.dot(w, x) / sw
    v = np.dot(w, (x - m) ** 2) / sw
    return m, max(v, 1e-300)


def _wquantile(x, w, q):
    order = np.argsort(x)
    xs, ws = x[order], w[order]
    cw = np.cumsum(ws) - 0.5 * ws
    return np.interp(q * ws.sum(), cw, xs)


# -- parameter transforms -----------------------------------------------------

def _to_free(kind, p):
    if kind == "real":
        return p
    if kind == "pos":
        return np.log(p)
    lo, hi = kind
    t = (p - lo) / (hi - lo)
    t = np.clip(t, 1e-12, 1 - 1e-12)
    return np.log(t / (1 - t))


def _from_free(kind, z):
    if kind == "real":
        return z
    if kind == "pos":
        return np.exp(np.clip(z, -700, 700))
    lo, hi = kind
    return lo + (hi - lo) * special.expit(z)


class _Family:
    name = ""
    param_names = ()
    kinds = ()
    support = "real"

    @property
    def n_params(self):
        return len(self.param_names)

    def in_support(self, x):
        if self.support == "positive":
            return x > 0
        return np.isfinite(x)

    def valid(self, p):
        if len(p) != self.n_params or not np.all(np.isfinite(p)):
            return False
        for kind, v in zip(self.kinds, p):
            if kind == "pos" and v <= 0:
                return False
            if isinstance(kind, tuple) and not kind[0] <= v <= kind[1]:
                return False
        return True

    def to_free(self, p):
        return np.array([_to_free(k, v) for k, v in zip(self.kinds, p)])

    def from_free(self, z):
        return np.array([_from_free(k, v) for k, v in zip(self.kinds, z)])

    def closed_form(self, x, w):
        return None

    def logpdf(self, x, p):
        x = np.asarray(x, dtype=float)
        ok = self.in_support(x)
        with np.errstate(all="ignore"):
            val = self._logpdf(np.where(ok, x, 1.0), p)
        return np.where(ok, val, -np.inf)

    def cdf(self, x, p):
        x = np.asarray(x, dtype=float)
        if self.support == "positive":
            ok = x > 0
            with np.errstate(all="ignore"):
                val = self._cdf(np.where(ok, x, 1.0), p)
            return np.where(ok, val, 0.0)
        return self._cdf(x, p)


class Normal(_Family):
    name = "normal"
    param_names = ("mean", "sd")
    kinds = ("real", "pos")

    def _logpdf(self, x, p):
        z = (x - p[0]) / p[1]
        return -0.5 * z * z - np.log(p[1]) - 0.5 * _LOG_2PI

    def _cdf(self, x, p):
        return special.ndtr((x - p[0]) / p[1])

    def ppf(self, q, p):
        return p[0] + p[1] * special.ndtri(q)

    def closed_form(self, x, w):
        m, v = _wmoments(x, w)
        return np.array([m, np.sqrt(v)])

    start = closed_form


class LogNormal(_Family):
    name = "lognormal"
    param_names = ("meanlog", "sdlog")
    kinds = ("real", "pos")
    support = "positive"

    def _logpdf(self, x, p):
        lx = np.log(x)
        z = (lx - p[0]) / p[1]
        return -0.5 * z * z - np.log(p[1]) - 0.5 * _LOG_2PI - lx

    def _cdf(self, x, p):
        return special.ndtr((np.log(x) - p[0]) / p[1])

    def ppf(self, q, p):
        return np.exp(p[0] + p[1] * special.ndtri(q))

    def closed_form(self, x, w):
        m, v = _wmoments(np.log(x), w)
        return np.array([m, np.sqrt(v)])

    start = closed_form


class Logistic(_Family):
    name = "logistic"
    param_names = ("location", "scale")
    kinds = ("real", "pos")

    def _logpdf(self, x, p):
        z = (x - p[0]) / p[1]
        return -z - 2.0 * np.logaddexp(0.0, -z) - np.log(p[1])

    def _cdf(self, x, p):
        return special.expit((x - p[0]) / p[1])

    def ppf(self, q, p):
        return p[0] + p[1] * special.logit(q)

    def start(self, x, w):
        m, v = _wmoments(x, w)
        return np.array([m, np.sqrt(3.0 * v) / np.pi])


class LogLogistic(_Family):
    name = "loglogistic"
    param_names = ("shape", "scale")
    kinds = ("pos", "pos")
    support = "positive"

    def _logpdf(self, x, p):
        a, s = p
        lz = np.log(x / s)
        return np.log(a) - np.log(s) + (a - 1.0) * lz - 2.0 * np.logaddexp(0.0, a * lz)

    def _cdf(self, x, p):
        return special.expit(p[0] * np.log(x / p[1]))

    def ppf(self, q, p):
        return p[1] * np.exp(special.logit(q) / p[0])

    def start(self, x, w):
        m, v = _wmoments(np.log(x), w)
        s = np.sqrt(3.0 * v) / np.pi
        return np.array([1.0 / s, np.exp(m)])


class Gamma(_Family):
    name = "gamma"
    param_names = ("shape", "rate")
    kinds = ("pos", "pos")
    support = "positive"

    def _logpdf(self, x, p):
        a, b = p
        return a * np.log(b) - special.gammaln(a) + (a - 1.0) * np.log(x) - b * x

    def _cdf(self, x, p):
        return special.gammainc(p[0], p[1] * x)

    def ppf(self, q, p):
        return special.gammaincinv(p[0], q) / p[1]

    def start(self, x, w):
        m, v = _wmoments(x, w)
        return np.array([m * m / v, m / v])


class Exponential(_Family):
    name = "exponential"
    param_names = ("rate",)
    kinds = ("pos",)
    support = "positive"

    def _logpdf(self, x, p):
        return np.log(p[0]) - p[0] * x

    def _cdf(self, x, p):
        return -np.expm1(-p[0] * x)

    def ppf(self, q, p):
        return -np.log1p(-q) / p[0]

    def closed_form(self, x, w):
        m, _ = _wmoments(x, w)
        return np.array([1.0 / m])

    start = closed_form


class Cauchy(_Family):
    name = "cauchy"
    param_names = ("location", "scale")
    kinds = ("real", "pos")

    def _logpdf(self, x, p):
        z = (x - p[0]) / p[1]
        return -np.log(np.pi * p[1]) - np.log1p(z * z)

    def _cdf(self, x, p):
        return 0.5 + np.arctan((x - p[0]) / p[1]) / np.pi

    def ppf(self, q, p):
        return p[0] + p[1] * np.tan(np.pi * (q - 0.5))

    def start(self, x, w):
        q1, med, q3 = _wquantile(x, w, np.array([0.25, 0.5, 0.75]))
        return np.array([med, max((q3 - q1) / 2.0, 1e-8)])


class StudentT(_Family):
    name = "student_t"
    param_names = ("location", "scale", "df")
    kinds = ("real", "pos", DF_BOUNDS)

    def _logpdf(self, x, p):
        mu, s, nu = p
        z = (x - mu) / s
        return (special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2)
                - 0.5 * np.log(nu * np.pi) - np.log(s)
                - (nu + 1) / 2 * np.log1p(z * z / nu))

    def _cdf(self, x, p):
        return special.stdtr(p[2], (x - p[0]) / p[1])

    def ppf(self, q, p):
        return p[0] + p[1] * special.stdtrit(p[2], q)

    def start(self, x, w):
        m, v = _wmoments(x, w)
        return np.array([m, np.sqrt(v * 3.0 / 5.0), 5.0])


# -- Fernandez-Steel skewing of a unit-variance symmetric base ----------------

def _std_t_scale(nu):
    return np.sqrt(nu / (nu - 2.0))


def _base_logpdf(z, nu):
    if nu is None:
        return -0.5 * z * z - 0.5 * _LOG_2PI
    s = _std_t_scale(nu)
    zs = z * s
    return (special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2)
            - 0.5 * np.log(nu * np.pi) - (nu + 1) / 2 * np.log1p(zs * zs / nu)
            + np.log(s))


def _base_cdf(z, nu):
    if nu is None:
        return special.ndtr(z)
    return special.stdtr(nu, z * _std_t_scale(nu))


def _base_ppf(q, nu):
    if nu is None:
        return special.ndtri(q)
    return special.stdtrit(nu, q) / _std_t_scale(nu)


def _base_abs_mean(nu):
    if nu is None:
        return np.sqrt(2.0 / np.pi)
    return 2.0 * np.sqrt(nu - 2.0) / ((nu - 1.0) * special.beta(0.5, nu / 2.0))


def _skew_consts(xi, nu):
    m1 = _base_abs_mean(nu)
    mu = m1 * (xi - 1.0 / xi)
    sigma = np.sqrt((1.0 - m1 * m1) * (xi * xi + 1.0 / xi ** 2) + 2.0 * m1 * m1 - 1.0)
    return mu, sigma


def _skew_logpdf(x, mean, sd, xi, nu):
    mu, sigma = _skew_consts(xi, nu)
    z = (x - mean) / sd * sigma + mu
    scale = np.where(z >= 0, 1.0 / xi, xi)
    g = 2.0 / (xi + 1.0 / xi)
    return np.log(g) + _base_logpdf(z * scale, nu) + np.log(sigma) - np.log(sd)


def _skew_cdf(x, mean, sd, xi, nu):
    mu, sigma = _skew_consts(xi, nu)
    z = (x - mean) / sd * sigma + mu
    g = 2.0 / (xi + 1.0 / xi)
    lower = g / xi * _base_cdf(np.minimum(z, 0.0) * xi, nu)
    upper = g / (2.0 * xi) + g * xi * (_base_cdf(np.maximum(z, 0.0) / xi, nu) - 0.5)
    return np.where(z < 0, lower, upper)


def _skew_ppf(q, mean, sd, xi, nu):
    mu, sigma = _skew_consts(xi, nu)
    g = 2.0 / (xi + 1.0 / xi)
    q = np.asarray(q, dtype=float)
    q0 = 1.0 / (1.0 + xi * xi)
    with np.errstate(all="ignore"):
        lo = _base_ppf(np.clip(q * xi / g, 0.0, 1.0), nu) / xi
        hi = xi * _base_ppf(np.clip((q - q0) / (g * xi) + 0.5, 0.0, 1.0), nu)
    z = np.where(q < q0, lo, hi)
    return mean + sd * (z - mu) / sigma


class SkewNormal(_Family):
    name = "skew_normal"
    param_names = ("mean", "sd", "xi")
    kinds = ("real", "pos", "pos")

    def _logpdf(self, x, p):
        return _skew_logpdf(x, p[0], p[1], p[2], None)

    def _cdf(self, x, p):
        return _skew_cdf(x, p[0], p[1], p[2], None)

    def ppf(self, q, p):
        return _skew_ppf(q, p[0], p[1], p[2], None)

    def start(self, x, w):
        m, v = _wmoments(x, w)
        return np.array([m, np.sqrt(v), 1.0])


class SkewStudentT(_Family):
    name = "skew_student_t"
    param_names = ("mean", "sd", "df", "xi")
    kinds = ("real", "pos", DF_BOUNDS, "pos")

    def _logpdf(self, x, p):
        return _skew_logpdf(x, p[0], p[1], p[3], p[2])

    def _cdf(self, x, p):
        return _skew_cdf(x, p[0], p[1], p[3], p[2])

    def ppf(self, q, p):
        return _skew_ppf(q, p[0], p[1], p[3], p[2])

    def start(self, x, w):
        m, v = _wmoments(x, w)
        return np.array([m, np.sqrt(v), 5.0, 1.0])


FAMILIES = {f.name: f for f in (
    Normal(), LogNormal(), Logistic(), LogLogistic(), Gamma(), Exponential(),
    Cauchy(), StudentT(), SkewNormal(), SkewStudentT(),
)}
FAMILY_NAMES = tuple(FAMILIES)


def get_family(name):
    try:
        return FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown marginal family {name!r}; "
                         f"expected one of {FAMILY_NAMES}") from None


@dataclass(frozen=True)
class MarginalModel:
    """A univariate family together with its parameter vector."""

    family: str
    params: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        fam = get_family(self.family)
        p = np.asarray(self.params, dtype=float).ravel()
        if not fam.valid(p):
            raise ValueError(f"invalid parameters {p.tolist()} for {self.family} "
                             f"{fam.param_names}")
        object.__setattr__(self, "params", p)

    @property
    def n_params(self):
        return self.params.size

    @property
    def support(self):
        return get_family(self.family).support

    def logpdf(self, x):
        return get_family(self.family).logpdf(x, self.params)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        return get_family(self.family).cdf(x, self.params)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0) | (u >= 1)):
            raise ValueError("quantile levels must lie in the open interval (0, 1)")
        return get_family(self.family).ppf(u, self.params)

    def to_dict(self):
        fam = get_family(self.family)
        out = {"family": self.family, "params": [float(v) for v in self.params]}
        if self.family.startswith("skew"):
            out["convention"] = SKEW_CONVENTION
        out["param_names"] = list(fam.param_names)
        return out

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["family"], np.asarray(doc["params"], dtype=float))

    def __repr__(self):
        ps = ", ".join(f"{v:.4g}" for v in self.params)
        return f"MarginalModel({self.family}({ps}))"


def log_pdf(m, x):
    """Log-density; ``-inf`` outside the support."""
    return m.logpdf(x)


def cdf(m, x):
    return m.cdf(x)


def quantile(m, u):
    return m.ppf(u)


def _prepare(xs, w):
    xs = np.asarray(xs, dtype=float).ravel()
    w = np.ones_like(xs) if w is None else np.asarray(w, dtype=float).ravel()
    if xs.shape != w.shape:
        raise ValueError("xs and w must have the same length")
    if np.any(w < 0) or not np.isfinite(w).all():
        raise ValueError("weights must be finite and nonnegative")
    keep = w > 0
    if not keep.any():
        raise ValueError("weights sum to zero")
    xs, w = xs[keep], w[keep]
    return xs, w * (xs.size / w.sum())


def weighted_loglik(m, xs, w=None):
    xs = np.asarray(xs, dtype=float)
    w = np.ones_like(xs) if w is None else np.asarray(w, dtype=float)
    keep = w > 0
    return float(np.dot(w[keep], m.logpdf(xs[keep])))


def fit_weighted(family, xs, w=None, init=None, maxiter=500, tol=1e-8):
    """Weighted maximum likelihood for one family.

    Maximises ``sum_i w_i log f(x_i; theta)`` with a Nelder-Mead search on an
    unconstrained reparameterisation (log for positive parameters, logit for
    the bounded degrees of freedom). Normal, lognormal and exponential use
    their closed forms.

    Parameters
    ----------
    family : str or MarginalModel
        Family name. A :class:`MarginalModel` is accepted as a warm start.
    xs, w : array_like
        Observations and nonnegative weights; zero-weight points are ignored.
    init : array_like, optional
        Warm-start parameters. The better of ``init`` and the moment-matched
        start is used.

    Raises
    ------
    ValueError
        If a positively weighted observation lies outside the support.
    MarginalFitError
        If the search does not converge; ``err.model`` holds the best fit.
    """
    if isinstance(family, MarginalModel):
        init = family.params if init is None else init
        family = family.family
    fam = get_family(family)
    xs, w = _prepare(xs, w)
    if not np.all(fam.in_support(xs)):
        raise ValueError(f"data outside the support of {family}")

    closed = fam.closed_form(xs, w)
    if closed is not None:
        closed = np.where(np.asarray(fam.kinds) == "pos", np.maximum(closed, 1e-300), closed)
        return MarginalModel(family, closed)

    sw = w.sum()

    def objective(z):
        p = fam.from_free(z)
        val = -np.dot(w, fam._logpdf(xs, p)) / sw
        return val if np.isfinite(val) else _BIG

    with np.errstate(all="ignore"):
        starts = [fam.start(xs, w)]
        if init is not None and fam.valid(np.asarray(init, dtype=float)):
            starts.append(np.asarray(init, dtype=float))
        z0 = min((fam.to_free(s) for s in starts), key=objective)

        best = None
        for _ in range(3):
            res = optimize.minimize(
                objective, z0, method="Nelder-Mead",
                options={"maxiter": maxiter, "xatol": 1e-7,
                         "fatol": tol * max(1.0, abs(objective(z0))),
                         "adaptive": fam.n_params > 2})
            best = res
            if res.status == 0:
                break
            z0 = res.x
    model = MarginalModel(family, fam.from_free(best.x))
    if best.status != 0:
        raise MarginalFitError(f"{family} fit did not converge: {best.message}", model)
    return model


def weighted_bic(m, xs, w=None):
    xs = np.asarray(xs, dtype=float)
    w = np.ones_like(xs) if w is None else np.asarray(w, dtype=float)
    return -2.0 * weighted_loglik(m, xs, w) + m.n_params * np.log(w.sum())


def select_family(xs, w=None, candidates=None, return_scores=False):
    """Fit every candidate family and keep the one with the smallest weighted BIC.

    The weighted BIC is ``-2 sum_i w_i log f(x_i) + p log(sum_i w_i)``. Families
    whose support excludes a positively weighted observation are skipped.
    Ties go to fewer parameters, then to the candidate listed first.
    """
    candidates = FAMILY_NAMES if candidates is None else tuple(candidates)
    if not candidates:
        raise ValueError("no candidate families")
    xs = np.asarray(xs, dtype=float).ravel()
    w = np.ones_like(xs) if w is None else np.asarray(w, dtype=float).ravel()
    active = xs[w > 0]
    scores = {}
    fits = {}
    for rank, name in enumerate(candidates):
        fam = get_family(name)
        if not np.all(fam.in_support(active)):
            continue
        try:
            m = fit_weighted(name, xs, w)
        except MarginalFitError as err:
            m = err.model
        except (ValueError, FloatingPointError):
            continue
        bic = weighted_bic(m, xs, w)
        if np.isfinite(bic):
            scores[name] = bic
            fits[name] = (bic, m.n_params, rank, m)
    if not fits:
        raise ValueError("all candidate marginal fits failed")
    best = min(fits.values(), key=lambda t: t[:3])[3]
    if return_scores:
        return best, scores
    return best
