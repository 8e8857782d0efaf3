"""Choosing the number of components and scoring variable importance."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import mixture

log = logging.getLogger(__name__)


def default_fit(data, config):
    """Fit a mixture and return ``(model, bic)``."""
    model, _, _ = mixture.fit(data, config)
    return model, model.bic(data)


@dataclass
class KSearchReport:
    evaluated: list = field(default_factory=list)
    trajectory: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    chosen: tuple = None

    def evaluated_ks(self, vine_kind=None, init=None):
        return [k for k, kind, ini, _ in self.evaluated
                if (vine_kind is None or kind == vine_kind) and (init is None or ini == init)]

    def to_dict(self):
        return {"evaluated": [{"K": k, "vine_kind": v, "init": i, "bic": float(b)}
                              for k, v, i, b in self.evaluated],
                "trajectory": self.trajectory,
                "failures": [{"K": k, "vine_kind": v, "init": i, "error": e}
                             for k, v, i, e in self.failures],
                "chosen": None if self.chosen is None else
                {"K": self.chosen[0], "vine_kind": self.chosen[1], "init": self.chosen[2]}}


def _run_jobs(fn, items, n_jobs):
    if n_jobs and n_jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def search_k(data, base_config=None, candidates=(2, 4, 6, 10), vine_kinds=None, inits=None,
             fit_fn=None, max_rounds=5, n_jobs=1):
    """Component-count search by repeated averaging of the two best K.

    Every candidate K is fitted first. The two K values with the smallest BIC
    are averaged; a non-integer average is replaced by its floor and ceiling,
    both fitted. This repeats until the average only yields K values already
    fitted, or for ``max_rounds`` rounds. The search runs separately for each
    (vine kind, init) combination and the overall smallest BIC is returned.

    Parameters
    ----------
    fit_fn : callable, optional
        ``fit_fn(data, config) -> (model, bic)``; defaults to a full ECM fit.
        Useful for injecting precomputed BIC values.

    Returns
    -------
    model : object
        Whatever ``fit_fn`` returned for the chosen configuration.
    report : KSearchReport
    """
    base_config = base_config or mixture.FitConfig()
    fit_fn = fit_fn or default_fit
    vine_kinds = tuple(vine_kinds or (base_config.vine_kind,))
    inits = tuple(inits or (base_config.init,))
    candidates = sorted({int(k) for k in candidates})
    if not candidates:
        raise ValueError("no candidate component numbers")
    report = KSearchReport()
    models = {}

    def run(key):
        k, kind, init = key
        cfg = replace(base_config, n_components=k, vine_kind=kind, init=init)
        try:
            model, bic = fit_fn(data, cfg)
            return key, model, float(bic), None
        except Exception as err:  # recorded and skipped
            log.warning("fit failed for K=%s %s %s: %s", k, kind, init, err)
            return key, None, None, f"{type(err).__name__}: {err}"

    def record(results):
        for key, model, bic, err in results:
            if err is None:
                report.evaluated.append((*key, bic))
                models[key] = model
            else:
                report.failures.append((*key, err))

    for kind in vine_kinds:
        for init in inits:
            record(_run_jobs(run, [(k, kind, init) for k in candidates], n_jobs))
            tried = set(candidates)
            for rnd in range(max_rounds):
                scored = sorted((b, k) for k, v, i, b in report.evaluated
                                if v == kind and i == init)
                if len(scored) < 2:
                    break
                (_, k1), (_, k2) = scored[:2]
                avg = (k1 + k2) / 2
                proposals = sorted({math.floor(avg), math.ceil(avg)})
                new = [k for k in proposals if k not in tried]
                report.trajectory.append({"vine_kind": kind, "init": init, "round": rnd + 1,
                                          "best_pair": [k1, k2], "average": avg,
                                          "fitted": new})
                if not new:
                    break
                tried.update(new)
                record(_run_jobs(run, [(k, kind, init) for k in new], n_jobs))

    if not report.evaluated:
        raise RuntimeError("every candidate fit failed")
    best = min(report.evaluated, key=lambda t: (t[3], t[0]))
    report.chosen = best[:3]
    return models[best[:3]], report


@dataclass
class LOVORow:
    name: str
    bic_lovo: float
    delta_bic: float
    rank: int = None
    error: str = None
    domain: str = None


@dataclass
class LOVOReport:
    full_bic: float
    rows: list

    def ranked(self):
        return sorted((r for r in self.rows if r.error is None), key=lambda r: r.rank)

    def to_rows(self):
        out = []
        for r in self.ranked() + [r for r in self.rows if r.error is not None]:
            out.append({"Domain": r.domain or "", "Indicator": r.name,
                        "BIC(LOVO)": r.bic_lovo, "DeltaBIC": r.delta_bic,
                        "Rank": r.rank, "error": r.error or ""})
        return out

    def to_dict(self):
        return {"full_bic": self.full_bic, "rows": self.to_rows()}


def lovo(data, config=None, names=None, domains=None, full_bic=None, fit_fn=None, n_jobs=1):
    """Leave-one-variable-out importance.

    Each indicator is removed in turn and the mixture is refitted with the same
    configuration and seed. ``delta_bic = BIC(without j) - BIC(full)``; rank 1 is
    the largest change. Failed refits are kept in the report but not ranked.
    """
    config = config or mixture.FitConfig()
    fit_fn = fit_fn or default_fit
    values = getattr(data, "values", data)
    x = np.asarray(values, dtype=float)
    d = x.shape[1]
    if names is None:
        names = list(getattr(data, "names", [f"x{j + 1}" for j in range(d)]))
    if domains is None:
        domains = list(getattr(data, "domain_tag", [None] * d))
    if d < 2:
        raise ValueError("need at least two variables")
    if full_bic is None:
        _, full_bic = fit_fn(x, config)

    def run(j):
        keep = [p for p in range(d) if p != j]
        try:
            _, b = fit_fn(x[:, keep], config)
            return float(b), None
        except Exception as err:
            log.warning("LOVO refit without %s failed: %s", names[j], err)
            return float("nan"), f"{type(err).__name__}: {err}"

    results = _run_jobs(run, list(range(d)), n_jobs)
    rows = [LOVORow(names[j], b, b - full_bic if err is None else float("nan"), None, err,
                    domains[j]) for j, (b, err) in enumerate(results)]
    ok = [r for r in rows if r.error is None]
    for rank, r in enumerate(sorted(ok, key=lambda r: -r.delta_bic), start=1):
        r.rank = rank
    return LOVOReport(float(full_bic), rows)
