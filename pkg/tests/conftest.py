import numpy as np
import pytest
from scipy import special


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def normal_score_grid(n=300, half_width=8.0):
    """Gauss-Legendre nodes on normal scores: integrates g(u, v) over (0, 1)^2
    as a smooth integral over R^2, which tolerates corner singularities."""
    z, w = np.polynomial.legendre.leggauss(n)
    z, w = z * half_width, w * half_width
    phi = np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
    zz1, zz2 = np.meshgrid(z, z, indexing="ij")
    weight = np.outer(w * phi, w * phi)
    return special.ndtr(zz1), special.ndtr(zz2), weight


def kendall_tau_se(u, v, n_sub=2000, seed=0):
    """Monte-Carlo standard error of the empirical tau from its U-statistic
    projection, estimated by direct concordance counts for a row subsample."""
    r = np.random.default_rng(seed)
    idx = r.choice(u.size, size=min(n_sub, u.size), replace=False)
    h = np.empty(idx.size)
    for k, i in enumerate(idx):
        h[k] = np.mean(np.sign(u[i] - u) * np.sign(v[i] - v))
    return 2.0 * h.std(ddof=1) / np.sqrt(u.size)


def planted_table(n=400, seed=7):
    """A 32-indicator table with known screening violations and missing rows.

    Returns ``(dataset, expected)`` where ``expected`` lists the columns each
    rule must drop and the rows that must be removed for missing values.
    """
    from vinemix.dataio import Dataset

    r = np.random.default_rng(seed)
    cols, pairs = {}, {}
    for j in range(20):
        cols[f"clean{j:02d}"] = r.gamma(3.0, 1.0, n) if j % 2 else r.normal(10, 2, n)
    # on the boundary of both fraction rules: kept
    edge = r.normal(5, 1, n)
    edge[:n // 10] = 0.0
    cols["clean00"] = edge
    cols["clean01"] = np.repeat(np.arange(1.0, n // 10 + 1), 10)
    for j in range(4):
        rate = r.beta(2, 8, n)
        cols[f"rate{j}"] = rate
        if j < 3:
            cols[f"count{j}"] = np.round(1000 * rate + r.normal(0, 2, n))
        else:
            cols[f"count{j}"] = r.poisson(100, n) + r.normal(0, 1, n)
        pairs[f"count{j}"] = f"rate{j}"
    cols["discrete0"] = r.integers(1, 6, n).astype(float)
    cols["discrete1"] = np.round(r.normal(0, 1, n)) + 10
    for j in range(2):
        z = r.gamma(2.0, 1.0, n)
        z[r.uniform(size=n) < 0.3] = 0.0
        cols[f"zeros{j}"] = z
    names = list(cols)
    x = np.column_stack([cols[c] for c in names])
    missing_rows = [5, 17, 123, 300]
    for i, c in zip(missing_rows, ["clean03", "rate1", "clean10", "clean19"]):
        x[i, names.index(c)] = np.nan
    # a gap in a column that is screened out does not cost the row
    x[200, names.index("count0")] = np.nan
    ds = Dataset([f"Z{i:04d}" for i in range(n)], names, x, pair_with=pairs)
    expected = {"correlation": ["count0", "count1", "count2"],
                "discrete": ["discrete0", "discrete1"],
                "zeros": ["zeros0", "zeros1"],
                "rows": missing_rows}
    return ds, expected


# -- acceptance reporting ----------------------------------------------------------
# tests marked ``criterion(number, text)`` are tallied and reported as one
# pass/fail line per criterion at the end of the run

_CRITERIA = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, text = mark.args
    entry = _CRITERIA.setdefault(number, {"text": text, "outcomes": []})
    if call.excinfo is not None:
        skipped = call.excinfo.errisinstance(pytest.skip.Exception)
        entry["outcomes"].append("skipped" if skipped else "failed")
    elif call.when == "call":
        entry["outcomes"].append("passed")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        outs = entry["outcomes"]
        if "failed" in outs:
            status = "FAIL"
        elif outs and all(o == "skipped" for o in outs):
            status = "SKIP"
        elif outs:
            status = "PASS"
        else:
            status = "NOT RUN"
        terminalreporter.write_line(f"criterion {number:2d} {status}: {entry['text']}")
