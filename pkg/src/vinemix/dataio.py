"""Reading indicator tables, screening indicators and scaling columns."""

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .ranking import ORIENTATIONS, HIGHER_IS_DEPRIVED

DEFAULT_MISSING = ("", "*", "NA", "NaN")


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass(frozen=True)
class Dataset:
    """Zones by indicators, with per-indicator metadata.

    Missing cells are stored as NaN until :func:`drop_missing_rows` is applied.
    ``pair_with`` maps a count indicator to the rate indicator it duplicates.
    """

    zone_ids: tuple
    names: tuple
    values: np.ndarray
    orientation: tuple = None
    domain_tag: tuple = None
    pair_with: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError("values must be a 2-d matrix")
        n, d = values.shape
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "zone_ids", tuple(str(z) for z in self.zone_ids))
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.zone_ids) != n or len(self.names) != d:
            raise DataError("zone_ids/names do not match the value matrix")
        if len(set(self.names)) != d:
            raise DataError("indicator names must be unique")
        if len(set(self.zone_ids)) != n:
            raise DataError("duplicate zone id")
        for attr in ("orientation", "domain_tag"):
            val = getattr(self, attr)
            val = (None,) * d if val is None else tuple(val)
            if len(val) != d:
                raise DataError(f"{attr} must have one entry per indicator")
            object.__setattr__(self, attr, val)
        for o in self.orientation:
            if o is not None and o not in ORIENTATIONS:
                raise DataError(f"unknown orientation {o!r}")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]

    @property
    def missing(self):
        return np.isnan(self.values)

    def select(self, columns=None, rows=None):
        """Subset by column names (or indices) and a row mask or index array."""
        cols = range(self.d) if columns is None else [
            self.names.index(c) if isinstance(c, str) else int(c) for c in columns]
        cols = list(cols)
        rows = np.arange(self.n) if rows is None else np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        names = [self.names[j] for j in cols]
        pairs = {k: v for k, v in self.pair_with.items() if k in names and v in names}
        return Dataset([self.zone_ids[i] for i in rows], names, self.values[np.ix_(rows, cols)],
                       [self.orientation[j] for j in cols], [self.domain_tag[j] for j in cols],
                       pairs)


@dataclass
class PreprocessReport:
    dropped_high_correlation: list = field(default_factory=list)
    dropped_discrete: list = field(default_factory=list)
    dropped_zero_inflated: list = field(default_factory=list)
    rows_removed_missing: int = 0
    n_before: int = 0
    n_after: int = 0
    d_before: int = 0
    d_after: int = 0

    def dropped(self):
        return ([c[1] for c in self.dropped_high_correlation]
                + [c[0] for c in self.dropped_discrete]
                + [c[0] for c in self.dropped_zero_inflated])

    def to_dict(self):
        return {
            "dropped_high_correlation": [{"kept": k, "dropped": d, "correlation": float(c)}
                                         for k, d, c in self.dropped_high_correlation],
            "dropped_discrete": [{"name": n, "unique_fraction": float(f)}
                                 for n, f in self.dropped_discrete],
            "dropped_zero_inflated": [{"name": n, "zero_fraction": float(f)}
                                      for n, f in self.dropped_zero_inflated],
            "rows_removed_missing": self.rows_removed_missing,
            "n_before": self.n_before, "n_after": self.n_after,
            "d_before": self.d_before, "d_after": self.d_after,
        }


def load_schema(path):
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise DataError("schema must be a mapping")
    return doc


def load_table(path, schema=None, missing=None):
    """Read a CSV table of zones by indicators.

    Parameters
    ----------
    path : str or Path
        Comma-separated file with a header row.
    schema : dict or path, optional
        ``{"columns": {name: {"role": "indicator" | "zone_id" | ...,
        "domain": str, "orientation": str, "pair_with": str}}, "missing": [...]}``.
        Columns with any other role (population, labels) are not read.
        Without a schema the column named ``zone_id`` (or else the first
        column) holds zone ids and every other column is an indicator.
    missing : sequence of str, optional
        Cell values read as missing; defaults to the schema's list or
        ``("", "*", "NA", "NaN")``.
    """
    if schema is not None and not isinstance(schema, dict):
        schema = load_schema(schema)
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [row for row in reader if row]
    except (OSError, StopIteration, UnicodeDecodeError) as err:
        raise DataError(f"cannot read {path}: {err}") from err
    header = [h.strip() for h in header]
    if missing is None:
        missing = (schema or {}).get("missing", DEFAULT_MISSING)
    missing = {str(m).strip() for m in missing}

    if schema is not None:
        spec = schema.get("columns", {})
        absent = [c for c in spec if c not in header]
        if absent:
            raise DataError(f"columns missing from {path.name}: {absent}")
        # column order follows the file, not the schema
        id_cols = [c for c in header if c in spec and (spec[c] or {}).get("role") == "zone_id"]
        ind_cols = [c for c in header
                    if c in spec and (spec[c] or {}).get("role", "indicator") == "indicator"]
    else:
        spec = {}
        id_cols = ["zone_id"] if "zone_id" in header else header[:1]
        ind_cols = [c for c in header if c not in id_cols]
    if len(id_cols) > 1:
        raise DataError("schema declares more than one zone_id column")

    idx = {c: header.index(c) for c in header}
    values = np.empty((len(rows), len(ind_cols)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"row {i + 2} has {len(row)} cells, expected {len(header)}")
        for j, c in enumerate(ind_cols):
            cell = row[idx[c]].strip()
            if cell in missing:
                values[i, j] = np.nan
                continue
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DataError(f"non-numeric cell {cell!r} in column {c}, row {i + 2}") from None
    if id_cols:
        zone_ids = [row[idx[id_cols[0]]].strip() for row in rows]
    else:
        zone_ids = [str(i + 1) for i in range(len(rows))]
    if len(set(zone_ids)) != len(zone_ids):
        raise DataError("duplicate zone id")
    orientation = [(spec.get(c) or {}).get("orientation") for c in ind_cols]
    domains = [(spec.get(c) or {}).get("domain") for c in ind_cols]
    pairs = {c: (spec.get(c) or {})["pair_with"] for c in ind_cols
             if (spec.get(c) or {}).get("pair_with")}
    return Dataset(zone_ids, ind_cols, values, orientation, domains, pairs)


def write_table(path, ds):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["zone_id", *ds.names])
        for z, row in zip(ds.zone_ids, ds.values):
            w.writerow([z, *("" if np.isnan(v) else repr(float(v)) for v in row)])


def schema_for(ds):
    """Schema document describing a dataset's metadata."""
    cols = {"zone_id": {"role": "zone_id"}}
    for j, name in enumerate(ds.names):
        entry = {"role": "indicator"}
        if ds.orientation[j]:
            entry["orientation"] = ds.orientation[j]
        if ds.domain_tag[j]:
            entry["domain"] = ds.domain_tag[j]
        if name in ds.pair_with:
            entry["pair_with"] = ds.pair_with[name]
        cols[name] = entry
    return {"columns": cols}


def _pearson(a, b):
    ok = ~(np.isnan(a) | np.isnan(b))
    a, b = a[ok], b[ok]
    if a.size < 2 or a.std() == 0 or b.std() == 0:
        return np.nan
    return float(np.corrcoef(a, b)[0, 1])


def screen_indicators(ds, corr_threshold=0.9, min_unique_frac=0.10, max_zero_frac=0.10):
    """Drop duplicated count indicators, near-discrete and zero-inflated columns.

    A count column declared in ``ds.pair_with`` is dropped when its Pearson
    correlation with the paired rate column reaches ``corr_threshold``. Any
    remaining column is dropped when its number of distinct values divided by
    the row count is below ``min_unique_frac``, or when its share of zeros
    exceeds ``max_zero_frac``. Fractions use all rows, before missing rows are
    removed; missing cells do not count as values.
    """
    if not 0 < corr_threshold <= 1:
        raise ValueError("corr_threshold must lie in (0, 1]")
    for f in (min_unique_frac, max_zero_frac):
        if not 0 <= f <= 1:
            raise ValueError("fractions must lie in [0, 1]")
    report = PreprocessReport(n_before=ds.n, d_before=ds.d)
    dropped = set()
    col = {name: ds.values[:, j] for j, name in enumerate(ds.names)}
    for count in sorted(ds.pair_with):
        rate = ds.pair_with[count]
        if count not in col or rate not in col:
            continue
        r = _pearson(col[rate], col[count])
        if np.isfinite(r) and r >= corr_threshold:
            report.dropped_high_correlation.append((rate, count, r))
            dropped.add(count)
    n = max(ds.n, 1)
    for name in ds.names:
        if name in dropped:
            continue
        v = col[name]
        v = v[~np.isnan(v)]
        uniq = np.unique(v).size / n
        zeros = np.count_nonzero(v == 0) / n
        if uniq < min_unique_frac:
            report.dropped_discrete.append((name, uniq))
            dropped.add(name)
        elif zeros > max_zero_frac:
            report.dropped_zero_inflated.append((name, zeros))
            dropped.add(name)
    keep = [name for name in ds.names if name not in dropped]
    out = ds.select(keep)
    report.n_after, report.d_after = out.n, out.d
    return out, report


def drop_missing_rows(ds):
    """Remove rows with any missing entry; returns ``(dataset, n_removed)``."""
    bad = np.isnan(ds.values).any(axis=1)
    if bad.all() and ds.n > 0:
        raise DataError("empty dataset")
    if not bad.any():
        return ds, 0
    return ds.select(rows=~bad), int(bad.sum())


def standardize_columns(ds):
    """Centre each column and divide by its sample standard deviation.

    Returns the scaled dataset and ``{name: (mean, sd)}``.
    """
    x = ds.values
    if np.isnan(x).any():
        raise DataError("standardize_columns requires a dataset without missing values")
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    if np.any(~(sd > 0)):
        bad = [ds.names[j] for j in np.flatnonzero(~(sd > 0))]
        raise DataError(f"zero-variance column(s): {bad}")
    z = (x - mean) / sd
    return replace(ds, values=z), {n: (float(m), float(s)) for n, m, s in zip(ds.names, mean, sd)}


def preprocess(ds, **kwargs):
    """Screening followed by removal of incomplete rows."""
    screened, report = screen_indicators(ds, **kwargs)
    clean, removed = drop_missing_rows(screened)
    report.rows_removed_missing = removed
    report.n_after, report.d_after = clean.n, clean.d
    return clean, report


def default_orientation(names, reversed_names=()):
    """Orientation flags with every column higher-is-deprived except ``reversed_names``."""
    return tuple("lower-is-deprived" if n in reversed_names else HIGHER_IS_DEPRIVED
                 for n in names)
