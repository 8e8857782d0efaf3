"""Command-line workflows.

Every subcommand writes its outputs plus ``manifest.json`` into ``--out``.
Settings come from built-in defaults, then ``--config`` (YAML or JSON), then
command-line flags, with later sources winning.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__, dataio, mixture, ranking, selection, simdindex, synthetic
from ._utils import derive_seed
from .marginals import MarginalFitError
from .paircop import CopulaFitError

log = logging.getLogger("vinemix")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "seed": 0,
    "threads": os.cpu_count() or 1,
    "out": "out",
    "k": [2],
    "vine": ["rvine"],
    "init": ["kmeans"],
    "rel_tol": 1e-5,
    "max_iter": 100,
    "corr_threshold": 0.9,
    "min_unique_frac": 0.10,
    "max_zero_frac": 0.10,
    "margin_families": None,
    "copula_families": None,
    "standardize": False,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _str_list(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _as_list(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return list(value)
    return _str_list(value) if isinstance(value, str) else [value]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON settings file; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--input", help="CSV table of zones by indicators")
    model.add_argument("--schema", help="column schema (YAML)")
    model.add_argument("--k", type=_int_list, help="component numbers, e.g. 2,4,6,10")
    model.add_argument("--vine", type=_str_list, help="rvine, cvine or both")
    model.add_argument("--init", type=_str_list, help="kmeans, gmm or both")
    model.add_argument("--rel-tol", type=float)
    model.add_argument("--max-iter", type=int)
    model.add_argument("--standardize", action="store_true", default=None,
                       help="standardise indicator columns before fitting")

    p = _Parser(prog="vinemix", description="Vine-copula mixture clustering toolkit.")
    p.add_argument("--version", action="version", version=f"vinemix {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("preprocess", parents=[common], help="screen indicators, drop missing rows")
    s.add_argument("--input")
    s.add_argument("--schema")
    s.add_argument("--corr-threshold", type=float)
    s.add_argument("--min-unique-frac", type=float)
    s.add_argument("--max-zero-frac", type=float)

    sub.add_parser("fit", parents=[common, model], help="fit one vine mixture")

    s = sub.add_parser("select-k", parents=[common, model], help="component-count search")
    s.add_argument("--bic-table", help=argparse.SUPPRESS)

    sub.add_parser("lovo", parents=[common, model], help="leave-one-variable-out importance")

    s = sub.add_parser("rank", parents=[common], help="cluster-driven deprivation ranking")
    s.add_argument("--input")
    s.add_argument("--schema")
    s.add_argument("--model", help="model.json written by fit")
    s.add_argument("--responsibilities", help="responsibilities.csv written by fit")
    s.add_argument("--reference", help="CSV with zone_id,rank to compare against")

    s = sub.add_parser("simulate", parents=[common], help="simulate from a fitted model")
    s.add_argument("--model", help="model.json; omit to use the built-in example")
    s.add_argument("--n", type=_int_list, help="total rows, or one count per component")

    s = sub.add_parser("simd-score", parents=[common], help="domain scores from ranks/counts")
    s.add_argument("--input")
    s.add_argument("--weights", help="domain definition document (YAML)")

    s = sub.add_parser("export-plot-data", parents=[common], help="tidy tables for figures")
    s.add_argument("--input")
    s.add_argument("--schema")
    s.add_argument("--model")
    s.add_argument("--k-search", help="k_search.json written by select-k")
    s.add_argument("--ranking", help="ranking.csv written by rank")
    s.add_argument("--reference", help="CSV with zone_id,rank")
    return p


def resolve(args):
    """Merge defaults, the config file and explicit flags."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh) or {}
        except OSError as err:
            raise dataio.DataError(f"cannot read config: {err}") from err
        if not isinstance(loaded, dict):
            raise UsageError("config file must contain a mapping")
        cfg.update({k.replace("-", "_"): v for k, v in loaded.items()})
    for key, val in vars(args).items():
        if key in ("config", "command", "verbose") or val is None:
            continue
        cfg[key] = val
    for key in ("k", "vine", "init"):
        cfg[key] = _as_list(cfg.get(key))
    cfg["k"] = [int(k) for k in cfg["k"]]
    return cfg


# -- output helpers ----------------------------------------------------------------

def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def _write_csv(path, rows, columns=None):
    rows = list(rows)
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _manifest(out, command, cfg, outputs):
    _write_json(out / "manifest.json", {
        "tool": "vinemix", "version": __version__, "command": command,
        "config": cfg, "outputs": sorted(outputs),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    })


def _need(cfg, *keys):
    missing = [k for k in keys if not cfg.get(k)]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k for k in missing))


def _load(cfg, complete=True):
    ds = dataio.load_table(cfg["input"], cfg.get("schema"))
    if complete and ds.missing.any():
        raise dataio.DataError("input has missing values; run `vinemix preprocess` first")
    if cfg.get("standardize"):
        ds, _ = dataio.standardize_columns(ds)
    return ds


def _fit_config(cfg, k=None, vine=None, init=None):
    return mixture.FitConfig(
        n_components=int(k if k is not None else cfg["k"][0]),
        init=init or cfg["init"][0], vine_kind=vine or cfg["vine"][0],
        seed=derive_seed(cfg["seed"], "fit"), rel_tol=float(cfg["rel_tol"]),
        max_iter=int(cfg["max_iter"]), margin_families=cfg.get("margin_families"),
        copula_families=cfg.get("copula_families"), n_jobs=int(cfg["threads"]))


def _responsibility_rows(ds, r):
    labels = mixture.classify(r)
    rows = []
    for z, ri, lab in zip(ds.zone_ids, r, labels):
        row = {"zone_id": z}
        row.update({f"r_{k + 1}": float(v) for k, v in enumerate(ri)})
        row["label"] = int(lab) + 1
        rows.append(row)
    return rows


# -- commands ----------------------------------------------------------------------

def cmd_preprocess(cfg, out):
    _need(cfg, "input")
    ds = dataio.load_table(cfg["input"], cfg.get("schema"))
    clean, report = dataio.preprocess(ds, corr_threshold=float(cfg["corr_threshold"]),
                                      min_unique_frac=float(cfg["min_unique_frac"]),
                                      max_zero_frac=float(cfg["max_zero_frac"]))
    dataio.write_table(out / "cleaned.csv", clean)
    with open(out / "schema.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(dataio.schema_for(clean), fh, sort_keys=False)
    _write_json(out / "preprocess_report.json", report.to_dict())
    print(f"kept {clean.d} of {ds.d} indicators and {clean.n} of {ds.n} rows")
    return ["cleaned.csv", "schema.yaml", "preprocess_report.json"]


def cmd_fit(cfg, out):
    _need(cfg, "input")
    ds = _load(cfg)
    config = _fit_config(cfg)
    model, r, trace = mixture.fit(ds.values, config)
    doc = model.to_dict()
    doc.update({"names": list(ds.names), "config": config.to_dict(), "trace": trace.to_dict(),
                "loglik": model.loglik(ds.values), "bic": model.bic(ds.values)})
    _write_json(out / "model.json", doc)
    _write_csv(out / "responsibilities.csv", _responsibility_rows(ds, r))
    _write_csv(out / "trace.csv", [{"iteration": i, "loglik": v}
                                   for i, v in enumerate(trace.loglik)])
    print(f"K={model.n_components} loglik={doc['loglik']:.4f} bic={doc['bic']:.4f} "
          f"iterations={trace.n_iter} converged={trace.converged}")
    return ["model.json", "responsibilities.csv", "trace.csv"]


def _stub_fit(table):
    lookup = {}
    for key, val in table.items():
        parts = str(key).split(",")
        lookup[tuple(parts) if len(parts) > 1 else (parts[0],)] = float(val)

    def fit_fn(data, config):
        key = (str(config.n_components), config.vine_kind, config.init)
        if key in lookup:
            return None, lookup[key]
        if key[:1] in lookup:
            return None, lookup[key[:1]]
        raise KeyError(f"no stubbed BIC for K={config.n_components}")
    return fit_fn


def cmd_select_k(cfg, out):
    fit_fn = None
    if cfg.get("bic_table"):
        with open(cfg["bic_table"], encoding="utf-8") as fh:
            fit_fn = _stub_fit(yaml.safe_load(fh))
        data = None
    else:
        _need(cfg, "input")
        data = _load(cfg).values
    base = _fit_config(cfg)
    model, report = selection.search_k(data, base, candidates=cfg["k"], vine_kinds=cfg["vine"],
                                       inits=cfg["init"], fit_fn=fit_fn,
                                       n_jobs=int(cfg["threads"]))
    _write_json(out / "k_search.json", report.to_dict())
    rows = [{"K": k, "vine_kind": v, "init": i, "bic": b} for k, v, i, b in report.evaluated]
    _write_csv(out / "k_search.csv", rows, ["K", "vine_kind", "init", "bic"])
    outputs = ["k_search.json", "k_search.csv"]
    if model is not None:
        _write_json(out / "model.json", model.to_dict())
        outputs.append("model.json")
    k, v, i = report.chosen
    print(f"chosen K={k} vine={v} init={i}; evaluated K={[e[0] for e in report.evaluated]}")
    return outputs


def cmd_lovo(cfg, out):
    _need(cfg, "input")
    ds = _load(cfg)
    report = selection.lovo(ds, _fit_config(cfg), n_jobs=int(cfg["threads"]))
    rows = report.to_rows()
    _write_csv(out / "lovo.csv", rows, ["Domain", "Indicator", "BIC(LOVO)", "DeltaBIC", "Rank",
                                        "error"])
    _write_json(out / "lovo.json", report.to_dict())
    print(f"full model BIC {report.full_bic:.2f}")
    print(f"{'Domain':<12}{'Indicator':<22}{'BIC(LOVO)':>14}{'DeltaBIC':>12}{'Rank':>6}")
    for r in rows:
        if r["error"]:
            print(f"{r['Domain']:<12}{r['Indicator']:<22}{'failed':>14}")
        else:
            print(f"{r['Domain']:<12}{r['Indicator']:<22}{r['BIC(LOVO)']:>14.2f}"
                  f"{r['DeltaBIC']:>12.2f}{r['Rank']:>6}")
    return ["lovo.csv", "lovo.json"]


def _posteriors(cfg, ds):
    if cfg.get("responsibilities"):
        rows = _read_csv(cfg["responsibilities"])
        cols = sorted((c for c in rows[0] if c.startswith("r_")), key=lambda c: int(c[2:]))
        by_id = {row["zone_id"]: [float(row[c]) for c in cols] for row in rows}
        try:
            return np.array([by_id[z] for z in ds.zone_ids])
        except KeyError as err:
            raise dataio.DataError(f"zone {err} missing from responsibilities") from None
    if cfg.get("model"):
        with open(cfg["model"], encoding="utf-8") as fh:
            model = mixture.MixtureModel.from_dict(json.load(fh))
        return mixture.e_step(model, ds.values)[0]
    raise UsageError("rank needs --model or --responsibilities")


def _reference_ranks(path):
    rows = _read_csv(path)
    return [r["zone_id"] for r in rows], [float(r["rank"]) for r in rows]


def cmd_rank(cfg, out):
    _need(cfg, "input")
    ds = _load(cfg)
    r = _posteriors(cfg, ds)
    scaled = ranking.oriented_scale(ds.values, ds.orientation)
    dep = ranking.identify_deprived_cluster(r, scaled)
    result = ranking.rank_zones(r, dep.k_star, ds.zone_ids)
    _write_csv(out / "ranking.csv", result.to_rows(), ["zone_id", "posterior", "rank"])
    _write_json(out / "deprived_cluster.json", {"scores": dep.scores.tolist(),
                                                "k_star": dep.k_star + 1})
    outputs = ["ranking.csv", "deprived_cluster.json"]
    if cfg.get("reference"):
        ids, ref = _reference_ranks(cfg["reference"])
        cmp = ranking.compare_rankings(result.rank, ref, ds.zone_ids, ids)
        _write_csv(out / "rank_comparison.csv", cmp.table, ["zone_id", "rank_a", "rank_b"])
        _write_json(out / "rank_agreement.json", {"spearman": cmp.spearman,
                                                  "kendall": cmp.kendall})
        outputs += ["rank_comparison.csv", "rank_agreement.json"]
    print(f"most deprived cluster: {dep.k_star + 1}; ranked {len(result.rank)} zones")
    return outputs


def cmd_simulate(cfg, out):
    names = None
    if cfg.get("model"):
        with open(cfg["model"], encoding="utf-8") as fh:
            doc = json.load(fh)
        model = mixture.MixtureModel.from_dict(doc)
        names = doc.get("names")
    else:
        model = synthetic.example_model()
        names = list(synthetic.EXAMPLE_NAMES)
    n = cfg.get("n") or list(synthetic.EXAMPLE_SIZES)
    seed = derive_seed(cfg["seed"], "simulate")
    if len(n) == 1:
        x, labels = model.simulate(int(n[0]), seed)
    elif len(n) == model.n_components:
        parts, labels = [], []
        for k, (comp, nk) in enumerate(zip(model.components, n)):
            parts.append(comp.simulate(int(nk), derive_seed(seed, f"component:{k}")))
            labels.append(np.full(int(nk), k))
        x, labels = np.vstack(parts), np.concatenate(labels)
    else:
        raise UsageError("--n takes a total or one count per component")
    names = names or [f"x{j + 1}" for j in range(x.shape[1])]
    rows = [{"zone_id": f"Z{i + 1}", **{nm: float(v) for nm, v in zip(names, xi)},
             "component": int(lab) + 1} for i, (xi, lab) in enumerate(zip(x, labels))]
    _write_csv(out / "simulated.csv", rows, ["zone_id", *names, "component"])
    schema = {"columns": {"zone_id": {"role": "zone_id"},
                          **{nm: {"role": "indicator",
                                  "orientation": ranking.HIGHER_IS_DEPRIVED} for nm in names},
                          "component": {"role": "label"}}}
    with open(out / "simulated_schema.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(schema, fh, sort_keys=False)
    print(f"simulated {x.shape[0]} rows")
    return ["simulated.csv", "simulated_schema.yaml"]


def cmd_simd_score(cfg, out):
    _need(cfg, "input", "weights")
    rows = _read_csv(cfg["input"])
    with open(cfg["weights"], encoding="utf-8") as fh:
        spec = yaml.safe_load(fh) or {}
    axis = spec.get("axis", "within-indicator")
    ids = [r["zone_id"] for r in rows]
    results = []
    for domain, dspec in (spec.get("domains") or {}).items():
        kind = dspec.get("type", "weighted_z")
        try:
            if kind == "rate":
                scores = np.array([simdindex.rate_score([float(r[c]) for c in dspec["counts"]],
                                                        float(r[dspec["population"]]))
                                   for r in rows])
            elif kind == "weighted_z":
                cols = list(dspec["indicators"])
                w = [float(dspec["indicators"][c]) for c in cols]
                ranks = np.array([[float(r[c]) for c in cols] for r in rows])
                scores = np.atleast_1d(simdindex.weighted_domain_score(ranks, w, axis=axis))
            else:
                raise dataio.DataError(f"unknown domain type {kind!r}")
        except KeyError as err:
            raise dataio.DataError(f"column {err} missing for domain {domain}") from None
        ranks_out = simdindex.domain_rank(scores)
        results += [{"zone_id": z, "domain": domain, "score": float(s), "rank": int(k)}
                    for z, s, k in zip(ids, scores, ranks_out)]
    _write_csv(out / "domain_scores.csv", results, ["zone_id", "domain", "score", "rank"])
    cfg["domain_weights"] = spec.get("domain_weights", simdindex.DOMAIN_WEIGHTS)
    print(f"scored {len(ids)} zones in {len(spec.get('domains') or {})} domains")
    return ["domain_scores.csv"]


def cmd_export_plot_data(cfg, out):
    outputs = []
    ds = _load(cfg) if cfg.get("input") else None
    if ds is not None and cfg.get("model"):
        with open(cfg["model"], encoding="utf-8") as fh:
            model = mixture.MixtureModel.from_dict(json.load(fh))
        r = mixture.e_step(model, ds.values)[0]
        labels = mixture.classify(r) + 1
        hist = [{"zone_id": z, "indicator": nm, "value": float(v), "cluster": int(c)}
                for z, row, c in zip(ds.zone_ids, ds.values, labels)
                for nm, v in zip(ds.names, row)]
        _write_csv(out / "histogram_data.csv", hist)
        scaled, _ = dataio.standardize_columns(ds)
        box = [{"zone_id": z, "indicator": nm, "scaled_value": float(v), "cluster": int(c)}
               for z, row, c in zip(ds.zone_ids, scaled.values, labels)
               for nm, v in zip(ds.names, row)]
        _write_csv(out / "boxplot_data.csv", box)
        outputs += ["histogram_data.csv", "boxplot_data.csv"]
    if cfg.get("k_search"):
        with open(cfg["k_search"], encoding="utf-8") as fh:
            ks = json.load(fh)
        _write_csv(out / "bic_comparison.csv", ks["evaluated"], ["K", "vine_kind", "init", "bic"])
        outputs.append("bic_comparison.csv")
    if cfg.get("ranking"):
        rank_rows = _read_csv(cfg["ranking"])
        curve = sorted(({"rank": int(r["rank"]), "posterior": float(r["posterior"]),
                         "zone_id": r["zone_id"]} for r in rank_rows),
                       key=lambda r: (r["rank"], r["zone_id"]))
        _write_csv(out / "posterior_rank.csv", curve, ["zone_id", "rank", "posterior"])
        outputs.append("posterior_rank.csv")
        if cfg.get("reference"):
            ids, ref = _reference_ranks(cfg["reference"])
            cmp = ranking.compare_rankings([float(r["rank"]) for r in rank_rows], ref,
                                           [r["zone_id"] for r in rank_rows], ids)
            _write_csv(out / "rank_scatter.csv", cmp.table, ["zone_id", "rank_a", "rank_b"])
            outputs.append("rank_scatter.csv")
    if not outputs:
        raise UsageError("nothing to export; give --input with --model, --k-search or --ranking")
    print("wrote " + ", ".join(outputs))
    return outputs


COMMANDS = {
    "preprocess": cmd_preprocess, "fit": cmd_fit, "select-k": cmd_select_k, "lovo": cmd_lovo,
    "rank": cmd_rank, "simulate": cmd_simulate, "simd-score": cmd_simd_score,
    "export-plot-data": cmd_export_plot_data,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        outputs = COMMANDS[args.command](cfg, out)
        _manifest(out, args.command, cfg, outputs)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (mixture.FitError, MarginalFitError, CopulaFitError, ArithmeticError,
            np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (dataio.DataError, OSError, ValueError, KeyError, yaml.YAMLError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
