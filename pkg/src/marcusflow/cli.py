"""
Command-line scenario runner.

    marcusflow run SCENARIO.yaml [--out DIR] [--seed-override N] [--dt-override H]
    marcusflow suite DIR [--out DIR] [--workers N]
    marcusflow list-catalog {fields,foliations,groups,experiments}
    marcusflow emit-schema

A scenario file names one experiment, an explicit non-empty seed list and
optional parameter overrides.  Each scenario writes <out>/<name>/ with
report.json, manifest.json (sha256 of every emitted file) and its tables
and rasters.  Exit status: 0 all checks pass, 1 a check failed or a run
raised, 2 configuration error.
"""

import argparse
import glob
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import yaml

from . import attain as _at
from . import experiments as _ex
from . import fields as _f
from . import io as _io
from .errors import ConfigError, Error

log = logging.getLogger("marcusflow")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

GROUPS = {
    "SO(2)": "planar rotations",
    "SO(3)": "rotations of R^3",
    "SO(2)xSO(2)": "trivial bundle with base and fiber SO(2)",
    "SO(3)/SO(2)": "reductive space S^2; h = span(E3), n = span(E1, E2)",
}

SCENARIO_KEYS = {"name", "experiment", "seeds", "params", "description", "module", "out"}
REQUIRED_KEYS = ("name", "experiment", "seeds")

MODULE_OF = {
    "rotation_decomposition": "lindec", "constituent_sde": "lindec", "no_explosion": "lindec",
    "marcus_order": "marcus", "ivk": "ivk", "truncation": "ivk", "alternate": "flowdec",
    "attain_example1": "attain", "attain_example2": "attain", "trivial_bundle": "bundle",
    "reductive": "bundle",
}


# -- config --------------------------------------------------------------------


def _key_lines(node, prefix=""):
    """Map dotted key paths to 1-based line numbers from a composed YAML tree."""
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}{k.value}"
            lines[path] = k.start_mark.line + 1
            lines.update(_key_lines(v, path + "."))
    return lines


def _type_ok(default, value):
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, (int, float)):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, list):
        return isinstance(value, list)
    if isinstance(default, str):
        return isinstance(value, str)
    return True


def load_scenario(path):
    """Parse and validate a scenario file; ConfigError names field and line."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc}", source=path) from None
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {getattr(exc, 'problem', exc)}",
                          line=None if mark is None else mark.line + 1, source=path) from None
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a mapping", line=1, source=path)
    lines = _key_lines(node)

    def err(msg, key):
        return ConfigError(msg, field=key, line=lines.get(key), source=path)

    for key in data:
        if key not in SCENARIO_KEYS:
            raise err(f"unknown key (allowed: {sorted(SCENARIO_KEYS)})", key)
    for key in REQUIRED_KEYS:
        if key not in data:
            raise ConfigError("missing required key", field=key, source=path)
    if not isinstance(data["name"], str) or not data["name"].strip():
        raise err("name must be a non-empty string", "name")
    if data["experiment"] not in _ex.EXPERIMENTS:
        raise err(f"unknown experiment {data['experiment']!r} (known: {sorted(_ex.EXPERIMENTS)})",
                  "experiment")
    seeds = data["seeds"]
    if not isinstance(seeds, list) or not seeds:
        raise err("seeds must be a non-empty list of integers", "seeds")
    if not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise err("seeds must be integers", "seeds")
    params = data.get("params") or {}
    if not isinstance(params, dict):
        raise err("params must be a mapping", "params")
    defaults = _ex.DEFAULTS[data["experiment"]]
    for key, val in params.items():
        fk = f"params.{key}"
        if key not in defaults:
            raise err(f"unknown parameter for {data['experiment']} (known: {sorted(defaults)})", fk)
        if key == "seed":
            raise err("seeds are given by the top-level seeds list", fk)
        if not _type_ok(defaults[key], val):
            raise err(f"expected {type(defaults[key]).__name__}, got {type(val).__name__}", fk)
    return {"name": data["name"], "experiment": data["experiment"], "seeds": list(seeds),
            "params": params, "description": data.get("description", ""),
            "module": data.get("module", MODULE_OF[data["experiment"]]), "source": path}


# -- reports -------------------------------------------------------------------


def _strip_timing(obj):
    """Copy of a report without wall-clock content (for digests)."""
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            if k == "wall_time":
                continue
            out[k] = _strip_timing(v)
        if out.get("kind") == "timing":
            out.pop("value", None)
            out.pop("passed", None)
        return out
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


def report_digest(report):
    return _io.digest(_strip_timing(report))


def _write_artifacts(arts, outdir):
    files = []
    for name, kind, payload in arts:
        path = os.path.join(outdir, name)
        if kind == "json":
            _io.write_json(path, payload)
        elif kind == "csv":
            header, rows = payload
            _io.write_csv(path, header, np.atleast_2d(rows))
        elif kind == "pgm":
            _io.write_pgm(path, payload)
        else:
            raise ValueError(f"unknown artifact kind {kind!r}")
        files.append(path)
    return files


def run_scenario(sc, out, seed_override=None, dt_override=None):
    """Run every seed of a validated scenario; returns the report dict."""
    outdir = os.path.join(out, sc["name"])
    os.makedirs(outdir, exist_ok=True)
    seeds = [seed_override] if seed_override is not None else sc["seeds"]
    runs, files = [], []
    uses_seed = "seed" in _ex.DEFAULTS[sc["experiment"]]
    for s in (seeds if uses_seed else seeds[:1]):
        params = dict(sc["params"])
        if uses_seed:
            params["seed"] = int(s)
        rep = _ex.run_experiment(sc["experiment"], params, dt_override=dt_override)
        sub = os.path.join(outdir, f"seed_{s}") if uses_seed and len(seeds) > 1 else outdir
        files += _write_artifacts(rep.pop("artifacts"), sub)
        runs.append(rep)
    report = {
        "scenario": {k: sc[k] for k in ("name", "experiment", "module", "seeds", "params",
                                        "description")},
        "overrides": {"seed": seed_override, "dt": dt_override},
        "runs": runs,
        "passed": all(r["passed"] for r in runs),
        "wall_time": sum(r["wall_time"] for r in runs),
    }
    report["digest"] = report_digest(report)
    rpath = _io.write_json(os.path.join(outdir, "report.json"), report)
    manifest = {os.path.relpath(p, outdir): _io.file_digest(p) for p in files + [rpath]}
    _io.write_json(os.path.join(outdir, "manifest.json"), {"files": manifest})
    report["manifest"] = manifest
    return report


def _suite_worker(args):
    path, out, seed_override, dt_override = args
    entry = {"file": os.path.basename(path)}
    try:
        sc = load_scenario(path)
        entry["name"] = sc["name"]
        rep = run_scenario(sc, out, seed_override, dt_override)
        entry.update(passed=rep["passed"], digest=rep["digest"], wall_time=rep["wall_time"],
                     checks=[{"name": c["name"], "passed": c["passed"]}
                             for r in rep["runs"] for c in r["checks"]])
    except ConfigError as exc:
        entry.update(passed=False, error=f"config error: {exc}")
    except Error as exc:
        entry.update(passed=False, error=f"{type(exc).__name__}: {exc}")
    return entry


def run_suite(directory, out, workers=1, seed_override=None, dt_override=None):
    """Run every *.yaml scenario in ``directory``; failures never stop the suite."""
    if not os.path.isdir(directory):
        raise ConfigError(f"suite directory {directory!r} does not exist")
    paths = sorted(glob.glob(os.path.join(directory, "*.yaml")) +
                   glob.glob(os.path.join(directory, "*.yml")))
    jobs = [(p, out, seed_override, dt_override) for p in paths]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_suite_worker, jobs))
    else:
        entries = [_suite_worker(j) for j in jobs]
    summary = {"scenarios": entries, "count": len(entries),
               "passed": all(e["passed"] for e in entries),
               "failed": [e.get("name", e["file"]) for e in entries if not e["passed"]]}
    os.makedirs(out, exist_ok=True)
    _io.write_json(os.path.join(out, "suite_summary.json"), summary)
    return summary


# -- schema and catalogs -------------------------------------------------------


def scenario_schema():
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "marcusflow scenario",
        "type": "object",
        "required": list(REQUIRED_KEYS),
        "additionalProperties": False,
        "properties": {
            "name": {"type": "string", "minLength": 1},
            "experiment": {"enum": sorted(_ex.EXPERIMENTS)},
            "module": {"type": "string"},
            "description": {"type": "string"},
            "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
            "params": {"type": "object"},
            "out": {"type": "string"},
        },
        "experiments": {name: {"module": MODULE_OF[name], "defaults": _ex.DEFAULTS[name]}
                        for name in sorted(_ex.EXPERIMENTS)},
    }


def catalog_listing(what):
    if what == "fields":
        return {name: {"n": spec[1], "k": spec[2], "formula": spec[3]}
                for name, spec in sorted(_f.CATALOG.items())}
    if what == "foliations":
        out = {}
        for name in sorted(_at.FOLIATIONS):
            pair = _at.foliation(name)
            out[name] = {"window": list(pair.window), "resolution": list(pair.resolution),
                         "description": pair.description}
        return out
    if what == "groups":
        return dict(GROUPS)
    if what == "experiments":
        return {name: MODULE_OF[name] for name in sorted(_ex.EXPERIMENTS)}
    raise ConfigError(f"unknown catalog {what!r}")


# -- entry point ---------------------------------------------------------------


def _print_report(rep):
    name = rep["scenario"]["name"]
    for run in rep["runs"]:
        for c in run["checks"]:
            mark = "PASS" if c["passed"] else "FAIL"
            print(f"[{mark}] {name}: {c['name']} = {_io.dumps(c['value'])} "
                  f"({c['op']} {_io.dumps(c['threshold'])})")
    print(f"{name}: {'PASS' if rep['passed'] else 'FAIL'} digest={rep['digest'][:16]}")


def build_parser():
    ap = argparse.ArgumentParser(prog="marcusflow", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--workers", type=int, default=1, help="parallel scenarios")
        p.add_argument("--seed-override", type=int, default=None)
        p.add_argument("--dt-override", type=float, default=None)

    p = sub.add_parser("run", help="run one scenario file")
    p.add_argument("scenario")
    common(p)
    p = sub.add_parser("suite", help="run every scenario in a directory")
    p.add_argument("directory")
    common(p)
    p = sub.add_parser("list-catalog", help="list available fields, foliations, groups")
    p.add_argument("what", choices=["fields", "foliations", "groups", "experiments"])
    sub.add_parser("emit-schema", help="print the scenario JSON schema")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.verb == "emit-schema":
            print(_io.dumps(scenario_schema(), indent=2))
            return EXIT_OK
        if args.verb == "list-catalog":
            print(_io.dumps(catalog_listing(args.what), indent=2))
            return EXIT_OK
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1", field="workers")
        if args.dt_override is not None and not args.dt_override > 0:
            raise ConfigError("--dt-override must be positive", field="dt-override")
        if args.verb == "run":
            sc = load_scenario(args.scenario)
            rep = run_scenario(sc, args.out, args.seed_override, args.dt_override)
            _print_report(rep)
            return EXIT_OK if rep["passed"] else EXIT_FAIL
        summary = run_suite(args.directory, args.out, args.workers, args.seed_override,
                            args.dt_override)
        for e in summary["scenarios"]:
            status = "PASS" if e["passed"] else "FAIL"
            extra = f" ({e['error']})" if "error" in e else ""
            print(f"[{status}] {e.get('name', e['file'])}{extra}")
        print(f"{summary['count']} scenarios, {len(summary['failed'])} failed")
        return EXIT_OK if summary["passed"] else EXIT_FAIL
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Error as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
