"""Configuration-driven experiment runner: config parsing, ladder runs, reports, comparison."""
import csv
import datetime
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field

from . import __version__
from .dirichlet import dense_max, set_dense_max
from .kato import KatoMeasure, taming_measure
from .model_space import SHAPES, build_model
from .randomfields import GENERATOR
from .suites import SUITES, LevelContext, run_suite

SCHEMA = "tamedcalc-report/1"
EXACT_FLOOR = 1e-12
REGRESSION_FACTOR = 1.10

log = logging.getLogger("tamedcalc")


class ConfigError(ValueError):
    pass


class ReportError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    shapes: list
    suites: list
    ladder: list
    size_params: tuple = None
    weight: str = None
    kappa_interior: str = None
    kappa_boundary: str = None
    tolerances: dict = field(default_factory=dict)
    slack_constants: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "tamedcalc-out"
    dense_max: int = None

    def validate(self):
        if not self.shapes:
            raise ConfigError("model.shape is required")
        for s in self.shapes:
            if s not in SHAPES:
                raise ConfigError(f"unknown shape {s!r}; known: {', '.join(SHAPES)}")
        if not self.suites:
            raise ConfigError("at least one suite is required")
        for s in self.suites:
            if s not in SUITES:
                raise ConfigError(f"unknown suite {s!r}; known: {', '.join(SUITES)}")
        if len(set(self.suites)) != len(self.suites):
            raise ConfigError("suite listed twice")
        if not self.ladder:
            raise ConfigError("refinement_ladder is required")
        if any(l < 0 for l in self.ladder):
            raise ConfigError("refinement levels must be >= 0")
        if any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ConfigError("refinement_ladder must be strictly increasing")
        if self.size_params is not None and any(p <= 0 for p in self.size_params):
            raise ConfigError("model.size entries must be positive")
        if self.dense_max is not None and self.dense_max < 1:
            raise ConfigError("heat_flow.dense_max must be positive")
        if self.weight and self.kappa_interior is None and self.kappa_boundary is None:
            raise ConfigError("a weighted model needs kappa.interior or kappa.boundary")
        for name in self.slack_constants:
            if name not in SUITES:
                raise ConfigError(f"tolerance given for unknown suite {name!r}")
        return self

    def canonical(self):
        """Normalized content used for hashing and stored in the report."""
        return {
            "model.shape": list(self.shapes),
            "model.size": None if self.size_params is None else [float(p) for p in self.size_params],
            "model.weight": self.weight,
            "kappa.interior": self.kappa_interior,
            "kappa.boundary": self.kappa_boundary,
            "suites": list(self.suites),
            "refinement_ladder": [int(l) for l in self.ladder],
            "tolerances": {k: float(v) for k, v in sorted(self.tolerances.items())},
            "suite_tolerances": {k: float(v) for k, v in sorted(self.slack_constants.items())},
            "seed": int(self.seed),
            "heat_flow.dense_max": self.dense_max,
        }

    def hash(self):
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


# -- config text -------------------------------------------------------------------

def parse_config_text(text):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {n}: empty key")
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value
    return out


def _list(value):
    return [v.strip() for v in value.split(",") if v.strip()]


def _float(key, value):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _int(key, value):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _descriptor(value):
    return None if value.lower() in ("", "auto", "none") else value


def config_from_mapping(mapping):
    kw = {"shapes": [], "suites": [], "ladder": [], "tolerances": {}, "slack_constants": {}}
    for key, value in mapping.items():
        if key == "model.shape":
            kw["shapes"] = _list(value)
        elif key == "model.size":
            kw["size_params"] = tuple(_float(key, v) for v in _list(value))
        elif key == "model.weight":
            kw["weight"] = _descriptor(value)
        elif key == "kappa.interior":
            kw["kappa_interior"] = _descriptor(value)
        elif key == "kappa.boundary":
            kw["kappa_boundary"] = _descriptor(value)
        elif key == "suites":
            kw["suites"] = _list(value)
        elif key in ("refinement_ladder", "ladder"):
            kw["ladder"] = [_int(key, v) for v in _list(value)]
        elif key == "seed":
            kw["seed"] = _int(key, value)
        elif key == "heat_flow.dense_max":
            kw["dense_max"] = _int(key, value)
        elif key == "output_dir":
            kw["output_dir"] = value
        elif key.startswith(("tolerance.", "tolerances.")):
            kw["tolerances"][key.split(".", 1)[1]] = _float(key, value)
        elif key.startswith("suite.") and key.endswith(".tolerance") and key.count(".") == 2:
            kw["slack_constants"][key.split(".")[1]] = _float(key, value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return ExperimentConfig(**kw).validate()


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return config_from_mapping(parse_config_text(fh.read()))


# -- running -----------------------------------------------------------------------

def _kappa_for(config, space):
    if config.kappa_interior is None and config.kappa_boundary is None:
        return taming_measure(space)
    return KatoMeasure.from_descriptors(space, config.kappa_interior, config.kappa_boundary)


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_clean(v) for v in x]
    return x


def _orders(hs, values):
    out = []
    for (h0, v0), (h1, v1) in zip(zip(hs, values), zip(hs[1:], values[1:])):
        if v0 is None or v1 is None or v0 <= EXACT_FLOOR or v1 <= EXACT_FLOOR:
            out.append(None)
        else:
            out.append(math.log(v0 / v1) / math.log(h0 / h1))
    return out


def summarize_families(entries, n_levels):
    """Group entries by (suite, family, shape) and judge each family."""
    groups = {}
    for e in entries:
        groups.setdefault((e["suite"], e["family"], e["shape"]), []).append(e)
    out = []
    for (suite, family, shape), es in groups.items():
        es = sorted(es, key=lambda e: (e["level"], e.get("index", 0)))
        kind = es[0]["kind"]
        row = {"suite": suite, "family": family, "shape": shape, "kind": kind,
               "levels": [e["level"] for e in es], "h": [e["h"] for e in es],
               "values": [e["value"] for e in es]}
        if kind == "residual":
            vals = [v if v is not None else float("nan") for v in row["values"]]
            min_order = es[0].get("min_order", 0.9)
            row["min_order"] = min_order
            if all(v <= EXACT_FLOOR for v in vals):
                row["orders"] = None
                row["passed"] = True
                row["verdict"] = "exact"
            elif n_levels < 3 or len(vals) < 3:
                row["orders"] = None
                row["passed"] = all(math.isfinite(v) for v in vals)
                row["verdict"] = "not assessed (fewer than 3 levels)"
            else:
                orders = _orders(row["h"], vals)
                row["orders"] = orders
                monotone = all(b <= a or b <= EXACT_FLOOR for a, b in zip(vals, vals[1:]))
                final = vals[-1] <= EXACT_FLOOR or (orders[-1] is not None and orders[-1] >= min_order)
                row["passed"] = bool(monotone and final)
                row["verdict"] = "converged" if row["passed"] else (
                    "not monotone" if not monotone else "order below threshold")
        else:
            row["passed"] = all(e["passed"] for e in es)
            row["verdict"] = "pass" if row["passed"] else "fail"
        out.append(row)
    return out


def _run_levels(config):
    entries, levels = [], []
    for shape in config.shapes:
        for level in config.ladder:
            space = build_model(shape, config.size_params, level, config.weight)
            kappa = _kappa_for(config, space)
            ctx = LevelContext(space, kappa, config.seed, tolerances=dict(config.tolerances),
                               slack_constants=dict(config.slack_constants))
            levels.append({"shape": shape, "level": level, "h": ctx.h,
                           "n_vertices": space.n_vertices, "n_cells": space.n_cells})
            for name in config.suites:
                log.info("%s level %d: %s", shape, level, name)
                run_suite(name, ctx)
            entries.extend(ctx.entries)
    return entries, levels


def run(config, write=True, timestamp=None):
    """Run every suite on every shape and ladder level; optionally write the outputs."""
    config.validate()
    previous = dense_max()
    if config.dense_max is not None:
        set_dense_max(config.dense_max)
    try:
        entries, levels = _run_levels(config)
    finally:
        set_dense_max(previous)
    families = summarize_families(entries, len(config.ladder))
    failed_entries = sum(1 for e in entries if not e["passed"])
    failed_families = sum(1 for f in families if not f["passed"])
    report = {
        "schema": SCHEMA,
        "timestamp": timestamp or datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "provenance": {"config_hash": config.hash(), "version": __version__, "generator": GENERATOR,
                       "config": config.canonical()},
        "levels": levels,
        "entries": entries,
        "families": families,
        "summary": {"entries": len(entries), "failed_entries": failed_entries,
                    "families": len(families), "failed_families": failed_families,
                    "passed": failed_entries == 0 and failed_families == 0},
    }
    report = _clean(report)
    if write:
        write_outputs(report, config.output_dir)
    return report


def report_body(report):
    """The report without its timestamp, serialized canonically."""
    body = {k: v for k, v in report.items() if k != "timestamp"}
    return json.dumps(body, sort_keys=True, indent=1)


def write_outputs(report, output_dir):
    os.makedirs(output_dir, exist_ok=True)
    with open(os.path.join(output_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
    cols = ["suite", "family", "shape", "level", "h", "kind", "value", "tolerance", "passed"]
    by_suite = {}
    for e in report["entries"]:
        by_suite.setdefault(e["suite"], []).append(e)
    for suite, es in by_suite.items():
        with open(os.path.join(output_dir, f"{suite}.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for e in es:
                w.writerow([e[c] for c in cols])
    plot_dir = os.path.join(output_dir, "plot_data")
    os.makedirs(plot_dir, exist_ok=True)
    residual_families = {}
    for e in report["entries"]:
        if e["kind"] == "residual":
            residual_families.setdefault((e["suite"], e["family"]), []).append(e)
    for (suite, family), es in residual_families.items():
        with open(os.path.join(plot_dir, f"{suite}__{family}.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["shape", "level", "x_h", "y_residual"])
            for e in es:
                w.writerow([e["shape"], e["level"], e["h"], e["value"]])


# -- comparison ----------------------------------------------------------------------

def load_report(path):
    with open(path, encoding="utf-8") as fh:
        try:
            rep = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ReportError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(rep, dict) or rep.get("schema") != SCHEMA:
        raise ReportError(f"{path}: schema mismatch (expected {SCHEMA!r})")
    return rep


def _badness(e):
    """Larger is worse: residuals and errors as is, slacks negated."""
    v = e.get("value")
    if v is None:
        return None
    return -v if e["kind"] == "slack" else v


def compare(report_a, report_b):
    """Per-entry relative change from a to b, with regression and added/removed flags."""
    for r in (report_a, report_b):
        if r.get("schema") != SCHEMA:
            raise ReportError("schema mismatch")
    key = lambda e: (e["suite"], e["family"], e["shape"], e["level"], e["kind"])
    a = {key(e): e for e in report_a["entries"]}
    b = {key(e): e for e in report_b["entries"]}
    rows = []
    for k in sorted(set(a) | set(b), key=lambda k: tuple(str(x) for x in k)):
        base = dict(zip(("suite", "family", "shape", "level", "kind"), k))
        if k not in a:
            rows.append({**base, "status": "added", "new": b[k]["value"]})
            continue
        if k not in b:
            rows.append({**base, "status": "removed", "old": a[k]["value"]})
            continue
        va, vb = a[k]["value"], b[k]["value"]
        if va == vb:
            continue
        ba, bb = _badness(a[k]), _badness(b[k])
        change = None if (va is None or vb is None) else (vb - va) / max(abs(va), 1e-300)
        regression = False
        if ba is not None and bb is not None:
            floor = EXACT_FLOOR if a[k]["kind"] in ("residual", "exact") else 0.0
            regression = bb > floor and bb > ba + (REGRESSION_FACTOR - 1.0) * abs(ba)
        if a[k]["passed"] and not b[k]["passed"]:
            regression = True
        rows.append({**base, "status": "regression" if regression else "changed",
                     "old": va, "new": vb, "relative_change": change})
    return {"rows": rows,
            "regressions": sum(r["status"] == "regression" for r in rows),
            "added": sum(r["status"] == "added" for r in rows),
            "removed": sum(r["status"] == "removed" for r in rows)}
