"""Experiment configs, runs and persisted artifacts.

A config is an INI file (sections and ``key = value`` lines); see the README
for the grammar. ``run_experiment`` writes, under the output directory and
named by the config hash:

* ``<hash>.trace.csv``  one row per iterate, m = 0..iterations;
* ``<hash>.report.json`` fit, checks, timing;
* ``<hash>.plot.dat``   log m / log a_m pairs plus the fitted line's endpoints.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import algorithms, analysis, reference
from .core import (ALGORITHMS, ERROR_MODES, AlgorithmConfig, ConfigError, ErrorSchedule,
                   GreedyError, RunTrace, logsumexp_objective, make_canonical_dictionary,
                   make_random_dictionary, pdistance_objective, quadratic_objective)

TRACE_COLUMNS = ("m", "atom_index", "lambda", "w", "E_value", "a_m", "delta_applied",
                 "injected_error", "l1_weight")
REPORT_KEYS = ("config_hash", "algorithm", "slope", "slope_residual", "majorant_ok",
               "certificate_ok", "iterations", "aborted", "wall_ms")
SUMMARY_COLUMNS = ("config", "config_hash", "algorithm", "q", "delta_mode", "slope",
                   "majorant_ok", "certificate_ok", "aborted", "exit_code", "status", "wall_ms")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 1, 2, 3
# gaps at or below this count as converged and are left out of rate fits
CONVERGED_GAP = 1e-12

# section -> key -> (parser, default); a default of ... means required
_SCHEMA = {
    "objective": {"kind": (str, ...), "f": ("vector", None), "power": (float, 2.0),
                  "a": ("matrix", None), "b": ("vector", None), "mu": (float, 0.0)},
    "dictionary": {"kind": (str, "canonical"), "count": (int, None), "seed": (int, 0)},
    "norm": {"p": (float, 2.0)},
    "algorithm": {"name": (str, ...), "t": (float, 1.0)},
    "schedule": {"kind": (str, "zero"), "c": (float, 0.0), "q": (float, 2.0),
                 "delta": (float, 0.0)},
    "error": {"mode": (str, "tolerance")},
    "run": {"max_iterations": (int, 100), "seed": (int, 0)},
    "bref": {"mode": (str, "none")},
    "analysis": {"fit_lo": (int, 20), "fit_hi": (int, 2000), "majorant": ("bool", True),
                 "c0": (float, None), "modulus_u": ("vector", (0.01, 0.03, 0.1, 0.3, 1.0)),
                 "modulus_samples": (int, 256)},
    "wgafr": {"wmax": (float, 4.0)},
}


@dataclass(frozen=True)
class ExperimentConfig:
    objective_kind: str
    algorithm: str
    f: Optional[tuple] = None
    power: float = 2.0
    a: Optional[tuple] = None
    b: Optional[tuple] = None
    mu: float = 0.0
    dictionary_kind: str = "canonical"
    dictionary_count: Optional[int] = None
    dictionary_seed: int = 0
    p: float = 2.0
    t: float = 1.0
    schedule_kind: str = "zero"
    schedule_c: float = 0.0
    schedule_q: float = 2.0
    schedule_delta: float = 0.0
    error_mode: str = "tolerance"
    max_iterations: int = 100
    seed: int = 0
    bref_mode: str = "none"
    fit_lo: int = 20
    fit_hi: int = 2000
    majorant: bool = True
    c0: Optional[float] = None
    modulus_u: tuple = (0.01, 0.03, 0.1, 0.3, 1.0)
    modulus_samples: int = 256
    wmax: float = 4.0

    def __post_init__(self):
        _validate(self)

    # -- builders ----------------------------------------------------------

    @property
    def dim(self) -> int:
        if self.objective_kind == "logsumexp":
            return len(self.a[0])
        return len(self.f)

    def objective(self):
        if self.objective_kind == "quadratic":
            return quadratic_objective(self.f, self.p)
        if self.objective_kind == "pdistance":
            return pdistance_objective(self.f, self.power, self.p)
        return logsumexp_objective(np.array(self.a), self.b, self.mu, self.p)

    def dictionary(self):
        if self.dictionary_kind == "canonical":
            return make_canonical_dictionary(self.dim, self.p)
        return make_random_dictionary(self.dim, self.dictionary_count, self.p,
                                      self.dictionary_seed)

    def schedule(self) -> ErrorSchedule:
        return ErrorSchedule(self.schedule_kind, self.schedule_c, self.schedule_q,
                             self.schedule_delta)

    def algorithm_config(self) -> AlgorithmConfig:
        return AlgorithmConfig(self.algorithm, self.t, self.schedule(), self.error_mode,
                               self.max_iterations, self.wmax, self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = [list(r) if isinstance(r, tuple) else r for r in v]
        return d

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _validate(c: ExperimentConfig):
    def bad(path, msg):
        raise ConfigError(f"{path}: {msg}")

    if c.objective_kind not in ("quadratic", "pdistance", "logsumexp"):
        bad("objective.kind", f"unknown objective {c.objective_kind!r}")
    if c.objective_kind in ("quadratic", "pdistance"):
        if not c.f:
            bad("objective.f", "required for this objective")
        if c.a is not None or c.b is not None:
            bad("objective.a", "only valid for logsumexp")
    else:
        if not c.a:
            bad("objective.a", "required for logsumexp")
        if len({len(r) for r in c.a}) != 1:
            bad("objective.a", "rows must have equal length")
        if c.b is not None and len(c.b) != len(c.a):
            bad("objective.b", "needs one entry per row of a")
        if c.f is not None:
            bad("objective.f", "not used by logsumexp")
    if c.objective_kind == "pdistance" and not 1 < c.power <= 2:
        bad("objective.power", f"must be in (1, 2], got {c.power}")
    if c.mu < 0:
        bad("objective.mu", "must be >= 0")
    vals = [v for v in (c.f or ()) + (c.b or ())] + [v for r in (c.a or ()) for v in r]
    if not all(np.isfinite(vals)):
        bad("objective", "entries must be finite")
    if c.dictionary_kind not in ("canonical", "random"):
        bad("dictionary.kind", f"must be canonical or random, got {c.dictionary_kind!r}")
    if c.dictionary_kind == "random":
        if c.dictionary_count is None or c.dictionary_count < 2 or c.dictionary_count % 2:
            bad("dictionary.count", "must be an even integer >= 2")
    elif c.dictionary_count is not None:
        bad("dictionary.count", "only valid for random dictionaries")
    if not c.p >= 1:
        bad("norm.p", f"must be in [1, inf], got {c.p}")
    if c.algorithm not in ALGORITHMS:
        bad("algorithm.name", f"must be one of {', '.join(ALGORITHMS)}")
    if not 0 < c.t <= 1:
        bad("algorithm.t", f"t must be in (0,1], got {c.t}")
    if c.error_mode not in ERROR_MODES:
        bad("error.mode", f"must be one of {', '.join(ERROR_MODES)}")
    if c.max_iterations < 0:
        bad("run.max_iterations", "must be >= 0")
    if c.bref_mode not in ("analytic", "brute-force", "none"):
        bad("bref.mode", "must be analytic, brute-force or none")
    if c.bref_mode == "brute-force" and c.dim > reference.BRUTE_MAX_DIM:
        bad("bref.mode", f"brute-force b needs n <= {reference.BRUTE_MAX_DIM}, got n = {c.dim}")
    if c.fit_lo < 1 or c.fit_hi < c.fit_lo:
        bad("analysis.fit_lo", "need 1 <= fit_lo <= fit_hi")
    if c.c0 is not None and not c.c0 > 0:
        bad("analysis.c0", "must be > 0")
    if any(u <= 0 for u in c.modulus_u):
        bad("analysis.modulus_u", "grid values must be > 0")
    if c.modulus_samples < 1:
        bad("analysis.modulus_samples", "must be >= 1")
    if not c.wmax >= 1:
        bad("wgafr.wmax", f"W_max must be >= 1, got {c.wmax}")
    try:
        ErrorSchedule(c.schedule_kind, c.schedule_c, c.schedule_q, c.schedule_delta)
    except ConfigError as exc:
        bad("schedule", str(exc))


# ---------------------------------------------------------------------------
# text format

_FIELD = {
    ("objective", "kind"): "objective_kind", ("objective", "f"): "f",
    ("objective", "power"): "power", ("objective", "a"): "a", ("objective", "b"): "b",
    ("objective", "mu"): "mu", ("dictionary", "kind"): "dictionary_kind",
    ("dictionary", "count"): "dictionary_count", ("dictionary", "seed"): "dictionary_seed",
    ("norm", "p"): "p", ("algorithm", "name"): "algorithm", ("algorithm", "t"): "t",
    ("schedule", "kind"): "schedule_kind", ("schedule", "c"): "schedule_c",
    ("schedule", "q"): "schedule_q", ("schedule", "delta"): "schedule_delta",
    ("error", "mode"): "error_mode", ("run", "max_iterations"): "max_iterations",
    ("run", "seed"): "seed", ("bref", "mode"): "bref_mode", ("analysis", "fit_lo"): "fit_lo",
    ("analysis", "fit_hi"): "fit_hi", ("analysis", "majorant"): "majorant",
    ("analysis", "c0"): "c0", ("analysis", "modulus_u"): "modulus_u",
    ("analysis", "modulus_samples"): "modulus_samples", ("wgafr", "wmax"): "wmax",
}


def _parse_value(kind, text, path):
    text = text.strip()
    try:
        if kind is str:
            return text
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind == "bool":
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if kind == "vector":
            return tuple(float(v) for v in text.split(",") if v.strip())
        if kind == "matrix":
            return tuple(tuple(float(v) for v in row.split(",") if v.strip())
                         for row in text.split(";") if row.strip())
    except ValueError:
        raise ConfigError(f"{path}: cannot parse {text!r} as {getattr(kind, '__name__', kind)}")
    raise AssertionError(kind)


def parse_config_text(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    kw = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{section}: unknown section")
        for key, raw in cp.items(section):
            path = f"{section}.{key}"
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key")
            kw[_FIELD[(section, key)]] = _parse_value(_SCHEMA[section][key][0], raw, path)
    for section, keys in _SCHEMA.items():
        for key, (_, default) in keys.items():
            if default is ... and _FIELD[(section, key)] not in kw:
                raise ConfigError(f"{section}.{key}: required key missing")
    return ExperimentConfig(**kw)


def parse_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text)


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return "; ".join(_format_value(r) for r in v)
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def serialize_config(config: ExperimentConfig) -> str:
    """INI text that parses back to an equal config. None fields are omitted."""
    out = io.StringIO()
    for section, keys in _SCHEMA.items():
        lines = []
        for key in keys:
            v = getattr(config, _FIELD[(section, key)])
            if v is not None:
                lines.append(f"{key} = {_format_value(v)}")
        if lines:
            out.write(f"[{section}]\n" + "\n".join(lines) + "\n\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# running

@dataclass
class ExperimentReport:
    config_hash: str
    algorithm: str
    slope: Optional[float]
    slope_residual: Optional[float]
    majorant_ok: Optional[bool]
    certificate_ok: Optional[bool]
    iterations: int
    aborted: bool
    wall_ms: float
    b_ref: Optional[float] = None
    b_provenance: Optional[str] = None
    error: Optional[str] = None
    slope_error: Optional[str] = None
    certificate_max_ratio: Optional[float] = None
    trace: Optional[RunTrace] = field(default=None, repr=False)
    paths: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = {k: getattr(self, k) for k in REPORT_KEYS}
        d.update(b_ref=self.b_ref, b_provenance=self.b_provenance, error=self.error,
                 slope_error=self.slope_error,
                 certificate_max_ratio=self.certificate_max_ratio)
        return d

    @property
    def exit_code(self) -> int:
        if self.aborted:
            return EXIT_NUMERIC
        if self.majorant_ok is False or self.certificate_ok is False:
            return EXIT_ACCEPTANCE
        return EXIT_OK


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def trace_rows(trace: RunTrace) -> list:
    rows = []
    for r in trace.all_records:
        first = r.m == 0
        rows.append([r.m, r.atom_index, r.lam, r.w, r.value, r.a,
                     None if first else r.delta, None if first else r.injected,
                     r.l1_weight])
    return rows


def trace_csv(trace: RunTrace) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for row in trace_rows(trace):
        w.writerow([_cell(v) for v in row])
    return out.getvalue()


def _majorant_params(config: ExperimentConfig, E, trace: RunTrace):
    cert = E.smoothness
    if cert is None or trace.b_ref is None:
        return None
    a0 = max(trace.gaps[0], 0.0)
    if config.algorithm in ("WRGA", "REGA"):
        t = config.t if config.algorithm == "WRGA" else 1.0
        return analysis.relaxed_majorant_params(cert, t, a0, config.schedule())
    if E.argmin is None:
        return None
    try:
        c0 = config.c0 if config.c0 is not None else reference.default_c0(E)
    except reference.ReferenceError:
        return None
    A = max(1.0, reference.atomic_norm(E.argmin, config.dictionary()))
    if not np.isfinite(A):
        return None
    return analysis.free_majorant_params(cert, config.t, A, c0, a0, config.schedule())


def modulus_check(config: ExperimentConfig):
    """Sampled modulus on the certificate's domain and the certificate verdict."""
    E = config.objective()
    cert = E.smoothness
    if cert is None:
        return None, None
    free = config.algorithm in ("WGAFR", "EGAFR")
    domain = "D1" if free else "D"
    level = analysis.domain_level(E, domain)
    if free:
        try:
            radius = reference.sublevel_radius(E, level)
        except reference.ReferenceError:
            radius = 4.0
        sampler = analysis.BoxSampler(E.dim, radius, E, level)
    else:
        sampler = analysis.HullSampler(config.dictionary(), E, level)
    est = analysis.estimate_modulus(E, sampler, config.modulus_u, config.modulus_samples,
                                    config.seed, config.p, domain)
    return est, analysis.check_certificate(est, cert)


def fit_gaps(gaps: np.ndarray) -> np.ndarray:
    return np.where(gaps > CONVERGED_GAP, gaps, 0.0)


def plot_data(gaps: np.ndarray, fit: Optional[analysis.RateFit]) -> str:
    lines = ["# log_m log_a_m"]
    for m in range(1, gaps.size):
        if gaps[m] > 0:
            lines.append(f"{float(np.log(m))!r} {float(np.log(gaps[m]))!r}")
    if fit is not None:
        lines.append("# fit endpoints: log_m log_a_m")
        for m in fit.window:
            m = min(m, gaps.size - 1)
            lines.append(f"{float(np.log(m))!r} {float(fit.slope * np.log(m) + fit.intercept)!r}")
    return "\n".join(lines) + "\n"


def run_experiment(config: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Run one experiment and, if ``out_dir`` is given, persist its artifacts.

    A search failure marks the report aborted; the partial trace is still
    written.
    """
    t0 = time.perf_counter()
    E = config.objective()
    D = config.dictionary()
    if E.dim != D.dim:
        raise ConfigError(f"objective dimension {E.dim} != dictionary dimension {D.dim}")
    ref = reference.compute_b(E, D, config.algorithm, config.bref_mode)
    b_ref = None if ref is None else ref.value
    error = None
    try:
        trace = algorithms.run(E, D, config.algorithm_config(), b_ref)
    except algorithms.IterationError as exc:
        trace, error = exc.trace, str(exc)
    trace.header["b_ref"] = {"value": b_ref, "provenance": None if ref is None else ref.provenance}

    slope = residual = slope_error = None
    fit = None
    if b_ref is not None:
        try:
            fit = analysis.fit_rate_exponent(fit_gaps(trace.gaps), (config.fit_lo, config.fit_hi))
            slope, residual = fit.slope, fit.residual
        except analysis.AnalysisError as exc:
            slope_error = str(exc)
    else:
        slope_error = "no reference value b_ref"

    majorant_ok = None
    if config.majorant and not trace.aborted:
        params = _majorant_params(config, E, trace)
        if params is not None:
            majorant_ok = analysis.check_majorant_domination(trace, params).ok

    est, cert_report = modulus_check(config)
    certificate_ok = None if cert_report is None else cert_report.ok

    report = ExperimentReport(
        config.config_hash, config.algorithm, slope, residual, majorant_ok, certificate_ok,
        trace.iterations, trace.aborted, 0.0, b_ref,
        None if ref is None else ref.provenance, error, slope_error,
        None if cert_report is None else cert_report.max_ratio, trace)
    report.wall_ms = (time.perf_counter() - t0) * 1000.0
    if out_dir is not None:
        write_artifacts(report, config, out_dir)
    return report


def write_artifacts(report: ExperimentReport, config: ExperimentConfig, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = report.config_hash
    paths = {"trace": out / f"{h}.trace.csv", "report": out / f"{h}.report.json"}
    paths["trace"].write_text(trace_csv(report.trace), encoding="utf-8")
    paths["report"].write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
    if report.trace.b_ref is not None:
        fit = None
        if report.slope is not None:
            fit = analysis.fit_rate_exponent(fit_gaps(report.trace.gaps),
                                             (config.fit_lo, config.fit_hi))
        paths["plot"] = out / f"{h}.plot.dat"
        paths["plot"].write_text(plot_data(report.trace.gaps, fit), encoding="utf-8")
    report.paths = {k: str(v) for k, v in paths.items()}
    return report.paths


# ---------------------------------------------------------------------------
# suites

def _suite_row(path: str, out_dir) -> dict:
    row = dict.fromkeys(SUMMARY_COLUMNS, "")
    row["config"] = os.path.basename(path)
    try:
        config = parse_config(path)
    except ConfigError as exc:
        row.update(exit_code=EXIT_CONFIG, status=f"config error: {exc}")
        return row
    row.update(config_hash=config.config_hash, algorithm=config.algorithm,
               delta_mode=f"{config.schedule().describe()}/{config.error_mode}")
    try:
        E = config.objective()
        row["q"] = "" if E.smoothness is None else repr(E.smoothness.q)
        report = run_experiment(config, out_dir)
    except ConfigError as exc:
        row.update(exit_code=EXIT_CONFIG, status=f"config error: {exc}")
        return row
    except (GreedyError, ValueError, FloatingPointError) as exc:
        row.update(exit_code=EXIT_NUMERIC, status=f"numerical failure: {exc}")
        return row
    row.update(slope=_cell(report.slope), majorant_ok=_cell(report.majorant_ok),
               certificate_ok=_cell(report.certificate_ok), aborted=str(report.aborted),
               exit_code=report.exit_code, wall_ms=f"{report.wall_ms:.1f}",
               status="ok" if report.exit_code == EXIT_OK else
               (report.error or "acceptance check failed"))
    return row


def run_suite(directory, out_dir, jobs: int = 1):
    """Run every ``*.ini`` config in ``directory``; returns (rows, exit_code).

    Writes ``summary.csv`` to ``out_dir``. The exit code is the largest
    per-experiment code, so it is nonzero iff some experiment failed.
    """
    paths = sorted(str(p) for p in Path(directory).glob("*.ini"))
    if not paths:
        raise ConfigError(f"no *.ini configs in {directory}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_suite_row, paths, [str(out)] * len(paths)))
    else:
        rows = [_suite_row(p, out) for p in paths]
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return rows, max(int(r["exit_code"]) for r in rows)
