"""Model-selection sweeps, method comparison and persisted reports.

A sweep scores a list of candidate models (polynomial orders or mixture
component counts) with one backend:

* ``ns``: nested-sampling log-evidence, parameters are posterior means;
* ``vb``: variational lower bound, parameters are the variational means.

Each entry gets its own seed derived from the sweep seed and the candidate
size, so an entry's result does not depend on which other sizes are swept or
on how many worker processes run them.

Reports are YAML with a ``schema`` header.  Wall-clock times are kept out of
the report body (so repeated runs give byte-identical files) and written to a
``.timings.tsv`` companion next to it.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .models import Dataset, GmmModel, PolynomialModel, gmm_log_likelihood, poly_log_likelihood
from .nested import NsConfig, posterior_samples, run_nested
from .vb_gmm import VbGmmPrior, vb_gmm_fit
from .vb_linear import VbLinearPrior, vb_linear_fit

SCHEMA_VERSION = 1
METHODS = ("vb", "ns")
FAMILIES = ("poly", "gmm")
DEFAULT_SIZES = {"poly": tuple(range(1, 11)), "gmm": tuple(range(1, 7))}
DEFAULT_N_LIVE = {"poly": 36, "gmm": 50}
# parameters with a smaller reference magnitude are left out of the average
DISAGREEMENT_FLOOR = 0.1


class SchemaVersionError(ValueError):
    pass


@dataclass(frozen=True)
class VbConfig:
    tol: float = 1e-6
    max_iter: int = 1000
    restarts: int = 5
    linear_prior: VbLinearPrior = VbLinearPrior()
    gmm_prior: VbGmmPrior = VbGmmPrior()

    def __post_init__(self):
        if not self.tol > 0 or self.max_iter < 1 or self.restarts < 1:
            raise ValueError("VB settings need tol > 0, max_iter >= 1, restarts >= 1")


def default_ns_config(family: str, **overrides) -> NsConfig:
    _check_family(family)
    return replace(NsConfig(n_live=DEFAULT_N_LIVE[family]), **overrides)


def default_config(family: str, method: str):
    _check_method(method)
    return default_ns_config(family) if method == "ns" else VbConfig()


@dataclass
class SweepRecord:
    model_id: str
    size: int
    method: str
    score: float | None  # ln Z (ns) or bound (vb); None if the backend failed
    score_uncertainty: float | None
    log_likelihood: float | None  # plug-in value at the fitted parameters
    occam: float | None  # score - log_likelihood
    params: dict[str, float]
    seed: int
    config_hash: str
    error: str | None = None
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class SweepReport:
    family: str
    method: str
    seed: int
    config_hash: str
    records: list[SweepRecord]
    argmax: str | None

    def scores(self) -> dict[str, float | None]:
        return {r.model_id: r.score for r in self.records}

    def record(self, model_id: str) -> SweepRecord:
        for r in self.records:
            if r.model_id == model_id:
                return r
        raise KeyError(model_id)

    def check(self) -> None:
        """Raise if ``argmax`` disagrees with the stored scores."""
        if _argmax(self.records) != self.argmax:
            raise ValueError(f"stored argmax {self.argmax!r} does not match the scores")


@dataclass
class ComparisonReport:
    family: str
    model_id: str
    methods: tuple[str, str]  # (reference, other)
    param_names: tuple[str, ...]
    reference_values: tuple[float, ...]
    other_values: tuple[float, ...]
    disagreement: tuple[float, ...]  # percent, per parameter
    averaged_disagreement: float  # over |reference| >= DISAGREEMENT_FLOOR
    seeds: tuple[int, ...]
    config_hash: str
    reference_time: float = field(default=0.0, compare=False)
    other_time: float = field(default=0.0, compare=False)

    @property
    def timing_ratio(self) -> float:
        """Wall time of the second method over the first (NS / VB by default)."""
        return self.other_time / self.reference_time if self.reference_time > 0 else math.inf


# ---------------------------------------------------------------- hashing


def _plain(obj):
    if is_dataclass(obj):
        return {k: _plain(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def data_hash(data: Dataset) -> str:
    h = hashlib.sha256(data.ordinates.tobytes())
    if data.abscissae is not None:
        h.update(data.abscissae.tobytes())
    return h.hexdigest()


def config_hash(*parts) -> str:
    text = json.dumps(_plain(list(parts)), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def entry_seed(seed: int, size: int) -> int:
    """Seed for one sweep entry, independent of the other entries."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(size),))
    return int(ss.generate_state(1)[0])


# ---------------------------------------------------------------- fitting


def _check_family(family):
    if family not in FAMILIES:
        raise ValueError(f"unknown model family {family!r} (expected one of {FAMILIES})")


def _check_method(method):
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r} (expected one of {METHODS})")


def _make_model(family, data, size):
    return PolynomialModel(data, size) if family == "poly" else GmmModel(data, size)


def _plugin_log_likelihood(family, data, theta) -> float:
    if family == "poly":
        return poly_log_likelihood(data, theta[:-1], theta[-1])
    return gmm_log_likelihood(data, theta)


def fit_one(family: str, method: str, data: Dataset, size: int, cfg, seed: int):
    """Run one backend on one model.  Returns (score, uncertainty, theta, names, seconds)."""
    model = _make_model(family, data, size)
    if method == "ns":
        t0 = time.perf_counter()
        est = run_nested(model, cfg=replace(cfg, seed=seed))
        elapsed = time.perf_counter() - t0
        theta = posterior_samples(est, model.canonicalize).mean
        return est.log_z, est.log_z_uncertainty, theta, model.param_names, elapsed
    t0 = time.perf_counter()
    if family == "poly":
        state, bound = vb_linear_fit(data, size, cfg.linear_prior, tol=cfg.tol, max_iter=cfg.max_iter)
        elapsed = time.perf_counter() - t0
        theta = np.append(state.w_mean, state.gamma_mean)
    else:
        state, bound = vb_gmm_fit(
            data, size, cfg.gmm_prior, tol=cfg.tol, max_iter=cfg.max_iter, rng=seed, restarts=cfg.restarts
        )
        elapsed = time.perf_counter() - t0
        theta = state.theta
    return bound, 0.0, theta, model.param_names, elapsed


def _run_entry(args) -> SweepRecord:
    family, method, data, size, cfg, seed, chash = args
    model_id = f"{family}-{size}"
    try:
        score, unc, theta, names, elapsed = fit_one(family, method, data, size, cfg, seed)
        log_l = _plugin_log_likelihood(family, data, theta)
        return SweepRecord(
            model_id, size, method, float(score), float(unc), float(log_l), float(score - log_l),
            {n: float(v) for n, v in zip(names, theta)}, seed, chash, wall_time=elapsed,
        )
    except Exception as exc:  # recorded, the sweep carries on
        msg = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        return SweepRecord(model_id, size, method, None, None, None, None, {}, seed, chash, error=msg)


def _argmax(records) -> str | None:
    scored = [r for r in records if r.score is not None and math.isfinite(r.score)]
    if not scored:
        return None
    return max(scored, key=lambda r: r.score).model_id


def _map(fn, jobs, workers):
    if workers is None or workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def sweep(family: str, data: Dataset, sizes, method: str, cfg=None, seed: int = 0, workers: int | None = None) -> SweepReport:
    _check_family(family)
    _check_method(method)
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ValueError("nothing to sweep: the list of model sizes is empty")
    if len(set(sizes)) != len(sizes):
        raise ValueError("model sizes must be distinct")
    cfg = cfg if cfg is not None else default_config(family, method)
    chash = config_hash(family, method, cfg, seed, data_hash(data))
    jobs = [(family, method, data, s, cfg, entry_seed(seed, s), chash) for s in sizes]
    records = _map(_run_entry, jobs, workers)
    return SweepReport(family, method, int(seed), chash, records, _argmax(records))


def sweep_polynomial(data: Dataset, orders, method: str = "vb", cfg=None, seed: int = 0, workers=None) -> SweepReport:
    """Score polynomial orders; see :func:`sweep`."""
    if data.abscissae is None:
        raise ValueError("polynomial sweeps need x/y data")
    return sweep("poly", data, orders, method, cfg, seed, workers)


def sweep_gmm(data: Dataset, s_values, method: str = "vb", cfg=None, seed: int = 0, workers=None) -> SweepReport:
    """Score mixture component counts; see :func:`sweep`."""
    return sweep("gmm", data, s_values, method, cfg, seed, workers)


# ---------------------------------------------------------------- comparison


def percentage_disagreement(a, b, floor: float = DISAGREEMENT_FLOOR) -> np.ndarray:
    """100 |a - b| / max(|a|, |b|, floor), elementwise."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return 100.0 * np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def _compared_names(family, names):
    # polynomial comparisons cover the coefficients only, not the noise precision
    return [n for n in names if n != "gamma"] if family == "poly" else list(names)


def compare_methods(
    data: Dataset,
    family: str,
    cfg: dict | None = None,
    seeds=(0, 1, 2, 3),
    size: int | None = None,
    methods=("vb", "ns"),
) -> ComparisonReport:
    """Fit one model with two backends and measure how far their parameters differ.

    ``size`` defaults to the argmax of a VB sweep over the family's default
    range.  Each method is run once per seed and its parameters averaged
    (VB runs are deterministic per seed; for NS this averages down the Monte
    Carlo error of the posterior means).  ``cfg`` maps method name to its
    config.  The first method is the reference for the disagreement floor
    and the denominator of the timing ratio.
    """
    _check_family(family)
    methods = tuple(methods)
    if len(methods) != 2:
        raise ValueError("compare exactly two methods")
    for m in methods:
        _check_method(m)
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    cfg = dict(cfg or {})
    cfgs = {m: cfg.get(m) or default_config(family, m) for m in methods}
    if size is None:
        size_report = sweep(family, data, DEFAULT_SIZES[family], "vb", cfgs.get("vb"), seeds[0])
        if size_report.argmax is None:
            raise RuntimeError("could not select a model: every VB fit failed")
        size = size_report.record(size_report.argmax).size

    values, times, names = {}, {}, None
    for m in methods:
        runs = []
        elapsed = 0.0
        for s in seeds:
            _, _, theta, names, dt = fit_one(family, m, data, size, cfgs[m], s)
            runs.append(theta)
            elapsed += dt
        values[m] = np.mean(runs, axis=0)
        times[m] = elapsed / len(seeds)

    keep = _compared_names(family, names)
    idx = [list(names).index(n) for n in keep]
    ref, other = values[methods[0]][idx], values[methods[1]][idx]
    dis = percentage_disagreement(ref, other)
    mask = np.abs(ref) >= DISAGREEMENT_FLOOR
    avg = float(np.mean(dis[mask])) if mask.any() else 0.0
    chash = config_hash(family, methods, [cfgs[m] for m in methods], seeds, size, data_hash(data))
    return ComparisonReport(
        family, f"{family}-{size}", methods, tuple(keep),
        tuple(float(v) for v in ref), tuple(float(v) for v in other), tuple(float(v) for v in dis),
        avg, seeds, chash, reference_time=times[methods[0]], other_time=times[methods[1]],
    )


# ---------------------------------------------------------------- persistence


def _record_to_dict(r: SweepRecord) -> dict:
    d = {f.name: _plain(getattr(r, f.name)) for f in fields(r) if f.name != "wall_time"}
    return d


def report_to_dict(report) -> dict:
    if isinstance(report, SweepReport):
        return {
            "schema": SCHEMA_VERSION,
            "kind": "sweep",
            "family": report.family,
            "method": report.method,
            "seed": report.seed,
            "config_hash": report.config_hash,
            "argmax": report.argmax,
            "records": [_record_to_dict(r) for r in report.records],
        }
    if isinstance(report, ComparisonReport):
        d = {"schema": SCHEMA_VERSION, "kind": "comparison"}
        d.update({f.name: _plain(getattr(report, f.name)) for f in fields(report) if not f.name.endswith("_time")})
        return d
    raise TypeError(f"not a report: {type(report).__name__}")


def report_from_dict(d: dict):
    if not isinstance(d, dict) or "schema" not in d:
        raise SchemaVersionError("report has no schema header")
    if d["schema"] != SCHEMA_VERSION:
        raise SchemaVersionError(f"unsupported report schema {d['schema']!r} (this version reads {SCHEMA_VERSION})")
    kind = d.get("kind")
    if kind == "sweep":
        records = [SweepRecord(**r) for r in d["records"]]
        return SweepReport(d["family"], d["method"], d["seed"], d["config_hash"], records, d["argmax"])
    if kind == "comparison":
        body = {k: v for k, v in d.items() if k not in ("schema", "kind")}
        for k in ("methods", "param_names", "reference_values", "other_values", "disagreement", "seeds"):
            body[k] = tuple(body[k])
        return ComparisonReport(**body)
    raise ValueError(f"unknown report kind {kind!r}")


def dump_report(report) -> str:
    return yaml.safe_dump(report_to_dict(report), sort_keys=False, default_flow_style=False, allow_unicode=True)


def timings_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".timings.tsv")


def write_report(report, path) -> None:
    """Write the report and its ``.timings.tsv`` companion."""
    path = Path(path)
    path.write_text(dump_report(report), encoding="utf-8", newline="\n")
    if isinstance(report, SweepReport):
        rows = [(r.model_id, r.wall_time) for r in report.records]
    else:
        rows = [(report.methods[0], report.reference_time), (report.methods[1], report.other_time)]
    lines = ["name\twall_time_s"] + [f"{k}\t{v:.6f}" for k, v in rows]
    timings_path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_report(path):
    """Inverse of :func:`write_report`; timings are attached when the companion exists."""
    path = Path(path)
    report = report_from_dict(yaml.safe_load(path.read_text(encoding="utf-8")))
    tpath = timings_path(path)
    if tpath.exists():
        rows = [line.split("\t") for line in tpath.read_text(encoding="utf-8").splitlines()[1:] if line]
        times = {k: float(v) for k, v in rows}
        if isinstance(report, SweepReport):
            for r in report.records:
                r.wall_time = times.get(r.model_id, 0.0)
        else:
            report.reference_time = times.get(report.methods[0], 0.0)
            report.other_time = times.get(report.methods[1], 0.0)
    return report


def write_plot_data(report: SweepReport, path) -> None:
    """Two-column TSV (model_id, score) for plotting; failed entries are written as nan."""
    lines = ["model_id\tscore"]
    for r in report.records:
        lines.append(f"{r.model_id}\t{'nan' if r.score is None else format(r.score, '.17g')}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
