"""Downstream fault-detection evaluation and measurement helpers.

A sweep cell runs one allocator over a whole stream, samples and
reconstructs the data, then scores a k-nearest-neighbour detector on a
chronological 70/30 split. Cells depend only on their coordinates, so a
sweep gives the same report whatever the worker count.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
from sklearn.metrics import f1_score
from sklearn.neighbors import KNeighborsClassifier
from threadpoolctl import threadpool_limits

from . import baselines
from .acquire import channel_rng, expand_rates, reconstruct, sample_mask, send_on_delta
from .data import Dataset, parse_synthetic, standardize
from .triage import TriageConfig, init_state, iter_windows, n_windows, triage_step

TRAIN_FRACTION = 0.7
DEFAULT_DELTA = 0.1
METHODS = ("pca", "uniform", "variance", "threshold", "random", "mi", "ogd", "sod", "joint", "full")
REPORT_HEADER = (
    "dataset", "method", "budget", "seed", "recon", "f1",
    "ms_per_window", "commanded_bw", "realized_bw",
)


# --- detector ------------------------------------------------------------------


def knn_f1(train: Dataset, test: Dataset, k_nn: int = 5) -> float:
    """F1 of a Euclidean k-NN majority-vote detector.

    Binary problems score the positive (largest) class; multiclass
    problems use the support-weighted mean F1. Features are expected to be
    standardized with training statistics already.
    """
    if train.n_samples == 0 or test.n_samples == 0:
        raise ValueError("train and test must be non-empty")
    if k_nn > train.n_samples:
        raise ValueError(f"k_nn={k_nn} exceeds train size {train.n_samples}")
    if np.unique(train.labels).size < 2:
        raise ValueError("training labels contain a single class")
    clf = KNeighborsClassifier(n_neighbors=k_nn, algorithm="brute")
    clf.fit(train.values, train.labels)
    pred = clf.predict(test.values)
    classes = np.union1d(train.labels, test.labels)
    if classes.size <= 2:
        return float(f1_score(test.labels, pred, pos_label=classes.max(), average="binary", zero_division=0))
    return float(f1_score(test.labels, pred, average="weighted", zero_division=0))


def split_point(n: int) -> int:
    return int(round(TRAIN_FRACTION * n))


def detection_f1(dataset: Dataset, values: np.ndarray, k_nn: int = 5) -> float:
    """Chronological split of ``values``, standardize on train, score k-NN."""
    cut = split_point(dataset.n_samples)
    ds = dataset.with_values(values)
    train, test = ds.slice(0, cut), ds.slice(cut, ds.n_samples)
    return knn_f1(standardize(train, train), standardize(train, test), k_nn)


# --- report --------------------------------------------------------------------


@dataclass(frozen=True)
class EvalRow:
    dataset: str
    method: str
    budget: float
    seed: int
    recon: str
    f1: float
    ms_per_window: float
    commanded_bw: float
    realized_bw: float


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6f}"
    return str(v)


@dataclass
class EvalReport:
    rows: list[EvalRow]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for r in self.rows:
            writer.writerow([_fmt(getattr(r, name)) for name in REPORT_HEADER])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, path) -> "EvalReport":
        rows = []
        with Path(path).open(newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                rows.append(EvalRow(
                    rec["dataset"], rec["method"], float(rec["budget"]), int(rec["seed"]),
                    rec["recon"], float(rec["f1"]), float(rec["ms_per_window"]),
                    float(rec["commanded_bw"]), float(rec["realized_bw"]),
                ))
        return cls(rows)

    def mean_f1(self, method: str, budget: float | None = None) -> float:
        vals = [r.f1 for r in self.rows
                if r.method == method and (budget is None or math.isclose(r.budget, budget))]
        return float(np.mean(vals)) if vals else math.nan


# --- pipeline ------------------------------------------------------------------


class CellResult(NamedTuple):
    f1: float
    ms_per_window: float
    commanded_bw: float
    realized_bw: float
    rate_log: np.ndarray | None
    mask: np.ndarray


def _uniforms(seed: int, T: int, d: int) -> np.ndarray:
    # same per-channel streams sample_mask uses
    return np.column_stack([channel_rng(seed, j).random(T) for j in range(d)])


def _ogd_masks(X: np.ndarray, config: TriageConfig, seed: int, eta: float):
    T, d = X.shape
    u = _uniforms(seed, T, d)
    mask = np.zeros((T, d), dtype=bool)
    mask[0] = True
    rates = baselines.uniform_rates(config.budget, d)
    log = np.empty((n_windows(T, config.w), d))
    for i, (a, b) in enumerate(iter_windows(T, config.w)):
        log[i] = rates
        mask[a:b] |= u[a:b] < rates
        est = reconstruct(X[:b], mask[:b], config.recon)
        err = ((est[a:b] - X[a:b]) ** 2).mean(axis=0)
        rates = baselines.ogd_step(rates, err, eta, config.budget, config.r_min)
    return log, mask


def rate_log_for(method: str, X: np.ndarray, labels: np.ndarray, config: TriageConfig,
                 seed: int, measure_time: bool = False):
    """Per-window rates for ``method``; returns ``(rate_log, ms_per_window)``."""
    T, d = X.shape
    if method == "pca" or method == "joint":
        state = init_state(config, d)
        log = np.empty((n_windows(T, config.w), d))
        elapsed = 0.0
        for i, (a, b) in enumerate(iter_windows(T, config.w)):
            t0 = time.perf_counter()
            log[i], state = triage_step(state, X[a:b], config)
            elapsed += time.perf_counter() - t0
        ms = 1e3 * elapsed / len(log) if measure_time else math.nan
        return log, ms
    bcfg = baselines.BaselineConfig(
        method, budget=config.budget, r_min=config.r_min, w=config.w, lam=config.lam
    )
    t0 = time.perf_counter()
    log = baselines.stream_rates(X, bcfg, seed=seed, labels=labels, train_rows=split_point(T))
    ms = 1e3 * (time.perf_counter() - t0) / len(log) if measure_time else math.nan
    return log, ms


def run_cell(dataset: Dataset, method: str, config: TriageConfig, seed: int,
             delta: float = DEFAULT_DELTA, k_nn: int = 5, eta: float = 0.05,
             measure_time: bool = False) -> CellResult:
    """Triage, acquire, reconstruct and score one (method, budget, seed) cell."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    cut = split_point(dataset.n_samples)
    # sensor-side units: standardized with training statistics
    X = standardize(dataset.slice(0, cut), dataset).values
    T, d = X.shape
    rate_log, ms = None, math.nan
    if method == "full":
        mask = np.ones((T, d), dtype=bool)
    elif method == "sod":
        mask = send_on_delta(X, delta).mask
    elif method == "ogd":
        rate_log, mask = _ogd_masks(X, config, seed, eta)
    else:
        rate_log, ms = rate_log_for(method, X, dataset.labels, config, seed, measure_time)
        mask = sample_mask(rate_log, config.w, T, d, seed).mask
        if method == "joint":
            mask = send_on_delta(X, delta, candidates=mask).mask
    recon = reconstruct(X, mask, config.recon)
    f1 = detection_f1(dataset, recon, k_nn)
    commanded = math.nan if rate_log is None else float(expand_rates(rate_log, config.w, T).mean())
    return CellResult(f1, ms, commanded, float(mask.mean()), rate_log, mask)


@lru_cache(maxsize=8)
def _synthetic(spec: str, seed: int) -> Dataset:
    return parse_synthetic(spec, seed=seed)


def _resolve(source, seed: int) -> Dataset:
    return _synthetic(source, seed) if isinstance(source, str) else source


def _cell_job(args) -> EvalRow:
    source, method, budget, seed, config, measure_time, delta, k_nn, eta = args
    ds = _resolve(source, seed)
    cfg = replace(config, budget=budget)
    with threadpool_limits(1):
        res = run_cell(ds, method, cfg, seed, delta=delta, k_nn=k_nn, eta=eta,
                       measure_time=measure_time)
    return EvalRow(ds.name, method, float(budget), int(seed), cfg.recon,
                   res.f1, res.ms_per_window, res.commanded_bw, res.realized_bw)


def pareto_sweep(dataset, methods, budgets, seeds, config: TriageConfig | None = None,
                 jobs: int = 1, measure_time: bool = False, delta: float = DEFAULT_DELTA,
                 k_nn: int = 5, eta: float = 0.05) -> EvalReport:
    """Evaluate every (method, budget, seed) cell.

    ``dataset`` is a ``Dataset`` or a synthetic spec string; a spec is
    regenerated per seed. Rows come back in method, budget, seed order
    regardless of ``jobs``.
    """
    config = config or TriageConfig()
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    for b in budgets:
        replace(config, budget=b)  # validates feasibility up front
    cells = [(dataset, m, float(b), int(s), config, measure_time, delta, k_nn, eta)
             for m in methods for b in budgets for s in seeds]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_cell_job, cells))
    else:
        rows = [_cell_job(c) for c in cells]
    return EvalReport(rows)


# --- adaptivity ----------------------------------------------------------------


def top_set(scores, top_n: int) -> set[int]:
    order = np.argsort(-np.asarray(scores), kind="stable")
    return set(order[:top_n].tolist())


def reaction_time(importance_trace, onset_window: int, top_n: int = 5,
                  change_fraction: float = 0.2) -> int | None:
    """Windows after onset until the top-``top_n`` set has changed by more
    than ``change_fraction``.

    The reference set is taken from the last pre-onset window. "More than
    20% of 5" means at least two displaced channels. Returns None if the
    set never changes enough.
    """
    trace = np.asarray(importance_trace, dtype=np.float64)
    n, d = trace.shape
    if top_n > d:
        raise ValueError(f"top_n={top_n} exceeds channel count {d}")
    if not 1 <= onset_window < n:
        raise ValueError(f"onset window {onset_window} outside [1, {n})")
    needed = math.floor(change_fraction * top_n + 1e-9) + 1
    ref = top_set(trace[onset_window - 1], top_n)
    for tau in range(n - onset_window):
        if len(ref - top_set(trace[onset_window + tau], top_n)) >= needed:
            return tau
    return None


# --- accounting ----------------------------------------------------------------


def budget_audit(rate_log, mask, budget: float, w: int | None = None):
    """Return ``(commanded_mean, realized_fraction)``.

    The commanded mean weights each window by its number of rows when
    ``w`` is given, otherwise every window counts equally.
    """
    m = mask.mask if hasattr(mask, "mask") else np.asarray(mask, dtype=bool)
    rates = np.asarray(rate_log, dtype=np.float64)
    if rates.ndim == 1:
        rates = rates[None, :]
    if rates.shape[1] != m.shape[1]:
        raise ValueError("rate log and mask disagree on channel count")
    commanded = float(expand_rates(rates, w, m.shape[0]).mean()) if w else float(rates.mean())
    return commanded, float(m.mean())


class CostBenefit(NamedTuple):
    mb_per_hour_full: float
    mb_per_hour_saved: float
    mib_per_hour_full: float
    mib_per_hour_saved: float


def cost_benefit(budget: float, d: int, rate_hz: float, bytes_per_sample: float) -> CostBenefit:
    """Hourly data volume at full rate and the part saved at ``budget``.

    Reported in both 10^6-byte and 2^20-byte units.
    """
    if min(budget, d, rate_hz, bytes_per_sample) <= 0 or budget > 1:
        raise ValueError("inputs must be positive and budget at most 1")
    raw = d * rate_hz * bytes_per_sample * 3600.0
    saved = 1.0 - budget
    return CostBenefit(raw / 1e6, saved * raw / 1e6, raw / 2**20, saved * raw / 2**20)


# --- timing --------------------------------------------------------------------


def timing_probe(make_op: Callable[[int], Callable[[], object]], sizes,
                 repeats: int = 30, warmup: int = 3) -> dict[int, float]:
    """Median wall-clock milliseconds per call for each size.

    ``make_op(d)`` builds a zero-argument callable doing one unit of work
    (one window). BLAS is pinned to a single thread while measuring.
    """
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be non-decreasing")
    if repeats < 1:
        raise ValueError("repeats must be positive")
    samples: dict[int, list[float]] = {d: [] for d in sizes}
    with threadpool_limits(1):
        ops = {d: make_op(d) for d in sizes}
        for op in ops.values():
            for _ in range(warmup):
                op()
        # round-robin so slow drift in machine load hits every size alike
        for _ in range(repeats):
            for d, op in ops.items():
                t0 = time.perf_counter()
                op()
                samples[d].append(time.perf_counter() - t0)
    return {d: 1e3 * statistics.median(v) for d, v in samples.items()}


def triage_window_op(d: int, w: int = 50, k: int = 10, seed: int = 0, n_windows_: int = 8):
    """Factory for ``timing_probe``: one ``triage_step`` on a warmed-up model."""
    rng = np.random.default_rng(seed)
    config = TriageConfig(k=min(k, d), w=w)
    windows = rng.standard_normal((n_windows_, w, d))
    state = init_state(config, d)
    _, state = triage_step(state, windows[0], config)
    i = [0]

    def op():
        i[0] = (i[0] + 1) % n_windows_
        return triage_step(state, windows[i[0]], config)

    return op


def row_dicts(report: EvalReport) -> list[dict]:
    return [asdict(r) for r in report.rows]


__all__ = [
    "EvalReport", "EvalRow", "knn_f1", "detection_f1", "run_cell", "pareto_sweep",
    "reaction_time", "budget_audit", "cost_benefit", "CostBenefit", "timing_probe",
    "triage_window_op", "top_set",
]
