"""Datasets: CSV ingestion, standardization, synthetic generators, perturbations."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

MANIFEST_ENV = "SENSOR_TRIAGE_MANIFEST"


class DataError(ValueError):
    """Malformed or missing input data."""


@dataclass(frozen=True)
class Dataset:
    values: np.ndarray
    labels: np.ndarray
    channel_names: tuple[str, ...]
    sample_rate_hz: float = 1.0
    name: str = "dataset"

    def __post_init__(self):
        if self.values.ndim != 2:
            raise DataError(f"values must be 2-D, got shape {self.values.shape}")
        if self.labels.shape != (self.values.shape[0],):
            raise DataError(
                f"labels length {self.labels.shape} does not match T={self.values.shape[0]}"
            )
        if len(self.channel_names) != self.values.shape[1]:
            raise DataError("one channel name per column required")
        if self.sample_rate_hz <= 0:
            raise DataError("sample_rate_hz must be positive")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def slice(self, start: int, stop: int) -> "Dataset":
        return replace(self, values=self.values[start:stop], labels=self.labels[start:stop])

    def with_values(self, values: np.ndarray) -> "Dataset":
        return replace(self, values=values)


def _default_names(d: int, prefix: str = "ch") -> tuple[str, ...]:
    return tuple(f"{prefix}{j}" for j in range(d))


# --- ingestion -----------------------------------------------------------------


def load_csv(path, label_column: str | None = "label", sample_rate_hz: float = 1.0) -> Dataset:
    """Read a header-first numeric CSV.

    Every column except ``label_column`` becomes a channel, in header
    order. Without a label column the labels are all zero.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        label_idx = header.index(label_column) if label_column in header else None
        rows, labels = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}"
                )
            vals = []
            for col, cell in enumerate(row):
                try:
                    x = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}:{line_no}: column {header[col]!r} is not numeric: {cell!r}"
                    ) from None
                if col == label_idx:
                    if not x.is_integer():
                        raise DataError(f"{path}:{line_no}: label {cell!r} is not an integer")
                    labels.append(int(x))
                else:
                    vals.append(x)
            rows.append(vals)
    names = tuple(h for i, h in enumerate(header) if i != label_idx)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise DataError(f"{path}:{bad[0] + 2}: non-finite value in column {names[bad[1]]!r}")
    y = np.array(labels, dtype=np.int64) if label_idx is not None else np.zeros(len(rows), np.int64)
    return Dataset(values, y, names, sample_rate_hz, name=path.stem)


def save_csv(dataset: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.channel_names) + ["label"])
        for row, y in zip(dataset.values, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(y)])


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    path: Path
    label_column: str | None = "label"
    sample_rate_hz: float = 1.0


def read_manifest(path=None) -> dict[str, ManifestEntry]:
    """Parse a dataset manifest.

    One dataset per line: ``name = path[, label_column[, sample_rate_hz]]``.
    Relative paths resolve against the manifest's directory. Defaults to
    the file named by ``$SENSOR_TRIAGE_MANIFEST``.
    """
    path = path or os.environ.get(MANIFEST_ENV)
    if not path:
        return {}
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest {path} does not exist")
    entries = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'name = path[, label[, hz]]'")
        name, rest = (p.strip() for p in line.split("=", 1))
        parts = [p.strip() for p in rest.split(",")]
        file_path = Path(parts[0])
        if not file_path.is_absolute():
            file_path = path.parent / file_path
        label = parts[1] if len(parts) > 1 and parts[1] else "label"
        if label.lower() == "none":
            label = None
        try:
            hz = float(parts[2]) if len(parts) > 2 else 1.0
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad sample rate {parts[2]!r}") from None
        entries[name] = ManifestEntry(name, file_path, label, hz)
    return entries


def load_manifest_dataset(name: str, manifest=None) -> Dataset:
    entries = read_manifest(manifest)
    if name not in entries:
        raise DataError(f"dataset {name!r} not found in manifest")
    e = entries[name]
    ds = load_csv(e.path, e.label_column, e.sample_rate_hz)
    return replace(ds, name=name)


# --- preprocessing ---------------------------------------------------------------


def standardize(train: Dataset, apply_to: Dataset) -> Dataset:
    """Scale ``apply_to`` with the per-channel mean/std of ``train``.

    Channels that are constant in ``train`` map to zero.
    """
    if train.n_channels != apply_to.n_channels:
        raise DataError(
            f"channel count mismatch: train has {train.n_channels}, target {apply_to.n_channels}"
        )
    mu = train.values.mean(axis=0)
    sd = train.values.std(axis=0)
    scale = np.where(sd > 0, sd, 1.0)
    z = (apply_to.values - mu) / scale
    z[:, sd == 0] = 0.0
    return apply_to.with_values(z)


# --- synthetic generators -------------------------------------------------------


def gen_correlated_trio(rho: float, sigma2: float = 1.0, n: int = 20000, seed: int = 0) -> Dataset:
    """Channels a, b with correlation ``rho`` plus an independent channel c.

    All three have variance ``sigma2``.
    """
    if not -1.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (-1, 1), got {rho}")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    cov = sigma2 * np.array([[1.0, rho, 0.0], [rho, 1.0, 0.0], [0.0, 0.0, 1.0]])
    L = np.linalg.cholesky(cov)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 3)) @ L.T
    return Dataset(X, np.zeros(n, np.int64), ("a", "b", "c"), name=f"trio_rho{rho}")


GROUP_A = slice(0, 10)
GROUP_B = slice(10, 20)
GROUP_C = slice(20, 40)


def gen_group_dataset(
    rho: float,
    n: int = 10000,
    fault_fraction: float = 0.2,
    seed: int = 0,
    shift: float = 1.5,
    split: float = 0.7,
) -> Dataset:
    """40 unit-variance channels in three groups plus one fault segment.

    Group A (0-9) is equicorrelated with ``rho``, group B (10-19) is
    independent, group C (20-39) is noise. During the fault, A and B shift
    by ``shift`` standard deviations. The segment straddles the ``split``
    point in proportion, so a chronological split keeps faults on both
    sides.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    if not 0.0 < fault_fraction < 1.0:
        raise ValueError("fault_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 40))
    common = rng.standard_normal((n, 1))
    X[:, GROUP_A] = math.sqrt(rho) * common + math.sqrt(1.0 - rho) * X[:, GROUP_A]
    n_fault = int(round(fault_fraction * n))
    start = int(round(split * n - split * n_fault))
    start = min(max(start, 0), n - n_fault)
    labels = np.zeros(n, np.int64)
    labels[start:start + n_fault] = 1
    X[start:start + n_fault, 0:20] += shift
    names = (
        tuple(f"A{j}" for j in range(10))
        + tuple(f"B{j}" for j in range(10))
        + tuple(f"C{j}" for j in range(20))
    )
    return Dataset(X, labels, names, name=f"groups_rho{rho}")


def gen_regime_change(
    d: int = 20,
    onset: int = 500,
    n: int = 1500,
    seed: int = 0,
    group_size: int = 5,
    amplitude: float = 3.0,
    fault_amplitude: float | None = None,
) -> Dataset:
    """Variance moves from channel group G1 to a disjoint group G2 at ``onset``.

    G1 is channels ``[0, group_size)`` with std ``amplitude`` before the
    onset; G2 is the next ``group_size`` channels with std
    ``fault_amplitude`` afterwards. All other channel-time cells are
    unit-variance noise. Labels are 1 from the onset on.

    ``fault_amplitude`` defaults to ten times ``amplitude`` so a single
    post-onset window outweighs the pre-onset history held by a
    cumulative PCA model; adaptation speed is then set by the smoothing.
    """
    if not 0 <= onset < n:
        raise ValueError(f"onset {onset} outside [0, {n})")
    if d < 2 * group_size:
        raise ValueError(f"d={d} too small for two groups of {group_size}")
    fault_amplitude = 10.0 * amplitude if fault_amplitude is None else fault_amplitude
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    X[:onset, :group_size] *= amplitude
    X[onset:, group_size:2 * group_size] *= fault_amplitude
    labels = np.zeros(n, np.int64)
    labels[onset:] = 1
    return Dataset(X, labels, _default_names(d), name="regime_change")


def gen_sinusoids(n: int = 2000, d: int = 8, seed: int = 0, noise: float = 0.0) -> Dataset:
    """Smooth sinusoids with random periods (20-200 samples) and phases."""
    rng = np.random.default_rng(seed)
    t = np.arange(n)[:, None]
    periods = rng.uniform(20.0, 200.0, d)
    phases = rng.uniform(0.0, 2 * np.pi, d)
    amps = rng.uniform(0.5, 2.0, d)
    X = amps * np.sin(2 * np.pi * t / periods + phases) + 1.0
    if noise:
        X = X + noise * rng.standard_normal(X.shape)
    return Dataset(X, np.zeros(n, np.int64), _default_names(d), name="sinusoids")


SYNTHETIC = {
    "trio": gen_correlated_trio,
    "groups": gen_group_dataset,
    "regime": gen_regime_change,
    "sines": gen_sinusoids,
}


def parse_synthetic(spec: str, seed: int | None = None) -> Dataset:
    """Build a synthetic dataset from ``name:key=value,...``.

    Example: ``groups:rho=0.6,n=5000``.
    """
    name, _, args = spec.partition(":")
    name = name.strip()
    if name not in SYNTHETIC:
        raise DataError(f"unknown synthetic dataset {name!r}; choose from {sorted(SYNTHETIC)}")
    kwargs = {}
    for item in filter(None, (a.strip() for a in args.split(","))):
        key, sep, raw = item.partition("=")
        if not sep:
            raise DataError(f"bad synthetic argument {item!r}; expected key=value")
        key = key.strip()
        try:
            val = int(raw) if raw.strip().lstrip("-").isdigit() else float(raw)
        except ValueError:
            raise DataError(f"synthetic argument {key} must be numeric, got {raw!r}") from None
        kwargs[key] = val
    if seed is not None and "seed" not in kwargs:
        kwargs["seed"] = seed
    try:
        ds = SYNTHETIC[name](**kwargs)
    except TypeError as exc:
        raise DataError(f"bad arguments for {name}: {exc}") from None
    return replace(ds, name=spec)


# --- deployment perturbations ---------------------------------------------------

PERTURBATION_KINDS = ("jitter", "packet_loss", "noise", "clock_drift", "combined")


@dataclass(frozen=True)
class Perturbation:
    """Deployment perturbation; magnitudes in samples or standardized units."""

    kind: str
    jitter_max: int = 5
    loss_fraction: float = 0.1
    noise_sigma: float = 0.1
    drift_max: int = 3
    window: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ValueError(f"kind must be one of {PERTURBATION_KINDS}, got {self.kind!r}")
        if not 0 <= self.jitter_max <= 50 or not 0 <= self.drift_max <= 50:
            raise ValueError("shift magnitudes must lie in [0, 50] samples")
        if not 0.0 <= self.loss_fraction < 1.0:
            raise ValueError("loss_fraction must lie in [0, 1)")
        if not 0.0 <= self.noise_sigma <= 10.0:
            raise ValueError("noise_sigma must lie in [0, 10]")
        if self.window < 1:
            raise ValueError("window must be positive")


def _shift_channels(X: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    # positive shift delays a channel; edges hold the nearest value
    T = X.shape[0]
    t = np.arange(T)[:, None]
    src = np.clip(t - shifts[None, :], 0, T - 1)
    return np.take_along_axis(X, src, axis=0)


def _drop_windows(X: np.ndarray, fraction: float, w: int, rng) -> tuple[np.ndarray, np.ndarray]:
    T = X.shape[0]
    nw = math.ceil(T / w)
    n_drop = int(round(fraction * nw))
    # window 0 has no last-known value to hold
    dropped = np.sort(rng.choice(np.arange(1, nw), size=min(n_drop, nw - 1), replace=False))
    out = X.copy()
    for i in dropped:
        a, b = i * w, min((i + 1) * w, T)
        out[a:b] = out[a - 1]
    return out, dropped


def perturb(dataset: Dataset, p: Perturbation) -> Dataset:
    """Apply a deployment perturbation; combined runs jitter, loss, noise, drift in order."""
    rng = np.random.default_rng(p.seed)
    X = dataset.values
    d = X.shape[1]
    kinds = ("jitter", "packet_loss", "noise", "clock_drift") if p.kind == "combined" else (p.kind,)
    for kind in kinds:
        if kind == "jitter" and p.jitter_max > 0:
            X = _shift_channels(X, rng.integers(-p.jitter_max, p.jitter_max + 1, d))
        elif kind == "packet_loss" and p.loss_fraction > 0:
            X, _ = _drop_windows(X, p.loss_fraction, p.window, rng)
        elif kind == "noise" and p.noise_sigma > 0:
            X = X + p.noise_sigma * rng.standard_normal(X.shape)
        elif kind == "clock_drift" and p.drift_max > 0:
            X = _shift_channels(X, rng.integers(-p.drift_max, p.drift_max + 1, d))
    if X is dataset.values:
        X = X.copy()
    return dataset.with_values(X)
