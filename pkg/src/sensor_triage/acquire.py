"""Stochastic acquisition at commanded rates, gap reconstruction, send-on-delta."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels


@dataclass(frozen=True)
class AcquisitionMask:
    """Boolean ``(T, d)`` retention mask; True means the sample was sent."""

    mask: np.ndarray
    seed: int | None = None

    @property
    def shape(self):
        return self.mask.shape

    @property
    def realized_fraction(self) -> float:
        return float(self.mask.mean()) if self.mask.size else 0.0

    def channel_fraction(self) -> np.ndarray:
        return self.mask.mean(axis=0)


@dataclass(frozen=True)
class TriagedSeries:
    original: np.ndarray
    mask: AcquisitionMask
    reconstructed: np.ndarray
    rate_log: np.ndarray


def channel_rng(seed: int, channel: int) -> np.random.Generator:
    """Independent generator for one (seed, channel) pair."""
    return np.random.default_rng(np.random.SeedSequence([seed, channel]))


def expand_rates(rate_log, w: int, T: int) -> np.ndarray:
    """Repeat each window's rates over its rows, giving a ``(T, d)`` matrix."""
    rates = np.asarray(rate_log, dtype=np.float64)
    if rates.ndim == 1:
        rates = rates[None, :]
    need = math.ceil(T / w)
    if rates.shape[0] < need:
        raise ValueError(f"rate log has {rates.shape[0]} windows, {need} needed for T={T}, w={w}")
    return np.repeat(rates, w, axis=0)[:T]


def sample_mask(rate_log, w: int, T: int, d: int, seed: int, channels=None) -> AcquisitionMask:
    """Draw an independent Bernoulli keep/drop per sample.

    Channel ``j`` uses its own generator seeded from ``(seed, j)`` and
    draws in time order, so any subset of channels (``channels``) comes
    out identical to the corresponding columns of a full draw. Row 0 is
    always kept.
    """
    per_row = expand_rates(rate_log, w, T)
    if per_row.shape[1] != d:
        raise ValueError(f"rate log has {per_row.shape[1]} channels, expected {d}")
    cols = range(d) if channels is None else channels
    mask = np.zeros((T, d), dtype=bool)
    for j in cols:
        u = channel_rng(seed, j).random(T)
        mask[:, j] = u < per_row[:, j]
    if T:
        mask[0, list(cols)] = True
    return AcquisitionMask(mask, seed)


def reconstruct(original, mask, method: str = "linear") -> np.ndarray:
    """Fill dropped samples from the retained ones.

    ``linear`` interpolates between retained neighbours, ``forward_fill``
    holds the last retained value, ``zero`` writes 0. A leading gap is
    back-filled from the first retained value (except for ``zero``).
    """
    X = np.ascontiguousarray(original, dtype=np.float64)
    m = mask.mask if isinstance(mask, AcquisitionMask) else np.asarray(mask, dtype=bool)
    if m.shape != X.shape:
        raise ValueError(f"mask shape {m.shape} does not match data shape {X.shape}")
    if X.shape[0] == 0:
        return X.copy()
    empty = np.flatnonzero(~m.any(axis=0))
    if empty.size:
        raise ValueError(f"channels {empty.tolist()} have no retained samples")
    m = np.ascontiguousarray(m)
    if method == "zero":
        return np.where(m, X, 0.0)
    if method == "forward_fill":
        return kernels.forward_fill(X, m)
    if method == "linear":
        return kernels.linear_fill(X, m)
    raise ValueError(f"unknown reconstruction method {method!r}")


def send_on_delta(series, delta=0.1, candidates=None) -> AcquisitionMask:
    """Transmit a sample only when it moved more than ``delta`` since the last one sent.

    ``delta`` is a scalar or per-channel vector. ``candidates`` restricts
    which samples may be sent at all (joint spatial-temporal mode).
    """
    X = np.ascontiguousarray(series, dtype=np.float64)
    T, d = X.shape
    delta = np.ascontiguousarray(np.broadcast_to(np.asarray(delta, dtype=np.float64), (d,)))
    if np.any(delta < 0):
        raise ValueError("delta must be non-negative")
    if candidates is None:
        cand = np.ones((T, d), dtype=bool)
    else:
        cand = candidates.mask if isinstance(candidates, AcquisitionMask) else candidates
        cand = np.ascontiguousarray(cand, dtype=bool)
    return AcquisitionMask(kernels.send_on_delta(X, delta, cand))


def acquire(original, rate_log, w: int, seed: int, method: str = "linear") -> TriagedSeries:
    X = np.asarray(original, dtype=np.float64)
    T, d = X.shape
    mask = sample_mask(rate_log, w, T, d, seed)
    return TriagedSeries(X, mask, reconstruct(X, mask, method), np.asarray(rate_log))
