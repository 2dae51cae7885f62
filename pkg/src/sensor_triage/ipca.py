"""Incremental PCA over fixed-size windows.

The update is the mean-corrected sequential Karhunen-Loeve scheme: the
previous factorization (rows scaled by their singular values), the
centered new batch and a single mean-correction row are stacked and
re-factorized with a thin SVD, keeping the top ``k`` right singular
vectors. Memory is O(kd); no past windows are stored.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

# singular values below this fraction of the largest are treated as zero
SIGMA_CLAMP = 1e-12


@dataclass(frozen=True)
class PcaState:
    """Running incremental-PCA model.

    Attributes:
        k: Number of retained components.
        components: ``(k, d)`` matrix of orthonormal rows, or None before
            the first fit.
        singular_values: Length-``k`` non-increasing, non-negative vector.
        mean: Length-``d`` running mean of every sample seen so far.
        n_seen: Number of samples absorbed.
    """

    k: int
    components: np.ndarray | None = None
    singular_values: np.ndarray | None = None
    mean: np.ndarray | None = None
    n_seen: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")

    @property
    def n_features(self) -> int | None:
        return None if self.components is None else self.components.shape[1]

    @property
    def fitted(self) -> bool:
        return self.n_seen > 0

    @property
    def explained_variance(self) -> np.ndarray:
        """Per-component variance estimate ``sigma^2 / (n - 1)``."""
        if not self.fitted:
            raise ValueError("PcaState has not seen any data")
        return self.singular_values**2 / max(self.n_seen - 1, 1)


def _flip_signs(vt: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of every row made positive
    idx = np.argmax(np.abs(vt), axis=1)
    signs = np.sign(vt[np.arange(vt.shape[0]), idx])
    signs[signs == 0] = 1.0
    return vt * signs[:, None]


def ipca_partial_fit(state: PcaState, window) -> PcaState:
    """Absorb one window of samples and return the updated model.

    Args:
        state: Current model (possibly unfitted).
        window: ``(w, d)`` array of samples, one row per time step.

    Returns:
        A new ``PcaState``; ``state`` is left untouched.

    Raises:
        ValueError: On a shape mismatch, non-finite values, ``k > d`` or
            a first window with fewer than ``k`` rows.
    """
    X = np.asarray(window, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError(f"window must be a non-empty 2-D array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("window contains non-finite values")
    w, d = X.shape
    k = state.k
    if state.fitted:
        if d != state.n_features:
            raise ValueError(f"window has {d} columns, model was fitted on {state.n_features}")
    else:
        if k > d:
            raise ValueError(f"k={k} exceeds the number of channels d={d}")
        if w < k:
            raise ValueError(f"first window needs at least k={k} rows, got {w}")

    batch_mean = X.mean(axis=0)
    n_total = state.n_seen + w
    if not state.fitted:
        stacked = X - batch_mean
        new_mean = batch_mean
    else:
        correction = np.sqrt(state.n_seen * w / n_total) * (state.mean - batch_mean)
        stacked = np.vstack(
            (
                state.singular_values[:, None] * state.components,
                X - batch_mean,
                correction[None, :],
            )
        )
        new_mean = state.mean + (w / n_total) * (batch_mean - state.mean)

    _, s, vt = np.linalg.svd(stacked, full_matrices=False)
    # thin SVD may return fewer than k rows when the stack is short
    s = s[:k]
    vt = vt[:k]
    if s.shape[0] < k:
        raise ValueError(f"stacked system has rank budget {s.shape[0]} < k={k}")
    vt = _flip_signs(vt)
    s = s.copy()
    if s[0] > 0:
        s[s < SIGMA_CLAMP * s[0]] = 0.0
    return replace(state, components=vt, singular_values=s, mean=new_mean, n_seen=n_total)


def select_k_by_variance(spectrum, threshold: float) -> int:
    """Smallest ``k`` whose leading entries hold ``threshold`` of the total.

    ``spectrum`` holds squared singular values (or eigenvalues), sorted
    non-increasing.
    """
    spec = np.asarray(spectrum, dtype=np.float64)
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    if spec.ndim != 1 or spec.size == 0 or np.any(spec < 0):
        raise ValueError("spectrum must be a non-empty, non-negative vector")
    total = spec.sum()
    if total <= 0:
        raise ValueError("spectrum is all zero")
    frac = np.cumsum(spec) / total
    # tolerance guards exact boundaries such as 3/4 against rounding
    k = int(np.searchsorted(frac, threshold - 1e-12, side="left")) + 1
    return min(k, spec.size)
