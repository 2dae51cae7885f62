"""Comparison allocators: uniform, variance, threshold, random dropout,
mutual information (supervised) and online gradient descent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .triage import InfeasibleBudgetError, allocate_rates, smooth_scores

METHODS = ("uniform", "variance", "threshold", "random", "mi", "ogd")


@dataclass(frozen=True)
class BaselineConfig:
    method: str
    budget: float = 0.5
    r_min: float = 0.05
    w: int = 50
    lam: float = 1.0
    smooth: bool = True
    bins: int = 10
    eta: float = 0.05

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 < self.budget <= 1.0:
            raise ValueError(f"budget must lie in (0, 1], got {self.budget}")
        if not 0.0 <= self.r_min < 1.0:
            raise ValueError(f"r_min must lie in [0, 1), got {self.r_min}")
        if self.budget <= self.r_min:
            raise InfeasibleBudgetError(f"budget {self.budget} must exceed r_min {self.r_min}")
        if self.w < 1 or self.bins < 2 or self.eta < 0 or not 0 < self.lam <= 1:
            raise ValueError("invalid window, bins, eta or lam")


def uniform_rates(budget: float, d: int) -> np.ndarray:
    if not 0.0 < budget <= 1.0:
        raise ValueError(f"budget must lie in (0, 1], got {budget}")
    return np.full(d, float(budget))


def _proportional(scores: np.ndarray, budget: float, r_min: float) -> np.ndarray:
    total = scores.sum()
    if total <= 0:
        return uniform_rates(budget, scores.size)
    return allocate_rates(scores / total, budget, r_min)


def variance_rates(window, budget: float, r_min: float, variances=None) -> np.ndarray:
    """Rates proportional to per-channel variance.

    ``variances`` overrides the window statistic (used when smoothing
    across windows).
    """
    v = np.asarray(window, dtype=np.float64).var(axis=0) if variances is None else variances
    return _proportional(np.asarray(v, dtype=np.float64), budget, r_min)


def threshold_rates(window, budget: float, r_min: float, variances=None) -> np.ndarray:
    """Binary active/inactive split at the ``1 - budget`` variance quantile.

    Channels at or above the quantile share what is left of the budget
    after the inactive channels take ``r_min`` each; tied channels are
    activated together.
    """
    v = np.asarray(window, dtype=np.float64).var(axis=0) if variances is None else np.asarray(variances)
    d = v.size
    if budget >= 1.0:
        return np.ones(d)
    cut = np.quantile(v, 1.0 - budget)
    active = v >= cut
    n_active = int(active.sum())
    share = (budget * d - r_min * (d - n_active)) / n_active
    rates = np.where(active, min(share, 1.0), r_min)
    # only reachable through rounding; keeps the mean within budget
    mean = rates.mean()
    if mean > budget:
        rates = r_min + (rates - r_min) * (budget - r_min) / (mean - r_min)
    return rates


def random_dropout_mask(budget: float, d: int, seed: int) -> np.ndarray:
    """Keep each whole channel with probability ``budget`` (rate 1 or 0)."""
    if not 0.0 < budget <= 1.0:
        raise ValueError(f"budget must lie in (0, 1], got {budget}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    return (rng.random(d) < budget).astype(np.float64)


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def mutual_information(x: np.ndarray, labels: np.ndarray, bins: int = 10) -> float:
    """Plug-in MI (nats) between an equal-width-binned channel and labels."""
    lo, hi = x.min(), x.max()
    if hi > lo:
        b = np.minimum(((x - lo) / (hi - lo) * bins).astype(np.int64), bins - 1)
    else:
        b = np.zeros(x.size, np.int64)
    classes, y = np.unique(labels, return_inverse=True)
    joint = np.zeros((bins, classes.size))
    np.add.at(joint, (b, y), 1)
    return max(_entropy(joint.sum(1)) + _entropy(joint.sum(0)) - _entropy(joint.ravel()), 0.0)


def mutual_info_rates(data, labels, budget: float, r_min: float, bins: int = 10) -> np.ndarray:
    X = np.asarray(data, dtype=np.float64)
    y = np.asarray(labels)
    if np.unique(y).size < 2:
        raise ValueError("mutual information needs at least two label classes")
    scores = np.array([mutual_information(X[:, j], y, bins) for j in range(X.shape[1])])
    return _proportional(scores, budget, r_min)


def project_budget(rates, budget: float, r_min: float) -> np.ndarray:
    """Clip to ``[r_min, 1]`` and rescale the above-floor mass to mean ``budget``.

    Channels pushed past 1 by the rescale are capped and the remainder is
    redistributed over the rest.
    """
    if budget <= r_min:
        raise InfeasibleBudgetError(f"budget {budget} must exceed r_min {r_min}")
    r = np.clip(np.asarray(rates, dtype=np.float64), r_min, 1.0)
    d = r.size
    if budget >= 1.0:
        return np.ones(d)
    capped = np.zeros(d, dtype=bool)
    for _ in range(d + 1):
        free = ~capped
        target = budget * d - capped.sum() - r_min * free.sum()
        excess = r[free] - r_min
        total = excess.sum()
        if total <= 0:
            r[free] = r_min + target / free.sum()
        else:
            r[free] = r_min + excess * (target / total)
        over = free & (r > 1.0)
        if not over.any():
            break
        r[over] = 1.0
        capped |= over
    return r


def ogd_step(rates, per_channel_error, eta: float, budget: float, r_min: float) -> np.ndarray:
    """One ascent step toward channels with high reconstruction error."""
    err = np.asarray(per_channel_error, dtype=np.float64)
    if np.any(err < 0):
        raise ValueError("per-channel error must be non-negative")
    return project_budget(np.asarray(rates, dtype=np.float64) + eta * err, budget, r_min)


def stream_rates(values, config: BaselineConfig, seed: int = 0, labels=None, train_rows=None):
    """Per-window rate log for an unsupervised or label-fitted baseline.

    ``mi`` is fitted once on the first ``train_rows`` samples and held
    fixed; ``ogd`` needs the acquisition loop and lives in the evaluation
    module.
    """
    X = np.asarray(values, dtype=np.float64)
    T, d = X.shape
    nw = -(-T // config.w)
    m = config.method
    if m == "uniform":
        return np.tile(uniform_rates(config.budget, d), (nw, 1))
    if m == "random":
        return np.tile(random_dropout_mask(config.budget, d, seed), (nw, 1))
    if m == "mi":
        rows = T if train_rows is None else train_rows
        r = mutual_info_rates(X[:rows], np.asarray(labels)[:rows], config.budget, config.r_min, config.bins)
        return np.tile(r, (nw, 1))
    if m not in ("variance", "threshold"):
        raise ValueError(f"{m!r} cannot be streamed without the acquisition loop")
    alloc = variance_rates if m == "variance" else threshold_rates
    out = np.empty((nw, d))
    smoothed, n_scored = None, 0
    for i in range(nw):
        v = X[i * config.w:(i + 1) * config.w].var(axis=0)
        if config.smooth:
            total = v.sum()
            if total > 0:
                smoothed = smooth_scores(smoothed, v / total, config.lam, n_scored)
                n_scored += 1
            v = smoothed if smoothed is not None else v
        out[i] = alloc(None, config.budget, config.r_min, variances=v)
    return out
