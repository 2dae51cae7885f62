"""Turn PCA loadings into per-channel sampling rates under a bandwidth budget.

One triage decision per window::

    partial_fit -> importance -> smooth -> sharpen -> allocate -> clip

Scores are L1-normalized before smoothing so that the rate allocation is
scale free. Rates are plain float arrays of length ``d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .ipca import PcaState, ipca_partial_fit, select_k_by_variance

SCORERS = ("weighted", "unweighted", "hybrid", "ensemble")
RECON_METHODS = ("forward_fill", "linear", "zero")


class InfeasibleBudgetError(ValueError):
    """Budget does not exceed the per-channel rate floor."""


class DegenerateWindowError(ValueError):
    """A window carries no usable importance signal."""


@dataclass(frozen=True)
class TriageConfig:
    """Hyperparameters of one triage stream.

    ``lam`` is the forgetting factor; 1.0 means the cumulative running
    mean of the per-window scores. ``ensemble_ks`` is only used by the
    ``ensemble`` scorer. ``variance_threshold``, when set, picks ``k``
    per window from the tracked spectrum instead of using a fixed value.
    """

    budget: float = 0.5
    k: int = 10
    w: int = 50
    lam: float = 1.0
    r_min: float = 0.05
    alpha: float = 1.0
    gamma: float = 1.0
    scorer: str = "weighted"
    recon: str = "linear"
    ensemble_ks: tuple[int, ...] = (3, 5, 10)
    variance_threshold: float | None = None

    def __post_init__(self):
        if not 0.0 < self.budget <= 1.0:
            raise ValueError(f"budget must lie in (0, 1], got {self.budget}")
        if not 0.0 <= self.r_min < 1.0:
            raise ValueError(f"r_min must lie in [0, 1), got {self.r_min}")
        if self.budget <= self.r_min:
            raise InfeasibleBudgetError(
                f"budget {self.budget} must exceed r_min {self.r_min}"
            )
        if self.k < 1 or self.w < 1:
            raise ValueError("k and w must be positive")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lam must lie in (0, 1], got {self.lam}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.gamma < 1.0:
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")
        if self.scorer not in SCORERS:
            raise ValueError(f"scorer must be one of {SCORERS}, got {self.scorer!r}")
        if self.recon not in RECON_METHODS:
            raise ValueError(f"recon must be one of {RECON_METHODS}, got {self.recon!r}")
        if self.scorer == "ensemble":
            ks = tuple(self.ensemble_ks)
            if len(ks) < 2 or len(set(ks)) != len(ks) or min(ks) < 1:
                raise ValueError("ensemble_ks needs at least two distinct positive values")
        if self.variance_threshold is not None and not 0.0 < self.variance_threshold <= 1.0:
            raise ValueError("variance_threshold must lie in (0, 1]")

    def to_text(self) -> str:
        """Render as ``key = value`` lines (the preset file format)."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif v is None:
                v = "none"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_FIELD_TYPES = {
    "budget": float, "k": int, "w": int, "lam": float, "r_min": float,
    "alpha": float, "gamma": float, "scorer": str, "recon": str,
}


def _coerce(key: str, raw: str):
    if key == "ensemble_ks":
        return tuple(int(x) for x in raw.split(",") if x.strip())
    if key == "variance_threshold":
        return None if raw.lower() in ("none", "") else float(raw)
    return _FIELD_TYPES[key](raw)


def parse_config_text(text: str, base: TriageConfig | None = None) -> TriageConfig:
    """Parse ``key = value`` lines into a config; ``#`` starts a comment."""
    values = {}
    known = {f.name for f in fields(TriageConfig)}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(key, raw)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key}: {raw!r}") from exc
    return replace(base or TriageConfig(), **values)


def load_config(path: str | Path, base: TriageConfig | None = None) -> TriageConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), base)


def available_presets() -> list[str]:
    root = resources.files("sensor_triage") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str, base: TriageConfig | None = None) -> TriageConfig:
    """Load a shipped per-dataset preset such as ``tep`` or ``skab``."""
    res = resources.files("sensor_triage") / "presets" / f"{name.lower()}.cfg"
    if not res.is_file():
        raise KeyError(f"no preset named {name!r}; have {available_presets()}")
    return parse_config_text(res.read_text(encoding="utf-8"), base)


# --- scoring -----------------------------------------------------------------


def _l1(v: np.ndarray) -> np.ndarray | None:
    total = v.sum()
    return None if total <= 0 else v / total


def importance_pca(components, singular_values, mode: str = "weighted") -> np.ndarray:
    """Per-channel loading mass ``sum_i sigma_i V_ij^2`` (or without sigma)."""
    V = np.asarray(components, dtype=np.float64)
    sq = V * V
    if mode == "unweighted":
        return sq.sum(axis=0)
    if mode != "weighted":
        raise ValueError(f"mode must be 'weighted' or 'unweighted', got {mode!r}")
    sigma = np.asarray(singular_values, dtype=np.float64)
    if sigma.shape != (V.shape[0],):
        raise ValueError(f"{sigma.shape[0] if sigma.ndim else 0} singular values for {V.shape[0]} components")
    return sigma @ sq


def importance_hybrid(pca_scores, channel_variances, alpha: float) -> np.ndarray:
    """Blend normalized PCA scores with per-channel variance fractions.

    If one side carries no mass the other is used alone; if both are zero
    the window is degenerate.
    """
    p = _l1(np.asarray(pca_scores, dtype=np.float64))
    v = np.asarray(channel_variances, dtype=np.float64)
    if np.any(v < 0):
        raise ValueError("channel variances must be non-negative")
    v = _l1(v)
    if p is None and v is None:
        raise DegenerateWindowError("both PCA scores and variances are zero")
    if p is None:
        return v
    if v is None:
        return p
    return alpha * p + (1.0 - alpha) * v


def ensemble_importance(states) -> np.ndarray:
    """Equal-weight mean of the normalized weighted scores of several models."""
    states = list(states)
    if len(states) < 2:
        raise ValueError("ensemble needs at least two PCA models")
    dims = {s.n_features for s in states}
    if len(dims) != 1:
        raise ValueError(f"ensemble members disagree on channel count: {sorted(dims)}")
    parts = []
    for s in states:
        p = _l1(importance_pca(s.components, s.singular_values, "weighted"))
        if p is not None:
            parts.append(p)
    if not parts:
        raise DegenerateWindowError("every ensemble member has zero importance")
    return np.mean(parts, axis=0)


def smooth_scores(prev, current, lam: float, window_index: int) -> np.ndarray:
    """Fold one window's normalized scores into the running estimate.

    ``window_index`` counts the windows already folded into ``prev``. For
    ``lam < 1`` this is an EMA; ``lam == 1`` gives the cumulative mean.
    """
    cur = np.asarray(current, dtype=np.float64)
    if prev is None:
        return cur.copy()
    prev = np.asarray(prev, dtype=np.float64)
    if lam >= 1.0:
        return prev + (cur - prev) / (window_index + 1)
    return lam * prev + (1.0 - lam) * cur


def sharpen(scores, gamma: float) -> np.ndarray:
    """Power-law sharpening ``s^gamma / sum(s^gamma)``; uniform if all zero."""
    s = np.asarray(scores, dtype=np.float64)
    if np.any(s < 0):
        raise ValueError("scores must be non-negative")
    if gamma != 1.0:
        # rescale first so large gamma does not underflow
        top = s.max(initial=0.0)
        if top > 0:
            s = (s / top) ** gamma
    total = s.sum()
    if total <= 0:
        return np.full(s.shape, 1.0 / s.size)
    return s / total


def allocate_rates(sharpened, budget: float, r_min: float, clip: bool = True) -> np.ndarray:
    """Split ``budget * d`` over channels above a common floor ``r_min``.

    Pre-clip rates average exactly ``budget``. Clipping caps rates at 1,
    which can only lower the mean. A full budget keeps every sample.
    """
    p = np.asarray(sharpened, dtype=np.float64)
    d = p.size
    if budget <= r_min:
        raise InfeasibleBudgetError(f"budget {budget} must exceed r_min {r_min}")
    if not 0.0 < budget <= 1.0:
        raise ValueError(f"budget must lie in (0, 1], got {budget}")
    rates = r_min + p * (budget * d - r_min * d)
    if not clip:
        return rates
    if budget >= 1.0:
        return np.ones(d)
    return np.clip(rates, r_min, 1.0)


# --- streaming state machine -------------------------------------------------


@dataclass(frozen=True)
class TriageState:
    """Streaming triage state.

    ``pca`` is a single ``PcaState`` or, for the ensemble scorer, a tuple
    of them. ``n_scored`` counts windows folded into ``smoothed_scores``
    (degenerate windows are skipped).
    """

    pca: PcaState | tuple[PcaState, ...]
    smoothed_scores: np.ndarray | None = None
    window_index: int = 0
    n_scored: int = 0
    last_raw: np.ndarray | None = field(default=None, repr=False)


def _tracked_k(config: TriageConfig, d: int) -> int:
    if config.variance_threshold is not None:
        return min(d, config.w)
    return min(config.k, d)


def init_state(config: TriageConfig, d: int) -> TriageState:
    if config.scorer == "ensemble":
        pca = tuple(PcaState(min(k, d)) for k in config.ensemble_ks)
        return TriageState(pca=pca)
    return TriageState(pca=PcaState(_tracked_k(config, d)))


def _raw_scores(pca, window: np.ndarray, config: TriageConfig) -> np.ndarray | None:
    if config.scorer == "ensemble":
        try:
            return ensemble_importance(pca)
        except DegenerateWindowError:
            return None
    V, sigma = pca.components, pca.singular_values
    if config.variance_threshold is not None and sigma[0] > 0:
        k_eff = select_k_by_variance(sigma**2, config.variance_threshold)
        V, sigma = V[:k_eff], sigma[:k_eff]
    if config.scorer == "hybrid":
        s = importance_pca(V, sigma, "weighted")
        try:
            return importance_hybrid(s, window.var(axis=0), config.alpha)
        except DegenerateWindowError:
            return None
    return _l1(importance_pca(V, sigma, config.scorer))


def triage_step(state: TriageState, window, config: TriageConfig):
    """Process one window: update PCA, rescore, smooth and allocate.

    Returns:
        ``(rates, new_state)`` where ``rates`` is a length-``d`` array in
        ``[r_min, 1]`` whose mean never exceeds the budget.
    """
    X = np.asarray(window, dtype=np.float64)
    if config.scorer == "ensemble":
        pca = tuple(ipca_partial_fit(p, X) for p in state.pca)
    else:
        pca = ipca_partial_fit(state.pca, X)

    raw = _raw_scores(pca, X, config)
    smoothed, n_scored = state.smoothed_scores, state.n_scored
    if raw is not None:
        smoothed = smooth_scores(smoothed, raw, config.lam, n_scored)
        n_scored += 1
    target = smoothed if smoothed is not None else np.zeros(X.shape[1])
    rates = allocate_rates(sharpen(target, config.gamma), config.budget, config.r_min)
    new_state = TriageState(
        pca=pca,
        smoothed_scores=smoothed,
        window_index=state.window_index + 1,
        n_scored=n_scored,
        last_raw=raw,
    )
    return rates, new_state


def iter_windows(n_rows: int, w: int):
    """Yield ``(start, stop)`` bounds of consecutive non-overlapping windows."""
    for start in range(0, n_rows, w):
        yield start, min(start + w, n_rows)


def n_windows(n_rows: int, w: int) -> int:
    return math.ceil(n_rows / w)


def run_triage(values, config: TriageConfig):
    """Stream a ``(T, d)`` matrix through triage.

    Returns:
        ``(rate_log, score_log)``: per-window rates ``(n_windows, d)`` and
        the smoothed importance after each window (zeros until the first
        scorable window).
    """
    X = np.asarray(values, dtype=np.float64)
    T, d = X.shape
    state = init_state(config, d)
    rate_log = np.empty((n_windows(T, config.w), d))
    score_log = np.zeros_like(rate_log)
    for i, (a, b) in enumerate(iter_windows(T, config.w)):
        rate_log[i], state = triage_step(state, X[a:b], config)
        if state.smoothed_scores is not None:
            score_log[i] = state.smoothed_scores
    return rate_log, score_log
