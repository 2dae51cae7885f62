"""Executable versions of the method's formal guarantees.

Each check returns one or more ``CheckResult`` lines with the measured
value next to the bound it was held to. Stochastic checks average over
the supplied seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import baselines
from .acquire import reconstruct
from .data import gen_correlated_trio
from .ipca import PcaState, ipca_partial_fit
from .triage import (
    TriageConfig,
    allocate_rates,
    importance_pca,
    init_state,
    sharpen,
    smooth_scores,
    triage_step,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<34} {self.detail}"


# --- budget -------------------------------------------------------------------


def random_budget_cases(seed: int, n_cases: int = 1000):
    """Yield ``(scores, B, r_min)`` with d in [2, 500] and mixed score shapes."""
    rng = np.random.default_rng(seed)
    for _ in range(n_cases):
        d = int(rng.integers(2, 501))
        r_min = float(rng.uniform(0.0, 0.5))
        B = float(rng.uniform(r_min + 1e-6, 1.0))
        kind = rng.integers(3)
        if kind == 0:
            s = rng.random(d)
        elif kind == 1:
            s = rng.pareto(0.5, d)  # heavy tail, forces clipping
        else:
            s = np.zeros(d)
            s[rng.integers(d)] = 1.0
        yield s / s.sum(), B, r_min


def check_budget(seeds) -> list[CheckResult]:
    pre_err, post_excess = 0.0, -math.inf
    for seed in seeds:
        for p, B, r_min in random_budget_cases(seed):
            pre_err = max(pre_err, abs(allocate_rates(p, B, r_min, clip=False).mean() - B))
            post_excess = max(post_excess, allocate_rates(p, B, r_min).mean() - B)
    return [
        CheckResult("budget.pre_clip_mean", pre_err <= 1e-9, f"max |mean-B| = {pre_err:.2e} (<= 1e-9)"),
        CheckResult("budget.post_clip_mean", post_excess <= 1e-9,
                    f"max mean-B = {post_excess:.2e} (<= 1e-9)"),
    ]


def check_monotone(seeds) -> list[CheckResult]:
    worst = 0.0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        for _ in range(200):
            d = int(rng.integers(2, 60))
            p = rng.random(d)
            p /= p.sum()
            r = allocate_rates(p, 0.5, 0.05, clip=False)
            order = np.argsort(p)
            worst = min(worst, float(np.diff(r[order]).min()))
    return [CheckResult("budget.monotone", worst >= 0.0, f"min rate step along scores = {worst:.2e} (>= 0)")]


# --- convergence and adaptation -------------------------------------------------


def check_convergence(seeds, n_windows: int = 100) -> list[CheckResult]:
    deltas = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        d = 12
        A = rng.standard_normal((d, d)) / math.sqrt(d)
        config = TriageConfig(k=4, w=50)
        state = init_state(config, d)
        prev = None
        for _ in range(n_windows):
            _, state = triage_step(state, rng.standard_normal((50, d)) @ A, config)
            cur = state.smoothed_scores
            if prev is not None:
                last = float(np.abs(cur - prev).sum())
            prev = cur
        deltas.append(last)
    mean = float(np.mean(deltas))
    return [CheckResult("convergence.score_step", mean < 1e-3,
                        f"mean L1 step at window {n_windows} = {mean:.2e} (< 1e-3)")]


def check_adaptation(seeds) -> list[CheckResult]:
    # constant raw scores after a step change: the gap decays as lam^tau exactly
    rng = np.random.default_rng(seeds[0] if seeds else 0)
    s_old, s_new = rng.dirichlet(np.ones(8)), rng.dirichlet(np.ones(8))
    worst = 0.0
    for lam in (0.5, 0.8, 0.85, 0.95):
        s = s_old.copy()
        base = np.linalg.norm(s_old - s_new)
        for tau in range(1, 40):
            s = smooth_scores(s, s_new, lam, tau)
            worst = max(worst, abs(np.linalg.norm(s - s_new) - lam**tau * base) / base)
    half = math.log(0.5) / math.log(0.85)
    g4, g5 = 0.85**4, 0.85**5
    return [
        CheckResult("adaptation.geometric_decay", worst < 1e-9, f"max relative deviation = {worst:.2e} (< 1e-9)"),
        CheckResult("adaptation.half_life_0.85", g4 > 0.5 > g5,
                    f"gap(4) = {g4:.6f}, gap(5) = {g5:.6f}, half-life = {half:.2f} windows"),
    ]


def check_sharpen(seeds) -> list[CheckResult]:
    bad = 0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        for _ in range(200):
            s = rng.random(int(rng.integers(2, 40)))
            gamma = float(rng.uniform(1.0, 6.0))
            bad += int(np.argmax(sharpen(s, gamma)) != np.argmax(s))
    return [CheckResult("sharpen.argmax", bad == 0, f"{bad} argmax changes")]


# --- correlation structure -----------------------------------------------------


def check_correlation(seeds, rho: float = 0.8, n: int = 20000) -> list[CheckResult]:
    """Equal-variance channels look alike to a variance allocator; a full
    rank unweighted PCA score is flat; a channel whose variance lives
    only in dropped components scores zero."""
    var_spread, flat_spread, starve = [], [], []
    for seed in seeds:
        trio = gen_correlated_trio(rho, n=n, seed=seed).values
        v = baselines.variance_rates(trio, 0.5, 0.05)
        var_spread.append((v.max() - v.min()) / v.mean())
        full = ipca_partial_fit(PcaState(3), trio)
        s = importance_pca(full.components, full.singular_values, "unweighted")
        flat_spread.append(float(s.max() - s.min()))
        # shrink c below the weakest correlated direction, then keep k=2
        low = trio.copy()
        low[:, 2] *= math.sqrt(0.5 * (1.0 - rho))
        two = ipca_partial_fit(PcaState(2), low)
        s2 = importance_pca(two.components, two.singular_values, "weighted")
        starve.append(float(s2[2] / s2.sum()))
    vs, fs, st = float(np.mean(var_spread)), float(np.max(flat_spread)), float(np.mean(starve))
    return [
        CheckResult("correlation.variance_blind", vs < 0.05, f"variance-rate spread = {vs:.4f} (< 0.05)"),
        CheckResult("correlation.full_rank_flat", fs < 1e-9, f"unweighted k=d spread = {fs:.2e} (< 1e-9)"),
        CheckResult("correlation.dropped_channel", st < 0.02, f"dropped-channel share = {st:.4f} (< 0.02)"),
    ]


# --- incremental PCA -----------------------------------------------------------


def check_ipca(seeds) -> list[CheckResult]:
    orth, first = 0.0, 0.0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        d, k = 15, 5
        X = rng.standard_normal((60, d)) * np.linspace(3, 0.5, d)
        st = ipca_partial_fit(PcaState(k), X)
        _, s, vt = np.linalg.svd(X - X.mean(axis=0), full_matrices=False)
        sign = np.sign(np.sum(vt[:k] * st.components, axis=1))
        first = max(first, float(np.abs(st.components - sign[:, None] * vt[:k]).max()),
                    float(np.abs(st.singular_values - s[:k]).max()))
        for _ in range(200):
            st = ipca_partial_fit(st, rng.standard_normal((50, d)))
        orth = max(orth, float(np.abs(st.components @ st.components.T - np.eye(k)).max()))
    return [
        CheckResult("ipca.first_batch_svd", first < 1e-6, f"max deviation = {first:.2e} (< 1e-6)"),
        CheckResult("ipca.orthonormal", orth < 1e-8, f"max |VV^T - I| after 200 fits = {orth:.2e} (< 1e-8)"),
    ]


# --- acquisition ---------------------------------------------------------------


def check_corollary(seeds, r: float = 0.6, T: int = 20000) -> list[CheckResult]:
    """Single-step-gap reading of the forward-fill error bound."""
    ratios = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        x = np.cumsum(rng.standard_normal(T))
        keep = rng.random(T) < r
        keep[0] = True
        est = np.where(keep, x, np.concatenate(([x[0]], x[:-1])))
        step_var = float(np.mean(np.diff(x) ** 2))
        ratios.append(float(np.mean((x - est) ** 2)) / ((1 - r) * step_var))
    ratio = float(np.mean(ratios))
    return [CheckResult("corollary.single_step", ratio <= 1.1,
                        f"error / ((1-r) step var) = {ratio:.4f} (<= 1.1)")]


def check_reconstruction(seeds) -> list[CheckResult]:
    ok = True
    for seed in seeds:
        X = np.random.default_rng(seed).standard_normal((200, 6))
        m = np.ones(X.shape, dtype=bool)
        for method in ("linear", "forward_fill", "zero"):
            ok &= bool(np.array_equal(reconstruct(X, m, method), X))
    return [CheckResult("reconstruction.identity", ok, "all-true mask returns input bit-exactly" if ok
                        else "all-true mask altered the input")]


def check_baselines(seeds) -> list[CheckResult]:
    worst_mean, worst_floor = -math.inf, math.inf
    for seed in seeds:
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((50, 20)) * rng.uniform(0.1, 4.0, 20)
        y = (rng.random(50) < 0.3).astype(int)
        y[:2] = (0, 1)
        for B in (0.1, 0.3, 0.5, 0.9):
            outs = [
                baselines.uniform_rates(B, 20),
                baselines.variance_rates(X, B, 0.05),
                baselines.threshold_rates(X, B, 0.05),
                baselines.mutual_info_rates(X, y, B, 0.05),
                baselines.ogd_step(baselines.uniform_rates(B, 20), rng.random(20), 0.5, B, 0.05),
            ]
            for r in outs:
                worst_mean = max(worst_mean, r.mean() - B)
                worst_floor = min(worst_floor, r.min() - 0.05)
    ok = worst_mean <= 1e-9 and worst_floor >= -1e-12
    return [CheckResult("baselines.budget_floor", ok,
                        f"max mean-B = {worst_mean:.2e}, min rate-r_min = {worst_floor:.2e}")]


REGISTRY: dict[str, Callable[[list[int]], list[CheckResult]]] = {
    "budget": lambda seeds: check_budget(seeds[:1]) + check_monotone(seeds),
    "convergence": check_convergence,
    "adaptation": check_adaptation,
    "sharpen": check_sharpen,
    "correlation": check_correlation,
    "ipca": check_ipca,
    "corollary": check_corollary,
    "reconstruction": check_reconstruction,
    "baselines": check_baselines,
}


def run_checks(only=None, seeds=range(10)) -> list[CheckResult]:
    names = list(REGISTRY) if not only else list(only)
    unknown = [n for n in names if n not in REGISTRY]
    if unknown:
        raise KeyError(f"unknown check(s) {unknown}; available: {sorted(REGISTRY)}")
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    out = []
    for name in names:
        out.extend(REGISTRY[name](seeds))
    return out
