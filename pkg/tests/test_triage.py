import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sensor_triage.data import gen_correlated_trio
from sensor_triage.ipca import PcaState, ipca_partial_fit
from sensor_triage.triage import (
    DegenerateWindowError,
    InfeasibleBudgetError,
    TriageConfig,
    allocate_rates,
    available_presets,
    ensemble_importance,
    importance_hybrid,
    importance_pca,
    init_state,
    load_preset,
    parse_config_text,
    run_triage,
    sharpen,
    smooth_scores,
    triage_step,
)


def trio_population(rho, sigma2=1.0):
    C = sigma2 * np.array([[1, rho, 0], [rho, 1, 0], [0, 0, 1.0]])
    vals, vecs = np.linalg.eigh(C)
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order].T


# --- importance --------------------------------------------------------------


def test_importance_axes():
    V = np.eye(2)
    assert np.allclose(importance_pca(V, [2.0, 1.0], "weighted"), [2, 1])
    assert np.allclose(importance_pca(V, [2.0, 1.0], "unweighted"), [1, 1])


def test_trio_k2_keeps_independent_channel():
    # eigenvalues 1.8 > 1.0 > 0.2: the dropped direction at k=2 is (a - b),
    # so the independent channel sits in the retained space
    vals, V = trio_population(0.8)
    assert np.allclose(vals, [1.8, 1.0, 0.2])
    s = importance_pca(V[:2], np.sqrt(vals[:2]), "weighted")
    assert np.allclose(s, [0.5 * math.sqrt(1.8), 0.5 * math.sqrt(1.8), 1.0])


def test_trio_dropped_variance_scores_zero():
    # shrink c below the (a - b) direction; now c lives in the dropped component
    C = np.array([[1, 0.8, 0], [0.8, 1, 0], [0, 0, 0.1]])
    vals, vecs = np.linalg.eigh(C)
    V = vecs[:, np.argsort(vals)[::-1]].T
    s = importance_pca(V[:2], [1.0, 1.0], "weighted")
    assert s[2] == pytest.approx(0.0, abs=1e-12)


def test_trio_full_rank_unweighted_flat():
    _, V = trio_population(0.8)
    assert np.allclose(importance_pca(V, [1, 1, 1], "unweighted"), 1.0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), d=st.integers(2, 20))
def test_unweighted_mass_equals_k(seed, d):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, d + 1))
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    assert importance_pca(Q[:, :k].T, np.ones(k), "unweighted").sum() == pytest.approx(k)


def test_importance_dim_mismatch():
    with pytest.raises(ValueError):
        importance_pca(np.eye(3), [1.0, 2.0])


@pytest.mark.parametrize(
    "alpha, pca, var, expected",
    [
        (1.0, [3.0, 1.0], [1.0, 1.0], [0.75, 0.25]),
        (0.0, [3.0, 1.0], [1.0, 3.0], [0.25, 0.75]),
        (0.5, [1.0, 0.0], [0.0, 2.0], [0.5, 0.5]),
    ],
)
def test_hybrid(alpha, pca, var, expected):
    out = importance_hybrid(pca, var, alpha)
    assert np.allclose(out, expected)
    assert out.sum() == pytest.approx(1.0)


def test_hybrid_degenerate():
    with pytest.raises(DegenerateWindowError):
        importance_hybrid([0, 0], [0, 0], 0.5)


def test_hybrid_one_side_empty():
    assert np.allclose(importance_hybrid([0, 0], [1, 3], 0.7), [0.25, 0.75])


# --- smoothing, sharpening, allocation ------------------------------------------


def test_ema_step():
    assert np.allclose(smooth_scores([1, 0], [0, 1], 0.85, 1), [0.85, 0.15])


def test_ema_half_life_bracket():
    s = np.array([1.0, 0.0])
    target = np.array([0.0, 1.0])
    gaps = []
    for t in range(1, 6):
        s = smooth_scores(s, target, 0.85, t)
        gaps.append(np.abs(s - target).sum() / 2)
    assert gaps[3] == pytest.approx(0.85**4, abs=1e-12)
    assert gaps[3] > 0.5 > gaps[4]


def test_cumulative_mean_at_lambda_one():
    history = [np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([0.2, 0.8])]
    s = None
    for i, h in enumerate(history):
        s = smooth_scores(s, h, 1.0, i)
    assert np.allclose(s, np.mean(history, axis=0))


def test_first_window_passthrough():
    assert np.array_equal(smooth_scores(None, [0.3, 0.7], 0.5, 0), [0.3, 0.7])


def test_sharpen_examples():
    assert np.allclose(sharpen([0.8, 0.2], 2.0), [16 / 17, 1 / 17])
    assert np.allclose(sharpen([3.0, 1.0], 1.0), [0.75, 0.25])
    assert np.allclose(sharpen([0, 0, 0], 2.0), 1 / 3)
    assert sharpen([0.4, 0.35, 0.25], 200.0)[0] > 0.999


@settings(max_examples=100, deadline=None)
@given(
    s=arrays(np.float64, st.integers(2, 30), elements=st.floats(0.01, 100.0)),
    gamma=st.floats(1.0, 8.0),
)
def test_sharpen_preserves_argmax(s, gamma):
    if np.sum(s == s.max()) > 1:
        return
    out = sharpen(s, gamma)
    assert np.argmax(out) == np.argmax(s)
    assert out.sum() == pytest.approx(1.0)


def test_allocate_examples():
    assert np.allclose(allocate_rates([0.5, 0.5], 0.5, 0.05), [0.5, 0.5])
    pre = allocate_rates([1.0, 0.0], 0.5, 0.05, clip=False)
    assert np.allclose(pre, [0.95, 0.05])
    assert np.allclose(allocate_rates([1.0, 0.0], 0.5, 0.05), pre)


def test_allocate_infeasible():
    with pytest.raises(InfeasibleBudgetError):
        allocate_rates([0.5, 0.5], 0.05, 0.05)


def test_full_budget_is_all_ones():
    assert np.array_equal(allocate_rates([0.9, 0.1, 0.0], 1.0, 0.05), np.ones(3))


@settings(max_examples=300, deadline=None)
@given(
    p=arrays(np.float64, st.integers(2, 500), elements=st.floats(0.0, 1e6)),
    r_min=st.floats(0.0, 0.9),
    frac=st.floats(0.001, 1.0),
)
def test_budget_feasibility_property(p, r_min, frac):
    if p.sum() <= 0:
        return
    p = p / p.sum()
    B = r_min + frac * (1.0 - r_min)
    if B <= r_min:
        return
    pre = allocate_rates(p, B, r_min, clip=False)
    post = allocate_rates(p, B, r_min)
    assert abs(pre.mean() - B) <= 1e-9
    assert post.mean() <= B + 1e-9
    assert post.min() >= r_min - 1e-12 and post.max() <= 1.0
    order = np.argsort(p, kind="stable")
    assert np.all(np.diff(pre[order]) >= -1e-12)


# --- ensemble ---------------------------------------------------------------------


def test_ensemble_identical_members():
    rng = np.random.default_rng(0)
    s = ipca_partial_fit(PcaState(3), rng.standard_normal((30, 6)))
    single = importance_pca(s.components, s.singular_values)
    assert np.allclose(ensemble_importance([s, s]), single / single.sum())


def test_ensemble_symmetric():
    a = PcaState(1, components=np.array([[1.0, 0.0]]), singular_values=np.array([1.0]),
                 mean=np.zeros(2), n_seen=5)
    b = PcaState(1, components=np.array([[0.0, 1.0]]), singular_values=np.array([1.0]),
                 mean=np.zeros(2), n_seen=5)
    assert np.allclose(ensemble_importance([a, b]), [0.5, 0.5])


def test_ensemble_mismatch():
    rng = np.random.default_rng(0)
    a = ipca_partial_fit(PcaState(2), rng.standard_normal((10, 4)))
    b = ipca_partial_fit(PcaState(2), rng.standard_normal((10, 5)))
    with pytest.raises(ValueError):
        ensemble_importance([a, b])


def test_ensemble_reduces_seed_variance():
    def final_scores(config, seed):
        rng = np.random.default_rng(seed)
        A = np.random.default_rng(99).standard_normal((10, 10)) / 3
        _, log = run_triage(rng.standard_normal((1000, 10)) @ A, config)
        return log[-1]

    ens = TriageConfig(scorer="ensemble", ensemble_ks=(3, 5, 10))
    single = TriageConfig(k=5)
    ens_std = np.std([final_scores(ens, s) for s in range(10)], axis=0).mean()
    one_std = np.std([final_scores(single, s) for s in range(10)], axis=0).mean()
    assert ens_std <= one_std


# --- streaming step ---------------------------------------------------------------


def test_step_on_trio_first_window():
    X = gen_correlated_trio(0.8, n=20000, seed=0).values
    config = TriageConfig(k=2, budget=0.5, r_min=0.05)
    rates, _ = triage_step(init_state(config, 3), X, config)
    vals, V = trio_population(0.8)
    oracle = importance_pca(V[:2], np.sqrt(vals[:2]))
    expected = allocate_rates(oracle / oracle.sum(), 0.5, 0.05)
    assert np.allclose(rates, expected, atol=0.02)


@pytest.mark.parametrize("seed", range(5))
def test_step_exchangeable_noise(seed):
    X = np.random.default_rng(seed).standard_normal((5000, 6))
    config = TriageConfig(k=6)
    rates, _ = triage_step(init_state(config, 6), X, config)
    assert np.ptp(rates) < 0.05
    assert np.allclose(rates, 0.5, atol=0.05)


def test_step_repeated_window_fixed_point():
    X = np.random.default_rng(2).standard_normal((50, 5)) * [3, 2, 1, 1, 1]
    config = TriageConfig(k=3, lam=0.85)
    state = init_state(config, 5)
    r1, state = triage_step(state, X, config)
    r2, state = triage_step(state, X, config)
    assert np.allclose(r1, r2, atol=1e-6)


def test_run_triage_shapes_and_budget():
    X = np.random.default_rng(0).standard_normal((1234, 8))
    config = TriageConfig(k=3, budget=0.3)
    rates, scores = run_triage(X, config)
    assert rates.shape == scores.shape == (25, 8)
    assert np.all(rates.mean(axis=1) <= 0.3 + 1e-9)


def test_degenerate_window_keeps_scores():
    config = TriageConfig(k=2, scorer="hybrid", alpha=0.5)
    state = init_state(config, 3)
    rng = np.random.default_rng(0)
    _, state = triage_step(state, rng.standard_normal((20, 3)), config)
    before = state.smoothed_scores.copy()
    _, state = triage_step(state, np.zeros((20, 3)) + state.pca.mean, config)
    assert state.smoothed_scores is not None
    assert np.all(np.isfinite(state.smoothed_scores))
    assert state.window_index == 2
    assert before.shape == state.smoothed_scores.shape


def test_variance_threshold_mode():
    X = np.random.default_rng(0).standard_normal((500, 6)) * [5, 4, 1, 0.1, 0.1, 0.1]
    config = TriageConfig(variance_threshold=0.9, w=50)
    rates, _ = run_triage(X, config)
    assert np.all(rates.mean(axis=1) <= 0.5 + 1e-9)
    assert rates[-1, :2].min() > rates[-1, 3:].max()


# --- configuration ---------------------------------------------------------------


def test_config_roundtrip():
    c = TriageConfig(budget=0.3, k=5, scorer="ensemble", ensemble_ks=(2, 4), variance_threshold=0.9)
    assert parse_config_text(c.to_text()) == c


def test_config_errors():
    with pytest.raises(InfeasibleBudgetError):
        TriageConfig(budget=0.04, r_min=0.05)
    with pytest.raises(ValueError):
        TriageConfig(gamma=0.5)
    with pytest.raises(ValueError):
        parse_config_text("bogus = 3")
    with pytest.raises(ValueError):
        parse_config_text("no equals sign")


@pytest.mark.parametrize(
    "name, alpha", [("tep", 0.8), ("smd", 0.75), ("msl", 0.7), ("psm", 0.4),
                    ("hai", 0.05), ("skab", 0.15), ("swat", 0.7)],
)
def test_presets(name, alpha):
    c = load_preset(name)
    assert c.alpha == alpha and c.scorer == "hybrid"


def test_preset_listing():
    assert {"tep", "psm", "skab"} <= set(available_presets())
    with pytest.raises(KeyError):
        load_preset("nope")


def test_constant_first_window_gives_uniform_rates():
    config = TriageConfig(k=2, budget=0.4)
    rates, state = triage_step(init_state(config, 4), np.ones((50, 4)), config)
    assert state.smoothed_scores is None and state.n_scored == 0
    assert np.allclose(rates, 0.4)
