import numpy as np
import pytest

from sensor_triage.data import (
    DataError,
    Dataset,
    Perturbation,
    gen_correlated_trio,
    gen_group_dataset,
    gen_regime_change,
    gen_sinusoids,
    load_csv,
    load_manifest_dataset,
    parse_synthetic,
    perturb,
    read_manifest,
    save_csv,
    standardize,
)


def test_load_minimal(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("a,b,label\n1,2,0\n3,4,1\n")
    ds = load_csv(p)
    assert ds.values.shape == (2, 2) and ds.labels.tolist() == [0, 1]
    assert ds.channel_names == ("a", "b")


def test_load_no_label(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("x,y\n1,2\n3,4\n")
    assert load_csv(p).labels.tolist() == [0, 0]


@pytest.mark.parametrize(
    "body, where", [("a,b\n1,2\n3\n", ":3:"), ("a,b\n1,x\n", "column 'b'"), ("a,b\n1,nan\n", ":2:")]
)
def test_load_errors(tmp_path, body, where):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(DataError, match=where):
        load_csv(p)


def test_save_roundtrip(tmp_path):
    ds = gen_sinusoids(50, 3, seed=1)
    save_csv(ds, tmp_path / "s.csv")
    back = load_csv(tmp_path / "s.csv")
    assert np.array_equal(back.values, ds.values)


def test_manifest(tmp_path, monkeypatch):
    (tmp_path / "d.csv").write_text("a,b,y\n1,2,0\n3,4,1\n")
    (tmp_path / "m.txt").write_text("# datasets\nmine = d.csv, y, 10\n")
    monkeypatch.setenv("SENSOR_TRIAGE_MANIFEST", str(tmp_path / "m.txt"))
    entries = read_manifest()
    assert entries["mine"].sample_rate_hz == 10.0
    ds = load_manifest_dataset("mine")
    assert ds.name == "mine" and ds.labels.tolist() == [0, 1]
    with pytest.raises(DataError):
        load_manifest_dataset("other")


def test_standardize():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((500, 3)) * [1, 5, 0] + [2, -1, 7]
    ds = Dataset(X, np.zeros(500, int), ("a", "b", "c"))
    z = standardize(ds, ds).values
    assert np.allclose(z[:, :2].mean(0), 0, atol=1e-9)
    assert np.allclose(z[:, :2].var(0), 1, atol=1e-6)
    assert np.all(z[:, 2] == 0)
    test = Dataset(X[:100] + 3, np.zeros(100, int), ("a", "b", "c"))
    assert not np.allclose(standardize(ds, test).values[:, 0].mean(), 0)


def test_trio_statistics():
    X = gen_correlated_trio(0.8, n=20000, seed=0).values
    r = np.corrcoef(X.T)
    assert 0.77 <= r[0, 1] <= 0.83
    assert abs(r[0, 2]) < 0.05 and abs(r[1, 2]) < 0.05
    ev = np.sort(np.linalg.eigvalsh(np.cov(X.T)))[::-1]
    assert np.allclose(ev, [1.8, 1.0, 0.2], atol=0.05)
    X0 = gen_correlated_trio(0.0, n=20000, seed=0).values
    assert np.all(np.abs(np.corrcoef(X0.T) - np.eye(3)) < 0.05)


def test_trio_covariance_within_three_sigma():
    # entry-wise sample covariance standard error: sqrt((c_ii c_jj + c_ij^2) / n)
    n, rho = 20000, 0.6
    C = np.array([[1, rho, 0], [rho, 1, 0], [0, 0, 1.0]])
    S = np.cov(gen_correlated_trio(rho, n=n, seed=4).values.T)
    se = np.sqrt((np.outer(np.diag(C), np.diag(C)) + C**2) / n)
    assert np.all(np.abs(S - C) < 3 * se)


def test_group_dataset():
    ds = gen_group_dataset(0.7, n=50000, seed=0)
    assert ds.n_channels == 40
    y = ds.labels.astype(bool)
    assert 0.19 <= y.mean() <= 0.21
    idx = np.flatnonzero(y)
    assert np.all(np.diff(idx) == 1)
    shift = ds.values[y, :10].mean(0) - ds.values[~y, :10].mean(0)
    assert np.all((shift > 1.35) & (shift < 1.65))
    c_shift = ds.values[y, 20:].mean(0) - ds.values[~y, 20:].mean(0)
    assert np.all(np.abs(c_shift) < 0.05)
    a = ds.values[~y, :10]
    off = np.corrcoef(a.T)[np.triu_indices(10, 1)]
    assert abs(off.mean() - 0.7) < 0.03
    ds0 = gen_group_dataset(0.0, n=20000, seed=0)
    off0 = np.corrcoef(ds0.values[~ds0.labels.astype(bool), :10].T)[np.triu_indices(10, 1)]
    assert np.all(np.abs(off0) < 0.05)


def test_regime_change():
    ds = gen_regime_change(seed=0)
    pre, post = ds.values[:500], ds.values[500:]
    assert set(np.argsort(-pre.var(0))[:5]) == set(range(5))
    assert set(np.argsort(-post.var(0))[:5]) == set(range(5, 10))
    with pytest.raises(ValueError):
        gen_regime_change(onset=2000, n=1000)


def test_regime_batch_pca_argmax_moves():
    ds = gen_regime_change(seed=1)

    def top_loading(X):
        _, vecs = np.linalg.eigh(np.cov(X.T))
        return int(np.argmax(np.abs(vecs[:, -1])))

    assert top_loading(ds.values[:500]) < 5
    assert 5 <= top_loading(ds.values[500:]) < 10


@pytest.mark.parametrize(
    "make",
    [lambda: gen_correlated_trio(0.5, seed=3), lambda: gen_group_dataset(0.5, n=2000, seed=3),
     lambda: gen_regime_change(seed=3), lambda: gen_sinusoids(seed=3, noise=0.1)],
)
def test_generators_seed_deterministic(make):
    assert np.array_equal(make().values, make().values)


def test_parse_synthetic():
    ds = parse_synthetic("groups:rho=0.6,n=3000", seed=2)
    assert ds.n_samples == 3000 and ds.name == "groups:rho=0.6,n=3000"
    with pytest.raises(DataError):
        parse_synthetic("nope")
    with pytest.raises(DataError):
        parse_synthetic("groups:rho")
    with pytest.raises(DataError):
        parse_synthetic("groups:banana=3")


def _ds(T=1000, d=4, seed=0):
    return Dataset(np.random.default_rng(seed).standard_normal((T, d)), np.zeros(T, int),
                   tuple("abcd"[:d]))


@pytest.mark.parametrize("kind", ["jitter", "packet_loss", "noise", "clock_drift", "combined"])
def test_zero_magnitude_identity(kind):
    ds = _ds()
    p = Perturbation(kind, jitter_max=0, loss_fraction=0.0, noise_sigma=0.0, drift_max=0)
    assert np.array_equal(perturb(ds, p).values, ds.values)


def test_noise_magnitude():
    ds = _ds(100000, 3)
    added = perturb(ds, Perturbation("noise", noise_sigma=0.1, seed=1)).values - ds.values
    assert np.all((added.std(0) > 0.095) & (added.std(0) < 0.105))


def test_packet_loss_windows():
    ds = _ds(5000, 2)
    out = perturb(ds, Perturbation("packet_loss", loss_fraction=0.1, window=50, seed=0)).values
    held = [i for i in range(1, 100)
            if np.all(out[i * 50:(i + 1) * 50] == out[i * 50 - 1])]
    assert abs(len(held) - 10) <= 1


def test_jitter_shifts_within_range():
    ds = _ds(300, 4)
    out = perturb(ds, Perturbation("jitter", jitter_max=5, seed=3)).values
    for j in range(4):
        ok = [s for s in range(-5, 6)
              if np.array_equal(out[10:290, j], ds.values[10 - s:290 - s, j])]
        assert ok


def test_perturbation_ranges():
    with pytest.raises(ValueError):
        Perturbation("noise", noise_sigma=-1)
    with pytest.raises(ValueError):
        Perturbation("teleport")
