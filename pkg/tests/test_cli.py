import csv

import pytest

from sensor_triage.cli import main


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_sweep_writes_csv_and_manifest(tmp_path):
    out = tmp_path / "s"
    code = main(["sweep", "--synthetic", "groups:rho=0.6,n=2000", "--methods", "pca,uniform,variance",
                 "--budgets", "0.1,0.5,0.9", "--seeds", "3", "--out", str(out)])
    assert code == 0
    rows = _rows(out / "pareto.csv")
    assert rows[0] == ["dataset", "method", "budget", "seed", "recon", "f1", "ms_per_window",
                       "commanded_bw", "realized_bw"]
    assert len(rows) == 28
    manifest = (out / "manifest.txt").read_text()
    assert "command = sweep" in manifest and "pareto.csv" in manifest


def test_sweep_rerun_byte_identical(tmp_path):
    args = ["sweep", "--synthetic", "groups:rho=0.3,n=1500", "--methods", "pca,threshold",
            "--budgets", "0.3", "--seeds", "2"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    assert (tmp_path / "a/pareto.csv").read_bytes() == (tmp_path / "b/pareto.csv").read_bytes()


def test_infeasible_budget_exit_1(tmp_path, capsys):
    code = main(["sweep", "--synthetic", "groups", "--budget", "0.04", "--r-min", "0.05",
                 "--out", str(tmp_path)])
    assert code == 1
    assert "r_min" in capsys.readouterr().err


def test_bad_flag_exit_1():
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--no-such-flag"])
    assert exc.value.code == 1


def test_missing_dataset_exit_2(tmp_path):
    assert main(["sweep", "--dataset", str(tmp_path / "missing"), "--out", str(tmp_path)]) == 2


def test_csv_dataset_path(tmp_path):
    from sensor_triage.data import gen_group_dataset, save_csv

    save_csv(gen_group_dataset(0.4, n=1000, seed=0), tmp_path / "g.csv")
    code = main(["sweep", "--dataset", str(tmp_path / "g.csv"), "--methods", "uniform",
                 "--budgets", "0.5", "--seeds", "1", "--out", str(tmp_path / "o")])
    assert code == 0
    assert _rows(tmp_path / "o/pareto.csv")[1][0] == "g"


def test_manifest_env(tmp_path, monkeypatch):
    from sensor_triage.data import gen_group_dataset, save_csv

    save_csv(gen_group_dataset(0.4, n=1000, seed=0), tmp_path / "g.csv")
    (tmp_path / "m.txt").write_text("grp = g.csv\n")
    monkeypatch.setenv("SENSOR_TRIAGE_MANIFEST", str(tmp_path / "m.txt"))
    code = main(["sweep", "--dataset", "grp", "--methods", "uniform", "--budgets", "0.5",
                 "--seeds", "1", "--out", str(tmp_path / "o")])
    assert code == 0


def test_preset_flag(tmp_path):
    code = main(["sweep", "--synthetic", "groups:rho=0.5,n=1000", "--preset", "tep", "--methods", "pca",
                 "--budgets", "0.5", "--seeds", "1", "--out", str(tmp_path)])
    assert code == 0
    assert "alpha = 0.8" in (tmp_path / "manifest.txt").read_text()
    assert main(["sweep", "--synthetic", "groups", "--preset", "nope", "--out", str(tmp_path)]) == 1


def test_adaptivity(tmp_path):
    out = tmp_path / "a"
    assert main(["adaptivity", "--lams", "0.8,1.0", "--seeds", "2", "--out", str(out)]) == 0
    reaction = _rows(out / "reaction.csv")[1:]
    by = {(r[0], r[1]): r[2] for r in reaction}
    for seed in ("0", "1"):
        assert int(by[("0.8", seed)]) <= int(by[("1", seed)])
    trace = _rows(out / "trace_lam0.8_seed0.csv")
    assert len(trace) == 1 + 30 and len(trace[0]) == 20


def test_adaptivity_no_change_reports_none(tmp_path):
    out = tmp_path / "a"
    code = main(["adaptivity", "--synthetic", "sines:n=1000,d=8", "--onset", "500",
                 "--lams", "0.8", "--out", str(out)])
    assert code == 0
    assert _rows(out / "reaction.csv")[1][2] == "none"


def test_adaptivity_onset_outside(tmp_path):
    code = main(["adaptivity", "--onset", "99999", "--out", str(tmp_path)])
    assert code == 2


def test_theory_check(capsys):
    assert main(["theory-check", "--seeds", "2"]) == 0
    assert main(["theory-check", "--only", "budget"]) == 0
    out = capsys.readouterr().out
    assert "budget.pre_clip_mean" in out
    assert main(["theory-check", "--only", "nope"]) == 1


def test_scale(tmp_path):
    assert main(["scale", "--sizes", "10,20", "--repeats", "5", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "scale.csv")
    assert rows[0] == ["d", "w", "k", "ms_per_window"] and len(rows) == 3


def test_perturb_eval(tmp_path):
    code = main(["perturb-eval", "--synthetic", "groups:rho=0.5,n=1500", "--kinds", "none,noise,combined",
                 "--methods", "pca", "--seeds", "1", "--out", str(tmp_path)])
    assert code == 0
    rows = _rows(tmp_path / "perturb.csv")
    assert len(rows) == 4 and rows[2][0].endswith("+noise")


def test_joint(tmp_path):
    code = main(["joint", "--synthetic", "groups:rho=0.5,n=1500", "--deltas", "0.1,0.3", "--seeds", "1",
                 "--out", str(tmp_path)])
    assert code == 0
    rows = _rows(tmp_path / "joint.csv")
    methods = [r[1] for r in rows[1:]]
    assert methods.count("joint") == 2 and methods.count("sod") == 2
    joint = [r for r in rows[1:] if r[1] == "joint"]
    pca = [r for r in rows[1:] if r[1] == "pca"][0]
    assert all(float(r[8]) <= float(pca[8]) for r in joint)
