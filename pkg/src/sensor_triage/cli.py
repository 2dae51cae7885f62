"""Command-line driver. Every command writes ``manifest.txt`` first, then CSVs."""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import math
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .checks import REGISTRY, run_checks
from .data import (
    PERTURBATION_KINDS,
    DataError,
    Dataset,
    Perturbation,
    load_csv,
    load_manifest_dataset,
    parse_synthetic,
    perturb,
)
from .evaluation import (
    DEFAULT_DELTA,
    METHODS,
    EvalReport,
    EvalRow,
    pareto_sweep,
    reaction_time,
    run_cell,
    timing_probe,
    triage_window_op,
)
from .triage import TriageConfig, load_config, load_preset, run_triage

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PROPERTY = 0, 1, 2, 3

DEFAULT_BUDGETS = "0.1,0.2,0.3,0.5,0.7,0.9"
DEFAULT_METHODS = "pca,uniform,variance,threshold,random,mi"


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is our data-error code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


# --- shared options -------------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("triage configuration (flags mirror config keys)")
    g.add_argument("--preset", help="named preset, e.g. tep, smd, psm")
    g.add_argument("--config", type=Path, help="key = value config file")
    g.add_argument("--budget", type=float)
    g.add_argument("--k", type=int)
    g.add_argument("--w", type=int)
    g.add_argument("--lam", type=float)
    g.add_argument("--r-min", dest="r_min", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--scorer")
    g.add_argument("--recon")
    g.add_argument("--ensemble-ks", dest="ensemble_ks",
                   type=lambda s: tuple(int(x) for x in s.split(",")))
    g.add_argument("--variance-threshold", dest="variance_threshold", type=float)


def _add_data_flags(p: argparse.ArgumentParser, default_synthetic: str | None = None) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--synthetic", default=default_synthetic,
                   help="synthetic spec name:key=value,... (trio, groups, regime, sines)")
    g.add_argument("--dataset", help="manifest name or CSV path")


def _add_run_flags(p: argparse.ArgumentParser, seeds: int = 3) -> None:
    p.add_argument("--seeds", type=int, default=seeds, help="number of seeds, run as 0..N-1")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")


def build_config(args) -> TriageConfig:
    try:
        if args.preset:
            base = load_preset(args.preset)
        elif args.config:
            base = load_config(args.config)
        else:
            base = TriageConfig()
        overrides = {f.name: getattr(args, f.name) for f in fields(TriageConfig)
                     if getattr(args, f.name, None) is not None}
        return replace(base, **overrides)
    except (KeyError, FileNotFoundError) as exc:
        raise ConfigError(str(exc)) from None


def resolve_source(args):
    """A synthetic spec string (regenerated per seed) or a loaded Dataset."""
    if getattr(args, "dataset", None):
        path = Path(args.dataset)
        if path.is_file():
            return load_csv(path)
        return load_manifest_dataset(args.dataset)
    if not args.synthetic:
        raise ConfigError("one of --synthetic or --dataset is required")
    parse_synthetic(args.synthetic, seed=0)  # fail early on a bad spec
    return args.synthetic


def _dataset_for(source, seed: int) -> Dataset:
    return parse_synthetic(source, seed=seed) if isinstance(source, str) else source


def write_manifest(out: Path, command: str, config: TriageConfig | None, seeds, outputs,
                   extra: dict | None = None) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        f"command = {command}",
        f"version = {__version__}",
        f"started = {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}",
        f"output_dir = {out}",
        f"seeds = {','.join(str(s) for s in seeds)}",
        f"outputs = {','.join(outputs)}",
    ]
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    if config is not None:
        lines.append("")
        lines.append("[config]")
        lines.append(config.to_text().rstrip("\n"))
    path = out / "manifest.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6f}"
    return str(v)


def _write_rows(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


# --- commands ---------------------------------------------------------------------


def cmd_sweep(args) -> int:
    config = build_config(args)
    budgets = args.budgets or ([config.budget] if args.budget is not None else _floats(DEFAULT_BUDGETS))
    methods = _names(args.methods)
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown method(s) {bad}; choose from {list(METHODS)}")
    for b in budgets:
        replace(config, budget=b)
    source = resolve_source(args)
    seeds = list(range(args.seeds))
    write_manifest(args.out, "sweep", config, seeds, ["pareto.csv"], {
        "dataset": source if isinstance(source, str) else source.name,
        "methods": ",".join(methods),
        "budgets": ",".join(str(b) for b in budgets),
        "jobs": args.jobs,
    })
    report = pareto_sweep(source, methods, budgets, seeds, config, jobs=args.jobs,
                          measure_time=args.time, delta=args.delta, k_nn=args.k_nn)
    report.to_csv(args.out / "pareto.csv")
    print(f"wrote {len(report.rows)} rows to {args.out / 'pareto.csv'}")
    return EXIT_OK


def _onset(ds: Dataset, override: int | None) -> int:
    if override is not None:
        return override
    change = np.flatnonzero(ds.labels != ds.labels[0])
    if change.size == 0:
        raise DataError("labels never change; pass --onset")
    return int(change[0])


def cmd_adaptivity(args) -> int:
    config = build_config(args)
    source = resolve_source(args)
    seeds = list(range(args.seeds))
    lams = args.lams
    outputs = [f"trace_lam{lam:g}_seed{s}.csv" for lam in lams for s in seeds] + ["reaction.csv"]
    write_manifest(args.out, "adaptivity", config, seeds, outputs,
                   {"lams": ",".join(f"{x:g}" for x in lams), "top_n": args.top_n,
                    "change_fraction": args.change_fraction})
    rows = []
    for seed in seeds:
        ds = _dataset_for(source, seed)
        onset = _onset(ds, args.onset)
        onset_w = onset // config.w
        n_w = math.ceil(ds.n_samples / config.w)
        if not 1 <= onset_w < n_w:
            raise DataError(f"onset sample {onset} (window {onset_w}) outside the trace of {n_w} windows")
        for lam in lams:
            _, trace = run_triage(ds.values, replace(config, lam=lam))
            _write_rows(args.out / f"trace_lam{lam:g}_seed{seed}.csv", ds.channel_names,
                        [[float(x) for x in r] for r in trace])
            tau = reaction_time(trace, onset_w, args.top_n, args.change_fraction)
            rows.append([f"{lam:g}", seed, "none" if tau is None else tau])
    _write_rows(args.out / "reaction.csv", ["lam", "seed", "reaction_windows"], rows)
    for r in rows:
        print(f"lam={r[0]} seed={r[1]} reaction={r[2]}")
    return EXIT_OK


def cmd_scale(args) -> int:
    config = build_config(args)
    sizes = [int(x) for x in args.sizes]
    write_manifest(args.out, "scale", config, [0], ["scale.csv"],
                   {"sizes": ",".join(map(str, sizes)), "repeats": args.repeats})
    ms = timing_probe(lambda d: triage_window_op(d, w=config.w, k=config.k), sizes,
                      repeats=args.repeats)
    _write_rows(args.out / "scale.csv", ["d", "w", "k", "ms_per_window"],
                [[d, config.w, min(config.k, d), ms[d]] for d in sizes])
    for d in sizes:
        print(f"d={d:5d}  {ms[d]:.3f} ms/window")
    return EXIT_OK


def cmd_theory_check(args) -> int:
    only = _names(args.only) if args.only else None
    if only:
        bad = [n for n in only if n not in REGISTRY]
        if bad:
            raise ConfigError(f"unknown check(s) {bad}; available: {', '.join(REGISTRY)}")
    results = run_checks(only, range(args.seeds))
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} properties passed")
    return EXIT_OK if failed == 0 else EXIT_PROPERTY


def cmd_perturb_eval(args) -> int:
    config = build_config(args)
    source = resolve_source(args)
    seeds = list(range(args.seeds))
    kinds = _names(args.kinds)
    bad = [k for k in kinds if k not in ("none",) + PERTURBATION_KINDS]
    if bad:
        raise ConfigError(f"unknown perturbation(s) {bad}")
    methods = _names(args.methods)
    write_manifest(args.out, "perturb-eval", config, seeds, ["perturb.csv"],
                   {"kinds": ",".join(kinds), "methods": ",".join(methods)})
    rows = []
    for kind in kinds:
        for method in methods:
            for seed in seeds:
                ds = _dataset_for(source, seed)
                if kind != "none":
                    ds = perturb(ds, Perturbation(kind, noise_sigma=args.noise_sigma,
                                                  loss_fraction=args.loss_fraction,
                                                  window=config.w, seed=seed))
                res = run_cell(ds, method, config, seed, k_nn=args.k_nn)
                rows.append(EvalRow(f"{ds.name}+{kind}", method, config.budget, seed, config.recon,
                                    res.f1, res.ms_per_window, res.commanded_bw, res.realized_bw))
    EvalReport(rows).to_csv(args.out / "perturb.csv")
    print(f"wrote {len(rows)} rows to {args.out / 'perturb.csv'}")
    return EXIT_OK


def cmd_joint(args) -> int:
    config = build_config(args)
    source = resolve_source(args)
    seeds = list(range(args.seeds))
    budgets = args.budgets or [config.budget]
    for b in budgets:
        replace(config, budget=b)
    methods = _names(args.methods)
    write_manifest(args.out, "joint", config, seeds, ["joint.csv"], {
        "budgets": ",".join(map(str, budgets)), "deltas": ",".join(map(str, args.deltas)),
        "methods": ",".join(methods),
    })
    header = ["dataset", "method", "budget", "delta", "seed", "recon", "f1",
              "commanded_bw", "realized_bw"]
    rows = []
    for method in methods:
        for b in budgets:
            # delta only matters to the send-on-delta variants
            deltas = args.deltas if method in ("sod", "joint") else [math.nan]
            if method == "sod" and b != budgets[0]:
                continue
            for delta in deltas:
                for seed in seeds:
                    ds = _dataset_for(source, seed)
                    cfg = replace(config, budget=b)
                    res = run_cell(ds, method, cfg, seed, k_nn=args.k_nn,
                                   delta=DEFAULT_DELTA if math.isnan(delta) else delta)
                    rows.append([ds.name, method, math.nan if method == "sod" else float(b),
                                 float(delta), seed, cfg.recon, res.f1, res.commanded_bw,
                                 res.realized_bw])
    _write_rows(args.out / "joint.csv", header, rows)
    print(f"wrote {len(rows)} rows to {args.out / 'joint.csv'}")
    return EXIT_OK


# --- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sensor-triage", description="Bandwidth-budgeted sensor triage experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sweep", help="F1 versus bandwidth over methods, budgets and seeds")
    _add_config_flags(s)
    _add_data_flags(s)
    _add_run_flags(s)
    s.add_argument("--methods", default=DEFAULT_METHODS)
    s.add_argument("--budgets", type=_floats)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    s.add_argument("--k-nn", dest="k_nn", type=int, default=5)
    s.add_argument("--time", action="store_true",
                   help="record ms_per_window (wall clock, so not reproducible)")
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("adaptivity", help="importance traces and reaction time per forgetting factor")
    _add_config_flags(a)
    _add_data_flags(a, default_synthetic="regime")
    _add_run_flags(a, seeds=1)
    a.add_argument("--lams", type=_floats, default=[0.8, 0.85, 0.9, 1.0])
    a.add_argument("--onset", type=int, help="onset sample index (default: first label change)")
    a.add_argument("--top-n", dest="top_n", type=int, default=5)
    a.add_argument("--change-fraction", dest="change_fraction", type=float, default=0.2)
    a.set_defaults(func=cmd_adaptivity)

    c = sub.add_parser("scale", help="per-window triage time versus channel count")
    _add_config_flags(c)
    c.add_argument("--sizes", type=_floats, default=[8, 25, 50, 100, 200, 300, 500])
    c.add_argument("--repeats", type=int, default=30)
    c.add_argument("--out", type=Path, default=Path("out"))
    c.set_defaults(func=cmd_scale)

    t = sub.add_parser("theory-check", help="run the executable guarantees")
    t.add_argument("--only", help=f"comma list from: {', '.join(REGISTRY)}")
    t.add_argument("--seeds", type=int, default=10)
    t.set_defaults(func=cmd_theory_check)

    e = sub.add_parser("perturb-eval", help="F1 under deployment perturbations")
    _add_config_flags(e)
    _add_data_flags(e)
    _add_run_flags(e)
    e.add_argument("--kinds", default="none," + ",".join(PERTURBATION_KINDS))
    e.add_argument("--methods", default="pca,variance,uniform")
    e.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=0.1)
    e.add_argument("--loss-fraction", dest="loss_fraction", type=float, default=0.1)
    e.add_argument("--k-nn", dest="k_nn", type=int, default=5)
    e.set_defaults(func=cmd_perturb_eval)

    j = sub.add_parser("joint", help="spatial triage combined with send-on-delta, plus OGD")
    _add_config_flags(j)
    _add_data_flags(j)
    _add_run_flags(j)
    j.add_argument("--methods", default="pca,sod,joint,ogd")
    j.add_argument("--budgets", type=_floats)
    j.add_argument("--deltas", type=_floats, default=[0.05, 0.1, 0.3])
    j.add_argument("--k-nn", dest="k_nn", type=int, default=5)
    j.set_defaults(func=cmd_joint)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
