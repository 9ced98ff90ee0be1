"""Command-line front end: run, sweep, reproduce, gen-synth, gradcheck.

Exit codes: 0 success, 1 some folds or cells failed (partial outputs kept),
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import reporting
from .catalog import CHANNEL_IDS, NAMED_GROUPS, SelectionError, resolve_selection
from .dataset import CONDITIONS, REST_ACTIVITIES, IngestionError, load_dataset
from .evaluation import config_fingerprint, pairwise_sweep, per_subject_stats, run_loso_experiment
from .models import FAMILIES, ModelSpec, build_model, canonical_family
from .models.zoo import BuildError
from .training import TrainConfig, finite_difference_gradcheck

log = logging.getLogger("eebench")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2
TABLES = ("table1", "table2", "fig2", "fig3", "fig4", "tableS1")
TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}
TABLE1_ROWS = list(CHANNEL_IDS) + list(NAMED_GROUPS) + ["vo2"]


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    """Everything a command needs; serialisable to and from JSON."""

    data: str | None = None
    out: str = "results"
    seed: int = 0
    jobs: int = 1
    signals: list = field(default_factory=lambda: ["minute_ventilation"])
    models: list = field(default_factory=lambda: ["linreg"])
    train: dict = field(default_factory=dict)
    model_overrides: dict = field(default_factory=dict)
    stride: int = 1
    standardize: bool = True
    include_rest: bool = True
    synthetic: dict = field(default_factory=lambda: {"subjects": 3, "protocol": "full", "noise": 0.2})
    universe: str = "all"
    anchor: str | None = None
    save_predictions: bool = False

    _TYPES = {"data": (str, type(None)), "out": str, "seed": int, "jobs": int, "signals": list, "models": list,
              "train": dict, "model_overrides": dict, "stride": int, "standardize": bool, "include_rest": bool,
              "synthetic": dict, "universe": str, "anchor": (str, type(None)), "save_predictions": bool}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        cfg = cls()
        return cfg.merged(d, "config")

    def merged(self, d: dict, where: str = "config") -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise UsageError(f"{where}: expected an object")
        upd = {}
        for k, v in d.items():
            if k not in self._TYPES:
                raise UsageError(f"{where}.{k}: unknown field")
            t = self._TYPES[k]
            if isinstance(v, bool) and t is int or not isinstance(v, t):
                raise UsageError(f"{where}.{k}: expected {getattr(t, '__name__', t)}, got {type(v).__name__}")
            upd[k] = v
        if "synthetic" in upd:
            upd["synthetic"] = {**self.synthetic, **upd["synthetic"]}
        cfg = replace(self, **upd)
        cfg.validate(where)
        return cfg

    def validate(self, where: str = "config"):
        if self.jobs < 1:
            raise UsageError(f"{where}.jobs: must be >= 1")
        if self.stride < 1:
            raise UsageError(f"{where}.stride: must be >= 1")
        for i, m in enumerate(self.models):
            try:
                canonical_family(m)
            except (BuildError, KeyError, ValueError) as exc:
                raise UsageError(f"{where}.models[{i}]: {exc}") from None
        for i, s in enumerate(self.signals):
            try:
                resolve_selection(NAMED_GROUPS.get(s, s))
            except SelectionError as exc:
                raise UsageError(f"{where}.signals[{i}]: {exc}") from None
        for k, v in self.train.items():
            if k not in TRAIN_KEYS:
                raise UsageError(f"{where}.train.{k}: unknown training option (one of {sorted(TRAIN_KEYS)})")
        for fam, ov in self.model_overrides.items():
            try:
                ModelSpec.default(fam, **ov)
            except (BuildError, TypeError, KeyError, ValueError) as exc:
                raise UsageError(f"{where}.model_overrides.{fam}: {exc}") from None
        for k in self.synthetic:
            if k not in ("subjects", "protocol", "noise"):
                raise UsageError(f"{where}.synthetic.{k}: unknown field")

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        d = self.to_dict()
        for k in ("out", "jobs"):
            d.pop(k)
        return config_fingerprint(d)

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(seed=self.seed, **self.train)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"config.train: {exc}") from None

    def model_specs(self) -> list:
        specs = []
        for m in self.models:
            fam = canonical_family(m)
            ov = self.model_overrides.get(fam, self.model_overrides.get(m, {}))
            specs.append(ModelSpec.default(fam, **ov))
        return specs

    @property
    def is_synthetic(self) -> bool:
        return bool(self.data) and self.data.startswith("synthetic:")


# ------------------------------------------------------------------ data

def load_data(cfg: ExperimentConfig):
    if not cfg.data:
        raise UsageError("no dataset: pass --data <root> or --data synthetic:<seed>")
    if cfg.is_synthetic:
        from .synthgen import Protocol, make_profiles, synthetic_dataset

        try:
            seed = int(cfg.data.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"--data {cfg.data!r}: expected synthetic:<integer seed>") from None
        syn = cfg.synthetic
        n = int(syn.get("subjects", 3))
        if n < 2:
            raise UsageError("config.synthetic.subjects: need at least two subjects")
        try:
            protocol = Protocol.named(syn.get("protocol", "full"))
        except ValueError as exc:
            raise UsageError(f"config.synthetic.protocol: {exc}") from None
        return synthetic_dataset(seed, n, protocol, profiles=make_profiles(n, seed, float(syn.get("noise", 0.2))))
    try:
        return load_dataset(cfg.data)
    except IngestionError as exc:
        raise UsageError(f"--data: {exc}") from None


def _slug(text: str, limit: int = 60) -> str:
    s = re.sub(r"[^A-Za-z0-9_.+-]+", "-", text)
    return s if len(s) <= limit else s[:limit - 9] + "-" + config_fingerprint({"s": s})[:8]


def _selection_expr(s: str) -> str:
    return NAMED_GROUPS.get(s, s)


def _loso_kw(cfg: ExperimentConfig) -> dict:
    return {"stride": cfg.stride, "standardize": cfg.standardize, "include_rest": cfg.include_rest,
            "dataset_id": cfg.data}


def _run_grid(dataset, cfg: ExperimentConfig, selections, specs):
    """One LOSO experiment per (selection, model); failures are collected, not raised."""
    tcfg = cfg.train_config()
    reports, failures = [], {}
    for sel in selections:
        for spec in specs:
            try:
                rep = run_loso_experiment(dataset, _selection_expr(sel), spec, tcfg, jobs=cfg.jobs, **_loso_kw(cfg))
                rep.selection = sel
                reports.append(rep)
                if rep.failed_folds:
                    failures[f"{sel}/{spec.family}"] = f"failed folds {rep.failed_folds}"
            except Exception as exc:
                log.exception("%s / %s failed", sel, spec.family)
                failures[f"{sel}/{spec.family}"] = f"{type(exc).__name__}: {exc}"
    return reports, failures


def _nondefault_flags(cfg: ExperimentConfig, specs) -> list:
    flags = [f"{s.family}.{k}" for s in specs for k in s.overrides]
    if not cfg.standardize:
        flags.append("standardize=false")
    if cfg.stride != 1:
        flags.append(f"stride={cfg.stride}")
    if not cfg.include_rest:
        flags.append("include_rest=false")
    flags += [f"train.{k}" for k in cfg.train]
    return flags


def write_run_reports(out_dir: Path, cfg: ExperimentConfig, reports, failures, specs) -> None:
    fp, seed = cfg.fingerprint(), cfg.seed
    reporting.write_csv(reporting.overall_table(reports), out_dir / "overall.csv", fp, seed)
    reporting.write_csv(reporting.folds_table(reports), out_dir / "folds.csv", fp, seed)
    reporting.write_csv(reporting.per_activity_table(reports), out_dir / "per_activity.csv", fp, seed)
    reporting.write_csv(per_subject_stats(reports), out_dir / "per_subject.csv", fp, seed)
    for r in reports:
        name = _slug(f"{r.selection}__{r.model}")
        reporting.write_csv(reporting.loss_curve_table(r), out_dir / "loss_curves" / f"{name}.csv", fp, seed)
        if cfg.save_predictions:
            reporting.write_csv(reporting.predictions_table(r), out_dir / "predictions" / f"{name}.csv", fp, seed)
    reporting.write_json({"fingerprint": fp, "seed": seed, "config": cfg.to_dict(),
                          "nondefault": _nondefault_flags(cfg, specs),
                          "results": [{"selection": r.selection, "model": r.model, "overall_rmse": r.overall_rmse,
                                       "run_fingerprint": r.fingerprint} for r in reports],
                          "failures": failures}, out_dir / "summary.json")
    if reports:
        reporting.plot_boxplots(out_dir / "per_subject.csv", out_dir / "boxplots.png")
        reporting.plot_per_activity(out_dir / "per_activity.csv", out_dir / "per_activity.png")


# ------------------------------------------------------------------ commands

def cmd_run(cfg: ExperimentConfig) -> int:
    dataset = load_data(cfg)
    specs = cfg.model_specs()
    label = f"{'+'.join(cfg.signals) if len(cfg.signals) <= 3 else f'{len(cfg.signals)}sel'}"
    out_dir = Path(cfg.out) / _slug(f"{label}__{'-'.join(s.family for s in specs)}__seed{cfg.seed}", 120)
    reports, failures = _run_grid(dataset, cfg, cfg.signals, specs)
    write_run_reports(out_dir, cfg, reports, failures, specs)
    for r in reports:
        print(f"{r.selection:30s} {r.model:18s} RMSE {r.overall_rmse:.4f} W/kg")
    print(f"reports in {out_dir}")
    return EXIT_PARTIAL if failures else EXIT_OK


def _write_sweep(out_dir: Path, cfg, sweep, exclude=()):
    fp, seed = cfg.fingerprint(), cfg.seed
    reporting.write_csv(sweep.matrix.reset_index(), out_dir / "matrix.csv", fp, seed)
    reporting.write_csv(sweep.best_partner(exclude), out_dir / "best_partner.csv", fp, seed)
    reporting.write_csv(sweep.worst_pairs(), out_dir / "worst_pairs.csv", fp, seed)
    reporting.write_json({"fingerprint": fp, "seed": seed, "config": cfg.to_dict(),
                          "failures": {f"{k[0]}/{k[1]}": v for k, v in sweep.failures.items()}},
                         out_dir / "summary.json")
    reporting.plot_heatmap(out_dir / "matrix.csv", out_dir / "heatmap.png")


def cmd_sweep(cfg: ExperimentConfig) -> int:
    dataset = load_data(cfg)
    specs = cfg.model_specs()
    out_dir = Path(cfg.out) / _slug(f"sweep_{cfg.universe}{'_' + cfg.anchor if cfg.anchor else ''}__"
                                    f"{'-'.join(s.family for s in specs)}__seed{cfg.seed}", 120)
    try:
        universe = resolve_selection(_selection_expr(cfg.universe))
    except SelectionError as exc:
        raise UsageError(f"config.universe: {exc}") from None
    sweep = pairwise_sweep(dataset, universe, specs, cfg.train_config(), anchor=cfg.anchor, jobs=cfg.jobs,
                           **_loso_kw(cfg))
    _write_sweep(out_dir, cfg, sweep)
    print(f"{len(sweep.matrix)} rows x {len(specs)} models; reports in {out_dir}")
    return EXIT_PARTIAL if sweep.failures else EXIT_OK


def _reference_frame(table_id: str) -> pd.DataFrame:
    ref = reporting.reference_values()
    if table_id == "table1":
        t = ref["table1"]
        return pd.DataFrame.from_dict(t["rows"], orient="index", columns=[f"{c}_reference" for c in t["columns"]])
    if table_id == "table2":
        return pd.DataFrame(ref["table2"], columns=["activity", "condition", "ref_single_nrmse", "ref_single_signal",
                                                    "ref_group_nrmse", "ref_group"])
    return pd.DataFrame(ref[table_id], columns=["signal_1", "signal_2", "ref_model", "ref_rmse"])


def _table1(out_dir, cfg, dataset, specs):
    reports, failures = _run_grid(dataset, cfg, TABLE1_ROWS, specs)
    got = pd.DataFrame(index=TABLE1_ROWS)
    for r in reports:
        got.loc[r.selection, r.model] = r.overall_rmse
    ref = _reference_frame("table1")
    cols = []
    for s in specs:
        if s.family not in got:
            got[s.family] = np.nan
        cols += [s.family, f"{s.family}_reference"]
    table = got.join(ref)[["linreg_prior_reference"] + cols]
    table.index.name = "signal"
    reporting.write_csv(table.reset_index(), out_dir / "table1.csv", cfg.fingerprint(), cfg.seed)
    return reports, failures


def _table2(out_dir, cfg, dataset, specs):
    singles, groups = list(CHANNEL_IDS), list(NAMED_GROUPS)
    reports, failures = _run_grid(dataset, cfg, singles + groups, specs)
    per = reporting.per_activity_table(reports)
    rows = []
    for act, conds in CONDITIONS.items():
        if act in REST_ACTIVITIES:
            continue
        for c in conds:
            row = {"activity": act, "condition": c}
            sub = per[(per["activity"] == act) & (per["condition"] == c)] if len(per) else per
            for kind, pool in (("single", singles), ("group", groups)):
                cand = sub[sub["selection"].isin(pool)].dropna(subset=["nrmse"]) if len(sub) else sub
                if len(cand):
                    best = cand.loc[cand["nrmse"].idxmin()]
                    row.update({f"{kind}_nrmse": best["nrmse"], f"{kind}_signal": best["selection"],
                                f"{kind}_model": best["model"]})
                else:
                    row.update({f"{kind}_nrmse": np.nan, f"{kind}_signal": "", f"{kind}_model": ""})
            rows.append(row)
    table = pd.DataFrame(rows).merge(_reference_frame("table2"), on=["activity", "condition"], how="left")
    reporting.write_csv(table, out_dir / "table2.csv", cfg.fingerprint(), cfg.seed)
    reporting.write_csv(per, out_dir / "per_activity.csv", cfg.fingerprint(), cfg.seed)
    return reports, failures


def _fig2(out_dir, cfg, dataset, specs):
    sweep = pairwise_sweep(dataset, list(CHANNEL_IDS), specs, cfg.train_config(), anchor="minute_ventilation",
                           jobs=cfg.jobs, **_loso_kw(cfg))
    _write_sweep(out_dir, cfg, sweep)
    return list(sweep.reports.values()), {f"{k[0]}/{k[1]}": v for k, v in sweep.failures.items()}


def _fig3(out_dir, cfg, dataset, specs, n_candidates=5):
    """Five best non-ventilation single channels, alone and with their best non-ventilation partner."""
    others = [c for c in CHANNEL_IDS if c != "minute_ventilation"]
    reports, failures = _run_grid(dataset, cfg, others, specs)
    single = {(r.selection, r.model): r.overall_rmse for r in reports}
    best_single = {s: min((v for (sel, _), v in single.items() if sel == s and np.isfinite(v)), default=np.inf)
                   for s in others}
    candidates = sorted(others, key=lambda s: (best_single[s], others.index(s)))[:n_candidates]
    pair_sweep = pairwise_sweep(dataset, others, specs, cfg.train_config(), jobs=cfg.jobs, **_loso_kw(cfg))
    failures.update({f"{k[0]}/{k[1]}": v for k, v in pair_sweep.failures.items()})
    rows = []
    for s in candidates:
        for spec in specs:
            rows.append({"kind": "single", "signal": s, "partner": "", "model": spec.family,
                         "rmse": single.get((s, spec.family), np.nan)})
            best = (np.inf, "")
            for key, row in pair_sweep.matrix.iterrows():
                a, b = key.split("+")
                if s in (a, b) and np.isfinite(row[spec.family]) and row[spec.family] < best[0]:
                    best = (row[spec.family], b if a == s else a)
            rows.append({"kind": "pair", "signal": s, "partner": best[1], "model": spec.family,
                         "rmse": best[0] if np.isfinite(best[0]) else np.nan})
    reporting.write_csv(pd.DataFrame(rows), out_dir / "fig3.csv", cfg.fingerprint(), cfg.seed)
    reporting.plot_alternatives(out_dir / "fig3.csv", out_dir / "fig3.png")
    return reports + list(pair_sweep.reports.values()), failures


def _fig4(out_dir, cfg, dataset, specs):
    reports, failures = _run_grid(dataset, cfg, list(CHANNEL_IDS) + list(NAMED_GROUPS), specs)
    reporting.write_csv(per_subject_stats(reports), out_dir / "fig4.csv", cfg.fingerprint(), cfg.seed)
    reporting.plot_boxplots(out_dir / "fig4.csv", out_dir / "fig4.png")
    return reports, failures


def _tableS1(out_dir, cfg, dataset, specs):
    sweep = pairwise_sweep(dataset, list(CHANNEL_IDS), specs, cfg.train_config(), jobs=cfg.jobs, **_loso_kw(cfg))
    fp, seed = cfg.fingerprint(), cfg.seed
    worst = sweep.worst_pairs(16)
    # published worst pairs sit beside ours rank by rank
    ref_worst = _reference_frame("tableS1_worst").rename(columns={"signal_1": "ref_signal_1",
                                                                  "signal_2": "ref_signal_2"})
    worst = pd.concat([worst.reset_index(drop=True), ref_worst.reindex(range(len(worst)))], axis=1)
    best = sweep.best_partner(exclude=("minute_ventilation",))
    ref_best = _reference_frame("tableS1_best").rename(
        columns={"signal_1": "signal", "signal_2": "ref_best_pair"})
    best = best.merge(ref_best, on="signal", how="left")
    reporting.write_csv(worst, out_dir / "tableS1_worst.csv", fp, seed)
    reporting.write_csv(best, out_dir / "tableS1_best.csv", fp, seed)
    reporting.write_csv(sweep.matrix.reset_index(), out_dir / "matrix.csv", fp, seed)
    return list(sweep.reports.values()), {f"{k[0]}/{k[1]}": v for k, v in sweep.failures.items()}


_REPRODUCERS = {"table1": _table1, "table2": _table2, "fig2": _fig2, "fig3": _fig3, "fig4": _fig4,
                "tableS1": _tableS1}


def cmd_reproduce(cfg: ExperimentConfig, table_id: str, demo: bool) -> int:
    if table_id not in _REPRODUCERS:
        raise UsageError(f"unknown table {table_id!r}; choose from {', '.join(TABLES)}")
    if demo:
        if not cfg.data:
            cfg = replace(cfg, data=f"synthetic:{cfg.seed}")
        elif not cfg.is_synthetic:
            raise UsageError("--demo runs on synthetic data; drop --data or pass --data synthetic:<seed>")
    elif not cfg.data or cfg.is_synthetic:
        raise UsageError(f"{table_id} reproduces results on the public 10-subject dataset: pass --data <dataset root>, "
                         f"or add --demo for synthetic-demo mode (same table layout, synthetic numbers)")
    dataset = load_data(cfg)
    specs = cfg.model_specs()
    out_dir = Path(cfg.out) / _slug(f"{table_id}{'_demo' if demo else ''}__{'-'.join(s.family for s in specs)}"
                                    f"__seed{cfg.seed}", 120)
    out_dir.mkdir(parents=True, exist_ok=True)
    _, failures = _REPRODUCERS[table_id](out_dir, cfg, dataset, specs)
    reporting.write_json({"table": table_id, "demo": demo, "fingerprint": cfg.fingerprint(), "seed": cfg.seed,
                          "config": cfg.to_dict(), "nondefault": _nondefault_flags(cfg, specs),
                          "failures": failures}, out_dir / "summary.json")
    print(f"{table_id}: reports in {out_dir}")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_gen_synth(cfg: ExperimentConfig) -> int:
    from .synthgen import Protocol, generate_dataset, make_profiles

    syn = cfg.synthetic
    n = int(syn.get("subjects", 3))
    try:
        protocol = Protocol.named(syn.get("protocol", "full"))
    except ValueError as exc:
        raise UsageError(f"config.synthetic.protocol: {exc}") from None
    recs = generate_dataset(cfg.out, make_profiles(n, cfg.seed, float(syn.get("noise", 0.2))), protocol)
    print(f"wrote {len(recs)} subjects ({recs[0].n_samples} samples each) to {cfg.out}")
    return EXIT_OK


def cmd_gradcheck(cfg: ExperimentConfig, eps: float, window_len: int = 12) -> int:
    rng = np.random.default_rng(cfg.seed)
    worst_ok = True
    for fam in [canonical_family(m) for m in cfg.models]:
        w = 1 if fam == "linreg" else window_len
        spec = ModelSpec.toy(fam, window_len=w)
        X = rng.standard_normal((4, w, 3))
        y = rng.standard_normal(4)
        model = build_model(spec, 3, w, seed=cfg.seed)
        res = finite_difference_gradcheck(model, (X, y), eps=eps, seed=cfg.seed)
        limit = 1e-8 if fam == "linreg" else 1e-3
        ok = res.max_rel_error < limit
        worst_ok &= ok
        print(f"{fam:18s} max rel error {res.max_rel_error:.3e} (limit {limit:g}) checked {res.n_checked} "
              f"skipped {res.n_skipped} {'ok' if ok else 'FAIL'}")
    return EXIT_OK if worst_ok else EXIT_PARTIAL


# ------------------------------------------------------------------ argument parsing

def _split_list(values):
    if values is None:
        return None
    return [v for item in values for v in item.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--data", help="dataset root, or synthetic:<seed>")
    g.add_argument("--out", help="output directory (default: results)")
    g.add_argument("--seed", type=int)
    g.add_argument("--jobs", type=int, help="worker processes for folds")
    g.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    g.add_argument("-v", "--verbose", action="store_true")

    exp = argparse.ArgumentParser(add_help=False)
    e = exp.add_argument_group("experiment")
    e.add_argument("--model", "--models", dest="models", action="append",
                   help=f"model families, comma-separated or repeated ({', '.join(FAMILIES)})")
    e.add_argument("--epochs", type=int)
    e.add_argument("--stride", type=int)
    e.add_argument("--dropout", type=float, help="dropout for every neural model")
    e.add_argument("--window-len", type=int, help="override every model's window length")
    e.add_argument("--no-standardize", action="store_true")
    e.add_argument("--exclude-rest", action="store_true", help="drop sitting/standing windows")
    e.add_argument("--subjects", type=int, help="synthetic subject count")
    e.add_argument("--protocol", choices=("full", "compact", "quick"), help="synthetic protocol")
    e.add_argument("--noise", type=float, help="synthetic EE noise sd (W/kg)")

    p = argparse.ArgumentParser(prog="eebench", description="Energy-expenditure regression benchmark.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common, exp], help="LOSO experiments for signal selections x models")
    r.add_argument("--signals", action="append", help="channel, group or expression such as local+global; repeatable")
    r.add_argument("--save-predictions", action="store_true")
    s = sub.add_parser("sweep", parents=[common, exp], help="every channel pair x models")
    s.add_argument("--universe", help="channels to pair (default all)")
    s.add_argument("--anchor", help="only pairs containing this channel")
    rp = sub.add_parser("reproduce", parents=[common, exp], help="emit one published table or figure")
    rp.add_argument("table", choices=TABLES)
    rp.add_argument("--demo", action="store_true", help="synthetic-demo mode")
    gs = sub.add_parser("gen-synth", parents=[common, exp], help="write a synthetic dataset to --out")
    gc = sub.add_parser("gradcheck", parents=[common, exp], help="finite-difference check of every family")
    gc.add_argument("--eps", type=float, default=1e-4)
    del gs
    return p


def config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.command in ("reproduce", "gradcheck"):
        cfg = replace(cfg, models=list(FAMILIES) if args.command == "gradcheck" else ["linreg"])
    if args.config:
        try:
            d = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--config: {exc}") from None
        cfg = cfg.merged(d, "config")
    upd = {}
    for k in ("data", "out", "seed", "jobs"):
        if getattr(args, k, None) is not None:
            upd[k] = getattr(args, k)
    if getattr(args, "models", None):
        upd["models"] = _split_list(args.models)
    if getattr(args, "signals", None):
        upd["signals"] = list(args.signals)
    for k in ("universe", "anchor"):
        if getattr(args, k, None):
            upd[k] = getattr(args, k)
    if getattr(args, "stride", None) is not None:
        upd["stride"] = args.stride
    if getattr(args, "no_standardize", False):
        upd["standardize"] = False
    if getattr(args, "exclude_rest", False):
        upd["include_rest"] = False
    if getattr(args, "save_predictions", False):
        upd["save_predictions"] = True
    if getattr(args, "epochs", None) is not None:
        upd["train"] = {**cfg.train, "epochs": args.epochs}
    syn = {k: getattr(args, k) for k in ("subjects", "protocol", "noise") if getattr(args, k, None) is not None}
    if syn:
        upd["synthetic"] = syn
    cfg = cfg.merged(upd, "args")
    mo = {}
    for m in cfg.models:
        ov = dict(cfg.model_overrides.get(canonical_family(m), {}))
        if getattr(args, "dropout", None) is not None and m != "linreg":
            ov["dropout"] = args.dropout
        if getattr(args, "window_len", None) is not None and canonical_family(m) != "linreg":
            ov["window_len"] = args.window_len
        if ov:
            mo[canonical_family(m)] = ov
    if mo:
        cfg = cfg.merged({"model_overrides": {**cfg.model_overrides, **mo}}, "args")
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "reproduce":
            return cmd_reproduce(cfg, args.table, args.demo)
        if args.command == "gen-synth":
            return cmd_gen_synth(cfg)
        return cmd_gradcheck(cfg, args.eps)
    except UsageError as exc:
        print(f"eebench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
