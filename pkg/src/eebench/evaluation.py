"""Leave-one-subject-out protocol, error metrics and the experiment surfaces."""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .catalog import BY_ID, resolve_selection
from .dataset import CONDITIONS, DomainError, ProtocolError
from .models import ModelSpec, build_model
from .training import TrainConfig, split_train_validation, train
from .windowing import WindowedDataset, apply_scaler, fit_scaler, windows_for_recording

log = logging.getLogger(__name__)

TRANSITION = "transition"


def rmse(pred, target) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.size == 0:
        raise DomainError("rmse of empty input")
    if pred.shape != target.shape:
        raise DomainError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def nrmse(rmse_value: float, activity_mean_ee: float) -> float:
    if not activity_mean_ee > 0:
        raise DomainError(f"activity mean EE must be positive, got {activity_mean_ee}")
    return rmse_value / activity_mean_ee


def loso_folds(subject_ids):
    """One fold per subject, ordered by id: ``[(test_id, [train_ids...]), ...]``."""
    ids = list(subject_ids)
    if len(set(ids)) != len(ids):
        raise ProtocolError(f"duplicate subject ids in {ids}")
    if len(ids) < 2:
        raise ProtocolError("leave-one-subject-out needs at least two subjects")
    ids = sorted(ids)
    return [(t, [s for s in ids if s != t]) for t in ids]


@dataclass
class FoldResult:
    test_subject: int
    predictions: np.ndarray
    targets: np.ndarray
    activity: np.ndarray
    condition: np.ndarray
    transition: np.ndarray
    rmse: float
    train_subjects: tuple = ()
    n_train: int = 0
    n_val: int = 0
    best_epoch: int = -1
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    checksum: str = ""
    per_step: np.ndarray | None = None
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)


@dataclass
class BoxplotRecord:
    n: int
    median: float
    q25: float
    q75: float
    whisker_lo: float
    whisker_hi: float
    outliers: tuple


def boxplot_stats(values) -> BoxplotRecord:
    """Quartiles by linear interpolation, whiskers at the furthest data within 1.5 IQR.

    A whisker never ends inside the box: if every in-fence point on one side
    lies between the quartiles it is pinned to the quartile (as matplotlib does).
    """
    v = np.sort(np.asarray(values, dtype=float))
    v = v[np.isfinite(v)]
    if v.size == 0:
        nan = float("nan")
        return BoxplotRecord(0, nan, nan, nan, nan, nan, ())
    q25, med, q75 = np.percentile(v, [25, 50, 75], method="linear")
    iqr = q75 - q25
    lo_fence, hi_fence = q25 - 1.5 * iqr, q75 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    outliers = tuple(float(x) for x in v[(v < lo_fence) | (v > hi_fence)])
    lo, hi = min(float(inside.min()), q25), max(float(inside.max()), q75)
    return BoxplotRecord(len(v), float(med), float(q25), float(q75), float(lo), float(hi), outliers)


@dataclass
class MetricsReport:
    selection: str
    channels: tuple
    spec: ModelSpec
    folds: list
    fingerprint: str
    config: dict

    @property
    def model(self) -> str:
        return self.spec.family

    @property
    def fold_rmse(self) -> dict:
        return {f.test_subject: f.rmse for f in self.folds}

    @property
    def failed_folds(self) -> list:
        return [f.test_subject for f in self.folds if f.failed]

    @property
    def overall_rmse(self) -> float:
        vals = [f.rmse for f in self.folds if not f.failed]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def per_subject(self) -> BoxplotRecord:
        return boxplot_stats([f.rmse for f in self.folds if not f.failed])

    def per_activity(self) -> pd.DataFrame:
        return per_activity_eval([f for f in self.folds if not f.failed])


def config_fingerprint(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _subject_windows(dataset, selection, window_len, stride, include_rest):
    return {r.subject_id: windows_for_recording(r, selection, window_len, stride, include_rest) for r in dataset}


def _run_fold(windows: dict, test_id, train_ids, spec: ModelSpec, config: TrainConfig, standardize: bool,
              keep_per_step: bool) -> FoldResult:
    import torch

    torch.set_num_threads(1)
    test = windows[test_id]
    empty = np.empty(0)
    try:
        pool = WindowedDataset.concat([windows[s] for s in train_ids])
        tr, va = split_train_validation(pool, config.validation_fraction, config.seed)
        if standardize:
            scaler = fit_scaler(tr)
            tr, va, te = apply_scaler(scaler, tr), apply_scaler(scaler, va), apply_scaler(scaler, test)
        else:
            te = test
        if len(te) == 0:
            raise ProtocolError(f"subject {test_id} yields no test windows")
        model = build_model(spec, pool.n_channels, pool.window_len, seed=config.seed)
        model, report = train(model, tr, va, config)
        pred = model.predict(te.X)
        per_step = None
        if keep_per_step and hasattr(model, "per_step"):
            with torch.no_grad():
                model.eval()
                per_step = model.per_step(torch.as_tensor(te.X, dtype=torch.float32)).numpy()
        return FoldResult(test_id, pred, te.y, te.activity, te.condition, te.spans_transition, rmse(pred, te.y),
                          tuple(train_ids), len(tr), len(va), report.best_epoch, report.train_loss, report.val_loss,
                          report.checksum, per_step)
    except Exception as exc:  # a failed fold is reported, not fatal
        log.exception("fold %s failed", test_id)
        return FoldResult(test_id, empty, empty, empty, empty, empty, float("nan"), tuple(train_ids),
                          error=f"{type(exc).__name__}: {exc}")


def run_loso_experiment(dataset, selection, model_spec: ModelSpec, train_config: TrainConfig = TrainConfig(), *,
                        stride: int = 1, standardize: bool = True, include_rest: bool = True, jobs: int = 1,
                        dataset_id: str = "", keep_per_step: bool = False) -> MetricsReport:
    """Train on all-but-one subject, test on the held-out one, for every subject."""
    if len(dataset) < 2:
        raise ProtocolError("need at least two subjects")
    channels = tuple(resolve_selection(selection))
    sel_label = selection if isinstance(selection, str) else "+".join(channels)
    folds = loso_folds([r.subject_id for r in dataset])
    windows = _subject_windows(dataset, list(channels), model_spec.window_len, stride, include_rest)
    cfg = {
        "dataset": dataset_id or f"{len(dataset)} subjects",
        "subjects": sorted(r.subject_id for r in dataset),
        "selection": sel_label,
        "channels": list(channels),
        "model": model_spec.to_dict(),
        "train": train_config.to_dict(),
        "stride": stride,
        "standardize": standardize,
        "include_rest": include_rest,
    }
    args = [(windows, t, tr, model_spec, train_config, standardize, keep_per_step) for t, tr in folds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_fold, *zip(*args)))
    else:
        results = [_run_fold(*a) for a in args]
    return MetricsReport(sel_label, channels, model_spec, results, config_fingerprint(cfg), cfg)


def _condition_order(activity, condition):
    acts = list(CONDITIONS)
    a = acts.index(activity) if activity in CONDITIONS else len(acts)
    conds = CONDITIONS.get(activity, ())
    c = conds.index(condition) if condition in conds else len(conds)
    return a, c, str(condition)


def per_activity_eval(fold_results, activity_mean_ee: dict | None = None) -> pd.DataFrame:
    """RMSE and NRMSE per (activity, condition); transition windows get their own row.

    Each fold contributes an RMSE and a mean target for every condition it
    contains; a row averages those over folds. NRMSE divides by the mean EE
    of the condition's test samples unless ``activity_mean_ee`` supplies one.
    Conditions with a non-positive mean are flagged instead of normalised.
    """
    acc: dict = {}
    for f in fold_results:
        trans = np.asarray(f.transition, dtype=bool)
        keys = [(a, c) for a, c in zip(f.activity, f.condition)]
        groups: dict = {}
        for i, k in enumerate(keys):
            groups.setdefault((TRANSITION, "all") if trans[i] else k, []).append(i)
        for k, idx in groups.items():
            p, t = f.predictions[idx], f.targets[idx]
            acc.setdefault(k, []).append((rmse(p, t), float(np.mean(t)), len(idx)))
    rows = []
    for (a, c), vals in acc.items():
        r = np.array([v[0] for v in vals])
        m = np.array([v[1] for v in vals])
        mean_ee = activity_mean_ee.get((a, c), float(m.mean())) if activity_mean_ee else float(m.mean())
        if activity_mean_ee and (a, c) in activity_mean_ee:
            norm = [x / mean_ee for x in r] if mean_ee > 0 else []
        else:
            norm = [nrmse(x, mm) for x, mm in zip(r, m) if mm > 0]
        flag = "" if len(norm) == len(r) else "non-positive mean EE"
        rows.append({"activity": a, "condition": c, "n_samples": int(sum(v[2] for v in vals)), "n_folds": len(vals),
                     "rmse": float(r.mean()), "mean_ee": mean_ee,
                     "nrmse": float(np.mean(norm)) if norm else float("nan"), "flag": flag})
    if not rows:
        return pd.DataFrame(columns=["activity", "condition", "n_samples", "n_folds", "rmse", "mean_ee", "nrmse", "flag"])
    rows.sort(key=lambda r: (r["activity"] == TRANSITION,) + _condition_order(r["activity"], r["condition"]))
    return pd.DataFrame(rows)


def per_subject_stats(reports) -> pd.DataFrame:
    """Boxplot record per (selection, model) from fold RMSEs.

    ``reports`` is an iterable of :class:`MetricsReport` or a mapping
    ``(selection, model) -> fold RMSE values``.
    """
    if isinstance(reports, dict):
        items = [(k[0], k[1], list(v)) for k, v in reports.items()]
    else:
        items = [(r.selection, r.model, [f.rmse for f in r.folds if not f.failed]) for r in reports]
    rows = []
    for sel, model, vals in items:
        b = boxplot_stats(vals)
        rows.append({"selection": sel, "model": model, "n": b.n, "median": b.median, "q25": b.q25, "q75": b.q75,
                     "whisker_lo": b.whisker_lo, "whisker_hi": b.whisker_hi,
                     "outliers": ";".join(repr(x) for x in b.outliers)})
    return pd.DataFrame(rows)


# ------------------------------------------------------------------ sweeps

@dataclass
class SweepResult:
    matrix: pd.DataFrame
    reports: dict
    failures: dict

    def best_partner(self, exclude=()) -> pd.DataFrame:
        return best_partner_table(self.matrix, exclude)

    def worst_pairs(self, n: int = 16) -> pd.DataFrame:
        return worst_pairs_table(self.matrix, n)


def pair_key(a: str, b: str) -> str:
    return f"{a}+{b}"


def pairwise_sweep(dataset, universe, model_specs, train_config: TrainConfig = TrainConfig(), *,
                   anchor: str | None = None, jobs: int = 1, **loso_kw) -> SweepResult:
    """LOSO RMSE for every unordered channel pair and model.

    With ``anchor`` only pairs containing that channel are run (plus the
    anchor alone, as the heatmap's first row).
    """
    universe = resolve_selection(universe) if isinstance(universe, str) else list(universe)
    for c in universe:
        if c not in BY_ID:
            raise ValueError(f"{c!r} is not an input channel")
    pairs = list(itertools.combinations(universe, 2))
    cells = [(a,) for a in [anchor]] if anchor else []
    if anchor:
        pairs = [p for p in pairs if anchor in p]
    cells += pairs
    reports, failures = {}, {}
    table = {}
    for cell in cells:
        key = cell[0] if len(cell) == 1 else pair_key(*cell)
        row = {}
        for spec in model_specs:
            try:
                rep = run_loso_experiment(dataset, list(cell), spec, train_config, jobs=jobs, **loso_kw)
                reports[(key, spec.family)] = rep
                row[spec.family] = rep.overall_rmse
                if rep.failed_folds:
                    failures[(key, spec.family)] = f"failed folds {rep.failed_folds}"
            except Exception as exc:
                log.exception("sweep cell %s/%s failed", key, spec.family)
                failures[(key, spec.family)] = f"{type(exc).__name__}: {exc}"
                row[spec.family] = float("nan")
        table[key] = row
    matrix = pd.DataFrame.from_dict(table, orient="index", columns=[s.family for s in model_specs])
    matrix.index.name = "pair"
    return SweepResult(matrix, reports, failures)


def best_partner_table(matrix: pd.DataFrame, exclude=()) -> pd.DataFrame:
    """For each channel, its lowest-RMSE partner and model (partners in ``exclude`` skipped)."""
    exclude = set(exclude)
    cells = []
    for key, row in matrix.iterrows():
        parts = key.split("+")
        if len(parts) != 2:
            continue
        for model, v in row.items():
            if np.isfinite(v):
                cells.append((parts[0], parts[1], model, float(v)))
    signals = []
    for a, b, _, _ in cells:
        for s in (a, b):
            if s not in signals:
                signals.append(s)
    rows = []
    for s in signals:
        best = None
        for a, b, model, v in cells:
            if s not in (a, b):
                continue
            partner = b if a == s else a
            if partner in exclude:
                continue
            if best is None or v < best[2]:
                best = (partner, model, v)
        if best:
            rows.append({"signal": s, "best_pair": best[0], "model": best[1], "rmse": best[2]})
    return pd.DataFrame(rows, columns=["signal", "best_pair", "model", "rmse"])


def worst_pairs_table(matrix: pd.DataFrame, n: int = 16) -> pd.DataFrame:
    cells = []
    for key, row in matrix.iterrows():
        parts = key.split("+")
        if len(parts) != 2:
            continue
        for model, v in row.items():
            if np.isfinite(v):
                cells.append({"signal_1": parts[0], "signal_2": parts[1], "model": model, "rmse": float(v)})
    df = pd.DataFrame(cells, columns=["signal_1", "signal_2", "model", "rmse"])
    return df.sort_values("rmse", kind="stable").tail(n).reset_index(drop=True)


def grid_search(dataset, selection, family: str, grid: dict, train_config: TrainConfig = TrainConfig(),
                **loso_kw) -> pd.DataFrame:
    """LOSO RMSE for every combination of the hyperparameter ``grid``.

    Keys of ``grid`` are ModelSpec fields or architecture constants; the
    special keys ``epochs``, ``batch_size`` and ``learning_rate`` also reach
    the training config.
    """
    keys = list(grid)
    rows = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        params = dict(zip(keys, combo))
        cfg = train_config
        if "epochs" in params:
            cfg = replace(cfg, epochs=params.pop("epochs"))
        spec = ModelSpec.default(family, **params)
        rep = run_loso_experiment(dataset, selection, spec, cfg, **loso_kw)
        rows.append({**dict(zip(keys, combo)), "rmse": rep.overall_rmse, "fingerprint": rep.fingerprint})
    return pd.DataFrame(rows).sort_values("rmse", kind="stable").reset_index(drop=True)
