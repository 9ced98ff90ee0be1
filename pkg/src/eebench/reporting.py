"""CSV/JSON report writers and the static plots rendered from those CSVs."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

FLOAT_FORMAT = "%.10g"


def reference_values() -> dict:
    """Published results shipped with the package (comparison columns only)."""
    text = resources.files("eebench").joinpath("data/reference_values.json").read_text()
    return json.loads(text)


def write_csv(df: pd.DataFrame, path, fingerprint: str | None = None, seed: int | None = None) -> Path:
    """Write ``df`` with the provenance columns appended; rows are written as given."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = df.copy()
    if fingerprint is not None:
        df["fingerprint"] = fingerprint
    if seed is not None:
        df["seed"] = seed
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    return str(x)


# ------------------------------------------------------------------ tables from reports

def overall_table(reports) -> pd.DataFrame:
    rows = []
    for r in reports:
        rows.append({"selection": r.selection, "model": r.model, "n_channels": len(r.channels),
                     "overall_rmse": r.overall_rmse, "n_folds": len(r.folds),
                     "failed_folds": ";".join(str(s) for s in r.failed_folds),
                     "run_fingerprint": r.fingerprint})
    return pd.DataFrame(rows)


def folds_table(reports) -> pd.DataFrame:
    rows = []
    for r in reports:
        for f in r.folds:
            rows.append({"selection": r.selection, "model": r.model, "test_subject": f.test_subject,
                         "rmse": f.rmse, "n_train": f.n_train, "n_val": f.n_val, "n_test": len(f.targets),
                         "best_epoch": f.best_epoch, "checksum": f.checksum, "error": f.error})
    return pd.DataFrame(rows)


def per_activity_table(reports) -> pd.DataFrame:
    parts = []
    for r in reports:
        df = r.per_activity()
        df.insert(0, "model", r.model)
        df.insert(0, "selection", r.selection)
        parts.append(df)
    return pd.concat(parts, ignore_index=True) if parts else pd.DataFrame()


def loss_curve_table(report) -> pd.DataFrame:
    rows = []
    for f in report.folds:
        for e, (tl, vl) in enumerate(zip(f.train_loss, f.val_loss)):
            rows.append({"test_subject": f.test_subject, "epoch": e, "train_loss": tl, "val_loss": vl})
    return pd.DataFrame(rows, columns=["test_subject", "epoch", "train_loss", "val_loss"])


def predictions_table(report) -> pd.DataFrame:
    parts = []
    for f in report.folds:
        if f.failed:
            continue
        parts.append(pd.DataFrame({"test_subject": f.test_subject, "activity": f.activity, "condition": f.condition,
                                   "transition": f.transition, "target": f.targets, "prediction": f.predictions}))
    return pd.concat(parts, ignore_index=True) if parts else pd.DataFrame()


# ------------------------------------------------------------------ plots (read CSVs only)

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_heatmap(matrix_csv, out_png, value_col_prefix="") -> Path:
    """Pair-by-model RMSE heatmap from a sweep matrix CSV (index column ``pair``)."""
    plt = _pyplot()
    df = pd.read_csv(matrix_csv)
    models = [c for c in df.columns if c not in ("pair", "fingerprint", "seed")]
    vals = df[models].to_numpy(dtype=float)
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(models), 0.8 + 0.28 * len(df)))
    im = ax.imshow(vals, aspect="auto", cmap="viridis_r")
    ax.set_xticks(range(len(models)), models, rotation=45, ha="right")
    ax.set_yticks(range(len(df)), df["pair"], fontsize=7)
    if len(df) <= 40:
        for i in range(vals.shape[0]):
            for j in range(vals.shape[1]):
                if np.isfinite(vals[i, j]):
                    ax.text(j, i, f"{vals[i, j]:.2f}", ha="center", va="center", fontsize=6, color="w")
    fig.colorbar(im, ax=ax, label="RMSE (W/kg)")
    fig.savefig(out_png, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return Path(out_png)


def plot_boxplots(per_subject_csv, out_png) -> Path:
    """Boxes drawn from stored quantiles, whiskers and outliers; no raw data needed."""
    plt = _pyplot()
    df = pd.read_csv(per_subject_csv, keep_default_na=False)
    stats = []
    for _, r in df.iterrows():
        if int(r["n"]) == 0:
            continue
        fliers = [float(x) for x in str(r["outliers"]).split(";") if x]
        stats.append({"label": f"{r['selection']}\n{r['model']}", "med": float(r["median"]), "q1": float(r["q25"]),
                      "q3": float(r["q75"]), "whislo": float(r["whisker_lo"]), "whishi": float(r["whisker_hi"]),
                      "fliers": fliers})
    fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(stats) + 1), 4))
    if stats:
        ax.bxp(stats, showfliers=True)
    ax.set_ylabel("per-subject RMSE (W/kg)")
    ax.tick_params(axis="x", labelrotation=90, labelsize=6)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return Path(out_png)


def plot_per_activity(per_activity_csv, out_png) -> Path:
    """Per-condition RMSE scatter, one marker series per (selection, model)."""
    plt = _pyplot()
    df = pd.read_csv(per_activity_csv, keep_default_na=False)
    labels = list(dict.fromkeys(df["activity"] + " " + df["condition"].astype(str)))
    pos = {lab: i for i, lab in enumerate(labels)}
    fig, ax = plt.subplots(figsize=(max(5, 0.35 * len(labels) + 2), 4))
    for (sel, model), g in df.groupby(["selection", "model"], sort=False):
        x = [pos[a + " " + str(c)] for a, c in zip(g["activity"], g["condition"])]
        ax.scatter(x, g["rmse"].astype(float), s=14, label=f"{sel} / {model}")
    ax.set_xticks(range(len(labels)), labels, rotation=90, fontsize=6)
    ax.set_ylabel("RMSE (W/kg)")
    if len(df.groupby(["selection", "model"])) <= 12:
        ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return Path(out_png)


def plot_alternatives(alt_csv, out_png) -> Path:
    """Overall RMSE of single channels and their best non-ventilation partner, per model."""
    plt = _pyplot()
    df = pd.read_csv(alt_csv)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for ax, kind in zip(axes, ("pair", "single")):
        g = df[df["kind"] == kind]
        for sig, gg in g.groupby("signal", sort=False):
            ax.plot(gg["model"], gg["rmse"].astype(float), marker="o", label=sig)
        ax.set_title(kind)
        ax.tick_params(axis="x", labelrotation=45)
    axes[0].set_ylabel("RMSE (W/kg)")
    axes[1].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return Path(out_png)
