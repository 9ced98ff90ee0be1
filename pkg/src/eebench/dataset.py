"""Subject recordings, metabolic ground truth and dataset ingestion.

On-disk layout::

    <root>/subject_<k>/subject.json              {"body_mass_kg": ...}
    <root>/subject_<k>/session_<s>/signals.csv   t_sec, <16 channel ids>
    <root>/subject_<k>/session_<s>/metabolic.csv t_sec, vo2_lpm, vco2_lpm
    <root>/subject_<k>/session_<s>/segments.csv  activity, condition, start_sec, end_sec

Signal and metabolic files may be sampled irregularly (breath by breath);
everything is brought onto one uniform grid segment by segment.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .catalog import AUX_CHANNELS, CHANNEL_IDS, SelectionError, resolve_selection

log = logging.getLogger(__name__)

# kJ per litre of O2 consumed / CO2 produced, urinary nitrogen term dropped.
BROCKWAY_O2 = 16.58
BROCKWAY_CO2 = 4.51

DEFAULT_RATE_HZ = 1.0
STEADY_STATE_S = 180.0

REST_ACTIVITIES = ("sit", "stand")
ACTIVITIES = ("sit", "stand", "walk", "incline", "backward", "run", "cycle", "stairs")

# Closed set of exercise conditions per activity, in table order.
CONDITIONS = {
    "walk": ("0.6mps", "0.9mps", "1.2mps"),
    "incline": ("0.6mps_4deg", "1.2mps_4deg", "0.6mps_9deg", "1.2mps_9deg"),
    "backward": ("0.4mps", "0.7mps", "1.0mps"),
    "run": ("1.2mps", "1.8mps", "2.2mps", "2.7mps"),
    "cycle": ("70rpm_R1", "70rpm_R3", "70rpm_R5", "100rpm_R1"),
    "stairs": ("60W", "75W", "90W"),
    "sit": ("rest",),
    "stand": ("rest",),
}
SESSION_ACTIVITIES = {1: ("walk", "incline", "backward"), 2: ("run", "cycle", "stairs")}


class DomainError(ValueError):
    """Physically meaningless input (negative gas volume, non-positive mass...)."""


class ProtocolError(ValueError):
    """Data that violates the recording protocol (short segment, empty segment...)."""


class IngestionError(RuntimeError):
    pass


@dataclass(frozen=True)
class ActivitySegment:
    activity: str
    condition: str
    start_index: int
    end_index: int
    session: int = 1

    def __post_init__(self):
        if self.start_index >= self.end_index:
            raise ProtocolError(f"empty segment {self}")
        if self.activity not in CONDITIONS:
            raise ProtocolError(f"unknown activity {self.activity!r}")
        if self.condition not in CONDITIONS[self.activity]:
            raise ProtocolError(f"unknown condition {self.condition!r} for {self.activity}")

    @property
    def n_samples(self) -> int:
        return self.end_index - self.start_index

    @property
    def is_rest(self) -> bool:
        return self.activity in REST_ACTIVITIES


@dataclass
class MetabolicRecord:
    timestamps: np.ndarray
    vo2: np.ndarray
    vco2: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.vo2 = np.asarray(self.vo2, dtype=float)
        self.vco2 = np.asarray(self.vco2, dtype=float)
        if np.any(self.vo2 < 0) or np.any(self.vco2 < 0):
            raise DomainError("negative gas exchange volume")
        if np.any(np.diff(self.timestamps) <= 0):
            raise ProtocolError("metabolic timestamps must be strictly increasing")


@dataclass
class SubjectRecording:
    subject_id: int
    body_mass: float
    channels: dict
    metabolic: MetabolicRecord
    segments: list
    ee_target: np.ndarray | None = None
    sample_rate: float = DEFAULT_RATE_HZ
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.body_mass <= 0:
            raise DomainError(f"subject {self.subject_id}: body mass must be positive")
        lengths = {len(v) for v in self.channels.values()}
        if self.ee_target is not None:
            lengths.add(len(self.ee_target))
        if len(lengths) > 1:
            raise IngestionError(f"subject {self.subject_id}: channel lengths differ {sorted(lengths)}")

    @property
    def n_samples(self) -> int:
        return len(next(iter(self.channels.values())))

    def segment_ids(self) -> np.ndarray:
        """Per-sample index into ``segments`` (-1 where no segment covers the sample)."""
        ids = np.full(self.n_samples, -1, dtype=int)
        for k, seg in enumerate(self.segments):
            ids[seg.start_index:seg.end_index] = k
        return ids


def compute_brockway_power(vo2, vco2):
    """Metabolic power in W from O2 uptake and CO2 output in L/min."""
    vo2 = np.asarray(vo2, dtype=float)
    vco2 = np.asarray(vco2, dtype=float)
    if np.any(vo2 < 0) or np.any(vco2 < 0):
        raise DomainError("vo2 and vco2 must be non-negative")
    power = (BROCKWAY_O2 * vo2 + BROCKWAY_CO2 * vco2) * 1000.0 / 60.0
    return power if power.ndim else float(power)


def normalize_by_mass(power, mass):
    if mass <= 0:
        raise DomainError(f"body mass must be positive, got {mass}")
    out = np.asarray(power, dtype=float) / mass
    return out if out.ndim else float(out)


def steady_state_ee(segment: ActivitySegment, ee_series, sample_rate: float = DEFAULT_RATE_HZ) -> float:
    """Mean over the final three minutes of ``segment``."""
    n_tail = int(round(STEADY_STATE_S * sample_rate))
    if segment.n_samples < n_tail:
        raise ProtocolError(
            f"{segment.activity}/{segment.condition} lasts {segment.n_samples / sample_rate:g} s, "
            f"need at least {STEADY_STATE_S:g} s for a steady-state estimate"
        )
    ee = np.asarray(ee_series, dtype=float)
    return float(ee[segment.end_index - n_tail:segment.end_index].mean())


def net_cost(steady: float, standing_baseline: float) -> float:
    # Not clamped: negative values signal a protocol anomaly and are reported.
    return steady - standing_baseline


def resample_breath_signals(times, values, start_sec: float, end_sec: float, target_rate: float = DEFAULT_RATE_HZ):
    """Average irregular samples into uniform bins over ``[start_sec, end_sec)``.

    Bin ``k`` covers ``[start + k/rate, start + (k+1)/rate)``. Empty bins
    carry the previous bin's value; leading empty bins take the first
    non-empty bin's value.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    n_bins = int(round((end_sec - start_sec) * target_rate))
    if n_bins <= 0:
        raise ProtocolError(f"segment [{start_sec}, {end_sec}) has no samples at {target_rate} Hz")
    inside = (times >= start_sec) & (times < end_sec)
    if not inside.any():
        raise ProtocolError(f"no samples inside segment [{start_sec}, {end_sec})")
    t, v = times[inside], values[inside]
    # floor of a scaled offset, clipped against rounding at the right edge
    bins = np.minimum(np.floor((t - start_sec) * target_rate).astype(int), n_bins - 1)
    sums = np.bincount(bins, weights=v, minlength=n_bins)
    counts = np.bincount(bins, minlength=n_bins)
    out = np.empty(n_bins)
    filled = counts > 0
    out[filled] = sums[filled] / counts[filled]
    # forward fill by index of last filled bin
    last = np.where(filled, np.arange(n_bins), -1)
    last = np.maximum.accumulate(last)
    first = int(np.argmax(filled))
    last[last < 0] = first
    return out[last]


def standing_baselines(segments, steady: list[float]) -> list[float]:
    """Baseline for each segment: the most recent stand segment of its session.

    Segments preceding the first stand of a session use that first stand.
    """
    baselines = []
    for k, seg in enumerate(segments):
        same = [j for j, s in enumerate(segments) if s.session == seg.session and s.activity == "stand"]
        if not same:
            raise ProtocolError(f"session {seg.session} has no standing baseline segment")
        before = [j for j in same if j <= k]
        baselines.append(steady[before[-1] if before else same[0]])
    return baselines


def derive_targets(segments, ee_series, sample_rate: float = DEFAULT_RATE_HZ):
    """Piecewise-constant net EE target: each segment holds its net steady state."""
    ee_series = np.asarray(ee_series, dtype=float)
    steady = [steady_state_ee(s, ee_series, sample_rate) for s in segments]
    base = standing_baselines(segments, steady)
    target = np.full(len(ee_series), np.nan)
    for seg, st, b in zip(segments, steady, base):
        target[seg.start_index:seg.end_index] = net_cost(st, b)
    return target


# ---------------------------------------------------------------- ingestion

def _read_csv(path: Path) -> pd.DataFrame:
    df = pd.read_csv(path, float_precision="round_trip", skipinitialspace=True)
    df.columns = [c.strip() for c in df.columns]
    return df


def _session_dirs(subject_dir: Path):
    dirs = []
    for p in subject_dir.iterdir():
        m = re.fullmatch(r"session_(\d+)", p.name)
        if p.is_dir() and m:
            dirs.append((int(m.group(1)), p))
    return sorted(dirs)


def load_subject(subject_dir, sample_rate: float = DEFAULT_RATE_HZ) -> SubjectRecording:
    subject_dir = Path(subject_dir)
    m = re.fullmatch(r"subject_(\d+)", subject_dir.name)
    if not m:
        raise IngestionError(f"not a subject directory: {subject_dir}")
    sid = int(m.group(1))
    meta_path = subject_dir / "subject.json"
    if not meta_path.exists():
        raise IngestionError(f"subject {sid}: missing subject.json")
    body_mass = float(json.loads(meta_path.read_text(encoding="utf-8"))["body_mass_kg"])

    chans = {c: [] for c in CHANNEL_IDS}
    vo2_parts, vco2_parts, segments = [], [], []
    offset = 0
    sessions = _session_dirs(subject_dir)
    if not sessions:
        raise IngestionError(f"subject {sid}: no session directories")
    for session, sdir in sessions:
        for fname in ("signals.csv", "metabolic.csv", "segments.csv"):
            if not (sdir / fname).exists():
                raise IngestionError(f"subject {sid} session {session}: missing {fname}")
        sig = _read_csv(sdir / "signals.csv")
        missing = [c for c in CHANNEL_IDS if c not in sig.columns]
        if missing:
            raise IngestionError(f"subject {sid} session {session}: missing channel(s) {', '.join(missing)}")
        met = _read_csv(sdir / "metabolic.csv")
        seg_df = _read_csv(sdir / "segments.csv")
        seg_df = seg_df.sort_values("start_sec", kind="stable")
        prev_end = -np.inf
        for row in seg_df.itertuples(index=False):
            start, end = float(row.start_sec), float(row.end_sec)
            if start < prev_end:
                raise IngestionError(f"subject {sid} session {session}: overlapping segments at {start} s")
            prev_end = end
            try:
                parts = {c: resample_breath_signals(sig["t_sec"], sig[c], start, end, sample_rate) for c in CHANNEL_IDS}
                vo2 = resample_breath_signals(met["t_sec"], met["vo2_lpm"], start, end, sample_rate)
                vco2 = resample_breath_signals(met["t_sec"], met["vco2_lpm"], start, end, sample_rate)
            except ProtocolError as exc:
                raise IngestionError(f"subject {sid} session {session}: {exc}") from exc
            n = len(vo2)
            if any(len(p) != n for p in parts.values()):
                raise IngestionError(f"subject {sid} session {session}: length mismatch after resampling")
            for c in CHANNEL_IDS:
                chans[c].append(parts[c])
            vo2_parts.append(vo2)
            vco2_parts.append(vco2)
            segments.append(ActivitySegment(str(row.activity), str(row.condition), offset, offset + n, session))
            offset += n

    channels = {c: np.concatenate(v) for c, v in chans.items()}
    vo2 = np.concatenate(vo2_parts)
    vco2 = np.concatenate(vco2_parts)
    metabolic = MetabolicRecord(np.arange(offset) / sample_rate, vo2, vco2)
    ee = normalize_by_mass(compute_brockway_power(vo2, vco2), body_mass)
    try:
        target = derive_targets(segments, ee, sample_rate)
    except ProtocolError as exc:
        raise IngestionError(f"subject {sid}: {exc}") from exc
    return SubjectRecording(sid, body_mass, channels, metabolic, segments, target, sample_rate, aux={"vo2": vo2 / body_mass})


def load_dataset(root, sample_rate: float = DEFAULT_RATE_HZ) -> list[SubjectRecording]:
    """Load every ``subject_<k>`` directory under ``root``, ordered by id."""
    root = Path(root)
    if not root.is_dir():
        raise IngestionError(f"dataset root {root} does not exist")
    dirs = sorted((p for p in root.iterdir() if p.is_dir() and re.fullmatch(r"subject_\d+", p.name)),
                  key=lambda p: int(p.name.split("_")[1]))
    if not dirs:
        raise IngestionError(f"no subject_<k> directories under {root}")
    recs = [load_subject(d, sample_rate) for d in dirs]
    log.info("loaded %d subjects from %s", len(recs), root)
    return recs


def select_signals(recording: SubjectRecording, selection) -> tuple[np.ndarray, list[str]]:
    """Columns of the requested channels, canonical order. Returns (matrix, channel_order)."""
    ids = resolve_selection(selection)
    cols = []
    for c in ids:
        if c in AUX_CHANNELS:
            if c not in recording.aux:
                raise SelectionError(f"subject {recording.subject_id} has no auxiliary channel {c!r}")
            cols.append(recording.aux[c])
        else:
            cols.append(recording.channels[c])
    from .windowing import fuse_channels

    return fuse_channels(cols), ids
