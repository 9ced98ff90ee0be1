"""Early fusion and fixed-length windowing of channel matrices."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

SIGMA_FLOOR = 1e-8


class FusionError(ValueError):
    pass


def fuse_channels(sequences) -> np.ndarray:
    """Stack equal-length 1-D sequences as the columns of a (time, channel) matrix."""
    seqs = [np.asarray(s, dtype=float).ravel() for s in sequences]
    if not seqs:
        raise FusionError("nothing to fuse")
    lengths = {len(s) for s in seqs}
    if len(lengths) != 1:
        raise FusionError(f"channel lengths differ: {sorted(lengths)}")
    return np.column_stack(seqs)


@dataclass(frozen=True)
class Window:
    features: np.ndarray
    target: float
    target_seq: np.ndarray
    subject_id: int
    activity: str
    condition: str
    spans_transition: bool
    start: int


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    @property
    def n_channels(self) -> int:
        return len(self.mean)


@dataclass(frozen=True)
class WindowedDataset:
    """Windows stored column-wise; ``X`` is (n_windows, window_len, n_channels).

    ``start`` is the index of each window's first sample on its subject's
    timeline and ``segment`` the index of the segment holding its final sample.
    """

    X: np.ndarray
    y: np.ndarray
    y_seq: np.ndarray
    subject: np.ndarray
    activity: np.ndarray
    condition: np.ndarray
    spans_transition: np.ndarray
    start: np.ndarray
    segment: np.ndarray
    channel_order: tuple
    window_len: int
    scaler: Scaler | None = None
    warnings: tuple = field(default=())

    def __len__(self):
        return len(self.y)

    def __getitem__(self, i) -> Window:
        return Window(self.X[i], float(self.y[i]), self.y_seq[i], int(self.subject[i]),
                      str(self.activity[i]), str(self.condition[i]), bool(self.spans_transition[i]),
                      int(self.start[i]))

    @property
    def n_channels(self) -> int:
        return len(self.channel_order)

    def subset(self, idx) -> "WindowedDataset":
        idx = np.asarray(idx)
        return replace(self, X=self.X[idx], y=self.y[idx], y_seq=self.y_seq[idx], subject=self.subject[idx],
                       activity=self.activity[idx], condition=self.condition[idx],
                       spans_transition=self.spans_transition[idx], start=self.start[idx],
                       segment=self.segment[idx])

    @classmethod
    def empty(cls, window_len, channel_order, warnings=()):
        n_ch = len(channel_order)
        return cls(np.empty((0, window_len, n_ch)), np.empty(0), np.empty((0, window_len)),
                   np.empty(0, dtype=int), np.empty(0, dtype=object), np.empty(0, dtype=object),
                   np.empty(0, dtype=bool), np.empty(0, dtype=int), np.empty(0, dtype=int),
                   tuple(channel_order), window_len, None, tuple(warnings))

    @classmethod
    def concat(cls, parts) -> "WindowedDataset":
        parts = list(parts)
        if not parts:
            raise ValueError("nothing to concatenate")
        first = parts[0]
        for p in parts[1:]:
            if p.window_len != first.window_len or p.channel_order != first.channel_order:
                raise ValueError("datasets disagree on window length or channel order")
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])  # noqa: E731
        return cls(cat("X"), cat("y"), cat("y_seq"), cat("subject"), cat("activity"), cat("condition"),
                   cat("spans_transition"), cat("start"), cat("segment"), first.channel_order,
                   first.window_len, first.scaler, tuple(w for p in parts for w in p.warnings))


def window_starts(n_samples: int, window_len: int, stride: int = 1) -> np.ndarray:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if n_samples < window_len:
        return np.empty(0, dtype=int)
    return np.arange(0, n_samples - window_len + 1, stride)


def make_windows(matrix, targets, segments, window_len: int, stride: int = 1, subject_id: int = 0,
                 channel_order=None, include_rest: bool = True) -> WindowedDataset:
    """Slice a (time, channel) matrix into windows labelled by their final sample."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    n, n_ch = matrix.shape
    targets = np.asarray(targets, dtype=float)
    if len(targets) != n:
        raise FusionError("targets and matrix differ in length")
    channel_order = tuple(channel_order) if channel_order is not None else tuple(f"ch{j}" for j in range(n_ch))
    starts = window_starts(n, window_len, stride)
    if len(starts) == 0:
        return WindowedDataset.empty(window_len, channel_order,
                                     warnings=(f"subject {subject_id}: series of {n} samples shorter than window {window_len}",))
    if not np.all(np.isfinite(matrix)):
        raise FusionError(f"subject {subject_id}: non-finite values in channel matrix")

    seg_id = np.full(n, -1, dtype=int)
    act = np.array(["none"] * n, dtype=object)
    cond = np.array(["none"] * n, dtype=object)
    rest = np.zeros(n, dtype=bool)
    for k, s in enumerate(segments):
        seg_id[s.start_index:s.end_index] = k
        act[s.start_index:s.end_index] = s.activity
        cond[s.start_index:s.end_index] = s.condition
        rest[s.start_index:s.end_index] = s.is_rest

    ends = starts + window_len - 1
    keep = seg_id[ends] >= 0
    if not include_rest:
        keep &= ~rest[ends]
    starts, ends = starts[keep], ends[keep]

    offsets = np.arange(window_len)
    idx = starts[:, None] + offsets[None, :]
    X = matrix[idx]
    y_seq = targets[idx]
    y = targets[ends]
    ok = np.isfinite(y)
    transition = seg_id[starts] != seg_id[ends]
    # a window can also leave and re-enter: compare every step
    transition |= np.any(seg_id[idx] != seg_id[ends][:, None], axis=1)
    ds = WindowedDataset(X[ok], y[ok], y_seq[ok], np.full(ok.sum(), subject_id, dtype=int), act[ends][ok],
                         cond[ends][ok], transition[ok], starts[ok], seg_id[ends][ok], channel_order, window_len)
    return ds


def windows_for_recording(recording, selection, window_len: int, stride: int = 1, include_rest: bool = True):
    from .dataset import select_signals

    matrix, order = select_signals(recording, selection)
    return make_windows(matrix, recording.ee_target, recording.segments, window_len, stride,
                        recording.subject_id, order, include_rest)


def fit_scaler(train: WindowedDataset) -> Scaler:
    """Per-channel population mean/std over every sample of every training window."""
    flat = train.X.reshape(-1, train.X.shape[-1])
    if len(flat) == 0:
        raise ValueError("cannot fit a scaler on an empty dataset")
    mean = flat.mean(axis=0)
    std = np.maximum(flat.std(axis=0), SIGMA_FLOOR)
    return Scaler(mean, std)


def apply_scaler(scaler: Scaler, ds: WindowedDataset) -> WindowedDataset:
    if scaler.n_channels != ds.n_channels:
        raise ValueError(f"scaler has {scaler.n_channels} channels, dataset has {ds.n_channels}")
    return replace(ds, X=(ds.X - scaler.mean) / scaler.std, scaler=scaler)
