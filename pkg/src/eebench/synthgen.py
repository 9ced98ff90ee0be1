"""Seeded synthetic recordings with a known energy-expenditure answer.

The generator is deliberately crude: accelerations are rectified sinusoid
bursts, cardio-respiratory channels are first-order lags of the exercise
intensity, temperature and EDA drift slowly. What matters is that the net
EE of every segment is known exactly:

    net EE = ORACLE_EE[activity, condition] + N(0, ee_noise)   (stand: 0)

and that the metabolic files encode it through the Brockway relation, so
:func:`eebench.dataset.load_dataset` must recover it.
"""

from __future__ import annotations

import json
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .catalog import CHANNEL_IDS
from .dataset import (
    BROCKWAY_CO2,
    BROCKWAY_O2,
    CONDITIONS,
    SESSION_ACTIVITIES,
    ActivitySegment,
    MetabolicRecord,
    ProtocolError,
    SubjectRecording,
    load_dataset,
)

# Net metabolic cost in W/kg. Monotone in speed/resistance within an
# activity; at matched speed walking < incline < running.
ORACLE_EE = {
    ("sit", "rest"): 0.0,
    ("stand", "rest"): 0.0,
    ("walk", "0.6mps"): 1.5,
    ("walk", "0.9mps"): 2.2,
    ("walk", "1.2mps"): 3.0,
    ("incline", "0.6mps_4deg"): 2.5,
    ("incline", "1.2mps_4deg"): 4.5,
    ("incline", "0.6mps_9deg"): 3.5,
    ("incline", "1.2mps_9deg"): 6.0,
    ("backward", "0.4mps"): 2.0,
    ("backward", "0.7mps"): 3.0,
    ("backward", "1.0mps"): 4.2,
    ("run", "1.2mps"): 6.5,
    ("run", "1.8mps"): 8.0,
    ("run", "2.2mps"): 9.5,
    ("run", "2.7mps"): 11.5,
    ("cycle", "70rpm_R1"): 3.0,
    ("cycle", "70rpm_R3"): 4.5,
    ("cycle", "70rpm_R5"): 6.0,
    ("cycle", "100rpm_R1"): 5.0,
    ("stairs", "60W"): 6.0,
    ("stairs", "75W"): 7.5,
    ("stairs", "90W"): 9.0,
}

# (ankle, wrist, trunk) burst amplitude in m/s^2 and step cadence in Hz
_MOTION = {
    "sit": (0.02, 0.05, 0.01, 0.0),
    "stand": (0.05, 0.05, 0.03, 0.0),
    "walk": (4.0, 1.5, 1.2, 0.9),
    "incline": (4.5, 1.4, 1.4, 0.85),
    "backward": (3.0, 1.0, 1.0, 0.8),
    "run": (9.0, 3.5, 3.0, 1.4),
    "cycle": (2.0, 0.3, 0.4, 1.2),
    "stairs": (3.5, 1.0, 1.8, 0.7),
}


def oracle_ee(activity: str, condition: str) -> float:
    try:
        return ORACLE_EE[(activity, condition)]
    except KeyError:
        raise ProtocolError(f"no oracle value for {activity}/{condition}") from None


@dataclass(frozen=True)
class Protocol:
    """Which conditions each session contains and how long each lasts.

    Each activity block is: stand, its conditions (shuffled if
    ``randomize``), sit.
    """

    sessions: tuple
    condition_s: int = 360
    rest_s: int = 360
    randomize: bool = True

    @classmethod
    def full(cls, **kw):
        sessions = tuple((s, tuple((a, CONDITIONS[a]) for a in acts)) for s, acts in SESSION_ACTIVITIES.items())
        return cls(sessions, **kw)

    @classmethod
    def quick(cls, **kw):
        kw.setdefault("condition_s", 200)
        kw.setdefault("rest_s", 200)
        sessions = ((1, (("walk", ("0.6mps", "1.2mps")),)), (2, (("run", ("1.8mps",)),)))
        return cls(sessions, **kw)

    @classmethod
    def compact(cls, **kw):
        """Every activity with two of its conditions."""
        kw.setdefault("condition_s", 200)
        kw.setdefault("rest_s", 200)
        sessions = tuple((s, tuple((a, (CONDITIONS[a][0], CONDITIONS[a][-1])) for a in acts))
                         for s, acts in SESSION_ACTIVITIES.items())
        return cls(sessions, **kw)

    @classmethod
    def named(cls, name: str, **kw):
        try:
            return {"full": cls.full, "quick": cls.quick, "compact": cls.compact}[name](**kw)
        except KeyError:
            raise ValueError(f"unknown protocol {name!r} (full, compact, quick)") from None


_DEFAULT_NOISE = {
    "waist_acc": 0.1, "chest_acc": 0.1, "left_ankle_acc": 0.3, "right_ankle_acc": 0.3, "left_wrist_acc": 0.2,
    "right_wrist_acc": 0.2, "left_wrist_eda": 0.05, "right_wrist_eda": 0.05, "left_wrist_temp": 0.05,
    "right_wrist_temp": 0.05, "emg_left": 0.05, "emg_right": 0.05, "heart_rate": 2.0, "spo2": 0.3,
    "breath_frequency": 1.0, "minute_ventilation": 1.0,
}

# (resting value, slope per W/kg of net EE, lag time constant in s)
_CARDIORESP = {
    "heart_rate": (75.0, 9.0, 20.0),
    "minute_ventilation": (10.0, 5.0, 2.0),
    "breath_frequency": (14.0, 2.0, 10.0),
}


@dataclass(frozen=True)
class SubjectProfile:
    subject_id: int
    seed: int
    body_mass: float = 70.0
    ee_noise: float = 0.2
    rest_ee: float = 1.4
    rer: float = 0.85
    breath_noise: float = 0.0
    gains: dict = field(default_factory=dict)
    offsets: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)
    oracle_coefs: dict = field(default_factory=dict)

    @classmethod
    def random(cls, subject_id: int, seed: int, ee_noise: float = 0.2, **kw) -> "SubjectProfile":
        """A subject with randomly drawn body mass and per-channel gains/offsets."""
        rng = np.random.default_rng([seed, subject_id])
        gains = {c: float(rng.uniform(0.85, 1.15)) for c in CHANNEL_IDS}
        offsets = {c: float(rng.normal(0, 0.05)) for c in CHANNEL_IDS}
        base = dict(subject_id=subject_id, seed=int(rng.integers(2**31)), body_mass=float(rng.uniform(55, 90)),
                    ee_noise=ee_noise, rest_ee=float(rng.uniform(1.2, 1.6)), gains=gains, offsets=offsets)
        base.update(kw)
        return cls(**base)

    def coef(self, channel):
        return self.oracle_coefs.get(channel, _CARDIORESP[channel])

    def noise_sd(self, channel):
        return self.noise.get(channel, _DEFAULT_NOISE[channel])


def _lag(x, tau):
    if tau <= 0:
        return x.copy()
    a = 1.0 - np.exp(-1.0 / tau)
    y = np.empty_like(x)
    y[0] = x[0]
    for i in range(1, len(x)):
        y[i] = y[i - 1] + a * (x[i] - y[i - 1])
    return y


def _layout(profile, protocol, rng):
    """Segments on the 1 Hz global timeline, plus each segment's net EE."""
    segments, nets = [], []
    t = 0
    for session, blocks in protocol.sessions:
        for activity, conds in blocks:
            for c in conds:
                if c not in CONDITIONS.get(activity, ()):
                    raise ProtocolError(f"unknown condition {activity}/{c}")
            conds = list(conds)
            if protocol.randomize:
                conds = [conds[i] for i in rng.permutation(len(conds))]
            plan = [("stand", "rest", protocol.rest_s)] + [(activity, c, protocol.condition_s) for c in conds] \
                + [("sit", "rest", protocol.rest_s)]
            for act, cond, dur in plan:
                o = oracle_ee(act, cond)
                noise = 0.0 if act == "stand" else rng.normal(0.0, profile.ee_noise) if profile.ee_noise > 0 else 0.0
                segments.append(ActivitySegment(act, cond, t, t + dur, session))
                nets.append(o + noise)
                t += dur
    return segments, np.array(nets)


def generate_subject(profile: SubjectProfile, protocol: Protocol | None = None) -> SubjectRecording:
    """Simulate one subject at 1 Hz; metabolic samples arrive breath by breath.

    ``ee_target`` holds the generator's net EE; ``aux["oracle_ee"]`` the
    noiseless oracle per sample.
    """
    protocol = protocol or Protocol.full()
    rng = np.random.default_rng(profile.seed)
    segments, nets = _layout(profile, protocol, rng)
    n = segments[-1].end_index
    t = np.arange(n, dtype=float)
    oracle = np.empty(n)
    net = np.empty(n)
    act = np.empty(n, dtype=object)
    for seg, v in zip(segments, nets):
        oracle[seg.start_index:seg.end_index] = oracle_ee(seg.activity, seg.condition)
        net[seg.start_index:seg.end_index] = v
        act[seg.start_index:seg.end_index] = seg.activity

    session_of = np.empty(n, dtype=int)
    for seg in segments:
        session_of[seg.start_index:seg.end_index] = seg.session

    ankle = np.array([_MOTION[a][0] for a in act])
    wrist = np.array([_MOTION[a][1] for a in act])
    trunk = np.array([_MOTION[a][2] for a in act])
    cadence = np.array([_MOTION[a][3] for a in act])
    intensity = 1.0 + 0.08 * oracle
    phase = 2 * np.pi * np.cumsum(cadence)
    burst = np.abs(np.sin(phase / 2))

    raw = {}
    g = 9.81
    for side, ph in (("left", 0.0), ("right", np.pi / 2)):
        raw[f"{side}_ankle_acc"] = g + ankle * intensity * np.abs(np.sin(phase / 2 + ph))
        raw[f"{side}_wrist_acc"] = g + wrist * intensity * np.abs(np.sin(phase / 2 + ph + 0.3))
        raw[f"emg_{side}"] = 0.05 + 0.04 * ankle * intensity * np.abs(np.sin(phase / 2 + ph + 0.6))
    raw["waist_acc"] = g + trunk * intensity * burst
    raw["chest_acc"] = g + 0.8 * trunk * intensity * burst

    # cardio-respiratory lags restart at each session boundary
    def per_session(fn):
        out = np.empty(n)
        for s in np.unique(session_of):
            m = session_of == s
            out[m] = fn(m)
        return out

    for ch in ("heart_rate", "minute_ventilation", "breath_frequency"):
        rest, slope, tau = profile.coef(ch)
        raw[ch] = per_session(lambda m, r=rest, k=slope, tau=tau: _lag(r + k * oracle[m], tau))
    slow = per_session(lambda m: _lag(oracle[m], 60.0))
    raw["spo2"] = 97.5 - 0.12 * oracle
    raw["left_wrist_temp"] = 33.0 + 2e-4 * t - 0.06 * slow
    raw["right_wrist_temp"] = 33.2 + 1.5e-4 * t - 0.05 * slow
    raw["left_wrist_eda"] = 2.0 + 1e-4 * t + 0.08 * slow
    raw["right_wrist_eda"] = 1.8 + 1.2e-4 * t + 0.07 * slow

    channels = {}
    for ch in CHANNEL_IDS:
        v = profile.offsets.get(ch, 0.0) + profile.gains.get(ch, 1.0) * raw[ch]
        sd = profile.noise_sd(ch)
        if sd > 0:
            v = v + rng.normal(0.0, sd, n)
        if ch == "spo2":
            v = np.minimum(v, 100.0)
        channels[ch] = v

    metabolic = _breaths(profile, segments, net, channels["breath_frequency"], rng)
    return SubjectRecording(profile.subject_id, profile.body_mass, channels, metabolic, segments, net.copy(),
                            aux={"oracle_ee": oracle})


def _breaths(profile, segments, net, breath_freq, rng):
    """Breath-by-breath VO2/VCO2 whose Brockway power equals (rest + net) * mass."""
    per_litre = (BROCKWAY_O2 + BROCKWAY_CO2 * profile.rer) * 1000.0 / 60.0  # W per L/min of O2
    times, vo2 = [], []
    n = segments[-1].end_index
    sessions = sorted({s.session for s in segments})
    for s in sessions:
        segs = [g for g in segments if g.session == s]
        t = float(segs[0].start_index)
        end = float(segs[-1].end_index)
        while t < end:
            i = min(int(t), n - 1)
            gross = profile.rest_ee + net[i]
            v = gross * profile.body_mass / per_litre
            if profile.breath_noise > 0:
                v *= 1.0 + profile.breath_noise * rng.normal()
            times.append(t)
            vo2.append(max(v, 0.0))
            bf = float(np.clip(breath_freq[i], 8.0, 60.0))
            t += 60.0 / bf * rng.uniform(0.9, 1.1)
    vo2 = np.array(vo2)
    return MetabolicRecord(np.array(times), vo2, profile.rer * vo2)


def oracle_series(recording: SubjectRecording) -> np.ndarray:
    out = np.empty(recording.n_samples)
    for s in recording.segments:
        out[s.start_index:s.end_index] = oracle_ee(s.activity, s.condition)
    return out


# ------------------------------------------------------------------ writing

def _fmt(df: pd.DataFrame, path: Path):
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n", encoding="utf-8")


def write_subject(recording: SubjectRecording, root) -> Path:
    """Write one recording in the on-disk dataset layout (session-local time)."""
    sdir = Path(root) / f"subject_{recording.subject_id}"
    sdir.mkdir(parents=True, exist_ok=True)
    (sdir / "subject.json").write_text(json.dumps({"body_mass_kg": recording.body_mass}) + "\n", encoding="utf-8")
    rate = recording.sample_rate
    met = recording.metabolic
    for session in sorted({s.session for s in recording.segments}):
        segs = [s for s in recording.segments if s.session == session]
        lo, hi = segs[0].start_index, segs[-1].end_index
        t0 = lo / rate
        ddir = sdir / f"session_{session}"
        ddir.mkdir(exist_ok=True)
        sig = pd.DataFrame({"t_sec": np.arange(hi - lo) / rate})
        for c in CHANNEL_IDS:
            sig[c] = recording.channels[c][lo:hi]
        _fmt(sig, ddir / "signals.csv")
        m = (met.timestamps >= t0) & (met.timestamps < hi / rate)
        _fmt(pd.DataFrame({"t_sec": met.timestamps[m] - t0, "vo2_lpm": met.vo2[m], "vco2_lpm": met.vco2[m]}),
             ddir / "metabolic.csv")
        _fmt(pd.DataFrame({"activity": [s.activity for s in segs], "condition": [s.condition for s in segs],
                           "start_sec": [(s.start_index - lo) / rate for s in segs],
                           "end_sec": [(s.end_index - lo) / rate for s in segs]}), ddir / "segments.csv")
    return sdir


def make_profiles(n_subjects: int, seed: int, ee_noise: float = 0.2, **kw) -> list:
    return [SubjectProfile.random(k, seed, ee_noise=ee_noise, **kw) for k in range(1, n_subjects + 1)]


def linear_mv_profiles(n_subjects: int, seed: int, ee_noise: float = 0.2) -> list:
    """Subjects whose minute ventilation is an exact, lag-free linear map of the oracle EE."""
    out = []
    for p in make_profiles(n_subjects, seed, ee_noise=ee_noise):
        gains = dict(p.gains, minute_ventilation=1.0)
        offsets = dict(p.offsets, minute_ventilation=0.0)
        coefs = {"minute_ventilation": (10.0, 5.0, 0.0)}
        out.append(replace(p, gains=gains, offsets=offsets, noise={"minute_ventilation": 0.0}, oracle_coefs=coefs))
    return out


def generate_dataset(root, profiles, protocol: Protocol | None = None) -> list[SubjectRecording]:
    """Generate and write every profile under ``root``; returns the generated recordings."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    recs = []
    for p in profiles:
        rec = generate_subject(p, protocol)
        write_subject(rec, root)
        recs.append(rec)
    return recs


def synthetic_dataset(seed: int, n_subjects: int = 3, protocol: Protocol | None = None, profiles=None,
                      root=None) -> list[SubjectRecording]:
    """Generate, write and reload a synthetic dataset through the regular loader."""
    profiles = profiles if profiles is not None else make_profiles(n_subjects, seed)
    if root is not None:
        generate_dataset(root, profiles, protocol)
        return load_dataset(root)
    with tempfile.TemporaryDirectory(prefix="eebench_synth_") as tmp:
        generate_dataset(tmp, profiles, protocol)
        return load_dataset(tmp)
