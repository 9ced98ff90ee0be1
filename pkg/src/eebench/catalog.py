"""Channel catalog: the 16 wearable input signals, their units and group tags."""

from __future__ import annotations

from dataclasses import dataclass

LOCAL = "Local"
GLOBAL = "Global"
HEXOSKIN = "Hexoskin"
GROUP_TAGS = (LOCAL, GLOBAL, HEXOSKIN)


@dataclass(frozen=True)
class SignalChannel:
    id: str
    unit: str
    groups: frozenset
    label: str = ""


def _ch(cid, unit, *groups, label=""):
    return SignalChannel(cid, unit, frozenset(groups), label)


# Canonical order. Every fused matrix orders its columns by this tuple.
CHANNELS = (
    _ch("waist_acc", "m/s^2", LOCAL, HEXOSKIN, label="Waist_ACCL"),
    _ch("chest_acc", "m/s^2", LOCAL, HEXOSKIN, label="Chest_ACCL"),
    _ch("left_ankle_acc", "m/s^2", LOCAL, label="L_Ankle_ACCL"),
    _ch("right_ankle_acc", "m/s^2", LOCAL, label="R_Ankle_ACCL"),
    _ch("left_wrist_acc", "m/s^2", LOCAL, label="L_Wrist_ACCL"),
    _ch("left_wrist_eda", "uS", GLOBAL, label="L_Wrist_Elec"),
    _ch("left_wrist_temp", "degC", GLOBAL, label="L_Wrist_Temp"),
    _ch("right_wrist_acc", "m/s^2", LOCAL, label="R_Wrist_ACCL"),
    _ch("right_wrist_eda", "uS", GLOBAL, label="R_Wrist_Elec"),
    _ch("right_wrist_temp", "degC", GLOBAL, label="R_Wrist_Temp"),
    _ch("emg_left", "a.u.", LOCAL, label="EMG_M_L"),
    _ch("emg_right", "a.u.", LOCAL, label="EMG_M_R"),
    _ch("heart_rate", "bpm", GLOBAL, HEXOSKIN, label="HR"),
    _ch("spo2", "%", GLOBAL, label="SpO2"),
    _ch("breath_frequency", "breaths/min", GLOBAL, HEXOSKIN, label="Breath_Freq"),
    _ch("minute_ventilation", "L/min", GLOBAL, HEXOSKIN, label="Min_Vent"),
)

CHANNEL_IDS = tuple(c.id for c in CHANNELS)
BY_ID = {c.id: c for c in CHANNELS}

# Metabolic channels are not model inputs but may be selected explicitly
# (oxygen uptake is reported as a reference row next to the input signals).
AUX_CHANNELS = ("vo2",)


class SelectionError(ValueError):
    pass


def group_members(tag: str) -> tuple[str, ...]:
    if tag not in GROUP_TAGS:
        raise SelectionError(f"unknown group {tag!r}")
    return tuple(c.id for c in CHANNELS if tag in c.groups)


_GROUP_ALIASES = {
    "local": LOCAL,
    "global": GLOBAL,
    "hexoskin": HEXOSKIN,
}


def resolve_selection(selection) -> list[str]:
    """Expand a selection into channel ids in canonical order.

    Accepts an iterable of channel ids, a group tag, or a string expression
    such as ``"hexoskin"``, ``"local+global"``, ``"global-minute_ventilation"``
    or ``"heart_rate+right_ankle_acc"``. ``"all"`` is Local+Global.
    """
    if isinstance(selection, str):
        tokens = _parse_expression(selection)
    else:
        tokens = [("+", str(s)) for s in selection]
    if not tokens:
        raise SelectionError("empty selection")

    chosen: set[str] = set()
    for op, name in tokens:
        members = _expand_token(name)
        if op == "+":
            chosen.update(members)
        else:
            missing = set(members) - chosen
            if missing:
                raise SelectionError(f"cannot remove {sorted(missing)}: not in selection")
            chosen.difference_update(members)
    if not chosen:
        raise SelectionError(f"selection {selection!r} resolves to no channels")
    order = CHANNEL_IDS + AUX_CHANNELS
    return [c for c in order if c in chosen]


def _expand_token(name: str) -> tuple[str, ...]:
    key = name.strip()
    low = key.lower()
    if low == "all":
        return CHANNEL_IDS
    if low in _GROUP_ALIASES:
        return group_members(_GROUP_ALIASES[low])
    if key in GROUP_TAGS:
        return group_members(key)
    if key in BY_ID or key in AUX_CHANNELS:
        return (key,)
    raise SelectionError(f"unknown channel or group {name!r}")


def _parse_expression(expr: str):
    tokens = []
    op = "+"
    buf = ""
    for ch in expr.strip():
        if ch in "+-" and buf.strip():
            tokens.append((op, buf.strip()))
            op, buf = ch, ""
        elif ch in "+-":
            op = ch
        else:
            buf += ch
    if buf.strip():
        tokens.append((op, buf.strip()))
    return tokens


def selection_label(selection) -> str:
    """Filesystem-safe label for a selection."""
    if isinstance(selection, str):
        return selection.replace("+", "_plus_").replace("-", "_minus_")
    return "_plus_".join(resolve_selection(selection))


# Groups as they appear in the grouped-input rows of the benchmark table.
NAMED_GROUPS = {
    "global": "global",
    "global_wo_minvent": "global-minute_ventilation",
    "local": "local",
    "local_global": "local+global",
    "local_global_wo_minvent": "local+global-minute_ventilation",
    "hexoskin": "hexoskin",
}
