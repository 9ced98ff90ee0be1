"""The six regressor families behind one build/forward contract.

Every model maps a batch shaped (batch, window_len, n_channels) to one
prediction per window. The transformer additionally exposes per-step
predictions via :meth:`TransformerRegressor.per_step`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .layers import ContractError, MultiHeadSelfAttention, TemporalSelfAttention, positional_encoding

FAMILIES = ("linreg", "cnn", "lstm", "resnet", "resnet_attention", "transformer")
DISPLAY_NAMES = {
    "linreg": "Lin-Reg",
    "cnn": "CNN",
    "lstm": "LSTM",
    "resnet": "ResNet",
    "resnet_attention": "ResNet+Att",
    "transformer": "Transformer",
}
_ALIASES = {"resatt": "resnet_attention", "resnetattention": "resnet_attention", "trans": "transformer",
            "lin-reg": "linreg", "linear": "linreg"}

DEFAULT_DROPOUT = 0.3

# window length, batch size, Adam learning rate, architecture constants
_DEFAULTS = {
    "linreg": (1, None, None, {}),
    "cnn": (20, 8, 5e-4, {"filters": (64, 32, 16), "kernel": 3, "dense": 40}),
    "lstm": (20, 32, 5e-4, {"hidden": (128, 64), "dense": 64, "flatten": "all"}),
    "resnet": (10, 32, 1e-3, {"stem": 64, "stem_kernel": 7, "blocks": ((64, 128), (128, 256), (256, 512))}),
    "resnet_attention": (10, 8, 5e-4, {"stem": 64, "stem_kernel": 7,
                                       "blocks": ((64, 128), (128, 256), (256, 512)), "qk_reduction": 8}),
    "transformer": (10, 4, 9e-4, {"d_model": 64, "heads": 8, "ffn": 256, "layers": 2, "head_hidden": 64,
                                  "proj_kernel": 3}),
}

_TOY = {
    "linreg": {},
    "cnn": {"filters": (4, 3, 2), "dense": 5},
    "lstm": {"hidden": (5, 4), "dense": 4},
    "resnet": {"stem": 4, "blocks": ((4, 6), (6, 8), (8, 8))},
    "resnet_attention": {"stem": 4, "blocks": ((4, 6), (6, 8), (8, 8)), "qk_reduction": 4},
    "transformer": {"d_model": 8, "heads": 2, "ffn": 12, "head_hidden": 6},
}


class BuildError(ValueError):
    pass


def canonical_family(name: str) -> str:
    key = name.strip().lower().replace("+", "_").replace(" ", "_")
    key = _ALIASES.get(key, key)
    if key not in FAMILIES:
        raise BuildError(f"unknown model family {name!r}; expected one of {', '.join(FAMILIES)}")
    return key


@dataclass(frozen=True)
class ModelSpec:
    family: str
    window_len: int
    batch_size: int | None
    learning_rate: float | None
    dropout: float = DEFAULT_DROPOUT
    arch: dict = field(default_factory=dict)
    overrides: tuple = ()

    @classmethod
    def default(cls, family: str, **overrides) -> "ModelSpec":
        family = canonical_family(family)
        w, bs, lr, arch = _DEFAULTS[family]
        arch = dict(arch)
        fields = {"window_len": w, "batch_size": bs, "learning_rate": lr, "dropout": DEFAULT_DROPOUT}
        changed = []
        for k, v in overrides.items():
            if v is None:
                continue
            if k in fields:
                fields[k] = v
            elif k in arch:
                arch[k] = tuple(v) if isinstance(v, list) else v
            else:
                raise BuildError(f"{family}: unknown hyperparameter {k!r}")
            changed.append(k)
        return cls(family, arch=arch, overrides=tuple(sorted(changed)), **fields)

    @classmethod
    def toy(cls, family: str, **overrides) -> "ModelSpec":
        family = canonical_family(family)
        return cls.default(family, **{**_TOY[family], **overrides})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["overrides"] = list(self.overrides)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        arch = {k: tuple(tuple(x) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v
                for k, v in d.get("arch", {}).items()}
        return cls(d["family"], d["window_len"], d["batch_size"], d["learning_rate"], d.get("dropout", DEFAULT_DROPOUT),
                   arch, tuple(d.get("overrides", ())))

    @property
    def display_name(self) -> str:
        return DISPLAY_NAMES[self.family]


class EERegressor(nn.Module):
    """Common base: input validation and numpy prediction."""

    def __init__(self, spec: ModelSpec, n_channels: int, window_len: int):
        super().__init__()
        self.spec = spec
        self.n_channels = n_channels
        self.window_len = window_len
        # affine map from the network's standardized output back to W/kg
        self.register_buffer("target_mean", torch.zeros(()))
        self.register_buffer("target_std", torch.ones(()))

    def set_target_scaling(self, mean: float, std: float):
        self.target_mean.fill_(float(mean))
        self.target_std.fill_(max(float(std), 1e-8))

    def _unscale(self, out):
        return out * self.target_std + self.target_mean

    def check_input(self, x):
        if x.ndim != 3 or x.shape[1] != self.window_len or x.shape[2] != self.n_channels:
            raise ContractError(f"{self.spec.family}: expected (batch, {self.window_len}, {self.n_channels}), "
                                f"got {tuple(x.shape)}")

    @torch.no_grad()
    def predict(self, X, batch_size: int = 1024) -> np.ndarray:
        was_training = self.training
        self.eval()
        dtype = next(self.parameters()).dtype
        out = []
        for i in range(0, len(X), batch_size):
            out.append(self(torch.as_tensor(np.asarray(X[i:i + batch_size]), dtype=dtype)).numpy())
        self.train(was_training)
        return np.concatenate(out) if out else np.empty(0)

    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())


class LinRegModel(EERegressor):
    """Per-sample multiple linear regression on the window's final step."""

    def __init__(self, spec, n_channels, window_len):
        super().__init__(spec, n_channels, window_len)
        self.linear = nn.Linear(n_channels, 1)

    def forward(self, x):
        self.check_input(x)
        return self.linear(x[:, -1, :]).squeeze(-1)


class CNNRegressor(EERegressor):
    def __init__(self, spec, n_channels, window_len):
        super().__init__(spec, n_channels, window_len)
        a = spec.arch
        k = a["kernel"]
        blocks, c_in, length = [], n_channels, window_len
        for i, f in enumerate(a["filters"]):
            layers = [nn.Conv1d(c_in, f, k, padding=k // 2), nn.BatchNorm1d(f), nn.ReLU(), nn.MaxPool1d(2)]
            if i > 0:
                layers.append(nn.Dropout(spec.dropout))
            blocks.append(nn.Sequential(*layers))
            c_in, length = f, length // 2
        if length < 1:
            raise BuildError(f"cnn: window {window_len} too short for {len(a['filters'])} pooling stages")
        self.features = nn.Sequential(*blocks)
        self.head = nn.Sequential(nn.Flatten(), nn.Linear(c_in * length, a["dense"]), nn.ReLU(),
                                  nn.Dropout(spec.dropout), nn.Linear(a["dense"], 1))

    def forward(self, x):
        self.check_input(x)
        return self._unscale(self.head(self.features(x.transpose(1, 2))).squeeze(-1))


class LSTMRegressor(EERegressor):
    def __init__(self, spec, n_channels, window_len):
        super().__init__(spec, n_channels, window_len)
        a = spec.arch
        h1, h2 = a["hidden"]
        if a["flatten"] not in ("all", "last"):
            raise BuildError(f"lstm: flatten must be 'all' or 'last', got {a['flatten']!r}")
        self.lstm1 = nn.LSTM(n_channels, h1, batch_first=True)
        self.drop1 = nn.Dropout(spec.dropout)
        self.lstm2 = nn.LSTM(h1, h2, batch_first=True)
        self.drop2 = nn.Dropout(spec.dropout)
        flat = h2 * window_len if a["flatten"] == "all" else h2
        self.head = nn.Sequential(nn.Linear(flat, a["dense"]), nn.BatchNorm1d(a["dense"]), nn.ReLU(),
                                  nn.Dropout(spec.dropout), nn.Linear(a["dense"], 1))

    def forward(self, x):
        self.check_input(x)
        h, _ = self.lstm1(x)
        h, _ = self.lstm2(self.drop1(h))
        h = self.drop2(h)
        h = h.flatten(1) if self.spec.arch["flatten"] == "all" else h[:, -1, :]
        return self._unscale(self.head(h).squeeze(-1))


class ResidualBlock1d(nn.Module):
    def __init__(self, c_in, c_out, kernel=3):
        super().__init__()
        self.conv1 = nn.Conv1d(c_in, c_out, kernel, padding=kernel // 2)
        self.bn1 = nn.BatchNorm1d(c_out)
        self.relu1 = nn.ReLU()
        self.conv2 = nn.Conv1d(c_out, c_out, kernel, padding=kernel // 2)
        self.bn2 = nn.BatchNorm1d(c_out)
        self.skip = nn.Conv1d(c_in, c_out, 1) if c_in != c_out else nn.Identity()
        self.relu2 = nn.ReLU()

    def forward(self, x):
        out = self.relu1(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu2(out + self.skip(x))


class ResNetRegressor(EERegressor):
    def __init__(self, spec, n_channels, window_len):
        super().__init__(spec, n_channels, window_len)
        a = spec.arch
        k = a["stem_kernel"]
        self.stem = nn.Sequential(nn.Conv1d(n_channels, a["stem"], k, padding=k // 2), nn.BatchNorm1d(a["stem"]),
                                  nn.ReLU(), nn.MaxPool1d(3, stride=2, padding=1))
        c = a["stem"]
        blocks = []
        for c_in, c_out in a["blocks"]:
            if c_in != c:
                raise BuildError(f"{spec.family}: block expects {c_in} channels, previous stage gives {c}")
            blocks.append(ResidualBlock1d(c_in, c_out))
            c = c_out
        self.blocks = nn.Sequential(*blocks)
        self.attention = TemporalSelfAttention(c, a["qk_reduction"]) if spec.family == "resnet_attention" else None
        self.fc = nn.Linear(c, 1)

    def forward(self, x):
        self.check_input(x)
        h = self.blocks(self.stem(x.transpose(1, 2)))
        if self.attention is not None:
            h = self.attention(h)
        return self._unscale(self.fc(h.mean(dim=2)).squeeze(-1))


class EncoderLayer(nn.Module):
    """Post-norm encoder layer: attention and feed-forward, each with residual + layer norm."""

    def __init__(self, d_model, heads, ffn, dropout):
        super().__init__()
        self.attn = MultiHeadSelfAttention(d_model, heads, dropout)
        self.norm1 = nn.LayerNorm(d_model)
        self.ff = nn.Sequential(nn.Linear(d_model, ffn), nn.ReLU(), nn.Dropout(dropout), nn.Linear(ffn, d_model),
                                nn.Dropout(dropout))
        self.norm2 = nn.LayerNorm(d_model)

    def forward(self, x):
        x = self.norm1(x + self.attn(x))
        return self.norm2(x + self.ff(x))


class TransformerRegressor(EERegressor):
    def __init__(self, spec, n_channels, window_len):
        super().__init__(spec, n_channels, window_len)
        a = spec.arch
        d = a["d_model"]
        k = a["proj_kernel"]
        self.proj = nn.Conv1d(n_channels, d, k, padding=k // 2)
        self.register_buffer("pe", torch.as_tensor(positional_encoding(window_len, d), dtype=torch.float32),
                             persistent=False)
        self.encoder = nn.ModuleList(EncoderLayer(d, a["heads"], a["ffn"], spec.dropout) for _ in range(a["layers"]))
        self.head = nn.Sequential(nn.Linear(d, a["head_hidden"]), nn.ReLU(), nn.Linear(a["head_hidden"], 1))

    def per_step(self, x):
        """Predictions at every time step, shape (batch, window_len)."""
        self.check_input(x)
        h = self.proj(x.transpose(1, 2)).transpose(1, 2) + self.pe
        for layer in self.encoder:
            h = layer(h)
        return self._unscale(self.head(h).squeeze(-1))

    def forward(self, x):
        return self.per_step(x)[:, -1]


_CLASSES = {
    "linreg": LinRegModel,
    "cnn": CNNRegressor,
    "lstm": LSTMRegressor,
    "resnet": ResNetRegressor,
    "resnet_attention": ResNetRegressor,
    "transformer": TransformerRegressor,
}


def _init_weights(model: nn.Module):
    for m in model.modules():
        if isinstance(m, (nn.Conv1d, nn.Linear)):
            fan_in = m.weight[0].numel()
            bound = math.sqrt(6.0 / fan_in)
            nn.init.uniform_(m.weight, -bound, bound)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.LSTM):
            for name, p in m.named_parameters():
                if name.startswith("weight_ih"):
                    bound = math.sqrt(3.0 / p.shape[1])
                    nn.init.uniform_(p, -bound, bound)
                elif name.startswith("weight_hh"):
                    for gate in p.data.chunk(4, dim=0):
                        nn.init.orthogonal_(gate)
                elif name.startswith("bias"):
                    nn.init.zeros_(p)
                    if name.startswith("bias_ih"):
                        h = p.shape[0] // 4
                        p.data[h:2 * h] = 1.0  # forget gate


def build_model(spec: ModelSpec, n_channels: int, window_len: int | None = None, seed: int = 0) -> EERegressor:
    """Instantiate ``spec`` for the given input arity with seeded initial weights."""
    window_len = spec.window_len if window_len is None else window_len
    if n_channels < 1 or window_len < 1:
        raise BuildError(f"invalid arity ({n_channels} channels, window {window_len})")
    if spec.family == "linreg" and window_len != 1:
        raise BuildError("linreg is a per-sample model; window_len must be 1")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = _CLASSES[spec.family](spec, n_channels, window_len)
        _init_weights(model)
    return model


# ------------------------------------------------------------- checkpoints

def save_checkpoint(model: EERegressor, path, extra: dict | None = None):
    """Write parameters and buffers plus the spec (as JSON) into one .npz archive."""
    arrays = {f"state/{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    meta = {"spec": model.spec.to_dict(), "n_channels": model.n_channels, "window_len": model.window_len,
            "dtype": str(next(model.parameters()).dtype).replace("torch.", ""), "extra": extra or {}}
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return Path(path)


def load_checkpoint(path) -> EERegressor:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        state = {k[len("state/"):]: torch.as_tensor(z[k]) for k in z.files if k.startswith("state/")}
    model = build_model(ModelSpec.from_dict(meta["spec"]), meta["n_channels"], meta["window_len"])
    model.to(getattr(torch, meta["dtype"]))
    model.load_state_dict(state)
    model.eval()
    return model
