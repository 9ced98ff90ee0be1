"""Attention and positional-encoding building blocks."""

import math

import numpy as np
import torch
import torch.nn as nn


class ContractError(ValueError):
    pass


def positional_encoding(seq_len: int, d_model: int) -> np.ndarray:
    """Sinusoidal table: even columns sin(pos / 10000^(2i/d)), odd columns the matching cos."""
    if d_model % 2:
        raise ContractError(f"d_model must be even, got {d_model}")
    # scalar libm calls so each entry equals the closed form bit for bit
    pe = np.empty((seq_len, d_model))
    for i in range(0, d_model, 2):
        div = 10000 ** (i / d_model)
        for pos in range(seq_len):
            pe[pos, i] = math.sin(pos / div)
            pe[pos, i + 1] = math.cos(pos / div)
    return pe


def scaled_dot_product_attention(q, k, v, return_weights=False):
    """softmax(q k^T / sqrt(d_k)) v over the second-to-last (time) axis.

    Works on torch tensors or numpy arrays with shape (..., T, d).
    """
    as_numpy = isinstance(q, np.ndarray)
    if as_numpy:
        q, k, v = (torch.as_tensor(np.asarray(a, dtype=float)) for a in (q, k, v))
    if q.shape[-1] != k.shape[-1]:
        raise ContractError(f"query/key dims differ: {q.shape[-1]} vs {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ContractError(f"keys and values differ in length: {k.shape[-2]} vs {v.shape[-2]}")
    d_k = q.shape[-1]
    scores = q @ k.transpose(-2, -1) / math.sqrt(d_k)
    weights = torch.softmax(scores, dim=-1)
    out = weights @ v
    if as_numpy:
        out, weights = out.numpy(), weights.numpy()
    return (out, weights) if return_weights else out


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, d_model, n_heads, dropout=0.0):
        super().__init__()
        if d_model % n_heads:
            raise ContractError(f"d_model {d_model} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model, bias=False)  # softmax ignores a key bias
        self.v = nn.Linear(d_model, d_model)
        self.out = nn.Linear(d_model, d_model)
        self.drop = nn.Dropout(dropout)
        self.last_weights = None

    def _split(self, x):
        b, t, _ = x.shape
        return x.view(b, t, self.n_heads, self.d_head).transpose(1, 2)

    def forward(self, x):
        b, t, d = x.shape
        out, w = scaled_dot_product_attention(self._split(self.q(x)), self._split(self.k(x)),
                                              self._split(self.v(x)), return_weights=True)
        self.last_weights = w.detach()
        out = out.transpose(1, 2).reshape(b, t, d)
        return self.drop(self.out(out))


class TemporalSelfAttention(nn.Module):
    """Self-attention over time on (batch, channels, time) features.

    Query, key and value come from separate 1x1 convolutions; the attended
    values are added back onto the input.
    """

    def __init__(self, channels, qk_reduction=8):
        super().__init__()
        d_qk = max(1, channels // qk_reduction)
        self.query = nn.Conv1d(channels, d_qk, 1)
        self.key = nn.Conv1d(channels, d_qk, 1, bias=False)
        self.value = nn.Conv1d(channels, channels, 1)
        self.last_weights = None

    def forward(self, x):
        q = self.query(x).transpose(1, 2)
        k = self.key(x).transpose(1, 2)
        v = self.value(x).transpose(1, 2)
        out, w = scaled_dot_product_attention(q, k, v, return_weights=True)
        self.last_weights = w.detach()
        return x + out.transpose(1, 2)
