"""Adam training with blockwise validation holdout, early stopping and gradient checks."""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .dataset import DomainError
from .models import add_intercept, fit_linear_regression_closed_form
from .windowing import WindowedDataset

log = logging.getLogger(__name__)

VALIDATION_FRACTION = 0.15


class ConfigError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    early_stop_patience: int = 10
    seed: int = 0
    validation_fraction: float = VALIDATION_FRACTION
    batch_size: int | None = None  # None: take the model spec's value
    learning_rate: float | None = None
    per_step_loss: bool = False
    scale_targets: bool = True
    precise_bn: bool = True

    def __post_init__(self):
        if self.validation_fraction != VALIDATION_FRACTION:
            warnings.warn(f"validation fraction overridden: {self.validation_fraction} (default {VALIDATION_FRACTION})",
                          stacklevel=3)
        if not 0 <= self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in [0, 1)")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    wall_time: float = 0.0
    checksum: str = ""
    stopped_early: bool = False
    monitored: str = "val"
    rank_deficient: bool = False

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)

    def write_loss_curves(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss"])
            for i, (tr, va) in enumerate(zip(self.train_loss, self.val_loss)):
                w.writerow([i, repr(tr), repr(va)])


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.size == 0:
        raise DomainError("mse of empty input")
    if pred.shape != target.shape:
        raise DomainError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def parameter_checksum(model: nn.Module) -> str:
    h = hashlib.sha256()
    for name, t in model.state_dict().items():
        h.update(name.encode())
        h.update(np.ascontiguousarray(t.detach().cpu().numpy()).tobytes())
    return h.hexdigest()


# ------------------------------------------------------------------ split

def split_train_validation(ds: WindowedDataset, fraction: float = VALIDATION_FRACTION, seed: int = 0):
    """Hold out whole (subject, segment) blocks as validation.

    Blocks are visited in a seeded random order and taken whenever that moves
    the validation size closer to ``fraction * len(ds)``. Training windows
    whose samples overlap any validation window of the same subject are then
    dropped, so overlapping strides cannot leak.
    """
    n = len(ds)
    if fraction <= 0:
        return ds, ds.subset(np.empty(0, dtype=int))
    if n < 2:
        raise ConfigError(f"{n} windows is too few for a train/validation split")
    keys = np.stack([ds.subject, ds.segment], axis=1)
    blocks, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    sizes = np.bincount(inverse, minlength=len(blocks))
    order = np.random.default_rng(seed).permutation(len(blocks))
    target = fraction * n
    chosen, total = [], 0
    for b in order:
        if abs(total + sizes[b] - target) <= abs(total - target):
            chosen.append(b)
            total += sizes[b]
    if not chosen:
        chosen = [order[0]]
    if len(chosen) == len(blocks):
        raise ConfigError("validation split would consume every block")
    is_val = np.isin(inverse, chosen)
    val_idx = np.flatnonzero(is_val)

    train_mask = ~is_val
    w = ds.window_len
    for sid in np.unique(ds.subject[val_idx]):
        vs = np.sort(ds.start[val_idx][ds.subject[val_idx] == sid])
        cand = np.flatnonzero(train_mask & (ds.subject == sid))
        s = ds.start[cand]
        # nearest validation start at or after s - (w - 1) overlaps iff it is <= s + w - 1
        pos = np.searchsorted(vs, s - (w - 1))
        nearest = vs[np.minimum(pos, len(vs) - 1)]
        overlap = (pos < len(vs)) & (nearest <= s + w - 1)
        train_mask[cand[overlap]] = False
    train_idx = np.flatnonzero(train_mask)
    if len(train_idx) == 0:
        raise ConfigError("no training windows left after the validation split")
    return ds.subset(train_idx), ds.subset(val_idx)


# ---------------------------------------------------------------- training

def _fit_linreg(model, train_set, val_set, config, report):
    X = train_set.X[:, -1, :]
    fit = fit_linear_regression_closed_form(add_intercept(X), train_set.y)
    if fit.rank_deficient:
        log.warning("rank-deficient design (rank %d of %d); using minimum-norm solution", fit.rank, len(fit.coef))
    with torch.no_grad():
        dtype = model.linear.weight.dtype
        model.linear.bias.copy_(torch.tensor(fit.coef[:1], dtype=dtype))
        model.linear.weight.copy_(torch.tensor(fit.coef[None, 1:], dtype=dtype))
    report.train_loss.append(mse_loss(model.predict(train_set.X), train_set.y))
    report.val_loss.append(mse_loss(model.predict(val_set.X), val_set.y) if len(val_set) else float("nan"))
    report.rank_deficient = fit.rank_deficient
    report.monitored = "val" if len(val_set) else "train"


def _has_batchnorm(model):
    return any(isinstance(m, nn.modules.batchnorm._BatchNorm) for m in model.modules())


@torch.no_grad()
def recalibrate_batchnorm(model, X, batch_size: int = 512, seed: int = 0):
    """Replace BatchNorm running statistics with averages over ``X``.

    Small training batches leave the exponential running estimates noisy,
    which shows up as epoch-to-epoch jumps in evaluation-mode predictions.
    Rows are visited in a seeded random order: the cumulative variance is a
    mean of within-batch variances, which only matches the population
    variance when every batch is a random draw (time-ordered windows would
    give near-constant batches and a far too small variance).
    """
    bns = [m for m in model.modules() if isinstance(m, nn.modules.batchnorm._BatchNorm)]
    if not bns:
        return
    saved = {m: m.momentum for m in bns}
    for m in bns:
        m.reset_running_stats()
        m.momentum = None  # cumulative average
    model.train()
    for m in model.modules():
        if isinstance(m, nn.Dropout):
            m.eval()
    order = torch.randperm(len(X), generator=torch.Generator().manual_seed(seed))
    for i in range(0, len(X), batch_size):
        xb = X[order[i:i + batch_size]]
        if len(xb) > 1:
            model(xb)
    for m, mom in saved.items():
        m.momentum = mom
    model.eval()


@torch.no_grad()
def _eval_loss(model, ds, dtype):
    return mse_loss(model.predict(ds.X), ds.y)


def train(model, train_set: WindowedDataset, val_set: WindowedDataset, config: TrainConfig = TrainConfig()):
    """Fit ``model`` in place and return it with a :class:`TrainReport`.

    Linear regression is solved in closed form; every other family is trained
    with Adam on the mean squared error of the final-step target, restoring
    the weights of the best monitored epoch.
    """
    if train_set.X.shape[1:] != (model.window_len, model.n_channels):
        raise ConfigError(f"training windows {train_set.X.shape[1:]} do not match model arity "
                          f"({model.window_len}, {model.n_channels})")
    report = TrainReport()
    t0 = time.perf_counter()
    if model.spec.family == "linreg":
        _fit_linreg(model, train_set, val_set, config, report)
        report.wall_time = time.perf_counter() - t0
        report.checksum = parameter_checksum(model)
        return model, report

    spec = model.spec
    batch_size = config.batch_size or spec.batch_size
    lr = config.learning_rate or spec.learning_rate
    dtype = next(model.parameters()).dtype
    per_step = config.per_step_loss and hasattr(model, "per_step")
    X = torch.as_tensor(train_set.X, dtype=dtype)
    y = torch.as_tensor(train_set.y_seq if per_step else train_set.y, dtype=dtype)
    n = len(X)
    monitor_val = len(val_set) > 0
    report.monitored = "val" if monitor_val else "train"
    drop_singletons = _has_batchnorm(model)
    if config.scale_targets:
        model.set_target_scaling(train_set.y.mean(), train_set.y.std())

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        gen = torch.Generator().manual_seed(config.seed)
        opt = torch.optim.Adam(model.parameters(), lr=lr, betas=(0.9, 0.999), eps=1e-8)
        best, best_state, since_best = np.inf, None, 0
        for epoch in range(config.epochs):
            model.train()
            perm = torch.randperm(n, generator=gen)
            total, seen = 0.0, 0
            for i in range(0, n, batch_size):
                idx = perm[i:i + batch_size]
                if drop_singletons and len(idx) < 2:
                    continue
                xb, yb = X[idx], y[idx]
                pred = model.per_step(xb) if per_step else model(xb)
                loss = F.mse_loss(pred, yb)
                if not torch.isfinite(loss):
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch}, batch {i // batch_size}: "
                        f"input mean {xb.mean().item():.4g} std {xb.std().item():.4g}, "
                        f"target mean {yb.mean().item():.4g}, prediction range "
                        f"[{pred.min().item():.4g}, {pred.max().item():.4g}]")
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += loss.item() * len(idx)
                seen += len(idx)
            train_loss = total / max(seen, 1)
            if config.precise_bn:
                recalibrate_batchnorm(model, X, seed=config.seed)
            val_loss = _eval_loss(model, val_set, dtype) if monitor_val else float("nan")
            report.train_loss.append(train_loss)
            report.val_loss.append(val_loss)
            score = val_loss if monitor_val else train_loss
            if score < best:
                best, best_state, since_best = score, copy.deepcopy(model.state_dict()), 0
                report.best_epoch = epoch
            else:
                since_best += 1
                if since_best > config.early_stop_patience:
                    report.stopped_early = True
                    break
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    report.wall_time = time.perf_counter() - t0
    report.checksum = parameter_checksum(model)
    return model, report


# ----------------------------------------------------------- gradient check

@dataclass
class GradcheckResult:
    max_rel_error: float
    n_checked: int
    n_skipped: int
    worst_parameter: str = ""

    def __float__(self):
        return self.max_rel_error


class _KinkRecorder:
    """Records which side of every ReLU / max-pool switch the forward pass took."""

    def __init__(self, model):
        self.pattern = []
        self.handles = [m.register_forward_hook(self._hook) for m in model.modules()
                        if isinstance(m, (nn.ReLU, nn.MaxPool1d))]

    def _hook(self, module, inputs, output):
        x = inputs[0]
        if isinstance(module, nn.ReLU):
            self.pattern.append((x > 0).flatten())
        else:
            _, idx = F.max_pool1d(x, module.kernel_size, module.stride, module.padding, return_indices=True)
            self.pattern.append(idx.flatten())

    def take(self):
        p, self.pattern = self.pattern, []
        return p

    def remove(self):
        for h in self.handles:
            h.remove()


def _same_pattern(a, b):
    return len(a) == len(b) and all(torch.equal(x, y) for x, y in zip(a, b))


def finite_difference_gradcheck(model, batch, eps: float = 1e-4, max_params: int | None = 2000,
                                seed: int = 0) -> GradcheckResult:
    """Compare autograd gradients of the MSE loss against central differences.

    ``batch`` is ``(X, y)``. The model is moved to float64 and put in
    evaluation mode. Parameters whose perturbation flips a ReLU or max-pool
    decision are skipped: the loss is not differentiable there. The relative
    error is ``|g_analytic - g_fd| / max(|g_fd|, 1e-8)``.
    """
    model = model.double().eval()
    X = torch.as_tensor(np.asarray(batch[0]), dtype=torch.float64)
    y = torch.as_tensor(np.asarray(batch[1]), dtype=torch.float64)

    def loss_fn():
        return F.mse_loss(model(X), y)

    model.zero_grad()
    loss_fn().backward()
    analytic = {n: p.grad.detach().clone() for n, p in model.named_parameters()}

    coords = [(n, i) for n, p in model.named_parameters() for i in range(p.numel())]
    if max_params is not None and len(coords) > max_params:
        rng = np.random.default_rng(seed)
        coords = [coords[i] for i in sorted(rng.choice(len(coords), max_params, replace=False))]

    params = dict(model.named_parameters())
    rec = _KinkRecorder(model)
    worst, worst_name, checked, skipped = 0.0, "", 0, 0
    try:
        with torch.no_grad():
            base_loss = loss_fn()
            base = rec.take()
            for name, i in coords:
                flat = params[name].view(-1)
                orig = flat[i].item()
                flat[i] = orig + eps
                f_plus = loss_fn().item()
                p_plus = rec.take()
                flat[i] = orig - eps
                f_minus = loss_fn().item()
                p_minus = rec.take()
                flat[i] = orig
                if not (_same_pattern(base, p_plus) and _same_pattern(base, p_minus)):
                    skipped += 1
                    continue
                g_fd = (f_plus - f_minus) / (2 * eps)
                g_an = analytic[name].view(-1)[i].item()
                err = abs(g_an - g_fd) / max(abs(g_fd), 1e-8)
                checked += 1
                if err > worst:
                    worst, worst_name = err, f"{name}[{i}]"
            del base_loss
    finally:
        rec.remove()
    return GradcheckResult(worst, checked, skipped, worst_name)
