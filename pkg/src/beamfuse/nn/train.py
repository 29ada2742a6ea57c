"""Training loop, evaluation and finite-difference gradient checking."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..configio import dataclass_from_dict
from ..errors import InvalidConfigError
from .model import BeamFusionNet
from .optim import AdamW


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    max_epochs: int = 200
    patience: int = 20
    batch_size: int = 16
    weight_decay: float = 1e-2
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    val_fraction: float = 0.2
    # gradient of each mini-batch accumulated over this many chunks
    microbatches: int = 1
    # samples drawn per epoch (0: one full pass); larger sets are then
    # consumed over several epochs, each epoch continuing the shuffle
    epoch_samples: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise InvalidConfigError("lr must be >= 0")
        if self.max_epochs < 1 or not 0 <= self.patience < self.max_epochs:
            raise InvalidConfigError("need max_epochs >= 1 and 0 <= patience < max_epochs")
        if self.batch_size < 1 or self.microbatches < 1:
            raise InvalidConfigError("batch_size and microbatches must be positive")
        if self.epoch_samples < 0:
            raise InvalidConfigError("epoch_samples must be >= 0")
        if not 0 < self.val_fraction < 1:
            raise InvalidConfigError("val_fraction must lie in (0, 1)")

    @classmethod
    def from_dict(cls, data) -> "TrainConfig":
        return dataclass_from_dict(cls, data)


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_acc: float = 0.0

    def history_csv(self) -> str:
        rows = ["epoch,train_loss,val_acc"]
        rows += [f"{h['epoch']},{h['train_loss']:.10g},{h['val_acc']:.10g}" for h in self.history]
        return "\n".join(rows) + "\n"


def accuracy(model: BeamFusionNet, x, y) -> float:
    y = np.asarray(y)
    if y.size == 0:
        return float("nan")
    return float((model.predict(x) == y).mean())


def batch_grads(model: BeamFusionNet, xb, yb, rng, microbatches: int = 1):
    """Mean loss and gradient over a batch, summed chunk by chunk in a fixed order."""
    n = len(yb)
    if microbatches <= 1 or n < 2:
        loss, g, _ = model.loss_and_grads(xb, yb, train=True, rng=rng)
        return loss, g
    total_loss, total = 0.0, None
    for idx in np.array_split(np.arange(n), min(microbatches, n)):
        loss, g, _ = model.loss_and_grads(xb[idx], yb[idx], train=True, rng=rng)
        w = len(idx) / n
        total_loss += w * loss
        if total is None:
            total = {k: w * v for k, v in g.items()}
        else:
            for k, v in g.items():
                total[k] += w * v
    return total_loss, total


def train(model: BeamFusionNet, x_train, y_train, x_val, y_val, cfg: TrainConfig, seed: int,
          log=None) -> TrainResult:
    """AdamW mini-batch training with early stopping on validation accuracy.

    The model ends up holding the best-validation parameters, which are also
    returned. Ties on accuracy go to the lower validation loss.
    """
    x_train = np.asarray(x_train)
    y_train = np.asarray(y_train)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    drop_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
    opt = AdamW(model.params, lr=cfg.lr, betas=cfg.betas, eps=cfg.eps, weight_decay=cfg.weight_decay)
    best = (-1.0, -np.inf)
    best_params = copy.deepcopy(model.params)
    result = TrainResult(best_params)
    stale = 0
    orders = _epoch_orders(rng, len(y_train), cfg.epoch_samples or len(y_train))
    for epoch in range(1, cfg.max_epochs + 1):
        order = next(orders)
        losses = []
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, g = batch_grads(model, x_train[idx], y_train[idx], drop_rng, cfg.microbatches)
            opt.step(g)
            losses.append(loss * len(idx))
        train_loss = float(np.sum(losses) / max(len(order), 1))
        val_acc, val_loss = _val_metrics(model, x_val, y_val)
        result.history.append({"epoch": epoch, "train_loss": train_loss, "val_acc": val_acc})
        if log:
            log(f"epoch {epoch:3d} loss {train_loss:.4f} val_acc {val_acc:.3f}")
        if (val_acc, -val_loss) > best:
            best = (val_acc, -val_loss)
            best_params = copy.deepcopy(model.params)
            result.best_epoch, result.best_val_acc = epoch, val_acc
            stale = 0
        else:
            stale += 1
            if stale > cfg.patience:
                break
    for k in model.params:
        model.params[k][...] = best_params[k]
    result.params = best_params
    return result


def _epoch_orders(rng, n: int, per_epoch: int):
    """Successive chunks of ``per_epoch`` indices from back-to-back permutations of ``n``."""
    buf = np.empty(0, dtype=np.int64)
    while True:
        while buf.size < per_epoch:
            buf = np.concatenate([buf, rng.permutation(n)])
        yield buf[:per_epoch]
        buf = buf[per_epoch:]


def _val_metrics(model, x_val, y_val):
    y_val = np.asarray(y_val)
    if y_val.size == 0:
        return 0.0, 0.0
    p = model.predict_proba(x_val)
    acc = float((p.argmax(1) == y_val).mean())
    loss = float(-np.log(np.maximum(p[np.arange(len(y_val)), y_val], 1e-300)).mean())
    return acc, loss


def stratified_split(labels, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(train idx, held-out idx) with ``fraction`` of each class held out (at least one when possible)."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    hold = []
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        idx = idx[rng.permutation(idx.size)]
        k = int(round(fraction * idx.size))
        if idx.size > 1:
            k = min(max(k, 1), idx.size - 1)
        else:
            k = 0
        hold.extend(idx[:k].tolist())
    hold = np.sort(np.array(hold, dtype=np.int64))
    keep = np.setdiff1d(np.arange(labels.size), hold)
    return keep, hold


def gradient_check(model: BeamFusionNet, x, y, eps: float = 1e-6, max_entries: int = 24, seed: int = 0,
                   dropout: bool = True) -> dict[str, float]:
    """Relative error between analytic and central-difference gradients, per parameter group.

    Error is ||g_analytic - g_numeric|| / (||g_analytic|| + ||g_numeric||) over a
    random sample of at most ``max_entries`` entries per group. Dropout uses a
    fixed mask (same RNG seed on every evaluation).
    """
    y = np.asarray(y)

    def loss_grads():
        rng = np.random.default_rng(seed + 7) if dropout else None
        loss, g, _ = model.loss_and_grads(x, y, train=dropout, rng=rng)
        return loss, g

    _, grads = loss_grads()
    pick = np.random.default_rng(seed)
    errors = {}
    for name, p in model.params.items():
        flat = p.reshape(-1)
        idx = pick.choice(flat.size, size=min(max_entries, flat.size), replace=False)
        num = np.empty(idx.size)
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + eps
            lp, _ = loss_grads()
            flat[i] = old - eps
            lm, _ = loss_grads()
            flat[i] = old
            num[j] = (lp - lm) / (2 * eps)
        ana = grads[name].reshape(-1)[idx]
        denom = np.linalg.norm(ana) + np.linalg.norm(num)
        errors[name] = float(np.linalg.norm(ana - num) / denom) if denom > 0 else 0.0
    return errors
