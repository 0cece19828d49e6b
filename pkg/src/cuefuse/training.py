"""Training loop for the compatibility network.

Fully deterministic given the config seed: the validation carve-out, the
epoch shuffles, and the dropout masks all come from one generator. Early
stopping watches validation loss and restores the best parameters.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DivergedLoss, EmptyDataset
from .graspnet import GraspNet, LabeledPair
from .nn import SGD, Adam, bce_batch


class OptimizerKind(enum.Enum):
    SGD = "sgd"
    ADAPTIVE_MOMENT = "adam"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 200
    early_stop_patience: int = 10
    rng_seed: int = 0
    optimizer: OptimizerKind = OptimizerKind.ADAPTIVE_MOMENT
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float


@dataclass
class TrainingHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])
            for e in self.epochs:
                writer.writerow(
                    [e.epoch, f"{e.train_loss:.12g}", f"{e.val_loss:.12g}",
                     f"{e.train_acc:.12g}", f"{e.val_acc:.12g}"]
                )


def _to_arrays(pairs: list[LabeledPair]):
    hands = np.stack([p.hand.coords for p in pairs])
    objs = np.stack([p.object_bps for p in pairs])
    labels = np.array([p.label for p in pairs])
    return hands, objs, labels


def _accuracy(preds: np.ndarray, labels: np.ndarray) -> float:
    """Hard accuracy over decisive labels; soft 0.5 labels are excluded."""
    decisive = labels != 0.5
    if not np.any(decisive):
        return 0.0
    hard = preds[decisive] >= 0.5
    return float(np.mean(hard == (labels[decisive] >= 0.5)))


def evaluate(net: GraspNet, pairs: list[LabeledPair]) -> tuple[float, float, np.ndarray]:
    """Infer-mode loss and accuracy; also returns the raw predictions."""
    if not pairs:
        raise EmptyDataset("cannot evaluate on an empty pair list")
    hands, objs, labels = _to_arrays(pairs)
    preds = net.infer(hands, objs)
    loss, _ = bce_batch(preds, labels)
    return loss, _accuracy(preds, labels), preds


def train(
    net: GraspNet,
    data: list[LabeledPair],
    cfg: TrainConfig,
    val_data: list[LabeledPair] | None = None,
) -> tuple[GraspNet, TrainingHistory]:
    """Fit the network with minibatch BCE; returns the net and its history.

    When `val_data` is omitted, a `val_fraction` slice of `data` is carved
    out (seeded shuffle). With no validation at all, early stopping and
    best-parameter restore key on the training loss.
    """
    if not data:
        raise EmptyDataset("no training pairs")
    rng = np.random.default_rng(cfg.rng_seed)

    if val_data is None:
        order = rng.permutation(len(data))
        n_val = int(round(cfg.val_fraction * len(data)))
        n_val = min(n_val, len(data) - 1)
        val_data = [data[i] for i in order[:n_val]]
        data = [data[i] for i in order[n_val:]]

    train_h, train_o, train_y = _to_arrays(data)
    has_val = len(val_data) > 0
    if has_val:
        val_h, val_o, val_y = _to_arrays(val_data)

    params = net.params()
    if cfg.optimizer is OptimizerKind.SGD:
        opt = SGD(params, cfg.learning_rate)
    else:
        opt = Adam(params, cfg.learning_rate)

    history = TrainingHistory()
    best_loss = np.inf
    best_snapshot = None
    since_best = 0
    n = len(data)

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        acc_weighted = 0.0
        acc_count = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            preds = net.forward(
                train_h[idx], train_o[idx], bn_train=True, dropout_rng=rng
            )
            loss, dpred = bce_batch(preds, train_y[idx])
            if not np.isfinite(loss):
                raise DivergedLoss(f"loss became non-finite at epoch {epoch}")
            loss_sum += loss * idx.size
            decisive = train_y[idx] != 0.5
            acc_count += int(decisive.sum())
            acc_weighted += float(
                ((preds[decisive] >= 0.5) == (train_y[idx][decisive] >= 0.5)).sum()
            )
            opt.zero_grad()
            net.backward(dpred)
            opt.step()
        train_loss = loss_sum / n
        train_acc = acc_weighted / acc_count if acc_count else 0.0

        if has_val:
            val_preds = net.infer(val_h, val_o)
            val_loss, _ = bce_batch(val_preds, val_y)
            val_acc = _accuracy(val_preds, val_y)
        else:
            val_loss, val_acc = train_loss, train_acc
        if not np.isfinite(val_loss):
            raise DivergedLoss(f"validation loss became non-finite at epoch {epoch}")

        history.epochs.append(
            EpochStats(epoch, train_loss, val_loss, train_acc, val_acc)
        )

        watched = val_loss
        if watched < best_loss - 1e-12:
            best_loss = watched
            history.best_epoch = epoch
            since_best = 0
            best_snapshot = (
                [p.value.copy() for p in params],
                [(name, arr.copy()) for name, arr in net.named_state()],
            )
        else:
            since_best += 1
            if since_best > cfg.early_stop_patience:
                history.stopped_early = True
                break

    if best_snapshot is not None:
        values, state = best_snapshot
        for p, v in zip(params, values):
            p.value[...] = v
        live = dict(net.named_state())
        for name, arr in state:
            live[name][...] = arr
    return net, history
