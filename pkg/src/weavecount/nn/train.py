"""Mini-batch training with early stopping on validation pixel accuracy."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..imgproc import GrayImage
from .model import Network
from .ops import loss as loss_fn
from .ops import pixel_accuracy
from .optim import Adam
from .tensor import Tensor


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float


@dataclass
class TrainHistory:
    records: list[EpochRecord]
    best_epoch: int
    stopped_early: bool

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_accuracy"])
            for rec in self.records:
                writer.writerow([rec.epoch, f"{rec.train_loss:.8f}", f"{rec.val_accuracy:.8f}"])


def _to_arrays(dataset) -> tuple[np.ndarray, np.ndarray]:
    """Stack examples into (M, H, W, 1) images and targets.

    Accepts TrainingExample-like objects (.image/.mask) or (image, mask)
    pairs; images may be GrayImage or bare arrays.
    """
    images = []
    masks = []
    for item in dataset:
        if hasattr(item, "image"):
            img, msk = item.image, item.mask
        else:
            img, msk = item
        arr = img.pixels if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)
        images.append(arr)
        masks.append(np.asarray(msk, dtype=np.float64))
    x = np.stack(images)[..., None]
    y = np.stack(masks)[..., None]
    return x, y


def evaluate(net: Network, x: np.ndarray, y: np.ndarray, batch: int = 8) -> tuple[float, float]:
    """(mean loss, pixel accuracy) over a dataset in eval mode."""
    total_loss = 0.0
    total_acc = 0.0
    count = x.shape[0]
    for start in range(0, count, batch):
        xb = x[start : start + batch]
        yb = y[start : start + batch]
        pred = net.forward(Tensor(xb), mode="eval")
        total_loss += float(loss_fn(net.config.loss, pred, yb).data) * xb.shape[0]
        total_acc += pixel_accuracy(pred.data, yb) * xb.shape[0]
    return total_loss / count, total_acc / count


def train(
    net: Network,
    train_set,
    val_set,
    batch: int = 32,
    lr: float | None = None,
    patience: int = 5,
    max_epochs: int = 100,
    seed: int = 0,
    log=None,
) -> TrainHistory:
    """Minimize the configured loss; keep the best-validation weights.

    Validation is pixel accuracy at threshold 0.5.  Training stops once
    accuracy has not improved for `patience` consecutive epochs, and the
    network is restored to its best-epoch state before returning.
    """
    x_train, y_train = _to_arrays(train_set)
    x_val, y_val = _to_arrays(val_set)
    if x_train.shape[0] == 0 or x_val.shape[0] == 0:
        raise ValueError("training and validation sets must be nonempty")
    if lr is None:
        lr = net.config.learning_rate
    rng = np.random.default_rng(seed)
    net.rng = np.random.default_rng(rng.integers(2**63))
    optimizer = Adam([t for _, t in net.parameters()], lr=lr)

    records: list[EpochRecord] = []
    best_acc = -np.inf
    best_state = net.export_state()
    best_epoch = 0
    since_best = 0
    stopped_early = False
    count = x_train.shape[0]

    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(count)
        epoch_loss = 0.0
        for start in range(0, count, batch):
            idx = order[start : start + batch]
            xb = Tensor(x_train[idx])
            yb = y_train[idx]
            optimizer.zero_grad()
            pred = net.forward(xb, mode="train")
            batch_loss = loss_fn(net.config.loss, pred, yb)
            batch_loss.backward()
            optimizer.step()
            epoch_loss += float(batch_loss.data) * idx.size
        epoch_loss /= count
        _, val_acc = evaluate(net, x_val, y_val)
        records.append(EpochRecord(epoch, epoch_loss, val_acc))
        if log is not None:
            log(f"epoch {epoch}: train_loss={epoch_loss:.5f} val_accuracy={val_acc:.5f}")
        if val_acc > best_acc:
            best_acc = val_acc
            best_state = net.export_state()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= patience:
                stopped_early = True
                break

    net.import_state(best_state)
    return TrainHistory(records, best_epoch, stopped_early)
