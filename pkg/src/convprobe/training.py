"""Mini-batch training of :class:`~convprobe.network.Network` with Adam."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .network import Network
from .signal import Dataset, crop_offsets

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, message: str, epoch: int):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    """Hyperparameters.

    Adam constants follow the usual defaults (beta1=0.9, beta2=0.999,
    eps=1e-8). ``valid_fraction`` of the trials, stratified by label, is
    held out for validation.
    """

    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    crop_stride: int = 1
    valid_fraction: float = 0.2

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.crop_stride < 1:
            raise ValueError("crop_stride must be >= 1")
        if not 0 <= self.valid_fraction < 1:
            raise ValueError("valid_fraction must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    valid_loss: float
    valid_accuracy: float


@dataclass
class TrainResult:
    network: Network
    history: list[EpochMetrics] = field(default_factory=list)
    train_index: np.ndarray | None = None
    valid_index: np.ndarray | None = None


def split_indices(labels: np.ndarray, valid_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified deterministic train/validation split of trial indices."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(0,))))
    train, valid = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        n_valid = int(round(valid_fraction * idx.size))
        valid.append(idx[:n_valid])
        train.append(idx[n_valid:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(valid))


def _crop_table(n_trials: int, n_times: int, window: int, stride: int) -> np.ndarray:
    offs = crop_offsets(n_times, window, stride)
    trial = np.repeat(np.arange(n_trials), offs.size)
    return np.stack([trial, np.tile(offs, n_trials)], axis=1)


def _gather(data: np.ndarray, table: np.ndarray, window: int) -> np.ndarray:
    return np.stack([data[t, :, o : o + window] for t, o in table])


def evaluate(net: Network, data: np.ndarray, labels: np.ndarray, stride: int = 1, batch_size: int = 64):
    """Trial-level loss and accuracy; crop probabilities are averaged per trial."""
    if len(labels) == 0:
        return float("nan"), float("nan")
    W = net.window
    table = _crop_table(len(labels), data.shape[2], W, stride)
    probs = np.zeros((len(labels), net.spec.n_classes))
    counts = np.zeros(len(labels))
    for s in range(0, len(table), batch_size):
        part = table[s : s + batch_size]
        p, _ = net.forward(_gather(data, part, W))
        np.add.at(probs, part[:, 0], p)
        np.add.at(counts, part[:, 0], 1)
    probs /= counts[:, None]
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(len(labels)), labels], 1e-300))))
    acc = float(np.mean(probs.argmax(axis=1) == labels))
    return loss, acc


def train(net: Network, dataset: Dataset, hyper: TrainConfig | None = None, seed: int = 0) -> TrainResult:
    """Minimize mean cross-entropy over crops with Adam.

    Deterministic for fixed inputs: batch order comes from ``seed`` and every
    reduction runs in a fixed order. ``epochs=0`` returns an unchanged copy.
    """
    hyper = hyper or TrainConfig()
    hyper.validate()
    W = net.window
    if dataset.n_channels != net.spec.channels or dataset.n_times < W:
        raise ValueError(
            f"dataset geometry ({dataset.n_channels} channels, {dataset.n_times} samples) "
            f"incompatible with network input ({net.spec.channels}, {W})"
        )
    if dataset.n_classes != net.spec.n_classes:
        raise ValueError("dataset n_classes differs from network classifier")

    net = net.copy()
    data = np.ascontiguousarray(dataset.data, dtype=net.dtype)
    labels = dataset.labels
    tr_idx, va_idx = split_indices(labels, hyper.valid_fraction, seed)
    result = TrainResult(net, [], tr_idx, va_idx)
    if hyper.epochs == 0:
        return result

    table = _crop_table(len(tr_idx), data.shape[2], W, hyper.crop_stride)
    table[:, 0] = tr_idx[table[:, 0]]
    shuffle_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(1,))))

    m = {k: np.zeros_like(v) for k, v in net.params.items()}
    v = {k: np.zeros_like(p) for k, p in net.params.items()}
    b1, b2, lr, eps = hyper.beta1, hyper.beta2, hyper.learning_rate, hyper.eps
    step = 0
    for epoch in range(1, hyper.epochs + 1):
        order = shuffle_rng.permutation(len(table))
        total, correct, seen = 0.0, 0, 0
        for s in range(0, len(order), hyper.batch_size):
            part = table[order[s : s + hyper.batch_size]]
            xb = _gather(data, part, W)
            yb = labels[part[:, 0]]
            loss, grads, probs = net.loss_and_grads(xb, yb)
            if not math.isfinite(loss):
                raise TrainingError("non-finite loss", epoch)
            step += 1
            c1 = 1 - b1**step
            c2 = 1 - b2**step
            for k, p in net.params.items():
                g = grads[k]
                if hyper.weight_decay:
                    g = g + hyper.weight_decay * p
                m[k] = b1 * m[k] + (1 - b1) * g
                v[k] = b2 * v[k] + (1 - b2) * (g * g)
                p -= (lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + eps)).astype(p.dtype)
            if not all(np.all(np.isfinite(p)) for p in net.params.values()):
                raise TrainingError("non-finite parameters", epoch)
            total += loss * len(yb)
            correct += int(np.sum(probs.argmax(axis=1) == yb))
            seen += len(yb)
        vl, vacc = evaluate(net, data[va_idx], labels[va_idx], hyper.crop_stride)
        metrics = EpochMetrics(epoch, total / seen, correct / seen, vl, vacc)
        result.history.append(metrics)
        log.info("epoch %d train_loss %.4f train_acc %.3f valid_loss %.4f valid_acc %.3f",
                 epoch, metrics.train_loss, metrics.train_accuracy, vl, vacc)
    return result
