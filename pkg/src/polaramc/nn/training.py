"""Mini-batch training loop with Adadelta and early stopping.

``train`` works on any *objective* exposing

* ``params`` / ``grads``: name -> array mappings (params updated in place),
* ``loss_and_grad(x, y, rng) -> (loss, n_correct)`` for one batch,
* ``evaluate(x, y) -> (loss, accuracy)`` in inference mode,
* ``get_state()`` / ``set_state(state)``.

A bare ``Network`` is wrapped in ``SupervisedObjective`` with the named loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .layers import Network
from .losses import cross_entropy_grad, cross_entropy_loss, mae_grad, mae_loss
from .optim import Adadelta


@dataclass
class TrainConfig:
    batch_size: int = 100
    adadelta_rho: float = 0.95
    adadelta_eps: float = 1e-6
    max_epochs: int = 100
    patience: int = 5
    validation_ratio: float = 0.2
    rng_seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 < self.adadelta_rho < 1:
            raise ValueError("adadelta_rho must be in (0, 1)")
        if not self.adadelta_eps > 0:
            raise ValueError("adadelta_eps must be positive")
        if self.max_epochs < 0 or self.patience < 0:
            raise ValueError("max_epochs and patience must be >= 0")
        if not 0 <= self.validation_ratio < 1:
            raise ValueError("validation_ratio must be in [0, 1)")


OFFLINE = TrainConfig()
ONLINE = TrainConfig(batch_size=10, max_epochs=50)


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    best_epoch: int = -1
    best_loss: float = math.inf
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)


class SupervisedObjective:
    """Network output compared directly against targets."""

    def __init__(self, network: Network, loss: str = "cross_entropy"):
        if loss not in ("cross_entropy", "mae"):
            raise ValueError(f"unknown loss {loss!r}")
        self.network = network
        self.loss = loss

    @property
    def params(self):
        return self.network.params

    @property
    def grads(self):
        return self.network.grads

    def get_state(self):
        return self.network.get_state()

    def set_state(self, state):
        self.network.set_state(state)

    def _loss(self, y, out):
        if self.loss == "cross_entropy":
            return cross_entropy_loss(y, out), cross_entropy_grad(y, out)
        return mae_loss(y, out), mae_grad(y, out)

    def _correct(self, y, out):
        if self.loss != "cross_entropy":
            return 0
        return int(np.sum(np.argmax(out, axis=1) == np.argmax(y, axis=1)))

    def loss_and_grad(self, x, y, rng):
        out = self.network.forward(x, "train", rng)
        loss, g = self._loss(y, out)
        self.network.backward(g)
        return loss, self._correct(y, out)

    def evaluate(self, x, y, batch_size: int = 256):
        if len(x) == 0:
            return math.nan, math.nan
        out = self.network.predict(x, batch_size)
        loss, _ = self._loss(y, out)
        acc = self._correct(y, out) / len(x) if self.loss == "cross_entropy" else math.nan
        return loss, acc


def split_indices(n: int, validation_ratio: float, rng) -> tuple:
    perm = rng.permutation(n)
    n_val = int(math.floor(n * validation_ratio))
    return perm[n_val:], perm[:n_val]


def train(model, x, y, cfg: TrainConfig = OFFLINE, loss: str = "cross_entropy") -> History:
    """Train in place and return the per-epoch history.

    A ``validation_ratio`` share of the data is held out; when it rounds to
    zero samples the training loss (in inference mode) is monitored instead.
    Training stops after ``patience`` consecutive epochs without improvement
    and the best monitored state is restored.
    """
    objective = SupervisedObjective(model, loss) if isinstance(model, Network) else model
    n = len(x)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.rng_seed)
    tr_idx, val_idx = split_indices(n, cfg.validation_ratio, rng)
    opt = Adadelta(cfg.adadelta_rho, cfg.adadelta_eps)
    hist = History()
    best_state = objective.get_state()
    monitor_idx = val_idx if val_idx.size else tr_idx
    wait = 0
    for epoch in range(cfg.max_epochs):
        order = tr_idx[rng.permutation(tr_idx.size)]
        losses, correct = [], 0
        for start in range(0, order.size, cfg.batch_size):
            b = order[start:start + cfg.batch_size]
            batch_loss, batch_correct = objective.loss_and_grad(x[b], y[b], rng)
            opt.step(objective.params, objective.grads)
            losses.append(batch_loss * b.size)
            correct += batch_correct
        hist.train_loss.append(float(np.sum(losses) / order.size))
        hist.train_acc.append(correct / order.size)
        mon_loss, mon_acc = objective.evaluate(x[monitor_idx], y[monitor_idx])
        hist.val_loss.append(mon_loss)
        hist.val_acc.append(mon_acc)
        if mon_loss < hist.best_loss:
            hist.best_loss = mon_loss
            hist.best_epoch = epoch
            best_state = objective.get_state()
            wait = 0
        else:
            wait += 1
            if wait >= cfg.patience:
                hist.stopped_early = True
                break
    objective.set_state(best_state)
    return hist
