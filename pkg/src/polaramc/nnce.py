"""Neural channel estimator (NN-CE), compensation and the online-retraining mechanisms.

The estimator maps two amplitude statistics of a received frame to a gain
``delta_r`` and a rotation ``delta_theta`` that are applied as

    y' = y * delta_r * exp(-j * delta_theta)

i.e. ``I' = I dr cos(dt) + Q dr sin(dt)`` and ``Q' = -I dr sin(dt) + Q dr cos(dt)``.
A flat-fading channel ``a * exp(j theta)`` is inverted by ``(1/a, +theta)``.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .cnn import Dataset, frame_image, images, one_hot
from .features import (POLAR_GRID, GridConfig, normalize_image, normalize_image_vjp, project_soft,
                       project_soft_vjp, to_polar, to_polar_vjp)
from .modem import ComplexFrame, as_samples
from .nn import ONLINE, LayerSpec, Network, TrainConfig, cross_entropy_grad, cross_entropy_loss, train
from .nn.training import History

CE_HIDDEN = 8


@dataclass(frozen=True)
class Compensation:
    delta_r: float = 1.0
    delta_theta: float = 0.0


IDENTITY = Compensation()


def extract_features(frame) -> tuple:
    """(mean, std) of the sample moduli."""
    mag = np.abs(as_samples(frame))
    if mag.size == 0:
        raise ValueError("cannot extract features from an empty frame")
    return float(mag.mean()), float(mag.std())


def feature_matrix(samples: np.ndarray) -> np.ndarray:
    """Row-wise ``extract_features`` for a (B, N) sample array."""
    mag = np.abs(np.atleast_2d(samples))
    if mag.shape[1] == 0:
        raise ValueError("cannot extract features from empty frames")
    return np.stack([mag.mean(axis=1), mag.std(axis=1)], axis=1)


def compensate(frame, comp: Compensation):
    """Apply the gain/rotation; returns the same container type it was given."""
    y = as_samples(frame) * (comp.delta_r * np.exp(-1j * comp.delta_theta))
    return frame.with_samples(y) if isinstance(frame, ComplexFrame) else y


def compensate_grad(frame, comp: Compensation) -> tuple:
    """Partial derivatives (dy'/d delta_r, dy'/d delta_theta) as complex arrays.

    Each entry packs the derivatives of I' and Q' as real and imaginary part.
    """
    y = as_samples(frame)
    rot = np.exp(-1j * comp.delta_theta)
    return y * rot, -1j * comp.delta_r * y * rot


def _pull_back(samples, dr, dth, grad_out):
    """Chain dL/dI' + j dL/dQ' (B, N) back to per-frame (dL/d delta_r, dL/d delta_theta)."""
    rot = np.exp(-1j * dth)[:, None]
    d_dr = samples * rot
    d_dth = -1j * dr[:, None] * samples * rot
    g_r = np.sum(grad_out.real * d_dr.real + grad_out.imag * d_dr.imag, axis=1)
    g_t = np.sum(grad_out.real * d_dth.real + grad_out.imag * d_dth.imag, axis=1)
    return g_r, g_t


def ce_layer_specs(hidden: int = CE_HIDDEN) -> list:
    return [
        LayerSpec("dense", {"units": hidden}),
        LayerSpec("relu"),
        LayerSpec("dense", {"units": 2, "zero_init": True}),
    ]


class CeModel:
    """2 -> dense(8) -> ReLU -> dense(2) estimator with an identity-centred head.

    ``delta_r = 1 + out[0]`` and ``delta_theta = out[1]``; the output layer
    starts at zero so an untrained model applies no compensation.
    """

    def __init__(self, network: Optional[Network] = None, seed: int = 0, hidden: int = CE_HIDDEN):
        self.network = network if network is not None else Network(ce_layer_specs(hidden), (2,), seed=seed)

    @property
    def params(self):
        return self.network.params

    @property
    def grads(self):
        return self.network.grads

    def param_count(self) -> int:
        return self.network.param_count()

    def get_state(self):
        return self.network.get_state()

    def set_state(self, state):
        self.network.set_state(state)

    def copy(self) -> "CeModel":
        m = CeModel(Network(self.network.specs, self.network.input_shape, seed=0))
        m.set_state(self.get_state())
        return m

    def raw(self, features: np.ndarray, mode: str = "infer") -> np.ndarray:
        return self.network.forward(np.atleast_2d(features), mode)

    def heads(self, samples: np.ndarray, mode: str = "infer") -> tuple:
        """(delta_r, delta_theta) arrays for a (B, N) sample batch."""
        out = self.raw(feature_matrix(samples), mode)
        return 1.0 + out[:, 0], out[:, 1]

    def backward_heads(self, g_r: np.ndarray, g_t: np.ndarray) -> None:
        self.network.backward(np.stack([g_r, g_t], axis=1))


def estimate(model: CeModel, frame) -> Compensation:
    dr, dt = model.heads(as_samples(frame)[None, :])
    return Compensation(float(dr[0]), float(dt[0]))


def compensate_batch(model: CeModel, samples: np.ndarray) -> np.ndarray:
    dr, dt = model.heads(samples)
    return samples * (dr * np.exp(-1j * dt))[:, None]


def stack_samples(frames: Sequence) -> np.ndarray:
    return np.stack([as_samples(f) for f in frames]) if len(frames) else np.zeros((0, 0), complex)


# ---------------------------------------------------------------------------
# training objectives (see nn.training for the protocol)
# ---------------------------------------------------------------------------

class GoldenObjective:
    """Mean |s_golden - y'| over all samples of the batch."""

    def __init__(self, model: CeModel):
        self.model = model

    @property
    def params(self):
        return self.model.params

    @property
    def grads(self):
        return self.model.grads

    def get_state(self):
        return self.model.get_state()

    def set_state(self, state):
        self.model.set_state(state)

    def _forward(self, x, y, mode):
        dr, dt = self.model.heads(x, mode)
        yp = x * (dr * np.exp(-1j * dt))[:, None]
        diff = yp - y
        return dr, dt, diff

    def loss_and_grad(self, x, y, rng):
        dr, dt, diff = self._forward(x, y, "train")
        mag = np.abs(diff)
        g = np.where(mag > 0, diff / np.where(mag > 0, mag, 1.0), 0.0) / diff.size
        self.model.backward_heads(*_pull_back(x, dr, dt, g))
        return float(mag.mean()), 0

    def evaluate(self, x, y, batch_size: int = 256):
        if len(x) == 0:
            return math.nan, math.nan
        _, _, diff = self._forward(x, y, "infer")
        return float(np.abs(diff).mean()), math.nan


class EndToEndObjective:
    """Class cross-entropy of a frozen CNN fed soft-projected compensated frames.

    Only the estimator's parameters are exposed to the optimizer.
    """

    def __init__(self, model: CeModel, cnn: Network, grid: GridConfig = POLAR_GRID):
        self.model = model
        self.cnn = cnn
        self.grid = grid

    @property
    def params(self):
        return self.model.params

    @property
    def grads(self):
        return self.model.grads

    def get_state(self):
        return self.model.get_state()

    def set_state(self, state):
        self.model.set_state(state)

    def _images(self, yp):
        polars = [to_polar(row) for row in yp]
        raw = [project_soft(p, self.grid).pixels for p in polars]
        x = np.stack([normalize_image(r, "soft")[None] for r in raw])
        return polars, raw, x

    def forward(self, x, mode="infer"):
        dr, dt = self.model.heads(x, mode)
        yp = x * (dr * np.exp(-1j * dt))[:, None]
        polars, raw, img = self._images(yp)
        return dr, dt, yp, polars, raw, self.cnn.forward(img, "infer")

    def loss_and_grad(self, x, y, rng):
        dr, dt, yp, polars, raw, out = self.forward(x, "train")
        loss = cross_entropy_loss(y, out)
        d_img = self.cnn.backward(cross_entropy_grad(y, out), input_grad=True)
        g_yp = np.empty_like(yp)
        for b in range(len(x)):
            d_raw = normalize_image_vjp(raw[b], d_img[b, 0])
            g_r, g_t = project_soft_vjp(polars[b], self.grid, d_raw)
            g_yp[b] = to_polar_vjp(yp[b], g_r, g_t)
        self.model.backward_heads(*_pull_back(x, dr, dt, g_yp))
        return loss, int(np.sum(np.argmax(out, axis=1) == np.argmax(y, axis=1)))

    def evaluate(self, x, y, batch_size: int = 256):
        if len(x) == 0:
            return math.nan, math.nan
        out = self.forward(x)[-1]
        acc = float(np.mean(np.argmax(out, axis=1) == np.argmax(y, axis=1)))
        return cross_entropy_loss(y, out), acc


# ---------------------------------------------------------------------------
# offline training and the three retraining mechanisms
# ---------------------------------------------------------------------------

CE_OFFLINE = TrainConfig(batch_size=10, max_epochs=500, patience=50)
CE_RETRAIN = TrainConfig(batch_size=10, max_epochs=300, patience=10, validation_ratio=0.0)
END_TO_END_RETRAIN = TrainConfig(batch_size=10, max_epochs=50, patience=5, validation_ratio=0.0)


def train_ce_offline(model: CeModel, received: Sequence, golden: Sequence,
                     train_cfg: TrainConfig = CE_OFFLINE) -> History:
    """Fit the estimator to (received, transmitted) frame pairs in place."""
    if len(received) == 0:
        raise ValueError("need at least one (received, golden) pair")
    if len(received) != len(golden):
        raise ValueError("received and golden frame counts differ")
    return train(GoldenObjective(model), stack_samples(received), stack_samples(golden), train_cfg)


def retrain_ce_golden(model: CeModel, received: Sequence, golden: Sequence,
                      train_cfg: TrainConfig = CE_RETRAIN) -> History:
    """Warm-started golden-sequence retraining; the CNN is not involved."""
    return train_ce_offline(model, received, golden, train_cfg)


def retrain_ce_end_to_end(model: CeModel, cnn: Network, received: Sequence, labels: np.ndarray,
                          n_classes: int = 4, train_cfg: TrainConfig = END_TO_END_RETRAIN,
                          grid: GridConfig = POLAR_GRID, feature: str = "soft_polar") -> History:
    """Retrain only the estimator through the frozen CNN using class labels."""
    if feature != "soft_polar":
        raise ValueError("end-to-end retraining needs the differentiable (soft_polar) projection, "
                         f"got {feature!r}")
    if len(received) == 0:
        raise ValueError("need at least one labeled frame")
    before = cnn.get_state()
    hist = train(EndToEndObjective(model, cnn, grid), stack_samples(received),
                 one_hot(labels, n_classes), train_cfg)
    after = cnn.get_state()
    if any(not np.array_equal(before[k], after[k]) for k in before):
        raise RuntimeError("frozen CNN parameters changed during end-to-end retraining")
    return hist


def retrain_cnn_no_ce(cnn: Network, received: Sequence, labels: np.ndarray, n_classes: int = 4,
                      train_cfg: TrainConfig = ONLINE, feature: str = "accumulated_polar",
                      grid: Optional[GridConfig] = None) -> Optional[History]:
    """Continue training every CNN parameter on images of the new-channel frames."""
    if len(received) == 0:
        return None
    x = images(received, feature, grid)
    return train(cnn, x, one_hot(labels, n_classes), train_cfg)


def ce_images(model: Optional[CeModel], frames: Sequence, feature: str = "soft_polar",
              grid: Optional[GridConfig] = None) -> np.ndarray:
    """CNN input images of (optionally) compensated frames."""
    if model is None:
        return images(frames, feature, grid)
    comp = compensate_batch(model, stack_samples(frames))
    return np.stack([frame_image(row, feature, grid)[None] for row in comp])


def ce_dataset(model: Optional[CeModel], frames: Sequence, labels: np.ndarray, pool,
               feature: str = "soft_polar", grid: Optional[GridConfig] = None) -> Dataset:
    x = ce_images(model, frames, feature, grid)
    return Dataset(x, one_hot(labels, len(pool)), np.asarray(labels), tuple(pool), feature)


# ---------------------------------------------------------------------------
# transmission / retraining overhead
# ---------------------------------------------------------------------------

class Mechanism(Enum):
    CNN_NO_CE = "cnn_no_ce"
    CE_GOLDEN = "ce_golden"
    CE_END_TO_END = "ce_end_to_end"

    @classmethod
    def parse(cls, value) -> "Mechanism":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown retraining mechanism {value!r}; expected one of "
                             f"{[m.value for m in cls]}") from None


@dataclass
class RetrainBudget:
    mechanism: str
    frames_per_class: int
    n_frames: int
    bits_per_label: int
    transmission_overhead_bits: int
    retraining_seconds: float


def overhead_report(mechanism, n_frames: int, n_classes: int = 4, n: int = 1000,
                    retraining_seconds: float = math.nan) -> RetrainBudget:
    """Bits spent on retraining labels: log2(M) per class label, 2N per golden sequence."""
    mech = Mechanism.parse(mechanism)
    if n_frames < 0:
        raise ValueError("n_frames must be >= 0")
    if mech is Mechanism.CE_GOLDEN:
        per = 2 * n
    else:
        per = int(math.ceil(math.log2(n_classes))) if n_classes > 1 else 0
    return RetrainBudget(mech.value, n_frames // max(n_classes, 1), n_frames, per, n_frames * per,
                         float(retraining_seconds))


class Stopwatch:
    def __enter__(self):
        self.start = time.perf_counter()
        self.seconds = math.nan
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start
        return False


BUDGET_COLUMNS = ["mechanism", "frames_per_class", "n_frames", "bits_per_label",
                  "transmission_overhead_bits", "retraining_seconds"]


def write_budget_csv(path, budgets: Sequence[RetrainBudget]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=BUDGET_COLUMNS, lineterminator="\n")
        w.writeheader()
        for b in budgets:
            w.writerow(asdict(b))
