"""CNN classifier family over grid images, dataset construction and evaluation.

Size index ``t`` sets the widths {conv1, conv2, dense1, dense2} =
{2^(t+1), 2^t, 2^(t+1), 2^t}; the head has one unit per class.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .features import (IQ_GRID, POLAR_GRID, GridConfig, normalize_image, project_hard, project_iq,
                       project_soft, to_polar)
from .modem import (DEFAULT_FRAME_LENGTH, NOISELESS, ChannelParams, apply_channel,
                    canonical_pool, evolve_channel, generate_frame, sample_channel)
from .nn import LayerSpec, Network, TrainConfig, train

FEATURE_KINDS = ("iq", "polar_binary", "accumulated_polar", "soft_polar")
HEADS = ("flatten", "gap")


@dataclass(frozen=True)
class CnnConfig:
    t: int = 2
    p_r: int = 36
    p_theta: int = 36
    filter_size: int = 5
    dropout_rate: float = 0.1
    feature: str = "accumulated_polar"
    n_classes: int = 4
    head: str = "gap"           # "flatten" keeps pixel positions, "gap" averages them out
    strides: tuple = (2, 2)

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("size index t must be >= 0")
        if self.feature not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.feature!r}; expected one of {FEATURE_KINDS}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}; expected one of {HEADS}")
        object.__setattr__(self, "strides", tuple(int(v) for v in self.strides))
        if len(self.strides) != 2 or min(self.strides) < 1:
            raise ValueError("strides must be two positive integers")

    @property
    def widths(self) -> tuple:
        return (2 ** (self.t + 1), 2 ** self.t, 2 ** (self.t + 1), 2 ** self.t, self.n_classes)


def layer_specs(cfg: CnnConfig) -> list:
    c1, c2, d1, d2, out = cfg.widths
    k = cfg.filter_size
    s1, s2 = cfg.strides if cfg.head == "flatten" else (1, 1)
    return [
        LayerSpec("conv2d", {"filters": c1, "kernel_size": k, "stride": s1}),
        LayerSpec("batchnorm"),
        LayerSpec("relu"),
        LayerSpec("conv2d", {"filters": c2, "kernel_size": k, "stride": s2}),
        LayerSpec("batchnorm"),
        LayerSpec("relu"),
        LayerSpec("flatten" if cfg.head == "flatten" else "global_avg_pool"),
        LayerSpec("dense", {"units": d1, "use_bias": False}),
        LayerSpec("batchnorm"),
        LayerSpec("relu"),
        LayerSpec("dropout", {"rate": cfg.dropout_rate}),
        LayerSpec("dense", {"units": d2, "use_bias": False}),
        LayerSpec("batchnorm"),
        LayerSpec("relu"),
        LayerSpec("dropout", {"rate": cfg.dropout_rate}),
        LayerSpec("dense", {"units": out}),
        LayerSpec("softmax"),
    ]


def build_model(cfg: CnnConfig = CnnConfig(), seed: int = 0) -> Network:
    k = cfg.filter_size
    s1 = cfg.strides[0] if cfg.head == "flatten" else 1
    side = min(cfg.p_r, cfg.p_theta)
    if side < k or (side - k) // s1 + 1 < k:
        raise ValueError(f"a {cfg.p_r}x{cfg.p_theta} input is too small for two valid {k}x{k} convolutions")
    return Network(layer_specs(cfg), (1, cfg.p_r, cfg.p_theta), seed=seed)


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    x: np.ndarray           # (B, 1, p_r, p_theta)
    y: np.ndarray           # one-hot (B, n_classes)
    labels: np.ndarray      # class index into ``pool``
    pool: tuple
    feature: str
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.labels)


def frame_seeds(seed: int, class_index: int, k: int) -> tuple:
    """Independent (symbols, channel, noise) seeds for one frame."""
    s = np.random.SeedSequence([int(seed), int(class_index), int(k)]).generate_state(3)
    return tuple(int(v) for v in s)


ChannelMode = Union[str, ChannelParams]
CHANNEL_MODES = ("awgn", "fading", "time_varying")


def channel_for(mode: ChannelMode, snr_db: float, chan_seed: int, delta: float = 0.0) -> ChannelParams:
    """Channel of one frame: fixed, AWGN, a fresh fading draw, or a fading draw after one drift step."""
    if isinstance(mode, ChannelParams):
        return mode
    if mode == "awgn":
        return ChannelParams(snr_db=snr_db)
    if mode == "fading":
        return sample_channel(chan_seed, snr_db)
    if mode == "time_varying":
        seeds = np.random.SeedSequence(int(chan_seed)).generate_state(2)
        return evolve_channel(sample_channel(int(seeds[0]), snr_db, delta), int(seeds[1]))
    raise ValueError(f"unknown channel mode {mode!r}; expected one of {CHANNEL_MODES} or ChannelParams")


def generate_frames(pool=None, frames_per_class: int = 10, snr_db: float = NOISELESS,
                    channel: ChannelMode = "awgn", seed: int = 0, n: int = DEFAULT_FRAME_LENGTH,
                    delta: float = 0.0):
    """Balanced labeled frames: returns ``(transmitted, received, labels)``.

    Frames are ordered class by class; ``labels`` index into the canonical pool.
    """
    pool = canonical_pool(pool)
    tx, rx, labels = [], [], []
    for ci, mod in enumerate(pool):
        for k in range(frames_per_class):
            s_seed, c_seed, g_seed = frame_seeds(seed, ci, k)
            s = generate_frame(mod, n, s_seed)
            ch = channel_for(channel, snr_db, c_seed, delta)
            tx.append(s)
            rx.append(apply_channel(s, ch, g_seed))
            labels.append(ci)
    return tx, rx, np.asarray(labels, dtype=int)


def frame_image(frame, feature: str, grid: Optional[GridConfig] = None) -> np.ndarray:
    """CNN input image (normalized) for one frame."""
    if feature == "iq":
        return normalize_image(project_iq(frame, grid or IQ_GRID).pixels, "binary")
    polar = to_polar(frame)
    grid = grid or POLAR_GRID
    if feature == "polar_binary":
        img = project_hard(polar, grid, accumulate=False)
    elif feature == "accumulated_polar":
        img = project_hard(polar, grid, accumulate=True)
    elif feature == "soft_polar":
        img = project_soft(polar, grid)
    else:
        raise ValueError(f"unknown feature kind {feature!r}")
    return img.normalized()


def images(frames: Sequence, feature: str, grid: Optional[GridConfig] = None) -> np.ndarray:
    if len(frames):
        return np.stack([frame_image(f, feature, grid)[None] for f in frames])
    g = grid or (IQ_GRID if feature == "iq" else POLAR_GRID)
    return np.zeros((0, 1, g.p_r, g.p_theta))


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    return np.eye(n_classes)[np.asarray(labels, dtype=int)]


def make_dataset(pool=None, frames_per_class: int = 10, snr_db: float = NOISELESS,
                 channel: ChannelMode = "awgn", feature: str = "accumulated_polar", seed: int = 0,
                 n: int = DEFAULT_FRAME_LENGTH, grid: Optional[GridConfig] = None,
                 delta: float = 0.0) -> Dataset:
    if frames_per_class < 1:
        raise ValueError("frames_per_class must be >= 1")
    if feature not in FEATURE_KINDS:
        raise ValueError(f"unknown feature kind {feature!r}")
    pool = canonical_pool(pool)
    _, rx, labels = generate_frames(pool, frames_per_class, snr_db, channel, seed, n, delta)
    x = images(rx, feature, grid)
    meta = {"snr_db": snr_db, "channel": channel if isinstance(channel, str) else channel.to_dict(),
            "seed": seed, "n": n, "frames_per_class": frames_per_class}
    return Dataset(x, one_hot(labels, len(pool)), labels, pool, feature, meta)


def save_dataset(path, ds: Dataset) -> None:
    np.savez_compressed(path, x=ds.x, y=ds.y, labels=ds.labels,
                        pool=np.array([m.value for m in ds.pool]), feature=np.array(ds.feature),
                        meta=np.array(json.dumps(ds.meta, sort_keys=True, default=str)))


def load_dataset(path) -> Dataset:
    with np.load(path) as z:
        pool = canonical_pool(list(z["pool"]))
        meta = json.loads(str(z["meta"])) if "meta" in z.files else {}
        return Dataset(z["x"], z["y"], z["labels"], pool, str(z["feature"]), meta)


# ---------------------------------------------------------------------------
# training and evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OverheadMetric:
    model_size: int
    epochs: int
    training_data: int

    @property
    def product(self) -> int:
        return self.model_size * self.epochs * self.training_data


def train_amc(cfg: CnnConfig, dataset: Dataset, train_cfg: TrainConfig = TrainConfig(), seed: int = 0,
              model: Optional[Network] = None):
    """Returns ``(model, history, overhead)``.

    ``training_data`` in the overhead metric counts every image handed to
    training, validation share included.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    net = model if model is not None else build_model(cfg, seed)
    hist = train(net, dataset.x, dataset.y, train_cfg, loss="cross_entropy")
    overhead = OverheadMetric(net.param_count(), hist.epochs_run, len(dataset))
    return net, hist, overhead


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray
    n: int


def confusion_matrix(true: np.ndarray, pred: np.ndarray, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(cm, (np.asarray(true, dtype=int), np.asarray(pred, dtype=int)), 1)
    return cm


def predict_labels(model: Network, x: np.ndarray) -> np.ndarray:
    return np.argmax(model.predict(x), axis=1)


def evaluate(model: Network, dataset: Dataset) -> EvalResult:
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    pred = predict_labels(model, dataset.x)
    cm = confusion_matrix(dataset.labels, pred, len(dataset.pool))
    return EvalResult(float(np.trace(cm) / cm.sum()), cm, int(cm.sum()))


def write_confusion_csv(path, cm: np.ndarray, pool: Iterable) -> None:
    names = [m.value for m in pool]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred"] + names)
        for name, row in zip(names, cm):
            w.writerow([name] + [int(v) for v in row])


EVAL_COLUMNS = ["snr_db", "feature_kind", "t", "seed", "accuracy", "n"]


def write_eval_csv(path, rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=EVAL_COLUMNS, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)
