"""Experiment harness: Monte Carlo accuracy sweeps, the drift/retraining
experiment and the complexity report.

Every randomized step draws its seed from ``derive_seed(cfg.seed, ...)`` so
identical configurations produce identical CSV files.  Wall-clock numbers
are written to separate ``*_timing.csv`` files and never mixed into the
deterministic tables.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .cnn import (CHANNEL_MODES, FEATURE_KINDS, HEADS, CnnConfig, Dataset, build_model, confusion_matrix,
                  frame_seeds, generate_frames, images, one_hot, train_amc)
from .features import POLAR_GRID, GridConfig, cumulant_classify
from .likelihood import CLASSIFIERS as OPCOUNT_CLASSIFIERS
from .likelihood import HlrtGrid, count_ops, hlrt_classify, ml_classify, write_opcount_csv
from .modem import (ChannelParams, apply_channel, canonical_pool, evolve_channel,
                    generate_frame, sample_channel, snr_to_noise_power)
from .nn import ONLINE, Network, TrainConfig, load_network
from .nnce import (CE_OFFLINE, CE_RETRAIN, END_TO_END_RETRAIN, CeModel, Mechanism, Stopwatch, ce_dataset,
                   ce_images, overhead_report, retrain_ce_end_to_end, retrain_ce_golden, retrain_cnn_no_ce,
                   train_ce_offline)

TABLE_II_SNR = (-4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0)
SWEEP_CLASSIFIERS = ("ml", "cumulant", "hlrt", "cnn", "cnn_ce")


def derive_seed(*keys) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def _train_cfg(d: Optional[dict], base: TrainConfig) -> TrainConfig:
    if d is None:
        return base
    if isinstance(d, TrainConfig):
        return d
    unknown = set(d) - {f.name for f in dataclasses.fields(TrainConfig)}
    if unknown:
        raise ValueError(f"unknown train config field(s): {', '.join(sorted(unknown))}")
    return dataclasses.replace(base, **d)


@dataclass
class RetrainSettings:
    snr_db: float = 20.0
    n_channels: int = 5
    frames_per_class: tuple = (1, 10, 100)
    mechanisms: tuple = ("cnn_no_ce", "ce_golden", "ce_end_to_end")
    base_frames_per_class: int = 500
    adapt_frames_per_class: int = 200
    ce_base_frames_per_class: int = 100
    ce_frames_per_class: int = 25
    test_frames_per_class: int = 100
    # rotation half-width (rad) and relative gain spread applied to the
    # training frames of the CNN that sits behind the estimator
    soft_phase_jitter: float = math.pi
    soft_gain_jitter: float = 0.1
    soft_checkpoint: Optional[str] = None
    hard_checkpoint: Optional[str] = None
    adapt: dict = field(default_factory=lambda: {"max_epochs": 20})
    online: dict = field(default_factory=lambda: dataclasses.asdict(ONLINE))
    ce_offline: dict = field(default_factory=lambda: dataclasses.asdict(CE_OFFLINE))
    ce_golden: dict = field(default_factory=lambda: dataclasses.asdict(CE_RETRAIN))
    ce_end_to_end: dict = field(default_factory=lambda: dataclasses.asdict(END_TO_END_RETRAIN))

    def __post_init__(self):
        self.frames_per_class = tuple(int(k) for k in self.frames_per_class)
        self.mechanisms = tuple(Mechanism.parse(m).value for m in self.mechanisms)
        if self.n_channels < 0 or min(self.frames_per_class, default=0) < 0:
            raise ValueError("retrain.n_channels and retrain.frames_per_class must be >= 0")
        for name in ("base_frames_per_class", "adapt_frames_per_class", "ce_base_frames_per_class",
                     "ce_frames_per_class", "test_frames_per_class"):
            if getattr(self, name) < 1:
                raise ValueError(f"retrain.{name} must be >= 1")
        if self.soft_phase_jitter < 0 or not 0 <= self.soft_gain_jitter < 1:
            raise ValueError("retrain.soft_phase_jitter must be >= 0 and soft_gain_jitter in [0, 1)")


@dataclass
class ExperimentConfig:
    """All knobs of a run.  Defaults follow the simulation settings table
    (5000 training / 1000 test images per class, 1000 trials per SNR point);
    ``desk_scale()`` shrinks the counts for laptop runs."""

    pool: tuple = tuple(m.value for m in canonical_pool(None))
    snr_db: tuple = TABLE_II_SNR
    n: int = 1000
    train_frames_per_class: int = 5000
    test_frames_per_class: int = 1000
    channel: str = "awgn"
    feature: str = "accumulated_polar"
    t: int = 2
    head: str = "gap"
    trials: int = 1000
    seed: int = 0
    deltas: tuple = (0.3, 0.5)
    classifiers: tuple = ("ml", "cumulant")
    grid: dict = field(default_factory=dict)
    hlrt_grid: Optional[dict] = None
    train: dict = field(default_factory=dict)
    ce_frames_per_class: int = 100
    retrain: RetrainSettings = field(default_factory=RetrainSettings)
    out_dir: str = "results"

    def __post_init__(self):
        self.pool = tuple(m.value for m in canonical_pool(self.pool))
        self.snr_db = tuple(float(s) for s in self.snr_db)
        self.deltas = tuple(float(d) for d in self.deltas)
        self.classifiers = tuple(str(c).lower() for c in self.classifiers)
        if isinstance(self.retrain, dict):
            self.retrain = _from_dict(RetrainSettings, self.retrain, "retrain")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.trials < 0:
            raise ValueError("trials must be >= 0")
        if self.train_frames_per_class < 1 or self.test_frames_per_class < 1:
            raise ValueError("train_frames_per_class and test_frames_per_class must be >= 1")
        if self.channel not in CHANNEL_MODES:
            raise ValueError(f"channel must be one of {CHANNEL_MODES}, got {self.channel!r}")
        if self.feature not in FEATURE_KINDS:
            raise ValueError(f"feature must be one of {FEATURE_KINDS}, got {self.feature!r}")
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        bad = [c for c in self.classifiers if c not in SWEEP_CLASSIFIERS]
        if bad:
            raise ValueError(f"classifiers: unknown {bad}; expected from {SWEEP_CLASSIFIERS}")
        if any(d < 0 for d in self.deltas):
            raise ValueError("deltas must be >= 0")
        self.grid_config()
        self.hlrt()
        self.train_config()

    def grid_config(self) -> GridConfig:
        try:
            return dataclasses.replace(POLAR_GRID, **self.grid)
        except TypeError as exc:
            raise ValueError(f"grid: {exc}") from None

    def hlrt(self) -> HlrtGrid:
        if not self.hlrt_grid:
            return HlrtGrid()
        g = dict(self.hlrt_grid)
        amps = tuple(float(a) for a in g.pop("amplitudes", HlrtGrid().amplitudes))
        if "phases_deg" in g:
            phases = tuple(float(np.deg2rad(p)) for p in g.pop("phases_deg"))
        else:
            phases = tuple(float(p) for p in g.pop("phases", HlrtGrid().phases))
        if g:
            raise ValueError(f"hlrt_grid: unknown field(s) {', '.join(sorted(g))}")
        return HlrtGrid(amps, phases)

    def train_config(self) -> TrainConfig:
        return _train_cfg(self.train, TrainConfig())

    def cnn_config(self) -> CnnConfig:
        g = self.grid_config()
        return CnnConfig(t=self.t, p_r=g.p_r, p_theta=g.p_theta, feature=self.feature, head=self.head,
                         n_classes=len(self.pool))

    def desk_scale(self) -> "ExperimentConfig":
        return dataclasses.replace(self, train_frames_per_class=2000, test_frames_per_class=200, trials=200)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["retrain"] = dataclasses.asdict(self.retrain)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return _from_dict(cls, d, "config")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"config file {p} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ValueError(f"config file {p} must hold a JSON object")
        return cls.from_dict(data)


def _from_dict(cls, d: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"{where}: unknown field(s) {', '.join(sorted(unknown))}")
    return cls(**d)


def _write_csv(path: Path, columns: list, rows: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _fmt(x: float) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"


# ---------------------------------------------------------------------------
# accuracy sweep
# ---------------------------------------------------------------------------

SWEEP_COLUMNS = ["classifier", "channel", "snr_db", "trials_per_class", "n", "correct", "accuracy"]
CONFUSION_COLUMNS = ["classifier", "snr_db", "true", "predicted", "count"]


def _theta0_fading(snr_db: float, seed: int) -> ChannelParams:
    """Fading draw with the phase pinned to zero (offline estimator training)."""
    return dataclasses.replace(sample_channel(seed, snr_db), theta=0.0)


def train_fading_estimator(pool, frames_per_class: int, snr_db: float, seed: int, n: int,
                           train_cfg: TrainConfig = CE_OFFLINE) -> CeModel:
    """Offline estimator for fading channels.

    The amplitude features carry no phase information, so the golden-MAE
    target is only consistent when every training channel shares one phase;
    the draws keep the fading amplitude and set theta = 0.
    """
    tx, rx = [], []
    for ci, mod in enumerate(pool):
        for k in range(frames_per_class):
            s_seed, c_seed, g_seed = frame_seeds(seed, ci, k)
            s = generate_frame(mod, n, s_seed)
            tx.append(s)
            rx.append(apply_channel(s, _theta0_fading(snr_db, c_seed), g_seed))
    model = CeModel(seed=derive_seed(seed, 1))
    train_ce_offline(model, rx, tx, dataclasses.replace(train_cfg, rng_seed=derive_seed(seed, 2)))
    return model


def _likelihood_predictions(name, frames, pool, snr_db, cfg):
    n0 = snr_to_noise_power(snr_db)
    if name == "cumulant":
        return [pool.index(cumulant_classify(f, pool)) for f in frames]
    if math.isinf(snr_db):
        raise ValueError(f"{name} needs a finite SNR (known noise power)")
    if name == "ml":
        return [pool.index(ml_classify(f, pool, n0)) for f in frames]
    grid = cfg.hlrt()
    return [pool.index(hlrt_classify(f, pool, n0, grid)) for f in frames]


def _cnn_predictions(name, frames, pool, snr_db, si, cfg):
    ccfg = cfg.cnn_config()
    feature = ccfg.feature
    _, rx, labels = generate_frames(pool, cfg.train_frames_per_class, snr_db, cfg.channel,
                                    derive_seed(cfg.seed, 2, si), cfg.n, cfg.deltas[0] if cfg.deltas else 0.0)
    ce = None
    if name == "cnn_ce":
        ce = train_fading_estimator(pool, cfg.ce_frames_per_class, snr_db, derive_seed(cfg.seed, 3, si), cfg.n)
    grid = cfg.grid_config()
    tr = ce_dataset(ce, rx, labels, pool, feature, grid)
    tcfg = dataclasses.replace(cfg.train_config(), rng_seed=derive_seed(cfg.seed, 4, si))
    net, _, _ = train_amc(ccfg, tr, tcfg, seed=derive_seed(cfg.seed, 5, si))
    x = ce_images(ce, frames, feature, grid)
    return list(np.argmax(net.predict(x), axis=1))


def run_sweep(cfg: ExperimentConfig, out_dir: Optional[Path] = None) -> list:
    """Accuracy of each classifier at each SNR on ``trials`` fresh frames per class.

    All classifiers see the same test frames at a given SNR.  Returns the
    result rows; with ``out_dir`` also writes ``sweep.csv`` and
    ``sweep_confusion.csv``.
    """
    pool = canonical_pool(cfg.pool)
    delta = cfg.deltas[0] if cfg.deltas else 0.0
    rows, conf_rows = [], []
    if cfg.trials > 0:
        for si, snr in enumerate(cfg.snr_db):
            _, frames, labels = generate_frames(pool, cfg.trials, snr, cfg.channel,
                                                derive_seed(cfg.seed, 1, si), cfg.n, delta)
            for name in cfg.classifiers:
                if name in ("cnn", "cnn_ce"):
                    pred = _cnn_predictions(name, frames, pool, snr, si, cfg)
                else:
                    pred = _likelihood_predictions(name, frames, pool, snr, cfg)
                cm = confusion_matrix(labels, np.asarray(pred), len(pool))
                correct = int(np.trace(cm))
                rows.append({"classifier": name, "channel": cfg.channel, "snr_db": snr,
                             "trials_per_class": cfg.trials, "n": int(cm.sum()), "correct": correct,
                             "accuracy": correct / cm.sum()})
                for i, ti in enumerate(pool):
                    for j, pj in enumerate(pool):
                        conf_rows.append({"classifier": name, "snr_db": snr, "true": ti.value,
                                          "predicted": pj.value, "count": int(cm[i, j])})
    rows.sort(key=lambda r: (r["classifier"], r["snr_db"]))
    conf_rows.sort(key=lambda r: (r["classifier"], r["snr_db"]))
    if out_dir is not None:
        out = Path(out_dir)
        _write_csv(out / "sweep.csv", SWEEP_COLUMNS, [{**r, "accuracy": _fmt(r["accuracy"])} for r in rows])
        _write_csv(out / "sweep_confusion.csv", CONFUSION_COLUMNS, conf_rows)
    return rows


# ---------------------------------------------------------------------------
# drift and online retraining
# ---------------------------------------------------------------------------

RETRAIN_COLUMNS = ["channel_index", "a", "theta", "delta", "a_new", "theta_new", "mechanism",
                   "frames_per_class", "pre_drift_accuracy", "post_drift_accuracy", "post_retrain_accuracy",
                   "n_test", "transmission_overhead_bits"]
RETRAIN_SUMMARY_COLUMNS = ["delta", "mechanism", "frames_per_class", "n_channels", "pre_drift_accuracy",
                           "post_drift_accuracy", "post_retrain_accuracy", "transmission_overhead_bits"]
TIMING_COLUMNS = ["channel_index", "delta", "mechanism", "frames_per_class", "retraining_seconds"]


def _frames_on(channel: ChannelParams, pool, frames_per_class: int, seed: int, n: int):
    """(transmitted, received, labels) through one fixed channel."""
    tx, rx, labels = [], [], []
    for ci, mod in enumerate(pool):
        for k in range(frames_per_class):
            s_seed, _, g_seed = frame_seeds(seed, ci, k)
            s = generate_frame(mod, n, s_seed)
            tx.append(s)
            rx.append(apply_channel(s, channel, g_seed))
            labels.append(ci)
    return tx, rx, np.asarray(labels, dtype=int)


def _accuracy(net: Network, x: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(net.predict(x), axis=1) == labels))


def _copy_network(net: Network) -> Network:
    clone = Network(net.specs, net.input_shape, seed=0)
    clone.set_state(net.get_state())
    return clone


def _base_cnn(cfg: ExperimentConfig, feature: str, checkpoint: Optional[str], key: int,
              phase_jitter: float = 0.0, gain_jitter: float = 0.0) -> Network:
    """AWGN-trained CNN, optionally on randomly rotated and rescaled frames."""
    if checkpoint:
        if not Path(checkpoint).with_suffix(".json").exists():
            raise FileNotFoundError(f"missing checkpoint: {checkpoint}")
        return load_network(checkpoint)[0]
    rs = cfg.retrain
    pool = canonical_pool(cfg.pool)
    _, rx, labels = generate_frames(pool, rs.base_frames_per_class, rs.snr_db, "awgn",
                                    derive_seed(cfg.seed, 20, key), cfg.n)
    if phase_jitter or gain_jitter:
        rng = np.random.default_rng(derive_seed(cfg.seed, 23, key))
        gains = rng.uniform(1 - gain_jitter, 1 + gain_jitter, len(rx))
        phases = rng.uniform(-phase_jitter, phase_jitter, len(rx))
        rx = [f.with_samples(f.samples * (g * np.exp(1j * p))) for f, g, p in zip(rx, gains, phases)]
    ds = Dataset(images(rx, feature, cfg.grid_config()), one_hot(labels, len(pool)), labels, pool, feature)
    ccfg = dataclasses.replace(cfg.cnn_config(), feature=feature)
    tcfg = dataclasses.replace(cfg.train_config(), rng_seed=derive_seed(cfg.seed, 21, key))
    return train_amc(ccfg, ds, tcfg, seed=derive_seed(cfg.seed, 22, key))[0]


@dataclass
class RetrainResult:
    rows: list
    summary: list
    timing: list
    channels: list


def run_retrain_experiment(cfg: ExperimentConfig, out_dir: Optional[Path] = None,
                           soft_cnn: Optional[Network] = None, hard_cnn: Optional[Network] = None) -> RetrainResult:
    """Pre-drift / post-drift / post-retrain accuracy for every mechanism.

    For each of ``retrain.n_channels`` fading channels drawn from the
    simulation distributions, the system is first fitted to that channel
    (estimator trained on golden pairs; the no-estimator CNN fine-tuned on
    the channel), the channel then drifts once per ``delta``, and each
    mechanism retrains on ``frames_per_class`` fresh frames of the drifted
    channel.  Test frames share symbols and noise across the two channels.
    """
    rs = cfg.retrain
    pool = canonical_pool(cfg.pool)
    grid = cfg.grid_config()
    mechanisms = [Mechanism.parse(m) for m in rs.mechanisms]
    need_ce = any(m is not Mechanism.CNN_NO_CE for m in mechanisms)
    need_hard = Mechanism.CNN_NO_CE in mechanisms
    if need_ce and soft_cnn is None:
        soft_cnn = _base_cnn(cfg, "soft_polar", rs.soft_checkpoint, 0,
                             rs.soft_phase_jitter, rs.soft_gain_jitter)
    if need_hard and hard_cnn is None:
        hard_cnn = _base_cnn(cfg, "accumulated_polar", rs.hard_checkpoint, 1)
    adapt_cfg = _train_cfg(rs.adapt, cfg.train_config())
    online = _train_cfg(rs.online, ONLINE)
    ce_off = _train_cfg(rs.ce_offline, CE_OFFLINE)
    ce_gold = _train_cfg(rs.ce_golden, CE_RETRAIN)
    ce_e2e = _train_cfg(rs.ce_end_to_end, END_TO_END_RETRAIN)
    n_cls = len(pool)
    ce_base = None
    if need_ce:
        ce_base = train_fading_estimator(pool, rs.ce_base_frames_per_class, rs.snr_db,
                                         derive_seed(cfg.seed, 24), cfg.n, ce_off)

    rows, timing, channels = [], [], []
    for c in range(rs.n_channels):
        ch0 = sample_channel(derive_seed(cfg.seed, 30, c), rs.snr_db)
        channels.append(ch0)
        test_seed = derive_seed(cfg.seed, 31, c)
        _, rx0, y_test = _frames_on(ch0, pool, rs.test_frames_per_class, test_seed, cfg.n)

        ce0 = cnn0 = None
        if need_ce:
            tx, rx, _ = _frames_on(ch0, pool, rs.ce_frames_per_class, derive_seed(cfg.seed, 32, c), cfg.n)
            ce0 = ce_base.copy()
            train_ce_offline(ce0, rx, tx, dataclasses.replace(ce_off, rng_seed=derive_seed(cfg.seed, 34, c)))
        if need_hard:
            _, rx, lab = _frames_on(ch0, pool, rs.adapt_frames_per_class, derive_seed(cfg.seed, 35, c), cfg.n)
            cnn0 = _copy_network(hard_cnn)
            retrain_cnn_no_ce(cnn0, rx, lab, n_cls,
                              dataclasses.replace(adapt_cfg, rng_seed=derive_seed(cfg.seed, 36, c)), grid=grid)

        def accuracy(mech, frames, ce=None, cnn=None):
            if mech is Mechanism.CNN_NO_CE:
                return _accuracy(cnn or cnn0, images(frames, "accumulated_polar", grid), y_test)
            return _accuracy(soft_cnn, ce_images(ce or ce0, frames, "soft_polar", grid), y_test)

        pre = {m: accuracy(m, rx0) for m in mechanisms}
        for di, delta in enumerate(cfg.deltas):
            ch1 = evolve_channel(dataclasses.replace(ch0, delta=delta), derive_seed(cfg.seed, 40, c, di))
            _, rx1, _ = _frames_on(ch1, pool, rs.test_frames_per_class, test_seed, cfg.n)
            post = {m: accuracy(m, rx1) for m in mechanisms}
            for ki, k in enumerate(rs.frames_per_class):
                rseed = derive_seed(cfg.seed, 41, c, di, ki)
                tx_r, rx_r, lab_r = _frames_on(ch1, pool, k, rseed, cfg.n)
                for m in mechanisms:
                    tseed = derive_seed(cfg.seed, 42, c, di, ki)
                    with Stopwatch() as sw:
                        if m is Mechanism.CNN_NO_CE:
                            cnn = _copy_network(cnn0)
                            if k:
                                retrain_cnn_no_ce(cnn, rx_r, lab_r, n_cls,
                                                  dataclasses.replace(online, rng_seed=tseed), grid=grid)
                            acc = accuracy(m, rx1, cnn=cnn)
                        elif m is Mechanism.CE_GOLDEN:
                            ce = ce0.copy()
                            if k:
                                retrain_ce_golden(ce, rx_r, tx_r, dataclasses.replace(ce_gold, rng_seed=tseed))
                            acc = accuracy(m, rx1, ce=ce)
                        else:
                            ce = ce0.copy()
                            if k:
                                retrain_ce_end_to_end(ce, soft_cnn, rx_r, lab_r, n_cls,
                                                      dataclasses.replace(ce_e2e, rng_seed=tseed), grid)
                            acc = accuracy(m, rx1, ce=ce)
                    budget = overhead_report(m, k * n_cls, n_cls, cfg.n, sw.seconds)
                    rows.append({"channel_index": c, "a": ch0.a, "theta": ch0.theta, "delta": delta,
                                 "a_new": ch1.a, "theta_new": ch1.theta, "mechanism": m.value,
                                 "frames_per_class": k, "pre_drift_accuracy": pre[m],
                                 "post_drift_accuracy": post[m], "post_retrain_accuracy": acc,
                                 "n_test": len(y_test),
                                 "transmission_overhead_bits": budget.transmission_overhead_bits})
                    timing.append({"channel_index": c, "delta": delta, "mechanism": m.value,
                                   "frames_per_class": k, "retraining_seconds": sw.seconds})

    summary = summarize_retrain(rows)
    if out_dir is not None:
        out = Path(out_dir)
        fmt_cols = ("a", "theta", "a_new", "theta_new", "pre_drift_accuracy", "post_drift_accuracy",
                    "post_retrain_accuracy")
        _write_csv(out / "retrain.csv", RETRAIN_COLUMNS,
                   [{**r, **{k: _fmt(r[k]) for k in fmt_cols}} for r in rows])
        _write_csv(out / "retrain_summary.csv", RETRAIN_SUMMARY_COLUMNS,
                   [{**r, **{k: _fmt(r[k]) for k in fmt_cols if k in r}} for r in summary])
        _write_csv(out / "retrain_timing.csv", TIMING_COLUMNS,
                   [{**r, "retraining_seconds": f"{r['retraining_seconds']:.4f}"} for r in timing])
    return RetrainResult(rows, summary, timing, channels)


def summarize_retrain(rows: list) -> list:
    """Average the per-channel rows over channels for each (delta, mechanism, size)."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["delta"], r["mechanism"], r["frames_per_class"]), []).append(r)
    out = []
    for (delta, mech, k), g in sorted(groups.items()):
        out.append({"delta": delta, "mechanism": mech, "frames_per_class": k, "n_channels": len(g),
                    "pre_drift_accuracy": float(np.mean([r["pre_drift_accuracy"] for r in g])),
                    "post_drift_accuracy": float(np.mean([r["post_drift_accuracy"] for r in g])),
                    "post_retrain_accuracy": float(np.mean([r["post_retrain_accuracy"] for r in g])),
                    "transmission_overhead_bits": g[0]["transmission_overhead_bits"]})
    return out


# ---------------------------------------------------------------------------
# complexity
# ---------------------------------------------------------------------------

def _time_per_frame(fn, frames) -> float:
    start = time.perf_counter()
    for f in frames:
        fn(f)
    return (time.perf_counter() - start) / max(len(frames), 1)


def measure_inference_times(cfg: ExperimentConfig, frames_per_classifier: int = 4,
                            include_hlrt: bool = True) -> dict:
    """Wall-clock seconds per classified frame on this host (untrained CNN weights)."""
    pool = canonical_pool(cfg.pool)
    grid = cfg.grid_config()
    n0 = snr_to_noise_power(8.0)
    _, frames, _ = generate_frames(pool, max(1, frames_per_classifier // len(pool)), 8.0, "awgn",
                                   derive_seed(cfg.seed, 50), cfg.n)
    cnn_iq = build_model(dataclasses.replace(cfg.cnn_config(), feature="iq"), seed=0)
    cnn_polar = build_model(cfg.cnn_config(), seed=0)
    ce = CeModel(seed=0)
    times = {
        "ml": _time_per_frame(lambda f: ml_classify(f, pool, n0), frames),
        "cumulant": _time_per_frame(lambda f: cumulant_classify(f, pool), frames),
        "iq": _time_per_frame(lambda f: cnn_iq.predict(images([f], "iq")), frames),
        "accu_polar": _time_per_frame(lambda f: cnn_polar.predict(images([f], cfg.feature, grid)), frames),
        "accu_polar_nnce": _time_per_frame(
            lambda f: cnn_polar.predict(ce_images(ce, [f], cfg.feature, grid)), frames),
    }
    if include_hlrt:
        hgrid = cfg.hlrt()
        times["hlrt"] = _time_per_frame(lambda f: hlrt_classify(f, pool, n0, hgrid), frames[:1])
    return times


def report_complexity(cfg: ExperimentConfig, out_dir: Optional[Path] = None, measure: bool = True,
                      include_hlrt: bool = True) -> tuple:
    """Symbolic per-frame operator counts and (optionally) measured inference times.

    Returns ``(reports, times)``; writes ``complexity.csv`` (deterministic) and
    ``complexity_timing.csv`` when ``out_dir`` is given.
    """
    pool = canonical_pool(cfg.pool)
    reports = [count_ops(name, cfg.n, pool, cfg.hlrt(), cfg.grid_config()) for name in OPCOUNT_CLASSIFIERS]
    times = measure_inference_times(cfg, include_hlrt=include_hlrt) if measure else {}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_opcount_csv(out / "complexity.csv", reports)
        if measure:
            _write_csv(out / "complexity_timing.csv", ["classifier", "seconds_per_frame"],
                       [{"classifier": k, "seconds_per_frame": f"{v:.6g}"} for k, v in sorted(times.items())])
    return reports, times
