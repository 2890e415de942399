"""Symbol generation and the flat-fading baseband channel.

Received samples follow ``y[n] = a * exp(j(2*pi*f0*n + theta)) * s[n] + g[n]``
where ``g`` is circular complex Gaussian noise.  SNR is Es/N0 with Es = 1
(all alphabets have unit average power), so the total noise variance is
``N0 = 10**(-snr_db/10)``, split equally between I and Q.  An SNR of
``math.inf`` (``NOISELESS``) disables the noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

NOISELESS = math.inf
DEFAULT_FRAME_LENGTH = 1000

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _psk(m: int, offset: float) -> np.ndarray:
    k = np.arange(m)
    return np.exp(1j * (2 * np.pi * k / m + offset))


def _square_qam(m: int) -> np.ndarray:
    side = int(round(math.sqrt(m)))
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    # I varies slowest, Q fastest
    pts = (levels[:, None] + 1j * levels[None, :]).ravel()
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


class ModulationType(Enum):
    """Modulations in the classification pool.

    Alphabet ordering is fixed: PSK points go counter-clockwise from the
    first point (QPSK starts at 45 degrees, 8PSK at 0 degrees); square QAM
    points are row-major over the I level (outer) and Q level (inner), both
    ascending.
    """

    QPSK = "qpsk"
    PSK8 = "8psk"
    QAM16 = "16qam"
    QAM64 = "64qam"

    @property
    def alphabet(self) -> np.ndarray:
        return _ALPHABETS[self].copy()

    @property
    def order(self) -> int:
        return _ALPHABETS[self].size

    @property
    def index(self) -> int:
        return POOL.index(self)

    @classmethod
    def parse(cls, name: Union[str, "ModulationType"]) -> "ModulationType":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        for mod in cls:
            if key in (mod.value, mod.name.lower()):
                return mod
        raise ValueError(f"unknown modulation {name!r}")


_ALPHABETS = {
    ModulationType.QPSK: _psk(4, np.pi / 4),
    ModulationType.PSK8: _psk(8, 0.0),
    ModulationType.QAM16: _square_qam(16),
    ModulationType.QAM64: _square_qam(64),
}

# canonical order; also the tie-break order for every classifier
POOL = (ModulationType.QPSK, ModulationType.PSK8, ModulationType.QAM16, ModulationType.QAM64)


def canonical_pool(pool: Optional[Iterable] = None) -> tuple:
    """Deduplicate and sort a pool into the canonical QPSK < 8PSK < 16QAM < 64QAM order."""
    if pool is None:
        return POOL
    mods = {ModulationType.parse(m) for m in pool}
    if not mods:
        raise ValueError("modulation pool is empty")
    return tuple(m for m in POOL if m in mods)


def alphabet(mod: ModulationType) -> np.ndarray:
    return ModulationType.parse(mod).alphabet


@dataclass(frozen=True)
class ChannelParams:
    a: float = 1.0
    theta: float = 0.0
    f0: float = 0.0
    snr_db: float = NOISELESS
    delta: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"amplitude factor must be positive, got {self.a}")
        if self.delta < 0:
            raise ValueError(f"variation degree must be >= 0, got {self.delta}")

    def to_dict(self) -> dict:
        return {"a": self.a, "theta": self.theta, "f0": self.f0,
                "snr_db": None if math.isinf(self.snr_db) else self.snr_db,
                "delta": self.delta}


def sample_channel(seed: SeedLike, snr_db: float = NOISELESS, delta: float = 0.0,
                   a_range=(0.2, 1.0)) -> ChannelParams:
    """Draw a fading channel: a ~ U(0.2, 1), theta ~ U(0, 2*pi), f0 = 0."""
    rng = make_rng(seed)
    a = rng.uniform(*a_range)
    theta = rng.uniform(0.0, 2 * np.pi)
    return ChannelParams(a=float(a), theta=float(theta), f0=0.0, snr_db=snr_db, delta=delta)


@dataclass(frozen=True, eq=False)
class ComplexFrame:
    samples: np.ndarray
    label: Optional[ModulationType] = None
    channel: Optional[ChannelParams] = None
    seed: Optional[int] = None

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.complex128).ravel()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return self.samples.size

    def with_samples(self, samples: np.ndarray) -> "ComplexFrame":
        return replace(self, samples=samples)


def as_samples(frame) -> np.ndarray:
    if isinstance(frame, ComplexFrame):
        return frame.samples
    return np.asarray(frame, dtype=np.complex128).ravel()


def generate_frame(mod: ModulationType, n: int = DEFAULT_FRAME_LENGTH,
                   rng_seed: SeedLike = None) -> ComplexFrame:
    mod = ModulationType.parse(mod)
    if n < 0:
        raise ValueError("frame length must be >= 0")
    rng = make_rng(rng_seed)
    idx = rng.integers(0, mod.order, size=n)
    seed = rng_seed if isinstance(rng_seed, (int, np.integer)) else None
    return ComplexFrame(_ALPHABETS[mod][idx], label=mod, seed=seed)


def snr_to_noise_power(snr_db: float) -> float:
    """Total complex noise variance N0 for unit symbol energy."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return 10.0 ** (-snr_db / 10.0)


def apply_channel(frame: ComplexFrame, ch: ChannelParams, rng_seed: SeedLike = None) -> ComplexFrame:
    s = as_samples(frame)
    n = np.arange(s.size)
    y = ch.a * np.exp(1j * (2 * np.pi * ch.f0 * n + ch.theta)) * s
    n0 = snr_to_noise_power(ch.snr_db)
    if n0 > 0:
        rng = make_rng(rng_seed)
        g = rng.standard_normal((2, s.size)) * math.sqrt(n0 / 2)
        y = y + (g[0] + 1j * g[1])
    label = frame.label if isinstance(frame, ComplexFrame) else None
    seed = frame.seed if isinstance(frame, ComplexFrame) else None
    return ComplexFrame(y, label=label, channel=ch, seed=seed)


def evolve_channel(ch: ChannelParams, rng_seed: SeedLike = None) -> ChannelParams:
    """Time-varying step: a' = a(1 +/- delta), theta' = theta(1 +/- delta), independent signs."""
    rng = make_rng(rng_seed)
    sa, st = rng.choice((-1.0, 1.0), size=2)
    return replace(ch, a=float(ch.a * (1 + sa * ch.delta)), theta=float(ch.theta * (1 + st * ch.delta)))


# ---------------------------------------------------------------------------
# IQ interchange file: one JSON header line, then n little-endian float32
# (I, Q) pairs.
# ---------------------------------------------------------------------------

IQ_FORMAT_VERSION = 1


def write_iq(path, frame, label: Optional[str] = None, snr_db: Optional[float] = None) -> None:
    s = as_samples(frame)
    if label is None and isinstance(frame, ComplexFrame) and frame.label is not None:
        label = frame.label.value
    if snr_db is None and isinstance(frame, ComplexFrame) and frame.channel is not None:
        if not math.isinf(frame.channel.snr_db):
            snr_db = float(frame.channel.snr_db)
    header = {"version": IQ_FORMAT_VERSION, "n": int(s.size), "label": label,
              "snr_db": None if snr_db is None else float(snr_db)}
    body = np.empty((s.size, 2), dtype="<f4")
    body[:, 0] = s.real
    body[:, 1] = s.imag
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(body.tobytes())


def read_iq(path) -> ComplexFrame:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ValueError(f"{path}: missing IQ header line")
    header = json.loads(raw[:nl].decode("utf-8"))
    if header.get("version") != IQ_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported IQ format version {header.get('version')!r}")
    n = int(header["n"])
    body = raw[nl + 1:]
    if len(body) != 8 * n:
        raise ValueError(f"{path}: expected {8 * n} payload bytes, found {len(body)}")
    pairs = np.frombuffer(body, dtype="<f4").reshape(n, 2)
    label = header.get("label")
    snr = header.get("snr_db")
    ch = None if snr is None else ChannelParams(snr_db=float(snr))
    samples = pairs[:, 0].astype(np.float64) + 1j * pairs[:, 1].astype(np.float64)
    try:
        mod = None if label is None else ModulationType.parse(label)
    except ValueError:
        # external recordings may carry labels outside the pool
        mod = None
    return ComplexFrame(samples, label=mod, channel=ch)
