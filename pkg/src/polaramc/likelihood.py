"""Likelihood classifiers (ML under AWGN, HLRT over an amplitude/phase grid)
and closed-form operation counts for every classifier in the comparison.

Noise model: circular complex Gaussian with total variance ``N0`` (per
component ``N0/2``), so one symbol contributes

    log p(y | A) = -|y - A|**2 / N0 - log(pi * N0)

and the per-symbol mixture over a modulation's alphabet carries the uniform
prior ``1/M_i``.  Normalizing constants are shared by every hypothesis, so
they never change a classification decision.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict
from typing import Iterable, Optional

import numba
import numpy as np
from scipy.special import logsumexp

from .features import GridConfig, POLAR_GRID
from .modem import ModulationType, as_samples, canonical_pool


def _check_noise(noise_power: float) -> None:
    if not noise_power > 0:
        raise ValueError(f"noise_power must be positive, got {noise_power}")


def ml_log_likelihood(frame, mod: ModulationType, noise_power: float) -> float:
    _check_noise(noise_power)
    mod = ModulationType.parse(mod)
    y = as_samples(frame)
    if y.size == 0:
        return 0.0
    pts = mod.alphabet
    d2 = np.abs(y[:, None] - pts[None, :]) ** 2
    per_symbol = logsumexp(-d2 / noise_power, axis=1) - math.log(mod.order) - math.log(math.pi * noise_power)
    return float(np.sum(per_symbol))


def ml_classify(frame, pool: Optional[Iterable] = None, noise_power: float = 0.1) -> ModulationType:
    """argmax of the log-likelihood; ties resolve to the earlier canonical pool member."""
    pool = canonical_pool(pool)
    scores = [ml_log_likelihood(frame, m, noise_power) for m in pool]
    return pool[int(np.argmax(scores))]


@dataclass(frozen=True)
class HlrtGrid:
    amplitudes: tuple = tuple(np.round(np.arange(0.2, 1.0 + 1e-9, 0.05), 10))
    phases: tuple = tuple(np.deg2rad(np.arange(0, 360, 1.0)))

    def __post_init__(self):
        if len(self.amplitudes) == 0 or len(self.phases) == 0:
            raise ValueError("HLRT grid needs at least one amplitude and one phase")

    @property
    def n_a(self) -> int:
        return len(self.amplitudes)

    @property
    def n_theta(self) -> int:
        return len(self.phases)


def _rotation_order(points: np.ndarray) -> int:
    """Largest s such that the point set is invariant under rotation by 2*pi/s."""
    for s in (8, 4, 2):
        rot = points * np.exp(2j * np.pi / s)
        d = np.abs(rot[:, None] - points[None, :]).min(axis=1)
        if np.all(d < 1e-9):
            return s
    return 1


def _phase_subset(phases: np.ndarray, order: int) -> np.ndarray:
    """Indices of the phases needed to reach the max over the whole grid.

    When the grid is closed under a shift of 2*pi/order (mod 2*pi) and the
    alphabet has that rotational symmetry, every phase outside
    [0, 2*pi/order) repeats the likelihood of one inside it, so only that
    prefix is evaluated.  Otherwise all phases are kept.
    """
    if order <= 1:
        return np.arange(phases.size)
    period = 2 * np.pi / order
    wrapped = np.mod(phases, 2 * np.pi)
    shifted = np.mod(wrapped + period, 2 * np.pi)
    diff = np.abs(shifted[:, None] - wrapped[None, :])
    diff = np.minimum(diff, 2 * np.pi - diff)
    if not np.all(diff.min(axis=1) < 1e-9):
        return np.arange(phases.size)
    keep = np.flatnonzero(wrapped < period - 1e-9)
    return keep


def _square_levels(points: np.ndarray) -> Optional[np.ndarray]:
    """Per-axis levels if the alphabet is the full Cartesian grid levels x levels."""
    levels = np.unique(np.round(points.real, 12))
    if levels.size * levels.size != points.size:
        return None
    if not np.allclose(np.unique(np.round(points.imag, 12)), levels):
        return None
    grid = (levels[:, None] + 1j * levels[None, :]).ravel()
    d = np.abs(grid[:, None] - points[None, :]).min(axis=1)
    return levels if np.all(d < 1e-9) else None


@numba.njit(cache=True)
def _lse(z, m):
    mx = z[0]
    for k in range(1, m):
        if z[k] > mx:
            mx = z[k]
    acc = 0.0
    for k in range(m):
        acc += math.exp(z[k] - mx)
    return mx + math.log(acc)


@numba.njit(cache=True)
def _hlrt_generic_kernel(y_re, y_im, w_re, w_im, amps, noise_power):
    n_t, m = w_re.shape
    out = np.zeros((amps.size, n_t))
    x = np.empty(m)
    p = np.empty(m)
    z = np.empty(m)
    for t in range(n_t):
        for k in range(m):
            p[k] = w_re[t, k] * w_re[t, k] + w_im[t, k] * w_im[t, k]
        for n in range(y_re.size):
            # Re(y conj(w)) and |y|^2 give |y - a0 w|^2 for every amplitude
            for k in range(m):
                x[k] = y_re[n] * w_re[t, k] + y_im[n] * w_im[t, k]
            yy = y_re[n] * y_re[n] + y_im[n] * y_im[n]
            for ia in range(amps.size):
                a0 = amps[ia]
                for k in range(m):
                    z[k] = -(yy - 2.0 * a0 * x[k] + a0 * a0 * p[k]) / noise_power
                out[ia, t] += _lse(z, m)
    return out


@numba.njit(cache=True)
def _hlrt_square_kernel(y_re, y_im, phases, levels, amps, noise_power):
    # |y - a0 e^{-jt} A|^2 = |y e^{jt} - a0 A|^2, which splits over I and Q on a square grid
    m = levels.size
    out = np.zeros((amps.size, phases.size))
    zi = np.empty(m)
    zq = np.empty(m)
    for t in range(phases.size):
        c = math.cos(phases[t])
        s = math.sin(phases[t])
        for n in range(y_re.size):
            ri = y_re[n] * c - y_im[n] * s
            rq = y_re[n] * s + y_im[n] * c
            for ia in range(amps.size):
                a0 = amps[ia]
                for k in range(m):
                    di = ri - a0 * levels[k]
                    dq = rq - a0 * levels[k]
                    zi[k] = -di * di / noise_power
                    zq[k] = -dq * dq / noise_power
                out[ia, t] += _lse(zi, m) + _lse(zq, m)
    return out


def hlrt_surface(frame, mod: ModulationType, noise_power: float,
                 grid: "HlrtGrid" = None, full_search: bool = False):
    """Log-likelihood for every (amplitude, phase) hypothesis.

    Returns ``(surface, phases)`` where ``surface[ia, t]`` belongs to
    ``grid.amplitudes[ia]`` and ``phases[t]``.  Unless ``full_search`` is
    set, only the phase subset that attains the grid-wide maximum is
    evaluated (see ``_phase_subset``).
    """
    _check_noise(noise_power)
    mod = ModulationType.parse(mod)
    grid = grid or HlrtGrid()
    y = as_samples(frame)
    amps = np.asarray(grid.amplitudes, dtype=float)
    phases = np.asarray(grid.phases, dtype=float)
    pts = mod.alphabet
    idx = np.arange(phases.size) if full_search else _phase_subset(phases, _rotation_order(pts))
    ph = phases[idx]
    const = -y.size * (math.log(mod.order) + math.log(math.pi * noise_power))
    if y.size == 0:
        return np.zeros((amps.size, ph.size)), ph
    levels = None if full_search else _square_levels(pts)
    y_re = np.ascontiguousarray(y.real)
    y_im = np.ascontiguousarray(y.imag)
    if levels is None:
        w = np.exp(-1j * ph)[:, None] * pts[None, :]
        surf = _hlrt_generic_kernel(y_re, y_im, np.ascontiguousarray(w.real),
                                    np.ascontiguousarray(w.imag), amps, float(noise_power))
    else:
        surf = _hlrt_square_kernel(y_re, y_im, ph, levels, amps, float(noise_power))
    return surf + const, ph


def hlrt_log_likelihood(frame, mod: ModulationType, noise_power: float,
                        grid: "HlrtGrid" = None, full_search: bool = False):
    """Max over the grid of the compensated log-likelihood.

    The hypothesis point for (a0, theta0) is ``a0 * exp(-1j*theta0) * A_k``.
    Returns ``(log_likelihood, a0, theta0)``; among equal maxima the first
    hypothesis in (amplitude, phase) grid order wins.
    """
    grid = grid or HlrtGrid()
    surf, ph = hlrt_surface(frame, mod, noise_power, grid, full_search)
    k = int(np.argmax(surf))
    ia, it = np.unravel_index(k, surf.shape)
    return float(surf[ia, it]), float(grid.amplitudes[ia]), float(ph[it])


def hlrt_classify(frame, pool: Optional[Iterable] = None, noise_power: float = 0.1,
                  grid: Optional[HlrtGrid] = None) -> ModulationType:
    pool = canonical_pool(pool)
    grid = grid or HlrtGrid()
    scores = [hlrt_log_likelihood(frame, m, noise_power, grid)[0] for m in pool]
    return pool[int(np.argmax(scores))]


# ---------------------------------------------------------------------------
# operation counts
# ---------------------------------------------------------------------------

CLASSIFIERS = ("ml", "cumulant", "iq", "accu_polar", "hlrt", "accu_polar_nnce")

_TABLE_NAMES = {
    "ml": "ML",
    "cumulant": "Cumulant",
    "iq": "IQ",
    "accu_polar": "Accu-polar",
    "hlrt": "HLRT",
    "accu_polar_nnce": "Accu-polar with NN-CE",
}


@dataclass(frozen=True)
class OpCountReport:
    classifier: str
    additions: int
    multiplications: int
    exponentials: int
    logarithms: int
    comparisons: int
    memory: int
    params: dict = field(default_factory=dict)

    def row(self) -> dict:
        d = asdict(self)
        params = d.pop("params")
        d["classifier"] = _TABLE_NAMES.get(self.classifier, self.classifier)
        d.update(params)
        return d


def count_ops(classifier: str, n: int = 1000, pool: Optional[Iterable] = None,
              grid: Optional[HlrtGrid] = None, cfg: Optional[GridConfig] = None) -> OpCountReport:
    """Closed-form operator counts per classified frame."""
    key = classifier.strip().lower().replace("-", "_")
    if key not in CLASSIFIERS:
        raise ValueError(f"unknown classifier {classifier!r}; expected one of {', '.join(CLASSIFIERS)}")
    pool = canonical_pool(pool)
    m = len(pool)
    sum_m = sum(mod.order for mod in pool)
    grid = grid or HlrtGrid()
    cfg = cfg or POLAR_GRID
    na, nt = grid.n_a, grid.n_theta
    pix = cfg.p_r * cfg.p_theta
    N = int(n)

    if key == "ml":
        c = (N * (4 * sum_m + m), N * (7 * sum_m + 4), N * sum_m, N * m, m, sum_m)
    elif key == "cumulant":
        c = (6 * N, 16 * N, 0, 0, m, 3 * m)
    elif key == "iq":
        c = (809 * pix + m + 2 * N, 809 * pix + m + 3 * N, m, 0, 116 * pix + N, 14020 + 17 * m)
    elif key == "accu_polar":
        c = (pix * (4 * N + 107) + m, pix * (6 * N + 106) + m, pix * N + m, 0, 29 * pix, 1012 + 5 * m)
    elif key == "hlrt":
        c = (na * nt * N * (4 * sum_m + m), na * nt * N * 9 * sum_m, 2 * na * nt * N * sum_m,
             na * nt * N * m, na * nt * m, sum_m)
    else:
        c = (pix * (4 * N + 107) + m, pix * (6 * N + 106) + m, pix * N + m, 0, 29 * pix, 1056 + 5 * m)

    params = {"N": N, "M": m, "sum_Mi": sum_m, "N_a": na, "N_theta": nt,
              "p_r": cfg.p_r, "p_theta": cfg.p_theta}
    return OpCountReport(key, *(int(v) for v in c), params=params)


OPCOUNT_COLUMNS = ["classifier", "additions", "multiplications", "exponentials", "logarithms",
                   "comparisons", "memory", "N", "M", "sum_Mi", "N_a", "N_theta", "p_r", "p_theta"]


def write_opcount_csv(path, reports, extra_columns: Iterable[str] = ()) -> None:
    extra = list(extra_columns)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=OPCOUNT_COLUMNS + extra, lineterminator="\n")
        w.writeheader()
        for rep in reports:
            row = rep.row() if isinstance(rep, OpCountReport) else dict(rep)
            w.writerow(row)
