"""Polar transform, grid-image projection and higher-order cumulant features."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np

from .modem import ModulationType, as_samples, canonical_pool


@dataclass(frozen=True)
class PolarSamples:
    r: np.ndarray
    theta: np.ndarray

    def __len__(self) -> int:
        return self.r.size


@dataclass(frozen=True)
class GridConfig:
    """Axis bounds and resolution of a projection grid.

    The first axis (rows) is radius, the second (columns) is angle.  The same
    type describes the Cartesian I/Q grid, in which case rows are I and
    columns are Q.  ``sigma`` is the soft-projection kernel width in grid
    units; ``None`` means half a radius bin.
    """

    r0: float = 0.0
    r1: float = 3.0
    theta0: float = -math.pi / 2
    theta1: float = math.pi / 2
    p_r: int = 36
    p_theta: int = 36
    sigma: Optional[float] = None

    def __post_init__(self):
        if not (self.r1 > self.r0 and self.theta1 > self.theta0):
            raise ValueError("grid bounds must satisfy r1 > r0 and theta1 > theta0")
        if self.p_r < 1 or self.p_theta < 1:
            raise ValueError("grid resolution must be >= 1 on both axes")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def dg_r(self) -> float:
        return (self.r1 - self.r0) / self.p_r

    @property
    def dg_theta(self) -> float:
        return (self.theta1 - self.theta0) / self.p_theta

    @property
    def kernel_sigma(self) -> float:
        return self.dg_r / 2 if self.sigma is None else self.sigma

    @property
    def grid_r(self) -> np.ndarray:
        return self.r0 + self.dg_r * np.arange(self.p_r)

    @property
    def grid_theta(self) -> np.ndarray:
        return self.theta0 + self.dg_theta * np.arange(self.p_theta)

    @property
    def shape(self) -> tuple:
        return (self.p_r, self.p_theta)


POLAR_GRID = GridConfig()
IQ_GRID = GridConfig(r0=-3.0, r1=3.0, theta0=-3.0, theta1=3.0)


@dataclass(frozen=True, eq=False)
class GridImage:
    pixels: np.ndarray
    config: GridConfig
    kind: str  # "binary" | "accumulated" | "soft"

    def normalized(self) -> np.ndarray:
        return normalize_image(self.pixels, self.kind)


def normalize_image(pixels: np.ndarray, kind: str) -> np.ndarray:
    """Scale accumulated/soft images to [0, 1] by their peak; binary passes through."""
    if kind == "binary":
        return np.asarray(pixels, dtype=float)
    peak = float(np.max(pixels)) if pixels.size else 0.0
    if peak <= 0:
        return np.zeros_like(pixels, dtype=float)
    return pixels / peak


def normalize_image_vjp(pixels: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Backward pass of peak normalization ``x = P / max(P)``.

    The max is routed to the first maximal pixel (C order).
    """
    flat = pixels.ravel()
    k = int(np.argmax(flat))
    m = flat[k]
    if m <= 0:
        return np.zeros_like(pixels)
    out = grad / m
    out.ravel()[k] -= float(np.sum(grad * pixels)) / (m * m)
    return out


# ---------------------------------------------------------------------------
# polar transform
# ---------------------------------------------------------------------------

def to_polar(frame) -> PolarSamples:
    """Radius and principal-value arctan(Q/I).

    Angles lie in [-pi/2, pi/2]: points in the left half-plane fold onto the
    right one.  I == 0 gives sign(Q)*pi/2 and the origin maps to 0.
    """
    y = as_samples(frame)
    i, q = y.real, y.imag
    r = np.hypot(i, q)
    # a subnormal I overflows to +-inf, whose arctan is the right limit
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        theta = np.arctan(q / i)
    on_axis = i == 0
    theta[on_axis] = np.sign(q[on_axis]) * (np.pi / 2)
    return PolarSamples(r=r, theta=theta)


def to_polar_vjp(frame, grad_r: np.ndarray, grad_theta: np.ndarray) -> np.ndarray:
    """Pull (dL/dr, dL/dtheta) back to dL/dI + j*dL/dQ.

    Zero at the origin, where the transform is not differentiable.
    """
    y = as_samples(frame)
    i, q = y.real, y.imag
    r2 = i * i + q * q
    safe = r2 > 0
    r = np.sqrt(r2)
    inv_r = np.where(safe, 1.0 / np.where(safe, r, 1.0), 0.0)
    inv_r2 = inv_r * inv_r
    gi = grad_r * i * inv_r - grad_theta * q * inv_r2
    gq = grad_r * q * inv_r + grad_theta * i * inv_r2
    return gi + 1j * gq


# ---------------------------------------------------------------------------
# grid projection
# ---------------------------------------------------------------------------

def _bin_indices(r, theta, cfg: GridConfig):
    i = np.floor((np.asarray(r) - cfg.r0) / cfg.dg_r)
    j = np.floor((np.asarray(theta) - cfg.theta0) / cfg.dg_theta)
    # out-of-range symbols clamp to the edge bins
    i = np.clip(i, 0, cfg.p_r - 1).astype(np.intp)
    j = np.clip(j, 0, cfg.p_theta - 1).astype(np.intp)
    return i, j


def project_hard(polar: PolarSamples, cfg: GridConfig = POLAR_GRID, accumulate: bool = True) -> GridImage:
    i, j = _bin_indices(polar.r, polar.theta, cfg)
    counts = np.bincount(i * cfg.p_theta + j, minlength=cfg.p_r * cfg.p_theta)
    pixels = counts.reshape(cfg.shape).astype(float)
    if not accumulate:
        pixels = (pixels > 0).astype(float)
        return GridImage(pixels, cfg, "binary")
    return GridImage(pixels, cfg, "accumulated")


def project_iq(frame, cfg: GridConfig = IQ_GRID, accumulate: bool = False) -> GridImage:
    """Cartesian scatter image: rows index I, columns index Q."""
    y = as_samples(frame)
    return project_hard(PolarSamples(r=y.real, theta=y.imag), cfg, accumulate)


def _soft_factors(polar: PolarSamples, cfg: GridConfig):
    s2 = 2.0 * cfg.kernel_sigma ** 2
    dr = polar.r[:, None] - cfg.grid_r[None, :]
    dt = polar.theta[:, None] - cfg.grid_theta[None, :]
    u = np.exp(-dr * dr / s2)
    v = np.exp(-dt * dt / s2)
    return u, v, dr, dt


def project_soft(polar: PolarSamples, cfg: GridConfig = POLAR_GRID) -> GridImage:
    """Gaussian-kernel projection onto the grid points r0 + i*dg_r, theta0 + j*dg_theta.

    The kernel separates over the two axes, so the image is ``U.T @ V``
    with ``U[n, i] = exp(-(r[n] - g_r[i])**2 / (2 sigma**2))`` and likewise
    for ``V``.
    """
    u, v, _, _ = _soft_factors(polar, cfg)
    return GridImage(u.T @ v, cfg, "soft")


def project_soft_vjp(polar: PolarSamples, cfg: GridConfig, grad: np.ndarray):
    """Return (dL/dr, dL/dtheta) given dL/dP for the soft projection."""
    u, v, dr, dt = _soft_factors(polar, cfg)
    s2 = cfg.kernel_sigma ** 2
    du = -u * dr / s2
    dv = -v * dt / s2
    grad_r = np.sum(du * (v @ grad.T), axis=1)
    grad_theta = np.sum(dv * (u @ grad), axis=1)
    return grad_r, grad_theta


def project_soft_jacobian(polar: PolarSamples, cfg: GridConfig):
    """Full Jacobians dP[i, j]/dr[n] and dP[i, j]/dtheta[n], each shaped (N, p_r, p_theta)."""
    u, v, dr, dt = _soft_factors(polar, cfg)
    s2 = cfg.kernel_sigma ** 2
    d_r = (-u * dr / s2)[:, :, None] * v[:, None, :]
    d_theta = u[:, :, None] * (-v * dt / s2)[:, None, :]
    return d_r, d_theta


# ---------------------------------------------------------------------------
# higher-order cumulants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CumulantFeatures:
    c40: float
    c42: float
    c63: float

    def as_array(self) -> np.ndarray:
        return np.array([self.c40, self.c42, self.c63])


def _moment(y, p, q):
    return np.mean(y ** (p - q) * np.conj(y) ** q)


def _cumulants_from_samples(y: np.ndarray) -> np.ndarray:
    m20 = _moment(y, 2, 0)
    m21 = _moment(y, 2, 1).real
    m40 = _moment(y, 4, 0)
    m41 = _moment(y, 4, 1)
    m42 = _moment(y, 4, 2).real
    m63 = _moment(y, 6, 3).real
    if m21 <= 0:
        raise ValueError("zero-power frame")
    c40 = m40 - 3 * m20 ** 2
    c42 = m42 - abs(m20) ** 2 - 2 * m21 ** 2
    c63 = m63 - 6 * m20 * m41 - 9 * m21 * m42 + 18 * m20 ** 2 * m21 + 12 * m21 ** 3
    return np.array([abs(c40) / m21 ** 2, abs(c42) / m21 ** 2, abs(c63) / m21 ** 3])


def cumulant_features(frame) -> CumulantFeatures:
    y = as_samples(frame)
    if y.size < 2:
        raise ValueError("cumulant features need at least 2 samples")
    c40, c42, c63 = _cumulants_from_samples(y)
    return CumulantFeatures(float(c40), float(c42), float(c63))


@lru_cache(maxsize=None)
def _theoretical(mod: ModulationType) -> tuple:
    # uniform average over the alphabet equals the noiseless expectation
    return tuple(_cumulants_from_samples(mod.alphabet))


def theoretical_cumulants(mod: ModulationType) -> CumulantFeatures:
    return CumulantFeatures(*_theoretical(ModulationType.parse(mod)))


def cumulant_classify(frame, pool: Optional[Iterable] = None) -> ModulationType:
    """Nearest theoretical (noiseless) feature vector in Euclidean distance.

    Ties go to the earlier member of the canonical pool order.
    """
    pool = canonical_pool(pool)
    est = cumulant_features(frame).as_array()
    dists = [np.linalg.norm(est - np.array(_theoretical(m))) for m in pool]
    return pool[int(np.argmin(dists))]


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def write_image_csv(path, image) -> None:
    pixels = image.pixels if isinstance(image, GridImage) else np.asarray(image)
    np.savetxt(path, pixels, delimiter=",", fmt="%.10g")


def write_image_pgm(path, image) -> None:
    """Binary PGM (P5), peak pixel scaled to 255."""
    pixels = image.pixels if isinstance(image, GridImage) else np.asarray(image, dtype=float)
    peak = float(pixels.max()) if pixels.size else 0.0
    scaled = np.zeros(pixels.shape) if peak <= 0 else pixels / peak * 255.0
    data = np.round(scaled).astype(np.uint8)
    rows, cols = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
