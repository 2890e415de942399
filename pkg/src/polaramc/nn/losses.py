"""Loss functions with their gradients.

``cross_entropy_loss`` is the class-averaged binary cross-entropy

    L = -(1/K) * sum_k [y_k log p_k + (1 - y_k) log(1 - p_k)]

averaged over the batch, applied to softmax probabilities.  ``mae_loss`` is
the mean complex modulus of the error between two sample sequences.
"""

from __future__ import annotations

import numpy as np

CLIP_EPS = 1e-12


def _check_shapes(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def _batched(a):
    a = np.asarray(a, dtype=float)
    return a[None, :] if a.ndim == 1 else a


def cross_entropy_loss(y_true, y_pred) -> float:
    y = _batched(y_true)
    p = _batched(y_pred)
    _check_shapes(y, p)
    p = np.clip(p, CLIP_EPS, 1 - CLIP_EPS)
    k = y.shape[-1]
    per = -(y * np.log(p) + (1 - y) * np.log(1 - p)).sum(axis=-1) / k
    return float(per.mean())


def cross_entropy_grad(y_true, y_pred) -> np.ndarray:
    """dL/dy_pred for the batch-mean loss; zero where the clip is active."""
    y = _batched(y_true)
    p_raw = _batched(y_pred)
    _check_shapes(y, p_raw)
    p = np.clip(p_raw, CLIP_EPS, 1 - CLIP_EPS)
    n, k = y.shape
    g = -(y / p - (1 - y) / (1 - p)) / (k * n)
    g[(p_raw < CLIP_EPS) | (p_raw > 1 - CLIP_EPS)] = 0.0
    return g.reshape(np.shape(y_pred))


def _as_complex(a):
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return a
    if a.shape[-1] != 2:
        raise ValueError("real-valued sequences must interleave (I, Q) on the last axis")
    return a[..., 0] + 1j * a[..., 1]


def mae_loss(target, prediction) -> float:
    t = np.asarray(target)
    p = np.asarray(prediction)
    _check_shapes(t, p)
    return float(np.mean(np.abs(_as_complex(t) - _as_complex(p))))


def mae_grad(target, prediction) -> np.ndarray:
    """d(mean |t - p|)/dp as dL/dRe + j dL/dIm (complex input) or interleaved pairs."""
    t = np.asarray(target)
    p = np.asarray(prediction)
    _check_shapes(t, p)
    diff = _as_complex(p) - _as_complex(t)
    mag = np.abs(diff)
    g = np.where(mag > 0, diff / np.where(mag > 0, mag, 1.0), 0.0) / diff.size
    if np.iscomplexobj(p):
        return g
    return np.stack([g.real, g.imag], axis=-1)
