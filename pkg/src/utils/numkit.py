"""
Numerical primitives shared by every layer.

Matrices are float64 numpy arrays in C (row-major) order. Randomness always
comes from an explicit `Rng`; nothing here touches numpy's global state.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np
import numpy.typing as npt

from src.errors import FullyDroppedError, ShapeError

Matrix = npt.NDArray[np.float64]

LOG_2PI = math.log(2.0 * math.pi)


class Rng:
    """
    Seedable generator: numpy's PCG64 bit generator behind `numpy.random.Generator`.

    PCG64 streams are identical across platforms for a given seed. An Rng has a
    single owner; pass it down, never share it between threads.
    """

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        return self._gen.uniform(low, high, size)

    def normal(self, size=None, loc: float = 0.0, scale: float = 1.0):
        return self._gen.normal(loc, scale, size)

    def bernoulli(self, p_true: float, size=None):
        """True with probability `p_true`."""
        return self._gen.random(size) < p_true

    def integers(self, high: int, size=None):
        return self._gen.integers(0, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def as_matrix(a, name: str = "matrix") -> Matrix:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def gauss_logpdf(x, mean, var):
    """Log of the normal density N(x; mean, var); broadcasts over arrays."""
    x = np.asarray(x, dtype=np.float64)
    return -0.5 * (LOG_2PI + np.log(var)) - (x - mean) ** 2 / (2.0 * var)


def logsumexp(v, mask: Optional[np.ndarray] = None, axis: Optional[int] = None):
    """
    ln sum exp(v) over the unmasked entries, shifted by their max.

    `mask` marks kept entries (True). Returns -inf where every kept entry is -inf.

    Raises:
        FullyDroppedError: a reduction has no kept entry at all
    """
    v = np.asarray(v, dtype=np.float64)
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), v.shape)
        if not np.all(np.any(mask, axis=axis)):
            raise FullyDroppedError("logsumexp over an empty set: every entry is masked")
        v = np.where(mask, v, -np.inf)
    elif v.size == 0:
        raise FullyDroppedError("logsumexp over an empty vector")

    m = np.max(v, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(v - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def softmax(v, axis: int = -1):
    v = np.asarray(v, dtype=np.float64)
    shifted = np.exp(v - np.max(v, axis=axis, keepdims=True))
    return shifted / np.sum(shifted, axis=axis, keepdims=True)


def matmul(a, b) -> Matrix:
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    return a @ b


def relu(a):
    return np.maximum(np.asarray(a, dtype=np.float64), 0.0)


def transpose(a) -> Matrix:
    return np.ascontiguousarray(as_matrix(a).T)


def trapezoid(y, x) -> float:
    """Trapezoidal integral of samples y over grid x."""
    integrate = getattr(np, "trapezoid", None) or np.trapz
    return float(integrate(np.asarray(y, dtype=np.float64), np.asarray(x, dtype=np.float64)))
