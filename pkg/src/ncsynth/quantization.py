"""Uniform grids ``mu Z^n`` restricted to half-open boxes, nearest-point
quantizers and binary encoding lengths."""
from __future__ import annotations

import itertools
import math

import numpy as np

from .plant import Box

_TOL = 1e-9


def grid_quantize(a, mu: float) -> np.ndarray:
    """Nearest point of ``mu Z^n``; ties go toward -inf on each axis."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    a = np.asarray(a, dtype=float)
    return np.ceil(a / mu - 0.5 - _TOL) * mu


def quantize_index(a, mu: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.ceil(a / mu - 0.5 - _TOL).astype(np.int64)


def _axis_range(lo: float, hi: float, mu: float) -> tuple[int, int]:
    # integers k with lo <= k mu < hi
    return math.ceil(lo / mu - _TOL), math.ceil(hi / mu - _TOL) - 1


def grid_count(box: Box, mu: float) -> int:
    if mu <= 0:
        raise ValueError("mu must be positive")
    total = 1
    for lo, hi in zip(box.lower, box.upper):
        kmin, kmax = _axis_range(lo, hi, mu)
        if kmax < kmin:
            raise ValueError(f"grid with mu={mu} is empty on axis [{lo}, {hi}[")
        total *= kmax - kmin + 1
    return total


def min_span(box: Box) -> float:
    return box.min_span()


def encode_bits(count: int) -> int:
    if count < 1:
        raise ValueError("count must be >= 1")
    return (count - 1).bit_length()


class Grid:
    """The finite point set ``mu Z^n ∩ box`` addressed by integer multi-indices
    ``k`` (the point is ``mu * k``)."""

    def __init__(self, box: Box, mu: float):
        if mu <= 0:
            raise ValueError("mu must be positive")
        self.box = box
        self.mu = float(mu)
        ranges = [_axis_range(lo, hi, self.mu) for lo, hi in zip(box.lower, box.upper)]
        if any(b < a for a, b in ranges):
            raise ValueError(f"grid with mu={mu} is empty for box {box.lower}..{box.upper}")
        self.kmin = np.array([a for a, _ in ranges], dtype=np.int64)
        self.kmax = np.array([b for _, b in ranges], dtype=np.int64)

    @property
    def dim(self) -> int:
        return self.kmin.size

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(v) for v in self.kmax - self.kmin + 1)

    def __len__(self) -> int:
        return int(np.prod(self.kmax - self.kmin + 1))

    @property
    def bits(self) -> int:
        return encode_bits(len(self))

    def contains_index(self, k) -> bool:
        k = np.asarray(k)
        return bool(np.all(k >= self.kmin) and np.all(k <= self.kmax))

    def point(self, k) -> np.ndarray:
        return np.asarray(k, dtype=float) * self.mu

    def index(self, a) -> tuple[int, ...]:
        """Multi-index of the quantization of ``a`` (may lie outside the grid)."""
        return tuple(int(v) for v in quantize_index(a, self.mu))

    def indices(self):
        """All multi-indices in lexicographic order."""
        return itertools.product(*(range(int(a), int(b) + 1) for a, b in zip(self.kmin, self.kmax)))

    def points(self) -> np.ndarray:
        return np.array([self.point(k) for k in self.indices()]).reshape(-1, self.dim)

    def flat(self, k) -> int:
        """Lexicographic position of multi-index ``k``."""
        pos = 0
        for ki, lo, size in zip(k, self.kmin, self.shape):
            pos = pos * size + (int(ki) - int(lo))
        return pos

    def unflat(self, pos: int) -> tuple[int, ...]:
        out = []
        for lo, size in zip(reversed(self.kmin), reversed(self.shape)):
            out.append(int(lo) + pos % size)
            pos //= size
        return tuple(reversed(out))

    def within(self, a, radius: float):
        """Multi-indices of grid points ``p`` with ``||p - a||_inf <= radius``,
        lexicographic order."""
        a = np.asarray(a, dtype=float)
        lo = np.maximum(np.ceil((a - radius) / self.mu - _TOL), self.kmin).astype(np.int64)
        hi = np.minimum(np.floor((a + radius) / self.mu + _TOL), self.kmax).astype(np.int64)
        if np.any(hi < lo):
            return []
        return list(itertools.product(*(range(int(x), int(y) + 1) for x, y in zip(lo, hi))))
