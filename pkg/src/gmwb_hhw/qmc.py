"""Faure low-discrepancy sequence and box sampling.

The Faure construction works in base b, the smallest prime >= the
dimension.  Coordinate 0 of point i is the radical inverse of i in base b;
coordinate d scrambles the digit vector with the d-th power of the
upper-triangular Pascal matrix mod b before radical inversion.  Indexing
starts at i = 1 (the origin point i = 0 is skipped, no further burn-in).
"""

from __future__ import annotations

import math

import numpy as np

from .model import ParameterBox

__all__ = ["FaureGenerator", "faure_point", "sample_box"]


def _smallest_prime_geq(n: int) -> int:
    c = max(n, 2)
    while True:
        if all(c % q for q in range(2, int(math.isqrt(c)) + 1)):
            return c
        c += 1


def _digits(i: int, b: int) -> list[int]:
    # little-endian digit expansion, i >= 1
    d = []
    while i > 0:
        d.append(i % b)
        i //= b
    return d


class FaureGenerator:
    """Stateful cursor over the Faure sequence in dimension D."""

    def __init__(self, dim: int, start_index: int = 1):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if start_index < 1:
            raise ValueError("start_index must be >= 1")
        self.dim = dim
        self.base = _smallest_prime_geq(dim)
        self.next_index = start_index
        # Pascal matrix powers mod b, one (n_digits x n_digits) matrix per
        # coordinate, grown lazily as indices need more digits.
        self._pascal_pow: list[np.ndarray] = []
        self._n_digits = 0

    def _ensure_digits(self, n_digits: int) -> None:
        if n_digits <= self._n_digits:
            return
        b = self.base
        pascal = np.zeros((n_digits, n_digits), dtype=np.int64)
        for m in range(n_digits):
            for j in range(m + 1):
                pascal[j, m] = math.comb(m, j) % b
        mats = [np.eye(n_digits, dtype=np.int64)]
        for _ in range(1, self.dim):
            mats.append((mats[-1] @ pascal) % b)
        self._pascal_pow = mats
        self._n_digits = n_digits

    def point(self, i: int) -> np.ndarray:
        """The i-th point (i >= 1), a pure function of (i, dim)."""
        if i < 1:
            raise ValueError("Faure indices start at 1")
        b = self.base
        a = np.array(_digits(i, b), dtype=np.int64)
        self._ensure_digits(len(a))
        k = len(a)
        weights = np.array([b ** -(j + 1) for j in range(k)])
        out = np.empty(self.dim)
        for d in range(self.dim):
            c = (self._pascal_pow[d][:k, :k] @ a) % b
            out[d] = float(c @ weights)
        return out

    def take(self, n: int) -> np.ndarray:
        """Next n points from the cursor, shape (n, dim)."""
        pts = np.empty((n, self.dim))
        for r in range(n):
            pts[r] = self.point(self.next_index + r)
        self.next_index += n
        return pts


def faure_point(i: int, dim: int) -> np.ndarray:
    """Point i (i >= 1) of the dimension-``dim`` Faure sequence."""
    return FaureGenerator(dim).point(i)


def sample_box(box: ParameterBox, n: int, start_index: int = 1) -> np.ndarray:
    """First n Faure points mapped affinely into the box, shape (n, 11).

    Deterministic: row r is always point ``start_index + r``, so a larger
    sample extends a smaller one row for row.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = FaureGenerator(box.dim, start_index=start_index)
    u = gen.take(n)
    return box.lo + u * (box.hi - box.lo)
