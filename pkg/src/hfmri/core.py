"""Centered grids, patch supports and the filter/vector ordering convention.

Arrays on the N x N grid are stored *centered*: array position ``i`` along an
axis holds grid index ``k = i - N // 2``, so position 0 is ``-floor(N/2)`` and
the origin sits at position ``N // 2``.  The first array axis is the first
coordinate ``k1``.

Patch supports are anchored at the origin with offsets ``{0..K1-1} x {0..K2-1}``.
A filter on the support is flattened to a vector with the FIRST axis varying
fastest (Fortran order).  Hankel columns, filter-bank matrix columns and file
payloads all use this one ordering.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


class InvalidArgument(ValueError):
    """Raised when an input violates an operation's precondition."""


class TooLarge(InvalidArgument):
    """Raised when a dense object would exceed the configured size cap."""


class FormatError(ValueError):
    """Raised by binary readers on bad magic, truncation or bad payload."""


class ParseError(ValueError):
    """Raised by text parsers; carries the 1-based line number."""

    def __init__(self, message, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ValidationError(InvalidArgument):
    """Raised when a parsed value is out of range."""


class NumericalError(ArithmeticError):
    """Raised on SVD failure or a non-finite objective.

    ``state`` holds the last good solver state when available.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class Grid:
    """The centered grid {-floor(N/2), ..., floor(N/2 - 1)}^2."""

    N: int

    @property
    def lo(self) -> int:
        return -(self.N // 2)

    @property
    def hi(self) -> int:
        return self.lo + self.N - 1

    @property
    def size(self) -> int:
        return self.N * self.N

    @property
    def shape(self) -> tuple[int, int]:
        return (self.N, self.N)

    def axis(self) -> np.ndarray:
        """Grid indices along one axis, in storage order."""
        return np.arange(self.lo, self.hi + 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Index arrays (k1, k2) of shape (N, N)."""
        ax = self.axis()
        return np.meshgrid(ax, ax, indexing="ij")

    def position(self, k1: int, k2: int) -> tuple[int, int]:
        """Array position of grid index (k1, k2)."""
        if not (self.lo <= k1 <= self.hi and self.lo <= k2 <= self.hi):
            raise InvalidArgument(f"index ({k1}, {k2}) outside grid N={self.N}")
        return (k1 - self.lo, k2 - self.lo)


@dataclass(frozen=True)
class PatchSupport:
    K1: int
    K2: int

    def __post_init__(self):
        if self.K1 < 1 or self.K2 < 1:
            raise InvalidArgument(f"patch support must be positive, got {self.K1}x{self.K2}")

    @classmethod
    def square(cls, K: int) -> "PatchSupport":
        return cls(K, K)

    @property
    def M2(self) -> int:
        return self.K1 * self.K2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.K1, self.K2)

    def offsets(self) -> np.ndarray:
        """(M2, 2) integer offsets in vector order (first axis fastest)."""
        l1, l2 = np.meshgrid(np.arange(self.K1), np.arange(self.K2), indexing="ij")
        return np.stack([l1.ravel(order="F"), l2.ravel(order="F")], axis=1)

    def fits(self, N: int) -> bool:
        return self.K1 <= N and self.K2 <= N


def make_grid(N: int) -> Grid:
    if int(N) != N or N < 2:
        raise InvalidArgument(f"grid size must be an integer >= 2, got {N!r}")
    return Grid(int(N))


def contract(grid: Grid, support: PatchSupport) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis index ranges of O:K = {k in O : k + j in O for all j in K}.

    The contracted set is the Cartesian product of the two returned ranges;
    its size is (N - K1 + 1)(N - K2 + 1).
    """
    if not support.fits(grid.N):
        raise InvalidArgument(
            f"support {support.K1}x{support.K2} does not fit grid N={grid.N}"
        )
    ax1 = np.arange(grid.lo, grid.hi - (support.K1 - 1) + 1)
    ax2 = np.arange(grid.lo, grid.hi - (support.K2 - 1) + 1)
    return ax1, ax2


def reshape_filter(column, support: PatchSupport) -> np.ndarray:
    """Vector of length K1*K2 -> (K1, K2) filter, first axis fastest."""
    column = np.asarray(column)
    if column.shape[-1:] != (support.M2,):
        raise InvalidArgument(
            f"expected trailing length {support.M2}, got shape {column.shape}"
        )
    # Fortran-order reshape of the last axis, batched over leading axes.
    lead = column.shape[:-1]
    out = column.reshape(lead + (support.K2, support.K1))
    return np.swapaxes(out, -1, -2)


def flatten_filter(filt) -> np.ndarray:
    """Inverse of :func:`reshape_filter`; batched over leading axes."""
    filt = np.asarray(filt)
    if filt.ndim < 2:
        raise InvalidArgument("filter must be at least 2-D")
    lead = filt.shape[:-2]
    K1, K2 = filt.shape[-2:]
    return np.swapaxes(filt, -1, -2).reshape(lead + (K1 * K2,))


def as_image(u, N: int | None = None) -> np.ndarray:
    """Validate a square complex image and return it as complex128."""
    u = np.asarray(u, dtype=np.complex128)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise InvalidArgument(f"expected a square 2-D array, got shape {u.shape}")
    if N is not None and u.shape[0] != N:
        raise InvalidArgument(f"grid mismatch: expected N={N}, got {u.shape[0]}")
    return u


def fft_workers() -> int:
    """Thread cap for FFTs, from ``HFMRI_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("HFMRI_THREADS", "1")))
    except ValueError:
        return 1
