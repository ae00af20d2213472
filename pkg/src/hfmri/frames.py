"""Tight-frame filter banks built from Hankel singular vectors.

A bank is stored as its M2 x M2 matrix ``A`` whose column j is filter j in
vector order.  The bank is tight (perfect reconstruction under periodic
analysis/synthesis) exactly when ``A A* = I / M2``.

Coefficient sets are arrays of shape (M2, 2, N, N): filter index first, then
the gradient channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .core import InvalidArgument, NumericalError, PatchSupport, fft_workers, reshape_filter
from .transforms import filter_spectrum

TIGHT_TOL = 1e-10


@dataclass(frozen=True)
class FilterBank:
    A: np.ndarray
    support: PatchSupport

    def __post_init__(self):
        A = np.array(self.A, dtype=np.complex128)
        if A.shape != (self.support.M2, self.support.M2):
            raise InvalidArgument(
                f"bank matrix must be {self.support.M2}x{self.support.M2}, got {A.shape}"
            )
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def M2(self) -> int:
        return self.support.M2

    @property
    def filters(self) -> np.ndarray:
        """(M2, K1, K2) filters; ``filters[j]`` is column j reshaped."""
        return reshape_filter(self.A.T, self.support)

    @classmethod
    def from_filters(cls, filters) -> "FilterBank":
        filters = np.asarray(filters, dtype=np.complex128)
        M, K1, K2 = filters.shape
        support = PatchSupport(K1, K2)
        if M != support.M2:
            raise InvalidArgument(f"need {support.M2} filters, got {M}")
        return cls(np.swapaxes(filters, 1, 2).reshape(M, -1).T, support)

    @classmethod
    def standard(cls, support: PatchSupport) -> "FilterBank":
        """Scaled standard basis: filter j is M2^{-1/2} times a delta at offset j."""
        return cls(np.eye(support.M2) / np.sqrt(support.M2), support)

    def tightness_error(self) -> float:
        return float(np.max(np.abs(self.A @ self.A.conj().T - np.eye(self.M2) / self.M2)))

    def spectra(self, N: int, select=slice(None)) -> np.ndarray:
        """Correlation spectra (J, N, N) of the selected filters on an N-grid."""
        return filter_spectrum(self.filters[select], N)


def _pair(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.complex128)
    if w.ndim != 3 or w.shape[0] != 2 or w.shape[1] != w.shape[2]:
        raise InvalidArgument(f"expected a (2, N, N) gradient pair, got {w.shape}")
    return w


def analyze(bank: FilterBank, w) -> np.ndarray:
    """Coefficients c[j, i] = sum_l a_j[l] w_i[k + l] (periodic), shape (M2, 2, N, N)."""
    w = _pair(w)
    N = w.shape[-1]
    if not bank.support.fits(N):
        raise InvalidArgument(f"bank support {bank.support.shape} overflows grid N={N}")
    W_hat = sfft.fft2(w, workers=fft_workers())
    S = bank.spectra(N)
    return sfft.ifft2(S[:, None] * W_hat[None], workers=fft_workers())


def synthesize(bank: FilterBank, c) -> np.ndarray:
    """Adjoint of :func:`analyze`: w_i = sum_j conj(a_j) * c[j, i]."""
    c = np.asarray(c, dtype=np.complex128)
    if c.ndim != 4 or c.shape[0] != bank.M2 or c.shape[1] != 2:
        raise InvalidArgument(f"coefficient shape {c.shape} does not match bank M2={bank.M2}")
    N = c.shape[-1]
    C_hat = sfft.fft2(c, workers=fft_workers())
    S = bank.spectra(N)
    return sfft.ifft2(np.sum(np.conj(S)[:, None] * C_hat, axis=0), workers=fft_workers())


def filters_from_svd(H) -> tuple[FilterBank, np.ndarray]:
    """Bank from the right singular vectors of a Hankel matrix H = X S Y*.

    Filter j is M2^{-1/2} Y[:, j] reshaped.  Returns the bank and the M2
    singular values in nonincreasing order (zero-padded when H has fewer
    rows than columns).
    """
    H = np.asarray(H, dtype=np.complex128)
    rows, M2 = H.shape
    K = int(round(np.sqrt(M2)))
    if K * K != M2:
        raise InvalidArgument(f"column count {M2} is not a square patch size")
    try:
        _, s, Yh = np.linalg.svd(H, full_matrices=rows < M2)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc
    sv = np.zeros(M2)
    sv[: s.size] = s
    return FilterBank(Yh.conj().T / np.sqrt(M2), PatchSupport(K, K)), sv


def check_uep(bank: FilterBank) -> float:
    """max_k |sum_j sum_l a_j[k + l] conj(a_j[l]) - delta[k]| over all shifts k."""
    filters = bank.filters
    K1, K2 = bank.support.shape
    # Full 2-D autocorrelation of every filter, summed over the bank.
    P1, P2 = 2 * K1 - 1, 2 * K2 - 1
    F = np.fft.fft2(filters, s=(P1, P2))
    acf = np.fft.ifft2(np.sum(np.abs(F) ** 2, axis=0))
    acf[0, 0] -= 1.0
    return float(np.max(np.abs(acf)))


def check_uep_direct(bank: FilterBank) -> float:
    """Shift-by-shift evaluation of :func:`check_uep` (reference)."""
    a = bank.filters
    K1, K2 = bank.support.shape
    dev = 0.0
    for s1 in range(-(K1 - 1), K1):
        for s2 in range(-(K2 - 1), K2):
            total = 0j
            for l1 in range(max(0, -s1), min(K1, K1 - s1)):
                for l2 in range(max(0, -s2), min(K2, K2 - s2)):
                    total += np.sum(a[:, l1 + s1, l2 + s2] * np.conj(a[:, l1, l2]))
            if s1 == 0 and s2 == 0:
                total -= 1.0
            dev = max(dev, abs(total))
    return float(dev)


def edge_positions(S: int, L: float) -> np.ndarray:
    """The S uniform sample points of [-L/2, L/2) along one axis."""
    return -L / 2 + L * np.arange(S) / S


def edge_map(bank: FilterBank, r: int, S: int, L: float = 1.0) -> np.ndarray:
    """(sum_{j > r} |phi_j(x)|^2)^{1/2} on the S x S grid of [-L/2, L/2)^2.

    phi_j(x) = L^-1 sum_m a_j[m] exp(-2 pi i m.x / L) over the support
    offsets, i.e. the flipped-filter annihilating polynomial.  Filters are
    indexed from 1, so ``r = 0`` uses the whole bank.
    """
    if not 0 <= r < bank.M2:
        raise InvalidArgument(f"rank cutoff must satisfy 0 <= r < {bank.M2}, got {r}")
    if S < 1:
        raise InvalidArgument("resolution must be positive")
    tail = bank.filters[r:]
    x = edge_positions(S, L)
    K1, K2 = bank.support.shape
    e1 = np.exp(-2j * np.pi * np.outer(x, np.arange(K1)) / L)
    e2 = np.exp(-2j * np.pi * np.outer(x, np.arange(K2)) / L)
    phi = (e1 @ tail @ e2.T) / L
    return np.sqrt(np.sum(np.abs(phi) ** 2, axis=0))


def edge_map_fft(bank: FilterBank, r: int, S: int, L: float = 1.0) -> np.ndarray:
    """Zero-padded FFT evaluation of :func:`edge_map` (requires S >= K)."""
    if not 0 <= r < bank.M2:
        raise InvalidArgument(f"rank cutoff must satisfy 0 <= r < {bank.M2}, got {r}")
    tail = bank.filters[r:]
    K1, K2 = bank.support.shape
    if S < max(K1, K2):
        raise InvalidArgument("resolution below patch size")
    # x_s = L(s - S/2)/S, so exp(-2 pi i m x_s / L) = exp(i pi m) exp(-2 pi i m s / S).
    sign = np.exp(1j * np.pi * np.arange(K1))[:, None] * np.exp(1j * np.pi * np.arange(K2))[None, :]
    phi = np.fft.fft2(tail * sign, s=(S, S)) / L
    return np.sqrt(np.sum(np.abs(phi) ** 2, axis=0))
