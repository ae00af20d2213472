"""DFT pair, periodic convolution, gradient weights and two-fold Hankel operators.

Convolutions and Hankel products act on positional arrays and wrap modulo N;
since they are translation invariant the centered storage does not enter.
The gradient weights and the DFT do depend on grid indices and use
:class:`hfmri.core.Grid`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .core import (
    Grid,
    InvalidArgument,
    PatchSupport,
    TooLarge,
    as_image,
    fft_workers,
    flatten_filter,
    make_grid,
)

#: Entry cap for :func:`hankel_explicit` (complex entries).
HANKEL_MAX_ENTRIES = 60_000_000


def dft(u) -> np.ndarray:
    """f[k] = sum_p u[p] exp(-2 pi i p.k / N), unnormalized, centered storage."""
    u = as_image(u)
    return sfft.fftshift(sfft.fft2(sfft.ifftshift(u), workers=fft_workers()))


def idft(f) -> np.ndarray:
    """u[p] = N^-2 sum_k f[k] exp(2 pi i p.k / N); inverse of :func:`dft`."""
    f = as_image(f)
    return sfft.fftshift(sfft.ifft2(sfft.ifftshift(f), workers=fft_workers()))


def _check_filter(a, N: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim < 2:
        raise InvalidArgument("filter must be 2-D")
    if a.shape[-2] > N or a.shape[-1] > N:
        raise InvalidArgument(f"filter support {a.shape[-2:]} overflows grid N={N}")
    return a


def filter_spectrum(a, N: int) -> np.ndarray:
    """sum_l a[l] exp(+2 pi i l.w / N) for every w on the N x N FFT grid.

    Batched over leading axes.  Multiplying an image spectrum by this gives
    the spectrum of the correlation ``sum_l a[l] u[k + l]``; multiplying by
    its conjugate gives the convolution with ``conj(a)``.
    """
    a = _check_filter(a, N)
    K1, K2 = a.shape[-2:]
    w = np.arange(N)
    e1 = np.exp(2j * np.pi * np.outer(w, np.arange(K1)) / N)
    e2 = np.exp(2j * np.pi * np.outer(w, np.arange(K2)) / N)
    return e1 @ a @ e2.T


def conv_periodic(a, u, mode: str = "convolve") -> np.ndarray:
    """Periodic convolution or correlation of ``u`` with a filter on offsets 0..K-1.

    ``convolve``: out[k] = sum_j a[j] u[k - j].
    ``correlate``: out[k] = sum_j a[j] u[k + j] (no conjugation).
    """
    u = as_image(u)
    N = u.shape[0]
    a = _check_filter(a, N)
    if a.ndim != 2:
        raise InvalidArgument("conv_periodic takes a single 2-D filter")
    U = sfft.fft2(u, workers=fft_workers())
    S = filter_spectrum(a, N)
    if mode == "correlate":
        return sfft.ifft2(U * S, workers=fft_workers())
    if mode == "convolve":
        # sum_j a[j] e^{-2 pi i j.w/N} = conj(spectrum of conj(a))
        return sfft.ifft2(U * np.conj(filter_spectrum(np.conj(a), N)), workers=fft_workers())
    raise InvalidArgument(f"unknown mode {mode!r}")


def conv_periodic_direct(a, u, mode: str = "convolve") -> np.ndarray:
    """Direct-sum reference for :func:`conv_periodic` (small inputs)."""
    u = as_image(u)
    a = _check_filter(a, u.shape[0])
    sign = -1 if mode == "convolve" else 1
    out = np.zeros_like(u)
    for j1 in range(a.shape[0]):
        for j2 in range(a.shape[1]):
            out += a[j1, j2] * np.roll(u, (-sign * j1, -sign * j2), axis=(0, 1))
    return out


@dataclass(frozen=True)
class WeightSpec:
    """Field of view ``L`` and grid for the gradient weights 2 pi i k / L."""

    L: float
    grid: Grid

    def __post_init__(self):
        if not self.L > 0:
            raise InvalidArgument(f"FOV must be positive, got {self.L}")

    @classmethod
    def for_image(cls, v, L: float) -> "WeightSpec":
        return cls(float(L), make_grid(np.shape(v)[0]))

    def weights(self) -> np.ndarray:
        """(2, N, N) array of 2 pi i k_i / L."""
        k1, k2 = self.grid.mesh()
        return np.stack([2j * np.pi * k1 / self.L, 2j * np.pi * k2 / self.L])

    def gram_diag(self) -> np.ndarray:
        """Diagonal of Lambda* Lambda: (2 pi / L)^2 (k1^2 + k2^2)."""
        k1, k2 = self.grid.mesh()
        return (2 * np.pi / self.L) ** 2 * (k1 ** 2 + k2 ** 2).astype(float)


def _spec(v, spec) -> WeightSpec:
    if isinstance(spec, WeightSpec):
        if spec.grid.N != np.shape(v)[-1]:
            raise InvalidArgument("weight spec grid does not match input")
        return spec
    return WeightSpec.for_image(np.empty(np.shape(v)[-2:]), spec)


def gradient_weight(v, spec) -> np.ndarray:
    """Lambda v as a (2, N, N) gradient pair.  ``spec`` is a WeightSpec or L."""
    v = as_image(v)
    return _spec(v, spec).weights() * v[None]


def gradient_weight_adjoint(w, spec) -> np.ndarray:
    """Lambda* w = conj(2 pi i k1/L) w1 + conj(2 pi i k2/L) w2."""
    w = np.asarray(w, dtype=np.complex128)
    if w.ndim != 3 or w.shape[0] != 2:
        raise InvalidArgument(f"expected a (2, N, N) gradient pair, got {w.shape}")
    return np.sum(np.conj(_spec(w, spec).weights()) * w, axis=0)


def _as_channels(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.complex128)
    if w.ndim == 2:
        w = w[None]
    if w.ndim != 3 or w.shape[1] != w.shape[2]:
        raise InvalidArgument(f"expected (N, N) or (C, N, N), got {w.shape}")
    return w


def hankel_explicit(w, support: PatchSupport, boundary: str = "interior",
                    max_entries: int = HANKEL_MAX_ENTRIES) -> np.ndarray:
    """Dense (two-fold) Hankel matrix with entry [(k, l)] = w[k + l].

    Rows run over O:K (``interior``) or all of O with wraparound
    (``periodic``), first axis fastest, channel blocks stacked top to bottom.
    Columns follow the filter vector ordering.  Intended for oracles and the
    small initialization SVD.
    """
    w = _as_channels(w)
    C, N, _ = w.shape
    if not support.fits(N):
        raise InvalidArgument(f"support {support.shape} does not fit grid N={N}")
    if boundary == "interior":
        R1, R2 = N - support.K1 + 1, N - support.K2 + 1
    elif boundary == "periodic":
        R1, R2 = N, N
    else:
        raise InvalidArgument(f"unknown boundary {boundary!r}")
    rows = C * R1 * R2
    if rows * support.M2 > max_entries:
        raise TooLarge(f"Hankel matrix {rows}x{support.M2} exceeds cap {max_entries}")
    offs = support.offsets()
    r1, r2 = np.meshgrid(np.arange(R1), np.arange(R2), indexing="ij")
    r1 = r1.ravel(order="F")
    r2 = r2.ravel(order="F")
    i1 = (r1[:, None] + offs[None, :, 0]) % N
    i2 = (r2[:, None] + offs[None, :, 1]) % N
    return np.concatenate([w[c][i1, i2] for c in range(C)], axis=0)


def gram_from_spectra(W_hat, C_hat, support: PatchSupport) -> np.ndarray:
    """Columns of H* C from channel spectra.

    ``W_hat``: (2, N, N) FFT of the gradient pair; ``C_hat``: (J, 2, N, N)
    FFTs of J coefficient images.  Returns the (M2, J) block
    sum_i sum_k conj(w_i[k + l]) c_{j,i}[k].
    """
    N = W_hat.shape[-1]
    # r[l] = sum_k w[k + l] conj(c[k]) has spectrum W conj(C).
    prod = np.sum(W_hat[None] * np.conj(C_hat), axis=1)
    r = sfft.ifft2(prod, workers=fft_workers())[:, : support.K1, : support.K2]
    return np.conj(flatten_filter(r)).T


def hankel_gram(v_pair, coeffs, support: PatchSupport) -> np.ndarray:
    """H* C for the PERIODIC two-fold Hankel H of ``v_pair``, matrix-free.

    ``coeffs`` has shape (M2, 2, N, N); column j of C stacks the two channel
    images of filter j.
    """
    w = _as_channels(v_pair)
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    if coeffs.ndim != 4 or coeffs.shape[1:] != w.shape or coeffs.shape[0] != support.M2:
        raise InvalidArgument(
            f"coefficient shape {coeffs.shape} inconsistent with pair {w.shape}, M2={support.M2}"
        )
    W_hat = sfft.fft2(w, workers=fft_workers())
    C_hat = sfft.fft2(coeffs, workers=fft_workers())
    return gram_from_spectra(W_hat, C_hat, support)
