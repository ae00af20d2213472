"""Proximal alternating minimization for k-space tight-frame reconstruction.

The model restores fully sampled k-space ``v`` from data ``f`` on a mask by
minimizing

    1/2 ||R v - f||^2 + mu/2 ||W(Lambda v) - c||^2 + gamma ||c||_0

over ``v`` in the magnitude ball |v[k]| <= R, coefficients ``c`` and tight
filter banks ``W`` (matrix ``A`` with A A* = I / M2).  Each iteration runs the
three closed-form proximal block updates v -> c -> W.

Everything inside the loop is periodic: the analysis coefficients equal the
periodic two-fold Hankel matrix times ``A``.  The analysis goes through FFTs.
After hard thresholding the coefficients are usually very sparse, so the
Gram product H* C and the synthesis W* c are formed by gather/scatter over the
nonzeros; filter chunks that stay dense fall back to FFTs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, fields
from typing import Callable, Optional

import numpy as np
import scipy.fft as sfft
import scipy.sparse

from .core import InvalidArgument, NumericalError, PatchSupport, fft_workers, make_grid
from .frames import FilterBank, analyze, filters_from_svd
from .phantom import SamplingMask
from .transforms import (
    WeightSpec,
    gradient_weight,
    gradient_weight_adjoint,
    gram_from_spectra,
    hankel_explicit,
    hankel_gram,
    idft,
)

#: R used when the k-space origin is not sampled.
R_UNSAMPLED_ORIGIN = 1e8

#: Bytes per working chunk of coefficient images.
CHUNK_BYTES = 1 << 26

#: A chunk is kept sparse while nnz * M2 <= SPARSE_FACTOR * chunk size.
SPARSE_FACTOR = 1.5

#: Nonzeros per gather/scatter block.
_GATHER_BLOCK = 2048


@dataclass
class SolverParams:
    """Model and iteration parameters; defaults are the phantom preset.

    ``R = "auto"`` takes |f[0]| when the origin is sampled and 1e8 otherwise.
    ``L = None`` uses pixel units, L = N.
    """

    K: int = 25
    r: int = 500
    mu: float = 0.1
    gamma: float = 10.0
    beta1: float = 1e-4
    beta2: float = 1e-4
    beta3: float = 1e-4
    R: float | str = "auto"
    eps: float = 2e-4
    max_iter: int = 600
    L: Optional[float] = None
    init_subgrid_fraction: float = 0.5

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if int(self.K) != self.K or self.K < 1:
            raise InvalidArgument(f"K must be a positive integer, got {self.K}")
        if int(self.r) != self.r or not 0 < self.r <= self.K ** 2:
            raise InvalidArgument(f"r must satisfy 0 < r <= K^2 = {self.K ** 2}, got {self.r}")
        for name in ("mu", "beta1", "beta2", "beta3", "eps"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive, got {getattr(self, name)}")
        if not self.gamma >= 0:
            raise InvalidArgument(f"gamma must be nonnegative, got {self.gamma}")
        if self.R != "auto" and not (isinstance(self.R, (int, float)) and self.R > 0):
            raise InvalidArgument(f"R must be positive or 'auto', got {self.R!r}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 0:
            raise InvalidArgument(f"max_iter must be a nonnegative integer, got {self.max_iter}")
        if self.L is not None and not self.L > 0:
            raise InvalidArgument(f"L must be positive, got {self.L}")
        if not 0 < self.init_subgrid_fraction <= 1:
            raise InvalidArgument("init_subgrid_fraction must lie in (0, 1]")

    @classmethod
    def phantom_preset(cls, **overrides) -> "SolverParams":
        return cls(**{**dict(K=25, r=500, mu=0.1, gamma=10.0), **overrides})

    @classmethod
    def real_preset(cls, **overrides) -> "SolverParams":
        return cls(**{**dict(K=45, r=1620, mu=0.05, gamma=5.0), **overrides})

    @property
    def support(self) -> PatchSupport:
        return PatchSupport.square(int(self.K))

    @property
    def threshold(self) -> float:
        """Hard-threshold level sqrt(2 gamma / (mu + beta2))."""
        return math.sqrt(2 * self.gamma / (self.mu + self.beta2))

    def fov(self, N: int) -> float:
        return float(N) if self.L is None else float(self.L)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# --------------------------------------------------------------------------
# coefficient storage


@dataclass
class _Chunk:
    """Coefficients of filters ``sl``: sparse (flat index, value) or dense."""

    sl: slice
    idx: Optional[np.ndarray] = None
    vals: Optional[np.ndarray] = None
    dense: Optional[np.ndarray] = None
    dense_hat: Optional[np.ndarray] = None

    @property
    def is_sparse(self) -> bool:
        return self.dense is None

    @property
    def nnz(self) -> int:
        return int(self.idx.size) if self.is_sparse else int(np.count_nonzero(self.dense))

    def norm_sq(self) -> float:
        x = self.vals if self.is_sparse else self.dense
        return float(np.sum(x.real ** 2 + x.imag ** 2))

    def to_dense(self, N: int) -> np.ndarray:
        if not self.is_sparse:
            return self.dense
        n = self.sl.stop - self.sl.start
        out = np.zeros(n * 2 * N * N, dtype=np.complex128)
        out[self.idx] = self.vals
        return out.reshape(n, 2, N, N)


def _chunk_slices(M2: int, N: int) -> list[slice]:
    step = max(1, CHUNK_BYTES // (2 * N * N * 16))
    return [slice(s, min(M2, s + step)) for s in range(0, M2, step)]


class CoefficientStore:
    """Coefficient set of shape (M2, 2, N, N), held chunk by chunk."""

    def __init__(self, M2: int, N: int, chunks: list[_Chunk]):
        self.M2 = M2
        self.N = N
        self.chunks = chunks

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.M2, 2, self.N, self.N)

    @classmethod
    def from_dense(cls, c) -> "CoefficientStore":
        c = np.asarray(c, dtype=np.complex128)
        if c.ndim != 4 or c.shape[1] != 2 or c.shape[2] != c.shape[3]:
            raise InvalidArgument(f"coefficients must have shape (M2, 2, N, N), got {c.shape}")
        M2, _, N, _ = c.shape
        chunks = []
        for sl in _chunk_slices(M2, N):
            block = c[sl]
            idx = np.flatnonzero(block)
            if idx.size * M2 <= SPARSE_FACTOR * block.size:
                chunks.append(_Chunk(sl, idx=idx, vals=block.reshape(-1)[idx].copy()))
            else:
                chunks.append(_Chunk(sl, dense=block.copy()))
        return cls(M2, N, chunks)

    @property
    def nnz(self) -> int:
        return sum(ch.nnz for ch in self.chunks)

    def norm_sq(self) -> float:
        return sum(ch.norm_sq() for ch in self.chunks)

    def to_dense(self) -> np.ndarray:
        return np.concatenate([ch.to_dense(self.N) for ch in self.chunks], axis=0)


def _padded_index(idx, support: PatchSupport, N: int, block: slice):
    """Flat positions p + l in the wrap-padded (2, N + K1 - 1, N + K2 - 1) layout.

    Returns (local filter of each nonzero, index array of shape (n, M2)).
    """
    idx = idx[block]
    P1 = N + support.K1 - 1
    P2 = N + support.K2 - 1
    p2 = idx % N
    rest = idx // N
    p1 = rest % N
    rest //= N
    base = (rest % 2) * (P1 * P2) + p1 * P2 + p2
    off = support.offsets()
    return rest // 2, base[:, None] + (off[:, 0] * P2 + off[:, 1])[None, :]


def _wrap_pad(w, support: PatchSupport) -> np.ndarray:
    """Periodic extension of a (2, N, N) pair by K - 1 rows and columns, flattened."""
    return np.pad(w, ((0, 0), (0, support.K1 - 1), (0, support.K2 - 1)), mode="wrap").reshape(-1)


def _fold_pad(flat, support: PatchSupport, N: int) -> np.ndarray:
    """Adjoint of :func:`_wrap_pad`: fold the padded margin back onto the grid."""
    x = flat.reshape(2, N + support.K1 - 1, N + support.K2 - 1)
    out = x[:, :N, :N].copy()
    e1, e2 = support.K1 - 1, support.K2 - 1
    if e1:
        out[:, :e1, :] += x[:, N:, :N]
    if e2:
        out[:, :, :e2] += x[:, :N, N:]
    if e1 and e2:
        out[:, :e1, :e2] += x[:, N:, N:]
    return out


def _sparse_gram(w_pad, chunk: _Chunk, support: PatchSupport, N: int) -> np.ndarray:
    """(M2, |J|) block sum_i sum_k conj(w_i[k + l]) c_{j,i}[k] over the nonzeros.

    ``w_pad`` is the pair from :func:`_wrap_pad`.
    """
    n = chunk.sl.stop - chunk.sl.start
    out = np.zeros((n, support.M2), dtype=np.complex128)
    for s in range(0, chunk.idx.size, _GATHER_BLOCK):
        blk = slice(s, s + _GATHER_BLOCK)
        j, flat = _padded_index(chunk.idx, support, N, blk)
        vals = chunk.vals[blk]
        sel = scipy.sparse.csr_matrix((vals, (j, np.arange(vals.size))), shape=(n, vals.size))
        out += sel @ np.conj(w_pad[flat])
    return out.T


def _sparse_synthesis(A, chunk: _Chunk, support: PatchSupport, N: int) -> np.ndarray:
    """Padded flat image sum_j sum_l conj(a_j[l]) c_{j,i}[k - l] over the nonzeros.

    Fold the result with :func:`_fold_pad`.
    """
    size = 2 * (N + support.K1 - 1) * (N + support.K2 - 1)
    re = np.zeros(size)
    im = np.zeros(size)
    for s in range(0, chunk.idx.size, _GATHER_BLOCK):
        blk = slice(s, s + _GATHER_BLOCK)
        j, flat = _padded_index(chunk.idx, support, N, blk)
        weights = np.conj(A[:, chunk.sl.start + j]).T * chunk.vals[blk][:, None]
        flat = flat.ravel()
        re += np.bincount(flat, weights=weights.real.ravel(), minlength=size)
        im += np.bincount(flat, weights=weights.imag.ravel(), minlength=size)
    return re + 1j * im


# --------------------------------------------------------------------------
# state


@dataclass
class TraceEntry:
    iter: int
    objective: float
    rel_change: float
    data: float
    coupling: float
    nnz: int


@dataclass
class SolverState:
    """PAM iterate (v, c, W) plus the caches that keep iterations cheap.

    ``synth`` holds W* c under the current bank.  ``c`` materializes the
    coefficients densely; large runs should use ``store`` directly.
    """

    v: np.ndarray
    store: CoefficientStore
    bank: FilterBank
    R: float
    L: float
    iter: int = 0
    objective_trace: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    rel_change: float = math.inf
    synth: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def from_arrays(cls, v, c, bank: FilterBank, R: float, L: float) -> "SolverState":
        return cls(v=np.asarray(v, dtype=np.complex128), store=CoefficientStore.from_dense(c),
                   bank=bank, R=R, L=L)

    @property
    def c(self) -> np.ndarray:
        return self.store.to_dense()

    @c.setter
    def c(self, value) -> None:
        self.store = CoefficientStore.from_dense(value)
        self.synth = None

    @property
    def N(self) -> int:
        return self.v.shape[0]

    @property
    def nnz(self) -> int:
        return self.store.nnz

    @property
    def weights(self) -> WeightSpec:
        return WeightSpec(self.L, make_grid(self.N))


@dataclass
class Reconstruction:
    v: np.ndarray
    image: np.ndarray
    trace: list
    state: SolverState
    converged: bool
    cancelled: bool = False
    wall_time_s: float = 0.0

    @property
    def n_iters(self) -> int:
        return self.state.iter


# --------------------------------------------------------------------------
# blocks


def project_C(v, R: float) -> np.ndarray:
    """Clip magnitudes to R entrywise, keeping phases."""
    if not R > 0:
        raise InvalidArgument(f"R must be positive, got {R}")
    v = np.asarray(v, dtype=np.complex128)
    mag = np.abs(v)
    over = mag > R
    out = v.copy()
    scale = R / mag[over]
    clipped = v[over] * scale
    # rounding can leave |clipped| one ulp above R; shrink until inside so
    # that projecting twice changes nothing
    bad = np.abs(clipped) > R
    while np.any(bad):
        scale[bad] = np.nextafter(scale[bad], 0)
        clipped[bad] = v[over][bad] * scale[bad]
        bad = np.abs(clipped) > R
    out[over] = clipped
    return out


def resolve_R(f, mask: SamplingMask, p: SolverParams) -> float:
    if p.R != "auto":
        return float(p.R)
    o = mask.grid.N // 2
    if mask.indicator[o, o]:
        R = abs(complex(np.asarray(f)[o, o]))
        # A vanishing DC sample would make the feasible set {0}.
        return R if R > 0 else R_UNSAMPLED_ORIGIN
    return R_UNSAMPLED_ORIGIN


def _check_inputs(f, mask: SamplingMask) -> np.ndarray:
    f = np.asarray(f, dtype=np.complex128)
    if f.shape != mask.grid.shape:
        raise InvalidArgument(f"data shape {f.shape} does not match mask grid N={mask.grid.N}")
    if mask.count == 0:
        raise InvalidArgument("empty sampling mask")
    return f


def init_subgrid(N: int, fraction: float = 0.5) -> slice:
    """Storage slice of the central subgrid {-h, ..., h - 1}, h = floor(N fraction / 2)."""
    h = int(math.floor(N * fraction / 2))
    return slice(N // 2 - h, N // 2 + h)


def _data_term(v, f, mask: SamplingMask) -> float:
    m = mask.indicator
    d = v[m] - f[m]
    return 0.5 * float(np.sum(d.real ** 2 + d.imag ** 2))


def _coupling(w, synth, c_norm_sq: float, mu: float) -> float:
    """mu/2 ||W w - c||^2 expanded with W* W = I."""
    ww = float(np.sum(w.real ** 2 + w.imag ** 2))
    cross = float(np.vdot(w, synth).real)
    return 0.5 * mu * max(ww - 2 * cross + c_norm_sq, 0.0)


def init_state(f, mask: SamplingMask, p: SolverParams) -> SolverState:
    """v0 = P_C(zero fill), bank from the SVD of the central-subgrid Hankel,
    c0 = analysis coefficients of the first r filters and zeros after."""
    f = _check_inputs(f, mask)
    N = mask.grid.N
    sup = p.support
    sub = init_subgrid(N, p.init_subgrid_fraction)
    side = sub.stop - sub.start
    if p.K > side:
        raise InvalidArgument(f"K={p.K} exceeds the {side}x{side} initialization subgrid")
    R = resolve_R(f, mask, p)
    L = p.fov(N)
    spec = WeightSpec(L, mask.grid)
    v0 = project_C(mask.weights() * f, R)
    w0 = gradient_weight(v0, spec)
    H = hankel_explicit(w0[:, sub, sub], sup, "interior")
    bank, _ = filters_from_svd(H)
    del H
    W_hat = sfft.fft2(w0, workers=fft_workers())
    acc = np.zeros((2, N, N), dtype=np.complex128)
    chunks = []
    for sl in _chunk_slices(sup.M2, N):
        head = slice(sl.start, min(sl.stop, p.r))
        if head.start >= head.stop:
            chunks.append(_Chunk(sl, idx=np.zeros(0, dtype=np.int64), vals=np.zeros(0, dtype=np.complex128)))
            continue
        S = bank.spectra(N, sl)
        S[head.stop - sl.start:] = 0
        dense = sfft.ifft2(S[:, None] * W_hat[None], workers=fft_workers())
        acc += np.sum(np.abs(S[:, None]) ** 2 * W_hat[None], axis=0)
        chunks.append(_Chunk(sl, dense=dense))
    state = SolverState(v=v0, store=CoefficientStore(sup.M2, N, chunks), bank=bank, R=R, L=L)
    state.synth = sfft.ifft2(acc, workers=fft_workers())
    data = _data_term(v0, f, mask)
    coupling = _coupling(w0, state.synth, state.store.norm_sq(), p.mu)
    nnz = state.store.nnz
    F = data + coupling + p.gamma * nnz
    state.trace.append(TraceEntry(0, F, math.inf, data, coupling, nnz))
    state.objective_trace.append(F)
    return state


def synthesis(store: CoefficientStore, bank: FilterBank) -> np.ndarray:
    """W* c for a chunked coefficient set."""
    N = store.N
    sup = bank.support
    spatial = None
    spectral = np.zeros((2, N, N), dtype=np.complex128)
    any_dense = False
    for ch in store.chunks:
        if ch.is_sparse:
            if ch.idx.size:
                part = _sparse_synthesis(bank.A, ch, sup, N)
                spatial = part if spatial is None else spatial + part
        else:
            any_dense = True
            C_hat = ch.dense_hat if ch.dense_hat is not None else sfft.fft2(ch.dense, workers=fft_workers())
            S = bank.spectra(N, ch.sl)
            spectral += np.sum(np.conj(S)[:, None] * C_hat, axis=0)
    out = np.zeros((2, N, N), dtype=np.complex128) if spatial is None else _fold_pad(spatial, sup, N)
    if any_dense:
        out = out + sfft.ifft2(spectral, workers=fft_workers())
    return out


def update_v(state: SolverState, f, mask: SamplingMask, p: SolverParams) -> np.ndarray:
    """Closed-form v-step: a diagonal solve followed by the projection onto C."""
    f = _check_inputs(f, mask)
    spec = state.weights
    synth = state.synth if state.synth is not None else synthesis(state.store, state.bank)
    m = mask.weights()
    num = m * f + p.mu * gradient_weight_adjoint(synth, spec) + p.beta1 * state.v
    den = m + p.mu * spec.gram_diag() + p.beta1
    return project_C(num / den, state.R)


def hard_threshold(z, lam: float) -> np.ndarray:
    """Keep entries with |z| > lam, zero the rest (ties go to zero)."""
    z = np.asarray(z)
    return np.where(np.abs(z) > lam, z, 0)


def _coefficient_pass(state: SolverState, v, p: SolverParams, inplace: bool):
    """c-step for every filter chunk plus the Gram H* C of the new coefficients.

    With ``inplace`` each old chunk is replaced as soon as it has been read.
    Returns (w, gram, new store).
    """
    N = state.N
    sup = state.bank.support
    w = gradient_weight(v, state.weights)
    w_pad = _wrap_pad(w, sup)
    W_hat = sfft.fft2(w, workers=fft_workers())
    lam = p.threshold
    keep = p.beta2 / (p.mu + p.beta2)
    gram = np.empty((sup.M2, sup.M2), dtype=np.complex128)
    store = state.store
    new_chunks = store.chunks if inplace else list(store.chunks)
    for n, old in enumerate(store.chunks):
        sl = old.sl
        S = state.bank.spectra(N, sl)
        S *= p.mu / (p.mu + p.beta2)
        z = np.multiply(S[:, None], W_hat[None])
        z = sfft.ifft2(z, workers=fft_workers(), overwrite_x=True)
        flat = z.reshape(-1)
        if old.is_sparse:
            flat[old.idx] += keep * old.vals
        else:
            z += keep * old.dense
        idx = np.flatnonzero(np.abs(flat) > lam)
        if idx.size * sup.M2 <= SPARSE_FACTOR * flat.size:
            ch = _Chunk(sl, idx=idx, vals=flat[idx].copy())
            gram[:, sl] = _sparse_gram(w_pad, ch, sup, N)
        else:
            dense = np.zeros_like(flat)
            dense[idx] = flat[idx]
            dense = dense.reshape(z.shape)
            ch = _Chunk(sl, dense=dense, dense_hat=sfft.fft2(dense, workers=fft_workers()))
            gram[:, sl] = gram_from_spectra(W_hat, ch.dense_hat, sup)
        del z, flat
        new_chunks[n] = ch
    out = store if inplace else CoefficientStore(store.M2, N, new_chunks)
    return w, gram, out


def update_c(state: SolverState, p: SolverParams) -> np.ndarray:
    """Hard-thresholded prox step.  ``state.v`` must already hold v_{n+1}."""
    _, _, store = _coefficient_pass(state, state.v, p, inplace=False)
    return store.to_dense()


def procrustes_bank(G, support: PatchSupport) -> FilterBank:
    """argmax Re tr(A* G) over A A* = I / M2: M2^{-1/2} X Y* from G = X S Y*."""
    try:
        X, _, Yh = np.linalg.svd(G)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed in filter update: {exc}") from exc
    return FilterBank((X @ Yh) / math.sqrt(support.M2), support)


def update_w(state: SolverState, p: SolverParams) -> FilterBank:
    """Filter-bank step from H* C + (beta3 / mu) A_n.  Uses ``state.v`` and ``state.c``."""
    w = gradient_weight(state.v, state.weights)
    G = hankel_gram(w, state.c, state.bank.support) + (p.beta3 / p.mu) * state.bank.A
    return procrustes_bank(G, state.bank.support)


def objective(state: SolverState, f, mask: SamplingMask, p: SolverParams) -> float:
    """F(v, c, A) evaluated directly in coefficient space."""
    f = _check_inputs(f, mask)
    w = gradient_weight(state.v, state.weights)
    c = state.c
    diff = analyze(state.bank, w) - c
    coupling = 0.5 * p.mu * float(np.sum(diff.real ** 2 + diff.imag ** 2))
    return _data_term(state.v, f, mask) + coupling + p.gamma * int(np.count_nonzero(c))


def reconstruct(f, mask: SamplingMask, p: SolverParams,
                callback: Optional[Callable[[int, float, float], None]] = None,
                cancel: Optional[Callable[[], bool]] = None,
                state: Optional[SolverState] = None) -> Reconstruction:
    """Run PAM until ||v_{n+1} - v_n|| / ||v_n|| <= eps or ``max_iter``.

    ``callback(iter, F, rel_change)`` fires after every iteration; ``cancel()``
    is polled between blocks and stops the run once the current iteration's
    state is consistent again.
    """
    t0 = time.perf_counter()
    f = _check_inputs(f, mask)
    if state is None:
        state = init_state(f, mask, p)
    converged = False
    cancelled = False
    while state.iter < p.max_iter:
        if cancel is not None and cancel():
            cancelled = True
            break
        v_new = update_v(state, f, mask, p)
        vn = np.linalg.norm(state.v)
        dv = np.linalg.norm(v_new - state.v)
        rel = float(dv / vn) if vn > 0 else (0.0 if dv == 0 else math.inf)
        last_good = state.v
        w, gram, _ = _coefficient_pass(state, v_new, p, inplace=True)
        if cancel is not None and cancel():
            # c has moved already; finish the bank step so (v, c, W) match.
            cancelled = True
        G = gram + (p.beta3 / p.mu) * state.bank.A
        if not np.all(np.isfinite(G)):
            raise NumericalError("non-finite Gram matrix", _dump(state, last_good))
        state.bank = procrustes_bank(G, state.bank.support)
        state.synth = synthesis(state.store, state.bank)
        state.v = v_new
        state.iter += 1
        state.rel_change = rel
        nnz = state.store.nnz
        data = _data_term(v_new, f, mask)
        coupling = _coupling(w, state.synth, state.store.norm_sq(), p.mu)
        F = data + coupling + p.gamma * nnz
        if not math.isfinite(F):
            raise NumericalError(f"non-finite objective at iteration {state.iter}",
                                 _dump(state, last_good))
        state.trace.append(TraceEntry(state.iter, F, rel, data, coupling, nnz))
        state.objective_trace.append(F)
        if callback is not None:
            callback(state.iter, F, rel)
        if cancelled:
            break
        if rel <= p.eps:
            converged = True
            break
    return Reconstruction(
        v=state.v,
        image=idft(state.v),
        trace=state.trace,
        state=state,
        converged=converged,
        cancelled=cancelled,
        wall_time_s=time.perf_counter() - t0,
    )


def _dump(state: SolverState, last_good_v) -> dict:
    return {"iter": state.iter, "v": last_good_v, "trace": list(state.trace)}


def zero_fill(f, mask: SamplingMask) -> np.ndarray:
    """Baseline image: inverse DFT of the data with zeros off the mask."""
    return idft(mask.weights() * np.asarray(f, dtype=np.complex128))


def objective_increments(trace, gamma: float) -> np.ndarray:
    """F_{n+1} - F_n from the trace components.

    Differencing component-wise keeps the exactly counted l0 term from
    swamping rounding-level changes in the smooth terms.
    """
    return np.asarray([
        (b.data - a.data) + (b.coupling - a.coupling) + gamma * (b.nnz - a.nnz)
        for a, b in zip(trace[:-1], trace[1:])
    ])
