"""Binary array/mask/filter files, PGM images and the solver config format.

All binary payloads are little-endian and store grid arrays with the first
axis varying fastest, the same ordering as filter vectors in memory.

* ``KSP1``: magic, uint32 N, N^2 complex values as (re, im) float64 pairs.
* ``MSK1``: magic, uint32 N, N^2 bytes each 0 or 1.
* ``FLT1``: magic, uint32 M2, uint32 K, then the M2 columns of the bank
  matrix (each of length M2) as complex float64 pairs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .core import (
    FormatError,
    InvalidArgument,
    ParseError,
    PatchSupport,
    ValidationError,
    as_image,
    make_grid,
)
from .frames import FilterBank
from .phantom import SamplingMask
from .solver import SolverParams

KSP_MAGIC = b"KSP1"
MSK_MAGIC = b"MSK1"
FLT_MAGIC = b"FLT1"
PGM_MAX = 65535

_C128 = np.dtype("<c16")


def _read_bytes(path) -> bytes:
    return Path(path).read_bytes()


def _header(data: bytes, magic: bytes, n_words: int, path) -> tuple[int, ...]:
    size = 4 + 4 * n_words
    if len(data) < size:
        raise FormatError(f"{path}: truncated header")
    if data[:4] != magic:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {magic!r}")
    return struct.unpack("<" + "I" * n_words, data[4:size])


def write_array(path, u) -> None:
    u = as_image(u)
    N = u.shape[0]
    payload = np.asarray(u.ravel(order="F"), dtype=_C128).tobytes()
    Path(path).write_bytes(KSP_MAGIC + struct.pack("<I", N) + payload)


def read_array(path) -> np.ndarray:
    data = _read_bytes(path)
    (N,) = _header(data, KSP_MAGIC, 1, path)
    if N < 1:
        raise FormatError(f"{path}: zero grid size")
    expected = 8 + 16 * N * N
    if len(data) != expected:
        raise FormatError(f"{path}: size {len(data)} != {expected} for N={N}")
    flat = np.frombuffer(data, dtype=_C128, offset=8)
    return flat.reshape((N, N), order="F").astype(np.complex128)


def write_mask(path, mask: SamplingMask) -> None:
    N = mask.grid.N
    payload = mask.indicator.ravel(order="F").astype(np.uint8).tobytes()
    Path(path).write_bytes(MSK_MAGIC + struct.pack("<I", N) + payload)


def read_mask(path) -> SamplingMask:
    data = _read_bytes(path)
    (N,) = _header(data, MSK_MAGIC, 1, path)
    if N < 2:
        raise FormatError(f"{path}: grid size {N} too small")
    expected = 8 + N * N
    if len(data) != expected:
        raise FormatError(f"{path}: size {len(data)} != {expected} for N={N}")
    flat = np.frombuffer(data, dtype=np.uint8, offset=8)
    if np.any(flat > 1):
        raise FormatError(f"{path}: mask payload must be 0/1, found {int(flat.max())}")
    return SamplingMask(make_grid(N), flat.reshape((N, N), order="F").astype(bool))


def write_filters(path, bank: FilterBank) -> None:
    if bank.support.K1 != bank.support.K2:
        raise InvalidArgument("FLT1 stores square supports only")
    M2, K = bank.M2, bank.support.K1
    payload = np.asarray(bank.A.ravel(order="F"), dtype=_C128).tobytes()
    Path(path).write_bytes(FLT_MAGIC + struct.pack("<II", M2, K) + payload)


def read_filters(path) -> FilterBank:
    data = _read_bytes(path)
    M2, K = _header(data, FLT_MAGIC, 2, path)
    if K < 1 or M2 != K * K:
        raise FormatError(f"{path}: M2={M2} inconsistent with K={K}")
    expected = 12 + 16 * M2 * M2
    if len(data) != expected:
        raise FormatError(f"{path}: size {len(data)} != {expected} for M2={M2}")
    A = np.frombuffer(data, dtype=_C128, offset=12).reshape((M2, M2), order="F")
    return FilterBank(A, PatchSupport.square(K))


def quantize(image, window: tuple[float, float]) -> np.ndarray:
    """Clip to ``window`` and map affinely onto 0..65535 with floor rounding."""
    lo, hi = (float(t) for t in window)
    if not hi > lo:
        raise InvalidArgument(f"window needs hi > lo, got [{lo}, {hi}]")
    x = np.asarray(image, dtype=float)
    if np.iscomplexobj(image):
        raise InvalidArgument("PGM images must be real; take a magnitude first")
    t = (np.clip(x, lo, hi) - lo) / (hi - lo)
    return np.minimum(np.floor(t * PGM_MAX), PGM_MAX).astype(np.uint16)


def write_image(path, image, window: tuple[float, float] = (0.0, 1.0)) -> None:
    """16-bit binary PGM; rows are the first array axis."""
    q = quantize(image, window)
    if q.ndim != 2:
        raise InvalidArgument("image must be 2-D")
    rows, cols = q.shape
    header = f"P5\n{cols} {rows}\n{PGM_MAX}\n".encode("ascii")
    Path(path).write_bytes(header + q.astype(">u2").tobytes())


def read_image(path) -> np.ndarray:
    """Read a 16-bit P5 PGM written by :func:`write_image`."""
    data = _read_bytes(path)
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos)
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    cols, rows, maxval = (int(t) for t in tokens[1:])
    if maxval != PGM_MAX:
        raise FormatError(f"{path}: expected maxval {PGM_MAX}, got {maxval}")
    body = data[pos:]
    if len(body) != 2 * rows * cols:
        raise FormatError(f"{path}: pixel payload size mismatch")
    return np.frombuffer(body, dtype=">u2").reshape(rows, cols).astype(np.uint16)


@dataclass
class ExperimentSettings:
    """Non-solver keys of a config file: grid, mask, noise and phantom.

    ``scale`` multiplies the phantom amplitudes.  The hard threshold is an
    absolute level, so the intensity units of the data matter to the solver.
    """

    N: int = 256
    ratio: float = 0.2
    decay: float = 2.0
    center_radius: int | None = None
    snr_db: float = 25.0
    seed: int = 0
    phantom: str | None = None
    scale: float = 1.0

    def validate(self) -> None:
        if self.N < 2:
            raise ValidationError(f"N must be >= 2, got {self.N}")
        if not 0 < self.ratio <= 1:
            raise ValidationError(f"ratio must lie in (0, 1], got {self.ratio}")
        if self.decay < 0:
            raise ValidationError(f"decay must be nonnegative, got {self.decay}")
        if self.center_radius is not None and self.center_radius < 0:
            raise ValidationError("center_radius must be nonnegative")
        if not self.scale > 0:
            raise ValidationError(f"scale must be positive, got {self.scale}")


def _none_or(conv):
    def parse(text):
        return None if text.lower() in ("none", "auto") else conv(text)
    return parse


def _int(text: str) -> int:
    val = float(text)
    if val != int(val):
        raise ValueError(f"{text!r} is not an integer")
    return int(val)


def _R(text: str):
    return "auto" if text.lower() == "auto" else float(text)


_SOLVER_KEYS = {
    "K": _int, "r": _int, "mu": float, "gamma": float,
    "beta1": float, "beta2": float, "beta3": float,
    "R": _R, "eps": float, "max_iter": _int, "L": _none_or(float),
    "init_subgrid_fraction": float,
}
_EXPERIMENT_KEYS = {
    "N": _int, "ratio": float, "decay": float,
    "center_radius": _none_or(_int), "snr_db": float, "seed": _int, "phantom": _none_or(str),
    "scale": float,
}


@dataclass
class Config:
    params: SolverParams
    experiment: ExperimentSettings

    def echo(self) -> list[str]:
        """Fully resolved ``key = value`` lines, re-parsable by :func:`parse_config_text`."""
        lines = [f"{k} = {_show(v)}" for k, v in self.params.as_dict().items()]
        lines += [f"{f.name} = {_show(getattr(self.experiment, f.name))}" for f in fields(self.experiment)]
        return lines


def _show(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config_text(text: str) -> Config:
    solver: dict = {}
    experiment: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (t.strip() for t in line.partition("="))
        if not sep or not key or not value:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if key == "beta":
            targets = [(solver, k, float) for k in ("beta1", "beta2", "beta3")]
        elif key in _SOLVER_KEYS:
            targets = [(solver, key, _SOLVER_KEYS[key])]
        elif key in _EXPERIMENT_KEYS:
            targets = [(experiment, key, _EXPERIMENT_KEYS[key])]
        else:
            raise ParseError(f"unknown key {key!r}", lineno)
        for store, k, conv in targets:
            try:
                store[k] = conv(value)
            except ValueError as exc:
                raise ParseError(f"bad value for {k}: {value!r}", lineno) from exc
    try:
        params = SolverParams(**solver)
    except InvalidArgument as exc:
        raise ValidationError(str(exc)) from exc
    settings = ExperimentSettings(**experiment)
    settings.validate()
    return Config(params, settings)


def parse_config(path) -> Config:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def size_kspace_file(N: int) -> int:
    return 8 + 16 * N * N


def size_mask_file(N: int) -> int:
    return 8 + N * N


def size_filter_file(K: int) -> int:
    return 12 + 16 * K ** 4


__all__ = [
    "Config", "ExperimentSettings", "parse_config", "parse_config_text",
    "read_array", "write_array", "read_mask", "write_mask",
    "read_filters", "write_filters", "write_image", "read_image", "quantize",
    "size_kspace_file", "size_mask_file", "size_filter_file",
]
