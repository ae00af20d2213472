"""Reconstruction quality metrics.

SNR and HFEN compare MAGNITUDE images, since reconstructions are complex.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.ndimage

from .core import InvalidArgument

#: Returned by :func:`snr_db` when the test image equals the reference.
EXACT = "exact"


def _same_grid(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise InvalidArgument(f"grid mismatch: {a.shape} vs {b.shape}")
    return a, b


def snr_db(reference, test, magnitude: bool = True):
    """20 log10(||ref|| / ||test - ref||); ``EXACT`` for a zero error."""
    reference, test = _same_grid(reference, test)
    if magnitude:
        reference, test = np.abs(reference), np.abs(test)
    ref_norm = np.linalg.norm(reference)
    if ref_norm == 0:
        raise InvalidArgument("reference image has zero norm")
    err = np.linalg.norm(test - reference)
    if err == 0:
        return EXACT
    return 20 * math.log10(ref_norm / err)


def log_kernel(size: int = 15, sigma: float = 1.5) -> np.ndarray:
    """Zero-sum Laplacian-of-Gaussian kernel (the usual fspecial('log') construction)."""
    half = (size - 1) / 2
    x = np.arange(size) - half
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    r2 = x1 ** 2 + x2 ** 2
    g = np.exp(-r2 / (2 * sigma ** 2))
    g /= g.sum()
    h = g * (r2 - 2 * sigma ** 2) / sigma ** 4
    return h - h.sum() / h.size


def log_filter(image, kernel=None) -> np.ndarray:
    kernel = log_kernel() if kernel is None else kernel
    return scipy.ndimage.convolve(np.asarray(image, dtype=float), kernel, mode="wrap")


def hfen(reference, test) -> float:
    """||LoG(|test|) - LoG(|ref|)|| / ||LoG(|ref|)||, periodic boundary."""
    reference, test = _same_grid(reference, test)
    kernel = log_kernel()
    ref_f = log_filter(np.abs(reference), kernel)
    denom = np.linalg.norm(ref_f)
    if denom <= 1e-12 * np.linalg.norm(reference):
        raise InvalidArgument("LoG of the reference vanishes")
    return float(np.linalg.norm(log_filter(np.abs(test), kernel) - ref_f) / denom)


def rel_change(prev, next) -> float:
    prev, next = _same_grid(prev, next)
    denom = np.linalg.norm(prev)
    if denom == 0:
        raise InvalidArgument("relative change from a zero iterate")
    return float(np.linalg.norm(next - prev) / denom)


@dataclass
class QualityReport:
    snr_db: float | str
    hfen: float
    n_iters: int | None = None
    wall_time_s: float | None = None

    def to_text(self) -> str:
        """Flat ``key=value`` lines."""
        return "".join(f"{k}={_fmt(v)}\n" for k, v in asdict(self).items())

    def summary(self) -> str:
        """Single-line JSON summary."""
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_text(cls, text: str) -> "QualityReport":
        vals = {}
        for line in text.splitlines():
            if line.strip():
                k, v = line.split("=", 1)
                vals[k.strip()] = v.strip()
        snr = vals["snr_db"]
        return cls(
            snr_db=snr if snr == EXACT else float(snr),
            hfen=float(vals["hfen"]),
            n_iters=None if vals.get("n_iters", "none") == "none" else int(vals["n_iters"]),
            wall_time_s=None if vals.get("wall_time_s", "none") == "none" else float(vals["wall_time_s"]),
        )


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def quality_report(reference, test, n_iters=None, wall_time_s=None) -> QualityReport:
    return QualityReport(snr_db(reference, test), hfen(reference, test), n_iters, wall_time_s)
