"""Independent reference computations shared by the test modules."""

import mpmath
import numpy as np


def j1_series(x, dps: int = 80) -> float:
    """J1 from its power series, summed in extended precision until convergence."""
    with mpmath.workdps(dps):
        h = mpmath.mpf(x) / 2
        term = h
        total = term
        m = 0
        while True:
            m += 1
            term = -term * h * h / (m * (m + 1))
            total += term
            if abs(term) < mpmath.mpf(10) ** (-dps + 5) * max(abs(total), 1):
                break
        return float(total)


def dft_bruteforce(u) -> np.ndarray:
    """O(N^4) centered DFT: f[k] = sum_p u[p] exp(-2 pi i k.p / N)."""
    N = u.shape[0]
    ax = np.arange(N) - N // 2
    f = np.zeros((N, N), complex)
    for a, k1 in enumerate(ax):
        for b, k2 in enumerate(ax):
            e = np.exp(-2j * np.pi * (k1 * ax[:, None] + k2 * ax[None, :]) / N)
            f[a, b] = np.sum(u * e)
    return f


def interior_mask(labels, margin: int) -> np.ndarray:
    """Pixels whose whole (2 margin + 1)^2 neighbourhood shares their label."""
    N = labels.shape[0]
    ok = np.ones(labels.shape, bool)
    for d1 in range(-margin, margin + 1):
        for d2 in range(-margin, margin + 1):
            shifted = np.full(labels.shape, np.nan, dtype=complex)
            src = labels[max(0, d1):N + min(0, d1), max(0, d2):N + min(0, d2)]
            shifted[max(0, -d1):N + min(0, -d1), max(0, -d2):N + min(0, -d2)] = src
            ok &= shifted == labels
    return ok


def boundary_mask(phantom, margin: float = 1.0, grid_N: int | None = None) -> np.ndarray:
    """Pixels within ``margin`` pixels of some ellipse boundary.

    Brute force: a pixel is near a boundary if the inside/outside status of any
    ellipse changes over a dense set of probe points in the disk of radius
    ``margin`` around it.
    """
    N = grid_N or phantom.N
    ax = (np.arange(N) - N // 2) * phantom.L / N
    x1, x2 = np.meshgrid(ax, ax, indexing="ij")
    h = phantom.L / N
    probes = [(0.0, 0.0)]
    for rad in np.linspace(0.25, margin, 4):
        for t in np.linspace(0, 2 * np.pi, 24, endpoint=False):
            probes.append((rad * np.cos(t), rad * np.sin(t)))
    near = np.zeros((N, N), bool)
    for e in phantom.ellipses:
        base = e.contains(x1, x2)
        for d1, d2 in probes[1:]:
            near |= e.contains(x1 + d1 * h, x2 + d2 * h) != base
    return near
