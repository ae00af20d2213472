"""Analytic ellipse phantoms in k-space, variable-density masks and noise.

Coordinates are in length units on the field of view [-L/2, L/2)^2, with the
first coordinate along the first array axis.  An ellipse with center ``y``,
semi-axes ``(d1, d2)`` and rotation ``theta`` is the set of points ``x`` with
``|diag(1/d1, 1/d2) Q (x - y)| <= 1`` where ``Q`` rotates by ``-theta``;
its ``d1`` axis points along ``(cos theta, sin theta)``.

With ``L = N`` (pixel units, the default phantom's convention) the inverse
DFT of the sampled transform reproduces the piecewise-constant image at its
native amplitudes; in general the image carries a factor ``(L / N)^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
import scipy.special

from .core import Grid, InvalidArgument, ParseError, make_grid


def bessel_j1(x):
    """Bessel function of the first kind, order 1."""
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)):
        raise InvalidArgument("bessel_j1 received NaN")
    out = scipy.special.j1(x)
    return float(out) if out.ndim == 0 else out


def disk_transform(rho) -> np.ndarray:
    """Fourier transform of the unit-disk indicator at radius ``rho``.

    J1(2 pi rho) / rho, continued by its limit pi at the origin.
    """
    rho = np.asarray(rho, dtype=float)
    out = np.full(rho.shape, np.pi)
    nz = rho > 0
    out[nz] = bessel_j1(2 * np.pi * rho[nz]) / rho[nz]
    return out


@dataclass(frozen=True)
class Ellipse:
    alpha: complex
    center: tuple[float, float]
    axes: tuple[float, float]
    theta: float = 0.0

    def __post_init__(self):
        if not (self.axes[0] > 0 and self.axes[1] > 0):
            raise InvalidArgument(f"degenerate ellipse semi-axes {self.axes}")

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, s], [-s, c]])

    def half_extent(self) -> tuple[float, float]:
        """Half widths of the axis-aligned bounding box."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        d1, d2 = self.axes
        return (math.hypot(d1 * c, d2 * s), math.hypot(d1 * s, d2 * c))

    def contains(self, x1, x2) -> np.ndarray:
        Q = self.rotation()
        u1 = np.asarray(x1) - self.center[0]
        u2 = np.asarray(x2) - self.center[1]
        r1 = (Q[0, 0] * u1 + Q[0, 1] * u2) / self.axes[0]
        r2 = (Q[1, 0] * u1 + Q[1, 1] * u2) / self.axes[1]
        return r1 * r1 + r2 * r2 <= 1.0


@dataclass(frozen=True)
class EllipsePhantom:
    ellipses: tuple[Ellipse, ...]
    L: float
    N: int = 256

    def __post_init__(self):
        if not self.ellipses:
            raise InvalidArgument("phantom needs at least one ellipse")
        if not self.L > 0:
            raise InvalidArgument(f"FOV must be positive, got {self.L}")
        half = self.L / 2
        for e in self.ellipses:
            h1, h2 = e.half_extent()
            c1, c2 = e.center
            if c1 - h1 < -half or c1 + h1 >= half or c2 - h2 < -half or c2 + h2 >= half:
                raise InvalidArgument(f"ellipse {e} leaves the field of view [-{half}, {half})")

    def rescaled(self, L: float, N: int | None = None) -> "EllipsePhantom":
        """Same geometry relative to the FOV, on a new FOV length ``L``."""
        s = L / self.L
        ellipses = tuple(
            replace(e, center=(e.center[0] * s, e.center[1] * s), axes=(e.axes[0] * s, e.axes[1] * s))
            for e in self.ellipses
        )
        return EllipsePhantom(ellipses, float(L), self.N if N is None else int(N))

    def scaled(self, factor: float) -> "EllipsePhantom":
        """Same geometry with every amplitude multiplied by ``factor``."""
        if not factor > 0:
            raise InvalidArgument(f"intensity scale must be positive, got {factor}")
        return EllipsePhantom(tuple(replace(e, alpha=e.alpha * factor) for e in self.ellipses), self.L, self.N)

    def rasterize(self, grid: Grid | None = None) -> np.ndarray:
        """Point samples of the piecewise-constant function at x = L p / N."""
        grid = grid or make_grid(self.N)
        k1, k2 = grid.mesh()
        x1 = k1 * self.L / grid.N
        x2 = k2 * self.L / grid.N
        out = np.zeros(grid.shape, dtype=complex)
        for e in self.ellipses:
            out[e.contains(x1, x2)] += e.alpha
        return out


def ellipse_kspace(p: EllipsePhantom, grid: Grid | None = None) -> np.ndarray:
    """Continuous Fourier transform of the phantom sampled at k / L, k in O."""
    grid = grid or make_grid(p.N)
    k1, k2 = grid.mesh()
    xi1 = k1 / p.L
    xi2 = k2 / p.L
    v = np.zeros(grid.shape, dtype=complex)
    for e in p.ellipses:
        Q = e.rotation()
        d1, d2 = e.axes
        # |A^-T xi| with A = diag(1/d) Q, i.e. |diag(d) Q xi|.
        q1 = d1 * (Q[0, 0] * xi1 + Q[0, 1] * xi2)
        q2 = d2 * (Q[1, 0] * xi1 + Q[1, 1] * xi2)
        rho = np.hypot(q1, q2)
        phase = np.exp(-2j * np.pi * (xi1 * e.center[0] + xi2 * e.center[1]))
        v += e.alpha * d1 * d2 * phase * disk_transform(rho)
    return v


# Modified Shepp-Logan table: amplitude, semi-axes (a, b), center (x0, y0), angle in degrees,
# on [-1, 1]^2 with y pointing up.
_SHEPP_LOGAN = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
]


def shepp_logan(L: float = 256.0, N: int = 256) -> EllipsePhantom:
    """Ten-ellipse modified Shepp-Logan layout, rows running top to bottom."""
    s = L / 2
    ellipses = []
    for amp, a, b, x0, y0, deg in _SHEPP_LOGAN:
        # Table x is our second axis and table y is minus our first axis.
        ellipses.append(Ellipse(complex(amp), (-y0 * s, x0 * s), (b * s, a * s), math.radians(deg)))
    return EllipsePhantom(tuple(ellipses), float(L), int(N))


def parse_phantom(text: str) -> EllipsePhantom:
    """Parse the flat phantom description format.

    One ellipse per line: ``alpha_re alpha_im cx cy d1 d2 theta``; header
    lines ``L <value>`` and ``N <value>``; ``#`` starts a comment.
    """
    L = None
    N = None
    ellipses = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] in ("L", "N"):
                if len(parts) != 2:
                    raise ParseError(f"header {parts[0]} takes one value", lineno)
                if parts[0] == "L":
                    L = float(parts[1])
                else:
                    N = int(parts[1])
                continue
            if len(parts) != 7:
                raise ParseError(f"expected 7 ellipse fields, got {len(parts)}", lineno)
            ar, ai, cx, cy, d1, d2, th = (float(t) for t in parts)
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"bad number in {line!r}", lineno) from exc
        try:
            ellipses.append(Ellipse(complex(ar, ai), (cx, cy), (d1, d2), th))
        except InvalidArgument as exc:
            raise ParseError(str(exc), lineno) from exc
    if L is None or N is None:
        raise ParseError("missing 'L' or 'N' header")
    try:
        return EllipsePhantom(tuple(ellipses), L, N)
    except InvalidArgument as exc:
        raise ParseError(str(exc)) from exc


def format_phantom(p: EllipsePhantom) -> str:
    lines = ["# alpha_re alpha_im cx cy d1 d2 theta", f"L {p.L!r}", f"N {p.N}"]
    for e in p.ellipses:
        a = complex(e.alpha)
        lines.append(" ".join(repr(float(t)) for t in (a.real, a.imag, *e.center, *e.axes, e.theta)))
    return "\n".join(lines) + "\n"


def load_phantom(path) -> EllipsePhantom:
    with open(path, encoding="utf-8") as fh:
        return parse_phantom(fh.read())


def default_phantom() -> EllipsePhantom:
    """The phantom shipped as ``data/shepp_logan.txt``."""
    text = resources.files("hfmri").joinpath("data/shepp_logan.txt").read_text(encoding="utf-8")
    return parse_phantom(text)


@dataclass(frozen=True)
class SamplingMask:
    grid: Grid
    indicator: np.ndarray = field(repr=False)
    seed: int | None = None

    def __post_init__(self):
        ind = np.array(self.indicator, dtype=bool)
        if ind.shape != self.grid.shape:
            raise InvalidArgument(f"mask shape {ind.shape} does not match grid N={self.grid.N}")
        ind.setflags(write=False)
        object.__setattr__(self, "indicator", ind)

    @property
    def ratio(self) -> float:
        return float(self.indicator.sum()) / self.grid.size

    @property
    def count(self) -> int:
        return int(self.indicator.sum())

    def weights(self) -> np.ndarray:
        return self.indicator.astype(float)


def vardensity_mask(grid: Grid, ratio: float, decay: float = 2.0,
                    center_radius: int | None = None, seed: int | None = 0) -> SamplingMask:
    """Random mask with density proportional to (1 - |k| / k_max)^decay.

    The disk |k| <= center_radius is always sampled; the rest is drawn without
    replacement (Efraimidis-Spirakis keys, successive-sampling law) until
    exactly round(ratio N^2) entries are set.  Entries of zero weight are only
    drawn once all positive-weight entries are taken.
    """
    if not 0 < ratio <= 1:
        raise InvalidArgument(f"sampling ratio must lie in (0, 1], got {ratio}")
    if decay < 0:
        raise InvalidArgument("decay must be nonnegative")
    if center_radius is None:
        center_radius = math.ceil(0.04 * grid.N)
    if center_radius < 0:
        raise InvalidArgument("center radius must be nonnegative")
    total = int(math.floor(ratio * grid.size + 0.5))
    k1, k2 = grid.mesh()
    radius = np.hypot(k1, k2)
    center = radius <= center_radius
    n_center = int(center.sum())
    if total < n_center:
        raise InvalidArgument(
            f"ratio {ratio} gives {total} samples, fewer than the {n_center}-sample center disk"
        )
    if total == grid.size:
        return SamplingMask(grid, np.ones(grid.shape, dtype=bool), seed)
    rng = np.random.default_rng(seed)
    w = (1.0 - radius / radius.max()) ** decay
    u = rng.random(grid.shape)
    with np.errstate(divide="ignore"):
        key = np.where(w > 0, np.log(u) / np.where(w > 0, w, 1.0), -np.inf)
    key[center] = np.inf
    order = np.lexsort((u.ravel(), key.ravel()))
    chosen = order[grid.size - total:]
    ind = np.zeros(grid.size, dtype=bool)
    ind[chosen] = True
    return SamplingMask(grid, ind.reshape(grid.shape), seed)


def add_noise_to_snr(f, mask: SamplingMask, target_snr_db: float, seed: int | None = 0):
    """Add circular complex Gaussian noise on the masked entries.

    The per-entry variance is set so that the expected noise norm over the
    mask sits ``target_snr_db`` below the masked signal norm.  Returns the
    noisy array and the realized SNR in dB; ``inf`` returns ``f`` unchanged.
    """
    f = np.asarray(f, dtype=np.complex128)
    if f.shape != mask.grid.shape:
        raise InvalidArgument("data and mask grids differ")
    m = mask.indicator
    signal = float(np.linalg.norm(f[m]))
    if signal == 0:
        raise InvalidArgument("cannot set an SNR for a zero signal")
    if math.isinf(target_snr_db) and target_snr_db > 0:
        return f.copy(), math.inf
    n_samples = int(m.sum())
    sigma = signal / math.sqrt(n_samples) * 10 ** (-target_snr_db / 20)
    rng = np.random.default_rng(seed)
    noise = (rng.standard_normal(n_samples) + 1j * rng.standard_normal(n_samples)) * (sigma / math.sqrt(2))
    out = f.copy()
    out[m] += noise
    realized = 20 * math.log10(signal / np.linalg.norm(noise))
    return out, realized
