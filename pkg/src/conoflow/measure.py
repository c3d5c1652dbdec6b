"""Phase-space mass estimation via the Husimi transform.

The Husimi density of a state u at rho = (x0, xi0) is

    H(rho) = |<g_rho, u>|^2 / (2 pi h)^d,

with g_rho the normalized Gaussian window of width sigma carrying the
plane phase exp(i xi0 . z / h).  It is nonnegative, and integrating it
over all of phase space returns ||u||^2 for any window width, so box
masses behave like a (blurred) measure at fixed h.

Box masses are computed on a product quadrature: midpoint nodes in the
position variables at a spacing tied to sqrt(h), and the transform's
native momentum lattice xi_m = h k_m, where one windowed FFT per position
node evaluates a whole momentum column at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (ConfigurationError, HypothesisViolationError,
                     PreconditionError)


@dataclass(frozen=True)
class PhaseSpaceBox:
    """Closed product box in (x, xi[, y, eta]) with nonempty interior."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        for lo, hi in self.intervals:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ConfigurationError(
                    f"box interval ({lo}, {hi}) must be finite with lo < hi")

    @property
    def ndim(self) -> int:
        return len(self.intervals)

    def inflate(self, delta: float) -> "PhaseSpaceBox":
        return PhaseSpaceBox(tuple((lo - delta, hi + delta)
                                   for lo, hi in self.intervals))

    @staticmethod
    def bounding(points: np.ndarray, inflate: float = 0.0) -> "PhaseSpaceBox":
        pts = np.asarray(points, float)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ConfigurationError("bounding box needs a nonempty cloud")
        lows = pts.min(axis=0) - inflate
        highs = pts.max(axis=0) + inflate
        return PhaseSpaceBox(tuple((float(a), float(b))
                                   for a, b in zip(lows, highs)))


def _check_sigma(h: float, sigma: float) -> float:
    root = math.sqrt(h)
    if not (root / 4.0 <= sigma <= 4.0 * root):
        raise ConfigurationError(
            f"window width {sigma:g} outside [sqrt(h)/4, 4 sqrt(h)] "
            f"for h = {h:g}")
    return sigma


def _wrap(delta: np.ndarray, length: float) -> np.ndarray:
    return (delta + 0.5 * length) % length - 0.5 * length


def husimi(u, rho, sigma: float | None = None) -> float:
    """Husimi density of u at one phase point; nonnegative."""
    grid, h = u.grid, u.h
    sigma = _check_sigma(h, sigma if sigma is not None else math.sqrt(h))
    d = grid.dim
    x = grid.coords(0)
    dxw = _wrap(x - rho.x, grid.length(0))
    if d == 1:
        window = np.exp(-dxw**2 / (2.0 * sigma**2))
        phase = np.exp(-1j * rho.xi * x / h)
        overlap = np.sum(window * phase * u.psi) * grid.cell_volume
    else:
        y = grid.coords(1)
        dyw = _wrap(y - rho.y, grid.length(1))
        window = np.exp(-(dxw[:, None]**2 + dyw[None, :]**2)
                        / (2.0 * sigma**2))
        phase = np.exp(-1j * (rho.xi * x[:, None] + rho.eta * y[None, :]) / h)
        overlap = np.sum(window * phase * u.psi) * grid.cell_volume
    overlap *= (math.pi * sigma**2) ** (-d / 4.0)
    return float(abs(overlap) ** 2 / (2.0 * math.pi * h) ** d)


def _husimi_column_1d(u, sigma: float, x0: float) -> tuple[np.ndarray, np.ndarray]:
    """One windowed FFT: Husimi values over the native momentum lattice."""
    grid, h = u.grid, u.h
    x = grid.coords(0)
    w = np.exp(-_wrap(x - x0, grid.length(0))**2 / (2.0 * sigma**2))
    amp = np.fft.fft(w * u.psi) * grid.cell_volume
    amp *= (math.pi * sigma**2) ** (-0.25)
    xi = h * grid.wavenumbers(0)
    return xi, np.abs(amp) ** 2 / (2.0 * math.pi * h)


def _husimi_column_2d(u, sigma, x0, y0):
    grid, h = u.grid, u.h
    x, y = grid.coords(0), grid.coords(1)
    wx = np.exp(-_wrap(x - x0, grid.length(0))**2 / (2.0 * sigma**2))
    wy = np.exp(-_wrap(y - y0, grid.length(1))**2 / (2.0 * sigma**2))
    amp = np.fft.fft2(wx[:, None] * wy[None, :] * u.psi) * grid.cell_volume
    amp *= (math.pi * sigma**2) ** (-0.5)
    xi = h * grid.wavenumbers(0)
    eta = h * grid.wavenumbers(1)
    return xi, eta, np.abs(amp) ** 2 / (2.0 * math.pi * h) ** 2


def _position_nodes(lo: float, hi: float, spacing: float,
                    axis_lo: float, length: float):
    """Cell-midpoint nodes of a global lattice falling in [lo, hi).

    The lattice tiles the torus exactly (cell width divides the
    circumference), is anchored at the grid origin, and is shared by every
    box at a given resolution, so partition additivity and inclusion
    monotonicity of box masses hold to rounding, not just to quadrature.
    """
    cells = int(math.ceil(length / spacing))
    step = length / cells
    centers = axis_lo + (np.arange(cells) + 0.5) * step
    width = min(hi - lo, length)
    offset = (centers - lo) % length
    return centers[offset < width], step


def _resolution_spacing(h: float, resolution: int) -> float:
    if resolution < 8:
        raise ConfigurationError(
            f"resolution {resolution} too coarse: need >= 8 nodes per "
            "sqrt(h) per axis")
    return math.sqrt(h) / resolution


def _check_momentum_lattice(u, resolution: int):
    for axis in range(u.grid.dim):
        native = 2.0 * math.pi * u.h / u.grid.length(axis)
        if native > math.sqrt(u.h) / resolution:
            raise ConfigurationError(
                f"native momentum spacing {native:g} on axis {axis} is "
                f"coarser than sqrt(h)/{resolution}; enlarge the grid box")


def box_mass(u, box: PhaseSpaceBox, sigma: float | None = None,
             resolution: int = 8) -> float:
    """Husimi mass of u in a phase-space box; in [0, ||u||^2 + quadrature]."""
    grid, h = u.grid, u.h
    sigma = _check_sigma(h, sigma if sigma is not None else math.sqrt(h))
    spacing = _resolution_spacing(h, resolution)
    _check_momentum_lattice(u, resolution)
    d = grid.dim
    if box.ndim != 2 * d:
        raise ConfigurationError(
            f"box has {box.ndim} intervals, state dimension {d} needs {2 * d}")

    if d == 1:
        (x_lo, x_hi), (k_lo, k_hi) = box.intervals
        nodes, step = _position_nodes(x_lo, x_hi, spacing, grid.lo[0],
                                      grid.length(0))
        dxi = 2.0 * math.pi * h / grid.length(0)
        total = 0.0
        for x0 in nodes:
            xi, col = _husimi_column_1d(u, sigma, float(x0))
            mask = (xi >= k_lo) & (xi < k_hi)
            total += float(np.sum(col[mask])) * dxi * step
        return total

    (x_lo, x_hi), (k_lo, k_hi), (y_lo, y_hi), (e_lo, e_hi) = box.intervals
    xn, xstep = _position_nodes(x_lo, x_hi, spacing, grid.lo[0],
                                grid.length(0))
    yn, ystep = _position_nodes(y_lo, y_hi, spacing, grid.lo[1],
                                grid.length(1))
    dxi = 2.0 * math.pi * h / grid.length(0)
    deta = 2.0 * math.pi * h / grid.length(1)
    total = 0.0
    for x0 in xn:
        for y0 in yn:
            xi, eta, col = _husimi_column_2d(u, sigma, float(x0), float(y0))
            mask = ((xi >= k_lo) & (xi < k_hi))[:, None] \
                & ((eta >= e_lo) & (eta < e_hi))[None, :]
            total += float(np.sum(col[mask])) * dxi * deta * xstep * ystep
    return total


@dataclass(frozen=True)
class MeasureEstimate:
    """Box masses of one state, comparable across times via transport."""

    masses: tuple[float, ...]
    boxes: tuple[PhaseSpaceBox, ...]
    h: float
    sigma: float
    resolution: int
    total_mass: float


def estimate(u, boxes, sigma: float | None = None,
             resolution: int = 8) -> MeasureEstimate:
    sigma_v = sigma if sigma is not None else math.sqrt(u.h)
    masses = tuple(box_mass(u, b, sigma_v, resolution) for b in boxes)
    full = full_window_box(u)
    total = box_mass(u, full, sigma_v, resolution)
    return MeasureEstimate(masses, tuple(boxes), u.h, sigma_v, resolution,
                           total)


def full_window_box(u) -> PhaseSpaceBox:
    """The box covering the whole grid and its native momentum range."""
    grid, h = u.grid, u.h
    pairs = []
    for axis in range(grid.dim):
        lo, hi = grid.lo[axis], grid.hi[axis]
        k = h * grid.wavenumbers(axis)
        dk = 2.0 * math.pi * h / grid.length(axis)
        pairs.append(((lo, hi), (float(k.min()) - dk, float(k.max()) + dk)))
    intervals = [pairs[0][0], pairs[0][1]]
    if grid.dim == 2:
        intervals += [pairs[1][0], pairs[1][1]]
    return PhaseSpaceBox(tuple(intervals))


@dataclass(frozen=True)
class InvarianceResult:
    defect: float
    mass_before: float
    mass_after: float
    box: PhaseSpaceBox
    image_box: PhaseSpaceBox
    hypothesis_infimum: float

    def __float__(self) -> float:
        return self.defect


def invariance_defect(u0, uT, box: PhaseSpaceBox, flow_result,
                      sigma: float | None = None,
                      resolution: int = 8) -> InvarianceResult:
    """|mass of uT in the transported box - mass of u0 in the box|.

    The transported box is the bounding box of the sample-cloud image,
    inflated by 3 sqrt(h) to absorb quantization blur.  Refuses with the
    measured witness when the transversality hypothesis failed on the box.
    """
    if not flow_result.hypothesis_ok:
        raise HypothesisViolationError(
            "transversality hypothesis fails on the box: measured infimum "
            f"{flow_result.hypothesis_infimum:.3g}",
            infimum=flow_result.hypothesis_infimum,
            witness=flow_result)
    if u0.h != uT.h:
        raise PreconditionError("states compare at a common h")
    if np.array_equal(flow_result.image_points, flow_result.entry_points):
        image_box = box    # identity transport: no blur to absorb
    else:
        image_box = PhaseSpaceBox.bounding(flow_result.image_points,
                                           inflate=3.0 * math.sqrt(u0.h))
    m0 = box_mass(u0, box, sigma, resolution)
    mT = box_mass(uT, image_box, sigma, resolution)
    return InvarianceResult(abs(mT - m0), m0, mT, box, image_box,
                            flow_result.hypothesis_infimum)


def shell_concentration(u, V, E: float, delta: float,
                        sigma: float | None = None, resolution: int = 8,
                        x_window: tuple[float, float] | None = None) -> float:
    """Husimi mass outside the energy band {|xi^2 + V - E| < delta}."""
    if not delta > 0.0:
        raise PreconditionError(f"band half-width must be > 0, got {delta}")
    grid, h = u.grid, u.h
    sigma = _check_sigma(h, sigma if sigma is not None else math.sqrt(h))
    spacing = _resolution_spacing(h, resolution)
    _check_momentum_lattice(u, resolution)

    if grid.dim == 1:
        lo, hi = x_window if x_window is not None else (grid.lo[0], grid.hi[0])
        nodes, step = _position_nodes(lo, hi, spacing, grid.lo[0],
                                      grid.length(0))
        dxi = 2.0 * math.pi * h / grid.length(0)
        total = 0.0
        for x0 in nodes:
            xi, col = _husimi_column_1d(u, sigma, float(x0))
            p = xi**2 + V.eval(float(x0))
            total += float(np.sum(col[np.abs(p - E) >= delta])) * dxi * step
        return total

    lo, hi = x_window if x_window is not None else (grid.lo[0], grid.hi[0])
    xn, xstep = _position_nodes(lo, hi, spacing, grid.lo[0],
                                grid.length(0))
    yn, ystep = _position_nodes(grid.lo[1], grid.hi[1], spacing, grid.lo[1],
                                grid.length(1))
    dxi = 2.0 * math.pi * h / grid.length(0)
    deta = 2.0 * math.pi * h / grid.length(1)
    total = 0.0
    for x0 in xn:
        for y0 in yn:
            xi, eta, col = _husimi_column_2d(u, sigma, float(x0), float(y0))
            p = xi[:, None]**2 + eta[None, :]**2 + V.eval(float(x0), float(y0))
            total += float(np.sum(col[np.abs(p - E) >= delta])) \
                * dxi * deta * xstep * ystep
    return total
