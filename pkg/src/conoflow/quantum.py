"""Semiclassical wave solver on a periodic flat grid.

Evolves i h dpsi/dt = (-h^2 Lap + V) psi by symmetric Strang splitting:

    psi -> exp(-i dt V / (2h)) psi            half kick
    psi -> IFFT exp(-i dt h |k|^2) FFT psi    full drift
    psi -> exp(-i dt V / (2h)) psi            half kick

Each factor has unit modulus, so the scheme is unitary up to FFT rounding.
The box must be sized so wrap-around never reaches the diagnostics window
within the evolution time; there is no absorbing layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import measure
from .errors import (ConfigurationError, DiagnosticError,
                     NumericalInstabilityError, PreconditionError)
from .flow import PhasePoint
from .measure import PhaseSpaceBox
from .potentials import ConormalPotential

STABILITY_FACTOR = 0.25       # hard cap: dt <= h * STABILITY_FACTOR
DEFAULT_DT_FACTOR = 0.05      # default dt = h / 20


@dataclass(frozen=True)
class Grid:
    """Periodic grid on a box, dimension 1 or 2, power-of-two points.

    When the box contains the interface x = 0, a grid plane must lie on it.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    n: tuple[int, ...]

    def __post_init__(self):
        d = len(self.n)
        if d not in (1, 2) or len(self.lo) != d or len(self.hi) != d:
            raise ConfigurationError("grid needs 1 or 2 consistent axes")
        for axis in range(d):
            npts = self.n[axis]
            if npts < 2 or npts & (npts - 1):
                raise ConfigurationError(
                    f"points per axis must be a power of two, got {npts}")
            if not self.hi[axis] > self.lo[axis]:
                raise ConfigurationError("grid box must have positive extent")
        if self.lo[0] <= 0.0 <= self.hi[0]:
            dx = self.spacing(0)
            offset = self.lo[0] / dx
            if abs(offset - round(offset)) > 1e-9:
                raise ConfigurationError(
                    "the interface x = 0 must lie on a grid plane")

    @property
    def dim(self) -> int:
        return len(self.n)

    def length(self, axis: int) -> float:
        return self.hi[axis] - self.lo[axis]

    def spacing(self, axis: int) -> float:
        return self.length(axis) / self.n[axis]

    def coords(self, axis: int) -> np.ndarray:
        return self.lo[axis] + self.spacing(axis) * np.arange(self.n[axis])

    def wavenumbers(self, axis: int) -> np.ndarray:
        return 2.0 * math.pi * np.fft.fftfreq(self.n[axis], self.spacing(axis))

    @property
    def cell_volume(self) -> float:
        vol = 1.0
        for axis in range(self.dim):
            vol *= self.spacing(axis)
        return vol


def grid_1d(lo: float, hi: float, n: int) -> Grid:
    return Grid((lo,), (hi,), (n,))


@dataclass(frozen=True)
class WaveState:
    grid: Grid
    psi: np.ndarray
    h: float
    t: float = 0.0
    norm: float = 0.0

    def __post_init__(self):
        if self.h <= 0.0:
            raise ConfigurationError("semiclassical parameter h must be > 0")
        if tuple(self.psi.shape) != self.grid.n:
            raise ConfigurationError(
                f"amplitude shape {self.psi.shape} does not match grid "
                f"{self.grid.n}")
        object.__setattr__(self, "norm", state_norm(self.grid, self.psi))
        if not math.isfinite(self.norm):
            raise ConfigurationError("state norm is not finite")


def state_norm(grid: Grid, psi: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(psi) ** 2) * grid.cell_volume))


def sample_potential(V: ConormalPotential, grid: Grid) -> np.ndarray:
    """Pointwise values of V on the grid (x = 0 uses the one-sided limit,
    which keeps every catalog profile finite there)."""
    x = grid.coords(0)
    if grid.dim == 1:
        vals = np.array([V.eval(float(xi)) for xi in x])
    else:
        y = grid.coords(1)
        vals = np.array([[V.eval(float(xi), float(yj)) for yj in y]
                         for xi in x])
    if not np.all(np.isfinite(vals)):
        raise ConfigurationError("potential is unbounded on the grid")
    return vals


def coherent_state(grid: Grid, h: float, rho0: PhasePoint,
                   sigma: float | None = None) -> WaveState:
    """Unit-norm Gaussian wavepacket at rho0 with width sigma ~ sqrt(h)."""
    sigma = sigma if sigma is not None else math.sqrt(h)
    root = math.sqrt(h)
    if not (root / 4.0 <= sigma <= 4.0 * root):
        raise ConfigurationError(
            f"packet width {sigma:g} outside [sqrt(h)/4, 4 sqrt(h)]")
    centers = (rho0.x,) if grid.dim == 1 else (rho0.x, rho0.y)
    for axis, c in enumerate(centers):
        if not (grid.lo[axis] + 5.0 * sigma <= c <= grid.hi[axis] - 5.0 * sigma):
            raise ConfigurationError(
                f"center {c:g} closer than 5 sigma to the boundary on "
                f"axis {axis}")
    x = grid.coords(0)
    if grid.dim == 1:
        psi = np.exp(1j * rho0.xi * x / h
                     - (x - rho0.x) ** 2 / (2.0 * sigma**2))
    else:
        y = grid.coords(1)
        psi = np.exp(1j * (rho0.xi * x[:, None] + rho0.eta * y[None, :]) / h
                     - ((x[:, None] - rho0.x) ** 2
                        + (y[None, :] - rho0.y) ** 2) / (2.0 * sigma**2))
    psi = psi.astype(complex)
    psi /= state_norm(grid, psi)
    return WaveState(grid, psi, h, t=0.0)


def propagate(state: WaveState, V: ConormalPotential, T: float,
              dt: float | None = None) -> WaveState:
    """Strang-split evolution by time T on the flat metric.

    Unitary to rounding; a norm drift beyond 1e-6 aborts with a
    numerical-instability error.
    """
    if T == 0.0:
        return state
    h = state.h
    dt = dt if dt is not None else DEFAULT_DT_FACTOR * h
    if not 0.0 < dt <= STABILITY_FACTOR * h:
        raise PreconditionError(
            f"time step {dt:g} violates dt <= {STABILITY_FACTOR} h = "
            f"{STABILITY_FACTOR * h:g}")
    n_steps = max(1, int(math.ceil(abs(T) / dt - 1e-12)))
    dt_eff = T / n_steps

    grid = state.grid
    v = sample_potential(V, grid)
    if grid.dim == 1:
        k2 = grid.wavenumbers(0) ** 2
    else:
        k2 = (grid.wavenumbers(0)[:, None] ** 2
              + grid.wavenumbers(1)[None, :] ** 2)
    half_kick = np.exp(-0.5j * dt_eff * v / h)
    drift = np.exp(-1j * dt_eff * h * k2)

    psi = state.psi * half_kick
    full_kick = half_kick * half_kick
    for step in range(n_steps):
        psi = np.fft.ifftn(drift * np.fft.fftn(psi))
        psi = psi * (half_kick if step == n_steps - 1 else full_kick)

    out = WaveState(grid, psi, h, t=state.t + T)
    if abs(out.norm - state.norm) > 1e-6:
        raise NumericalInstabilityError(
            f"norm drifted by {abs(out.norm - state.norm):.3e} over T={T}")
    return out


def residual(state: WaveState, V: ConormalPotential, E: float) -> float:
    """||(-h^2 Lap + V - E) psi|| / ||psi|| with the spectral Laplacian."""
    grid, h = state.grid, state.h
    v = sample_potential(V, grid)
    if grid.dim == 1:
        k2 = grid.wavenumbers(0) ** 2
    else:
        k2 = (grid.wavenumbers(0)[:, None] ** 2
              + grid.wavenumbers(1)[None, :] ** 2)
    kinetic = np.fft.ifftn(h**2 * k2 * np.fft.fftn(state.psi))
    res = kinetic + (v - E) * state.psi
    return state_norm(grid, res) / state.norm


def interface_strip_mass(state: WaveState, sigma: float | None = None,
                         half_width: float | None = None,
                         resolution: int = 8) -> float:
    """Husimi mass in the strip |x| <= half_width (all momenta)."""
    grid, h = state.grid, state.h
    sigma_v = sigma if sigma is not None else math.sqrt(h)
    hw = half_width if half_width is not None else 5.0 * sigma_v
    k = h * grid.wavenumbers(0)
    box = PhaseSpaceBox(((-hw, hw), (float(k.min()) - 1.0, float(k.max()) + 1.0)))
    return measure.box_mass(state, box, sigma_v, resolution)


def _quadrant_box(state: WaveState, x_side: str, xi_side: str) -> PhaseSpaceBox:
    grid, h = state.grid, state.h
    k = h * grid.wavenumbers(0)
    x_iv = (grid.lo[0], 0.0) if x_side == "left" else (0.0, grid.hi[0])
    k_iv = (float(k.min()) - 1.0, 0.0) if xi_side == "-" \
        else (0.0, float(k.max()) + 1.0)
    return PhaseSpaceBox((x_iv, k_iv))


def reflected_mass(state: WaveState, interface_side: str = "left",
                   xi_sign: str = "-", sigma: float | None = None,
                   resolution: int = 8, strip_threshold: float = 0.25) -> float:
    """Mass behind the interface moving back out (reflected branch).

    For a right-moving incident packet launched from x < 0 this is the
    Husimi mass of {x < 0, xi < 0}.  The packet must have cleared the
    interface strip; a strip mass above strip_threshold is diagnosed as
    a premature measurement.
    """
    if state.grid.dim != 1:
        raise ConfigurationError("reflection diagnostics are one-dimensional")
    if interface_side not in ("left", "right") or xi_sign not in ("-", "+"):
        raise ConfigurationError(
            f"bad side/sign: {interface_side!r}, {xi_sign!r}")
    strip = interface_strip_mass(state, sigma, resolution=resolution)
    if strip > strip_threshold:
        raise DiagnosticError(
            f"packet has not cleared the interface: strip mass {strip:.3g}",
            profile={"strip_mass": strip})
    box = _quadrant_box(state, interface_side, xi_sign)
    return measure.box_mass(state, box, sigma, resolution)


def transmitted_mass(state: WaveState, sigma: float | None = None,
                     resolution: int = 8) -> float:
    """Mass past the interface still moving forward: {x > 0, xi > 0}."""
    if state.grid.dim != 1:
        raise ConfigurationError("reflection diagnostics are one-dimensional")
    box = _quadrant_box(state, "right", "+")
    return measure.box_mass(state, box, sigma, resolution)


# Snapshot files: little-endian flat binary with the header
#   magic "CFWV", uint32 version, uint32 dim,
#   per axis: uint64 points, float64 lo, float64 hi,
#   float64 h, float64 t,
# then the complex amplitudes row-major as (re, im) float64 pairs, from
# which |psi|^2 is immediate.

_SNAPSHOT_MAGIC = b"CFWV"
_SNAPSHOT_VERSION = 1


def write_snapshot(state: WaveState, path: str) -> None:
    import os
    import struct
    grid = state.grid
    header = [_SNAPSHOT_MAGIC,
              struct.pack("<II", _SNAPSHOT_VERSION, grid.dim)]
    for axis in range(grid.dim):
        header.append(struct.pack("<Qdd", grid.n[axis], grid.lo[axis],
                                  grid.hi[axis]))
    header.append(struct.pack("<dd", state.h, state.t))
    payload = np.ascontiguousarray(state.psi).astype(np.complex128)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(header))
        fh.write(payload.tobytes())
    os.replace(tmp, path)


def read_snapshot(path: str) -> WaveState:
    import struct
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _SNAPSHOT_MAGIC:
            raise ConfigurationError(f"not a snapshot file: {path}")
        version, dim = struct.unpack("<II", fh.read(8))
        if version != _SNAPSHOT_VERSION:
            raise ConfigurationError(f"unsupported snapshot version {version}")
        n, lo, hi = [], [], []
        for _ in range(dim):
            npts, a, b = struct.unpack("<Qdd", fh.read(24))
            n.append(int(npts))
            lo.append(a)
            hi.append(b)
        h, t = struct.unpack("<dd", fh.read(16))
        count = int(np.prod(n))
        psi = np.frombuffer(fh.read(16 * count), dtype=np.complex128)
    grid = Grid(tuple(lo), tuple(hi), tuple(n))
    return WaveState(grid, psi.reshape(grid.n).copy(), h, t=t)


@dataclass(frozen=True)
class ReflectionScanConfig:
    """Fixed scattering scenario swept over the semiclassical parameter."""

    potential: ConormalPotential
    x0: float
    xi0: float
    T: float
    grid_lo: float = -6.0
    grid_hi: float = 6.0
    n_points: int = 2**14
    sigma_factor: float = 1.5     # packet and window width = factor*sqrt(h)
    dt_factor: float = DEFAULT_DT_FACTOR
    resolution: int = 8


def h_sweep(config: ReflectionScanConfig, h_list) -> list[dict]:
    """One reflection/transmission row per h, each computed independently.

    Failures are recorded per row (key 'error') and the sweep continues.
    """
    hs = [float(v) for v in h_list]
    if any(v <= 0.0 for v in hs) or any(b >= a for a, b in zip(hs, hs[1:])):
        raise PreconditionError("h_list must be positive and decreasing")
    rows = []
    for h in hs:
        row = {"h": h}
        try:
            grid = grid_1d(config.grid_lo, config.grid_hi, config.n_points)
            sigma = config.sigma_factor * math.sqrt(h)
            u0 = coherent_state(grid, h, PhasePoint(config.x0, config.xi0),
                                sigma)
            uT = propagate(u0, config.potential, config.T,
                           dt=config.dt_factor * h)
            row["reflected_mass"] = reflected_mass(
                uT, sigma=sigma, resolution=config.resolution)
            row["transmitted_mass"] = transmitted_mass(
                uT, sigma=sigma, resolution=config.resolution)
            row["norm_drift"] = abs(uT.norm - u0.norm)
        except Exception as exc:  # per-row isolation
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows
