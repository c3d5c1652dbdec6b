"""Bicharacteristic flow for the symbol p = xi^2 - r(x, y, eta).

Equations of motion in the collar coordinates:

    dx/dt   =  2 xi
    dxi/dt  =  dr/dx
    dy/dt   = -dr/deta
    deta/dt =  dr/dy

with r = -V - h^{11}(x, y) eta^2.  Away from the interface x = 0 the right
hand side is smooth and an adaptive Runge-Kutta step applies.  Transversal
interface passages are integrated in x, with xi eliminated through the
exact conservation law xi^2 - r = const, so the possibly unbounded dV/dx
is never sampled pointwise.  Tangencies of exactly second order are
continued by a Picard iteration seeded from the second-order expansion

    x(t) = dr/dx(rho0) t^2 + O(t^2 R(t)),   xi(t) = dr/dx(rho0) t + O(t R(t)),

where R(t) is the modulus returned by glancing_modulus.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import (ConfigurationError, GlancingDiagnosticError,
                     NearGlancingError, OneSidedLimitWarning,
                     PreconditionError, SingularPointError,
                     UnsupportedRegularityError)
from .geometry import MetricModel
from .potentials import ConormalPotential, RegularityTag

DEFAULT_TOL = 1e-8
DEFAULT_BAND = 1e-2       # half-width of the interface collar handled in x
DEFAULT_XI_MIN = 1e-3     # crossing floor: below this, reclassify
_T_INNER = 1e-4           # expansion-only inner interval for glancing starts


@dataclass(frozen=True)
class PhasePoint:
    """Point (x, xi, y, eta) in the collar cotangent coordinates.

    For d = 1 the tangential pair (y, eta) is unused and kept at 0.
    """

    x: float
    xi: float
    y: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        for name in ("x", "xi", "y", "eta"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"non-finite coordinate {name}")

    def as_array(self, dim: int) -> np.ndarray:
        if dim == 1:
            return np.array([self.x, self.xi])
        return np.array([self.x, self.xi, self.y, self.eta])

    @staticmethod
    def from_array(z, dim: int) -> "PhasePoint":
        if dim == 1:
            return PhasePoint(float(z[0]), float(z[1]))
        return PhasePoint(float(z[0]), float(z[1]), float(z[2]), float(z[3]))


# ---------------------------------------------------------------------------
# Symbol evaluations

def _dual_terms(m: MetricModel, x, y):
    """(w, w_x, w_y) = h^{11} and its first derivatives; zeros for d = 1."""
    if m.dim == 1:
        return 0.0, 0.0, 0.0
    return m.dual(x, y), m.dual_x(x, y), m.dual_y(x, y)


def r_value(V, m, x, y=0.0, eta=0.0):
    if m.dim == 1:
        return -V.eval(x)
    return -V.eval(x, y) - m.dual(x, y) * eta**2


def r_dx(V, m, x, y=0.0, eta=0.0, side="+"):
    if m.dim == 1:
        return -V.eval(x, 0.0, dx_order=1, side=side)
    return -V.eval(x, y, dx_order=1, side=side) - m.dual_x(x, y) * eta**2


def r_dy(V, m, x, y=0.0, eta=0.0):
    if m.dim == 1:
        return 0.0
    return -V.eval(x, y, dy_order=1) - m.dual_y(x, y) * eta**2


def r_deta(V, m, x, y=0.0, eta=0.0):
    if m.dim == 1:
        return 0.0
    return -2.0 * m.dual(x, y) * eta


def r_dxx(V, m, x, y=0.0, eta=0.0, side="+"):
    if m.dim == 1:
        return -V.eval(x, 0.0, dx_order=2, side=side)
    return -V.eval(x, y, dx_order=2, side=side) - m.dual_xx(x, y) * eta**2


def hamiltonian(V, m, rho: PhasePoint) -> float:
    """p(rho) = xi^2 - r(x, y, eta)."""
    return rho.xi**2 - r_value(V, m, rho.x, rho.y, rho.eta)


def normal_velocity(V, m, rho: PhasePoint) -> float:
    """Rate of change of the interface coordinate along the flow: 2 xi."""
    return 2.0 * rho.xi


def normal_acceleration(V, m, rho: PhasePoint, side: str = "+") -> float:
    """Second flow derivative of the interface coordinate: 2 dr/dx.

    At x = 0 for W11 potentials the classical derivative is one-sided;
    the chosen convention is flagged with a warning.
    """
    if rho.x == 0.0 and V.tag is RegularityTag.W11:
        warnings.warn(
            "normal acceleration at the interface of a W11 potential uses "
            f"the one-sided ({side}) limit",
            OneSidedLimitWarning, stacklevel=2)
    return 2.0 * r_dx(V, m, rho.x, rho.y, rho.eta, side=side)


# ---------------------------------------------------------------------------
# Classification

class ClassTag(enum.Enum):
    OFFSHELL = "OffShell"
    INTERIOR = "Interior"
    HYPERBOLIC = "Hyperbolic"
    GLANCING2 = "Glancing2"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class Classification:
    tag: ClassTag
    p: float
    f: float                    # defining-function value, here x
    hp_f: float                 # 2 xi
    hp2_f: float | None         # 2 dr/dx, None when not evaluable


def classify(V, m, rho: PhasePoint, tol: float) -> Classification:
    """Partition a phase point by its position relative to the interface.

    OffShell if |p| > tol; Interior if |x| > tol; Hyperbolic if the flow
    meets the interface transversally (|2 xi| > tol); Glancing2 if the
    tangency is of exactly second order; Degenerate otherwise.
    """
    if not tol > 0.0:
        raise PreconditionError(f"classification tolerance must be > 0: {tol}")
    p = hamiltonian(V, m, rho)
    f = rho.x
    hpf = 2.0 * rho.xi
    hp2f = None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OneSidedLimitWarning)
            hp2f = normal_acceleration(V, m, rho)
    except (UnsupportedRegularityError, SingularPointError):
        hp2f = None

    if abs(p) > tol:
        tag = ClassTag.OFFSHELL
    elif abs(f) > tol:
        tag = ClassTag.INTERIOR
    elif abs(hpf) > tol:
        tag = ClassTag.HYPERBOLIC
    elif hp2f is not None and abs(hp2f) > tol:
        tag = ClassTag.GLANCING2
    else:
        tag = ClassTag.DEGENERATE
    return Classification(tag, p, f, hpf, hp2f)


# ---------------------------------------------------------------------------
# Smooth-region stepping

def _solver_tols(tol: float) -> float:
    return min(max(tol * 1e-2, 1e-13), 1e-3)


def _hamilton_rhs(V, m):
    if m.dim == 1:
        def rhs(t, z):
            x, xi = z
            return (2.0 * xi, r_dx(V, m, x))
    else:
        def rhs(t, z):
            x, xi, y, eta = z
            return (2.0 * xi,
                    r_dx(V, m, x, y, eta),
                    -r_deta(V, m, x, y, eta),
                    r_dy(V, m, x, y, eta))
    return rhs


@dataclass
class SmoothStepResult:
    point: PhasePoint
    t_elapsed: float
    interface_hit: bool
    hit_time: float | None
    times: np.ndarray           # relative sample times, includes 0 and end
    states: np.ndarray


def _event_safe_cap(V, m, z0, band):
    """Step-size cap making interface dives span several solver steps.

    A trajectory that enters |x| < band and turns around needs at least
    sqrt(band / sup|dr/dx|) of time to reach the interface, so capping the
    step at a quarter of that guarantees the band events see a sign change
    even for grazing passages.
    """
    y = z0[2] if len(z0) > 2 else 0.0
    eta = z0[3] if len(z0) > 3 else 0.0
    bound = 1e-2
    for px in (band, band / 4, band / 16, -band, -band / 4, -band / 16):
        try:
            bound = max(bound, abs(r_dx(V, m, px, y, eta)))
        except (UnsupportedRegularityError, SingularPointError):
            continue
    return 0.25 * math.sqrt(band / bound)


def _run_smooth(V, m, z0, dt, tol, stop_abs_x=None, stop_at_zero=False):
    """solve_ivp wrapper; stops on inward band crossings or on x = 0."""
    events = []
    max_step = np.inf
    if stop_at_zero:
        def ev0(t, z):
            return z[0]
        ev0.terminal = True
        ev0.direction = 0
        events.append(ev0)
        max_step = _event_safe_cap(V, m, z0, DEFAULT_BAND)
    if stop_abs_x is not None:
        a = stop_abs_x

        def ev_plus(t, z):
            return z[0] - a
        ev_plus.terminal = True
        ev_plus.direction = -1.0   # crossing downward: approaching from x > a

        def ev_minus(t, z):
            return z[0] + a
        ev_minus.terminal = True
        ev_minus.direction = 1.0   # crossing upward: approaching from x < -a
        events.extend([ev_plus, ev_minus])
        max_step = _event_safe_cap(V, m, z0, stop_abs_x)

    rt = _solver_tols(tol)
    sol = solve_ivp(_hamilton_rhs(V, m), (0.0, dt), np.asarray(z0, float),
                    method="DOP853", rtol=rt, atol=rt,
                    events=events or None, max_step=max_step,
                    dense_output=False)
    if sol.status == -1:
        raise PreconditionError(f"integration step failed: {sol.message}")
    hit = sol.status == 1
    return sol, hit


def step_smooth(V, m, rho: PhasePoint, dt: float, tol: float = DEFAULT_TOL
                ) -> SmoothStepResult:
    """One adaptive Runge-Kutta advance by dt (dt may be negative).

    For non-smooth potentials the step refuses to cross the interface: it
    returns the truncated state flagged interface_hit with the hit time.
    """
    if dt == 0.0:
        z = rho.as_array(m.dim)
        return SmoothStepResult(rho, 0.0, False, None,
                                np.array([0.0]), z.reshape(1, -1))
    guard = V.tag is not RegularityTag.SMOOTH
    sol, hit = _run_smooth(V, m, rho.as_array(m.dim), dt, tol,
                           stop_at_zero=guard)
    times = sol.t
    states = sol.y.T
    t_end = float(times[-1])
    return SmoothStepResult(PhasePoint.from_array(states[-1], m.dim),
                            t_end, hit, t_end if hit else None,
                            times, states)


# ---------------------------------------------------------------------------
# Transversal interface crossing, integrated in x

@dataclass
class CrossingResult:
    point: PhasePoint
    t_elapsed: float
    times: np.ndarray           # relative times along the crossing
    states: np.ndarray
    time_limited: bool = False


def cross_interface(V, m, rho: PhasePoint, x_exit: float,
                    tol: float = DEFAULT_TOL, xi_min: float = DEFAULT_XI_MIN,
                    time_direction: float = 1.0,
                    t_limit: float | None = None) -> CrossingResult:
    """Carry rho across the interface to x = x_exit, parametrized by x.

    The normal momentum is reconstructed from the conservation law

        xi(x)^2 = xi0^2 + r(x, y, eta) - r(x0, y0, eta0),

    so only increments of r are consumed and p is conserved to rounding.
    The remaining unknowns (t, y, eta) satisfy a continuous-coefficient
    system in x.  If xi^2 falls below xi_min^2 en route the crossing
    degenerates toward a tangency and NearGlancingError tells the caller
    to reclassify.
    """
    if not V.tag.at_least(RegularityTag.W11):
        raise UnsupportedRegularityError(
            "interface crossing requires an absolutely continuous potential "
            "(W11 or better); jump potentials refract no unique trajectory")
    x0, xi0 = rho.x, rho.xi
    if abs(xi0) < xi_min:
        raise NearGlancingError(
            f"|xi| = {abs(xi0):.3e} below crossing floor {xi_min:.1e}; "
            "reclassify toward glancing", point=rho)
    dx_total = x_exit - x0
    if dx_total == 0.0:
        return CrossingResult(rho, 0.0, np.array([0.0]),
                              rho.as_array(m.dim).reshape(1, -1))
    s_x = math.copysign(1.0, dx_total)
    if s_x != math.copysign(1.0, xi0) * math.copysign(1.0, time_direction):
        raise PreconditionError(
            "exit side inconsistent with the direction of motion: "
            f"x: {x0} -> {x_exit} with xi = {xi0}, time direction "
            f"{time_direction:+.0f}")

    dim = m.dim
    r0 = r_value(V, m, x0, rho.y, rho.eta)
    e0 = xi0**2
    s_xi = math.copysign(1.0, xi0)
    q_floor = xi_min**2

    def q_of(x, w):
        if dim == 1:
            return e0 + r_value(V, m, x) - r0
        return e0 + r_value(V, m, x, w[1], w[2]) - r0

    def rhs(x, w):
        q = q_of(x, w)
        xi = s_xi * math.sqrt(max(q, 0.25 * q_floor))
        inv = 1.0 / (2.0 * xi)
        if dim == 1:
            return (inv,)
        y, eta = w[1], w[2]
        return (inv, -r_deta(V, m, x, y, eta) * inv,
                r_dy(V, m, x, y, eta) * inv)

    def ev_floor(x, w):
        return q_of(x, w) - q_floor
    ev_floor.terminal = True
    ev_floor.direction = -1.0

    events = [ev_floor]
    if t_limit is not None:
        lim = abs(t_limit)

        def ev_time(x, w):
            return abs(w[0]) - lim
        ev_time.terminal = True
        ev_time.direction = 1.0
        events.append(ev_time)

    # split at the interface so each piece has smooth-in-x coefficients
    if (x0 < 0.0 < x_exit) or (x_exit < 0.0 < x0):
        pieces = [(x0, 0.0), (0.0, x_exit)]
    else:
        pieces = [(x0, x_exit)]

    rt = _solver_tols(tol)
    w = np.zeros(1 if dim == 1 else 3)
    if dim == 2:
        w[1], w[2] = rho.y, rho.eta
    xs = [np.array([x0])]
    ws = [w.reshape(1, -1).copy()]
    stopped = None
    for a, b in pieces:
        if a == b:
            continue
        sol = solve_ivp(rhs, (a, b), w, method="DOP853", rtol=rt, atol=rt,
                        events=events)
        if sol.status == -1:
            raise PreconditionError(f"crossing integration failed: {sol.message}")
        xs.append(sol.t[1:])
        ws.append(sol.y.T[1:])
        w = sol.y[:, -1].copy()
        if sol.status == 1:
            which = [i for i, te in enumerate(sol.t_events) if te.size]
            stopped = ("floor" if 0 in which else "time", float(sol.t[-1]))
            break

    x_path = np.concatenate(xs)
    w_path = np.vstack(ws)
    t_path = w_path[:, 0]

    def point_at(i):
        x = float(x_path[i])
        wi = w_path[i]
        q = q_of(x, wi)
        xi = s_xi * math.sqrt(max(q, 0.0))
        if dim == 1:
            return PhasePoint(x, xi)
        return PhasePoint(x, xi, float(wi[1]), float(wi[2]))

    states = np.vstack([point_at(i).as_array(dim) for i in range(len(x_path))])

    if stopped is not None and stopped[0] == "floor":
        raise NearGlancingError(
            f"|xi| fell below the crossing floor near x = {stopped[1]:.6g}; "
            "reclassify toward glancing",
            point=point_at(len(x_path) - 1),
            t_elapsed=float(t_path[-1]))

    end = point_at(len(x_path) - 1)
    return CrossingResult(end, float(t_path[-1]), t_path.copy(), states,
                          time_limited=stopped is not None)


# ---------------------------------------------------------------------------
# Glancing continuation

def glancing_modulus(V, m, rho0: PhasePoint, t: float,
                     window=None, n_window: int = 17) -> float:
    """Remainder modulus controlling the tangent continuation:

        R(t) = integral_{|s| <= 2 |dr/dx(rho0)| t^2} sup |d2r/dx2(s, ., .)| ds + t

    The sup runs over a compact (y, eta) window; by default just the
    point (y0, eta0).  Nondecreasing in t with R(0+) = 0.
    """
    if not V.tag.at_least(RegularityTag.W21):
        raise UnsupportedRegularityError(
            "remainder modulus needs an integrable second x-derivative "
            "(W21 or smoother)")
    if not t > 0.0:
        raise PreconditionError(f"modulus is defined for t > 0, got {t}")
    a = 2.0 * abs(r_dx(V, m, rho0.x, rho0.y, rho0.eta)) * t**2
    if a == 0.0:
        return t

    if window is None or m.dim == 1:
        probes = [(rho0.y, rho0.eta)]
    else:
        (y_lo, y_hi), (e_lo, e_hi) = window
        ys = np.linspace(y_lo, y_hi, n_window)
        es = np.linspace(e_lo, e_hi, n_window)
        probes = [(yy, ee) for yy in ys for ee in es]

    def integrand(s):
        return max(abs(r_dxx(V, m, s, yy, ee)) for yy, ee in probes)

    val, _ = quad(integrand, -a, a, points=[0.0], limit=200,
                  epsabs=1e-13, epsrel=1e-12)
    return float(val) + t


@dataclass
class GlancingSegment:
    point: PhasePoint
    t_span: float
    times: np.ndarray
    states: np.ndarray
    measured_c: float           # sup |x(t) - A t^2| / (t^2 R(t)) on samples
    modulus_end: float          # R(|t_span|)
    leading_coefficient: float  # A = dr/dx(rho0)


def _expansion(V, m, rho0: PhasePoint):
    """Second-order launch coefficients at a (near-)tangency point.

    The expansion is exact in the leading parabola A t^2 for launches with
    x0 = xi0 = 0; tiny admissible offsets enter linearly.
    """
    A = r_dx(V, m, rho0.x, rho0.y, rho0.eta)
    x0, xi0 = rho0.x, rho0.xi
    if m.dim == 1:
        def ev(t):
            return np.array([x0 + 2.0 * xi0 * t + A * t**2, xi0 + A * t])
        return A, ev
    re = r_deta(V, m, rho0.x, rho0.y, rho0.eta)
    ry = r_dy(V, m, rho0.x, rho0.y, rho0.eta)
    y_, e_ = rho0.y, rho0.eta
    w = m.dual(rho0.x, y_)
    w_y = m.dual_y(rho0.x, y_)
    w_yy = m.dual_yy(rho0.x, y_)
    r_ee = -2.0 * w
    r_ye = -2.0 * w_y * e_
    r_yy = -V.eval(rho0.x, y_, dy_order=2) - w_yy * e_**2
    y2 = 0.5 * (r_ye * re - r_ee * ry)
    e2 = 0.5 * (r_ye * ry - r_yy * re)

    def ev(t):
        return np.array([x0 + 2.0 * xi0 * t + A * t**2,
                         xi0 + A * t,
                         y_ - re * t + y2 * t**2,
                         e_ + ry * t + e2 * t**2])
    return A, ev


def step_glancing(V, m, rho0: PhasePoint, t_span: float,
                  tol: float = DEFAULT_TOL, t_inner: float = _T_INNER,
                  modulus_threshold: float = 0.5,
                  c_max: float = 1e3) -> GlancingSegment:
    """Continue the flow through a second-order tangency over [0, t_span].

    Launches from the quadratic expansion on the inner interval
    [0, t_inner], then iterates the integral form of the equations of
    motion (Picard) on a fixed grid, sampling dr/dx only at x != 0 along
    the current iterate.  The returned segment's distance to the leading
    parabola is measured against t^2 R(t) and reported; a blow-up of that
    ratio raises GlancingDiagnosticError with the residual profile.
    """
    if not V.tag.at_least(RegularityTag.W21):
        raise UnsupportedRegularityError(
            "glancing continuation requires W21 or smoother regularity")
    if t_span == 0.0:
        raise PreconditionError("glancing step needs a nonzero time span")
    cls = classify(V, m, rho0, math.sqrt(max(tol, 1e-16)))
    if cls.tag is not ClassTag.GLANCING2:
        raise PreconditionError(
            f"glancing continuation from a {cls.tag.value} point "
            f"(witnesses p={cls.p:.3e}, x={cls.f:.3e}, 2xi={cls.hp_f:.3e})")

    tau_end = abs(t_span)
    modulus_end = glancing_modulus(V, m, rho0, tau_end)
    if modulus_end >= modulus_threshold:
        raise PreconditionError(
            f"time span too long for the tangent continuation: "
            f"R({tau_end:g}) = {modulus_end:.3g} >= {modulus_threshold}")

    s = math.copysign(1.0, t_span)
    A, expansion_state = _expansion(V, m, rho0)
    dim = m.dim

    inner_tau = np.linspace(0.0, min(t_inner, tau_end), 5)
    inner_states = np.vstack([expansion_state(s * ti) for ti in inner_tau])

    if tau_end <= t_inner:
        times = s * inner_tau
        end = PhasePoint.from_array(inner_states[-1], dim)
        return GlancingSegment(end, t_span, times, inner_states,
                               measured_c=0.0, modulus_end=modulus_end,
                               leading_coefficient=A)

    n = int(np.clip((tau_end - t_inner) / 5e-5, 256, 20000))
    tau = np.linspace(t_inner, tau_end, n + 1)
    z = np.vstack([expansion_state(s * ti) for ti in tau])
    z_anchor = expansion_state(s * t_inner)
    rhs = _hamilton_rhs(V, m)

    def apply_picard(zs):
        f = np.array([rhs(0.0, row) for row in zs])
        integral = np.zeros_like(zs)
        dt_ = np.diff(tau)[:, None]
        increments = 0.5 * (f[1:] + f[:-1]) * dt_
        integral[1:] = np.cumsum(increments, axis=0)
        return z_anchor[None, :] + s * integral

    converged = False
    for _ in range(120):
        z_new = apply_picard(z)
        delta = float(np.max(np.abs(z_new - z)))
        z = z_new
        if delta < 1e-13 * (1.0 + float(np.max(np.abs(z)))):
            converged = True
            break
    if not converged:
        raise GlancingDiagnosticError(
            "Picard iteration for the tangent continuation did not "
            f"converge (last update {delta:.3e})",
            profile={"tau": tau, "states": z})

    # certificate: |x(t) - A t^2| <= C t^2 R(t) with C bounded
    idx = np.unique(np.linspace(0, n, 48).astype(int))
    ratios = []
    for i in idx:
        ti = tau[i]
        if ti <= 0.0:
            continue
        parabola = rho0.x + 2.0 * rho0.xi * (s * ti) + A * ti**2
        resid = abs(z[i, 0] - parabola)
        ratios.append(resid / (ti**2 * glancing_modulus(V, m, rho0, ti)))
    measured_c = max(ratios) if ratios else 0.0
    if measured_c > c_max:
        raise GlancingDiagnosticError(
            f"tangent-expansion certificate failed: measured ratio "
            f"{measured_c:.3g} exceeds {c_max:g}",
            profile={"tau": tau[idx], "ratio": ratios})

    times = np.concatenate([s * inner_tau, s * tau[1:]])
    states = np.vstack([inner_states, z[1:]])
    end = PhasePoint.from_array(states[-1], dim)
    return GlancingSegment(end, t_span, times, states, measured_c,
                           modulus_end, A)


# ---------------------------------------------------------------------------
# Full trajectories

REGIME_SMOOTH = "smooth"
REGIME_CROSSING = "hyperbolic-crossing"
REGIME_GLANCING = "glancing"


@dataclass
class Segment:
    t0: float
    t1: float
    regime: str
    info: dict = field(default_factory=dict)


@dataclass
class Trajectory:
    dim: int
    times: np.ndarray
    states: np.ndarray
    p_values: np.ndarray
    regimes: list[str]
    segments: list[Segment]
    energy_drift: float
    drift_budget: float
    status: str

    @property
    def endpoint(self) -> PhasePoint:
        return PhasePoint.from_array(self.states[-1], self.dim)

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def point(self, i: int) -> PhasePoint:
        return PhasePoint.from_array(self.states[i], self.dim)


class _TrajectoryBuilder:
    def __init__(self, V, m, rho0, tol, T):
        self.V, self.m = V, m
        self.dim = m.dim
        self.p0 = hamiltonian(V, m, rho0)
        self.times = [0.0]
        self.states = [rho0.as_array(m.dim)]
        self.regimes = ["smooth"]
        self.segments: list[Segment] = []
        self.tol = tol
        self.budget = tol * (1.0 + abs(T))

    def extend(self, rel_times, states, t_offset, regime, info=None):
        rel_times = np.asarray(rel_times, float)
        states = np.asarray(states, float)
        start = 1 if rel_times.size and rel_times[0] == 0.0 else 0
        for k in range(start, len(rel_times)):
            self.times.append(t_offset + float(rel_times[k]))
            self.states.append(states[k])
            self.regimes.append(regime)
        if rel_times.size:
            t0, t1 = t_offset, t_offset + float(rel_times[-1])
            if self.segments and self.segments[-1].regime == regime:
                self.segments[-1].t1 = t1
                if info:
                    self.segments[-1].info.update(info)
            else:
                self.segments.append(Segment(t0, t1, regime, info or {}))

    def finish(self, status):
        times = np.array(self.times)
        states = np.vstack(self.states)
        p_vals = np.array([
            hamiltonian(self.V, self.m,
                        PhasePoint.from_array(zs, self.dim))
            for zs in states])
        drift = float(np.max(np.abs(p_vals - self.p0)))
        return Trajectory(self.dim, times, states, p_vals, self.regimes,
                          self.segments, drift, self.budget, status)


def _through_band_window(V, m, rho, band, xi_min):
    """Time needed to traverse or bounce out of the collar band."""
    a = abs(r_dx(V, m, rho.x, rho.y, rho.eta))
    a = max(a, 1e-6)
    return 2.0 * math.sqrt(2.0 * band / a) + 4.0 * xi_min / a


def _glancing_window(V, m, rho, remaining, band, threshold):
    a = abs(r_dx(V, m, rho.x, rho.y, rho.eta))
    t_w = min(abs(remaining), math.sqrt(2.0 * band / max(a, 1e-6)))
    for _ in range(60):
        if t_w <= 0.0:
            break
        if glancing_modulus(V, m, rho, t_w) < threshold:
            break
        t_w *= 0.5
    return t_w


def integrate(V: ConormalPotential, m: MetricModel, rho0: PhasePoint,
              T: float, tol: float = DEFAULT_TOL, band: float = DEFAULT_BAND,
              xi_min: float = DEFAULT_XI_MIN,
              max_events: int = 10000) -> Trajectory:
    """Maximal trajectory of the Hamilton flow from rho0 over [0, T].

    Dispatches between smooth stepping, the x-parametrized interface
    crossing, and the glancing continuation by classifying each interface
    encounter.  Degenerate encounters end the trajectory with a diagnostic
    status instead of guessing a continuation; T may be negative.
    """
    b = _TrajectoryBuilder(V, m, rho0, tol, T)
    if T == 0.0:
        return b.finish("completed")

    if V.tag is RegularityTag.SMOOTH:
        sol, _ = _run_smooth(V, m, rho0.as_array(m.dim), T, tol)
        b.extend(sol.t, sol.y.T, 0.0, REGIME_SMOOTH)
        return b.finish("completed")

    tol_cls = math.sqrt(max(tol, 1e-16))
    sdir = math.copysign(1.0, T)
    state = {"t": 0.0, "z": rho0.as_array(m.dim)}
    eps_t = 1e-14 * (1.0 + abs(T))

    def remaining():
        return T - state["t"]

    def advance(rel_times, states, regime, dt, info=None):
        b.extend(rel_times, states, state["t"], regime, info)
        state["t"] += dt
        state["z"] = np.asarray(states[-1], float).copy()

    def handle_interface():
        """Dispatch at a collar point; returns a status or None to go on."""
        rho = PhasePoint.from_array(state["z"], m.dim)
        cls = classify(V, m, rho, tol_cls)
        if cls.tag is ClassTag.GLANCING2:
            if not V.tag.at_least(RegularityTag.W21):
                raise UnsupportedRegularityError(
                    "glancing encounter needs W21 regularity; potential "
                    f"is {V.tag.name}")
            t_w = sdir * _glancing_window(V, m, rho, remaining(), band, 0.5)
            seg = step_glancing(V, m, rho, t_w, tol)
            advance(seg.times, seg.states, REGIME_GLANCING, t_w,
                    {"measured_c": seg.measured_c})
            return None
        if cls.tag is ClassTag.DEGENERATE:
            return "degenerate-ended"
        if abs(rho.xi) >= xi_min:
            if V.tag is RegularityTag.JUMP:
                raise UnsupportedRegularityError(
                    "interface encounter with a jump potential: the flow "
                    "is not defined across the discontinuity")
            x_exit = math.copysign(band, rho.xi * sdir)
            try:
                cr = cross_interface(V, m, rho, x_exit, tol, xi_min,
                                     time_direction=sdir, t_limit=remaining())
            except NearGlancingError:
                return _creep()
            advance(cr.times, cr.states, REGIME_CROSSING, cr.t_elapsed)
            return None
        return _creep()

    def _creep():
        """Near-tangent passage: direct stepping, valid for continuous
        coefficient fields (W21 and smoother)."""
        rho = PhasePoint.from_array(state["z"], m.dim)
        if not V.tag.at_least(RegularityTag.W21):
            return "near-glancing-ended"
        t_w = sdir * min(abs(remaining()),
                         _through_band_window(V, m, rho, band, xi_min))
        sol, _ = _run_smooth(V, m, state["z"], t_w, tol)
        advance(sol.t, sol.y.T, REGIME_GLANCING, float(sol.t[-1]))
        return None

    status = "completed"
    at_interface = abs(rho0.x) < band
    for _ in range(max_events):
        if abs(remaining()) <= eps_t:
            break
        if at_interface:
            verdict = handle_interface()
            at_interface = False
            if verdict is not None:
                status = verdict
                break
            continue
        # away from the collar: smooth stepping until the band is reached.
        # Jump potentials step right up to the interface instead (their
        # derivative field is smooth off x = 0) and refuse the encounter.
        if V.tag is RegularityTag.JUMP:
            sol, hit = _run_smooth(V, m, state["z"], remaining(), tol,
                                   stop_at_zero=True)
            advance(sol.t, sol.y.T, REGIME_SMOOTH, float(sol.t[-1]))
            if hit:
                raise UnsupportedRegularityError(
                    "interface encounter with a jump potential: the flow "
                    "is not defined across the discontinuity")
        else:
            sol, hit = _run_smooth(V, m, state["z"], remaining(), tol,
                                   stop_abs_x=band)
            advance(sol.t, sol.y.T, REGIME_SMOOTH, float(sol.t[-1]))
            at_interface = hit
        if not hit:
            break
    else:
        status = "iteration-limit"

    return b.finish(status)


# ---------------------------------------------------------------------------
# Box transport for the measure comparison

@dataclass
class FlowBoxResult:
    entry_points: np.ndarray
    image_points: np.ndarray
    hypothesis_infimum: float    # inf over samples, times of |2 xi| + |x|
    second_order_infimum: float  # same witness with |2 dr/dx| added
    hypothesis_ok: bool
    failures: list[int]
    n_samples: int


def flow_box(V, m, box, T: float, tol: float = DEFAULT_TOL,
             n_per_axis: int | None = None,
             hyp_threshold: float | None = None, **integrate_kwargs
             ) -> FlowBoxResult:
    """Transport a deterministic sample grid of a phase-space box by time T.

    Along every sample trajectory the transversality witnesses
    |2 xi| + |x| (and the variant including |2 dr/dx|) are minimized; the
    measured infima decide whether the invariance comparison applies.
    Samples that fail to integrate are reported by index, and the
    transported cloud of the successes is still returned.
    """
    intervals = box.intervals
    if len(intervals) != 2 * m.dim:
        raise ConfigurationError(
            f"box has {len(intervals)} intervals; metric dimension {m.dim} "
            f"needs {2 * m.dim}")
    if n_per_axis is None:
        n_per_axis = 20 if m.dim == 1 else 5
    axes = [np.linspace(lo, hi, n_per_axis) for lo, hi in intervals]
    mesh = np.meshgrid(*axes, indexing="ij")
    samples = np.stack([g.ravel() for g in mesh], axis=1)

    if hyp_threshold is None:
        hyp_threshold = math.sqrt(max(tol, 1e-16))

    entries, images, failures = [], [], []
    inf_hyp = math.inf
    inf_cor = math.inf
    for i, row in enumerate(samples):
        rho = PhasePoint.from_array(row, m.dim)
        try:
            traj = integrate(V, m, rho, T, tol, **integrate_kwargs)
        except Exception:
            failures.append(i)
            continue
        # witnesses come from every observed sample, including the partial
        # data of trajectories that ended early
        wit = np.abs(2.0 * traj.states[:, 1]) + np.abs(traj.states[:, 0])
        inf_hyp = min(inf_hyp, float(np.min(wit)))
        for k in range(len(traj.times)):
            pt = traj.point(k)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", OneSidedLimitWarning)
                    acc = abs(normal_acceleration(V, m, pt))
            except (UnsupportedRegularityError, SingularPointError):
                continue
            inf_cor = min(inf_cor, float(wit[k]) + acc)
        if not traj.completed:
            failures.append(i)
            continue
        entries.append(row)
        images.append(traj.states[-1])

    entries_arr = np.vstack(entries) if entries else np.zeros((0, 2 * m.dim))
    images_arr = np.vstack(images) if images else np.zeros((0, 2 * m.dim))
    return FlowBoxResult(entries_arr, images_arr,
                         hypothesis_infimum=inf_hyp,
                         second_order_infimum=inf_cor,
                         hypothesis_ok=inf_hyp > hyp_threshold,
                         failures=failures,
                         n_samples=len(samples))
