"""Potentials with a catalogued singularity in x along the interface x = 0.

A potential is V(x, y) = smooth(x, y) + c(y) * profile(x) where the profile
comes from a fixed catalog:

    step      1_{x>0}            (discontinuous)
    kink      |x|                (Lipschitz, second derivative not integrable)
    xlog      x log|x|           (C^0, first derivative log-singular)
    powkink   x |x|              (C^1, bounded second derivative)
    power     |x|^{1+alpha}      (C^1, integrable second derivative), 0<alpha<1

The catalog fixes the regularity class in the normal variable, which the
flow engine dispatches on.  The strength c(y) is a polynomial in y, so
tangential derivatives are harmless at every order.

Value convention at x = 0: derivatives that are only defined almost
everywhere are resolved by their limit from x > 0 (selectable per call).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (ConfigurationError, SingularPointError,
                     UnsupportedRegularityError)


class RegularityTag(enum.Enum):
    """Sobolev class of V in the normal variable; rank orders by smoothness."""

    JUMP = 0
    W11 = 1
    W21 = 2
    SMOOTH = 3

    @property
    def rank(self) -> int:
        return self.value

    def at_least(self, other: "RegularityTag") -> bool:
        return self.rank >= other.rank


@dataclass(frozen=True)
class PolynomialSmooth:
    """Polynomial in (x, y): sum_ij coeffs[i][j] x^i y^j.

    Exact derivative evaluators of any order come for free, which keeps
    every regularity claim certifiable.
    """

    coeffs: tuple[tuple[float, ...], ...] = ((0.0,),)

    def eval(self, x: float, y: float = 0.0, dx_order: int = 0,
             dy_order: int = 0) -> float:
        total = 0.0
        for i, row in enumerate(self.coeffs):
            if i < dx_order:
                continue
            fx = math.perm(i, dx_order) * x ** (i - dx_order)
            for j, c in enumerate(row):
                if c == 0.0 or j < dy_order:
                    continue
                total += c * fx * math.perm(j, dy_order) * y ** (j - dy_order)
        return total


def smooth_zero() -> PolynomialSmooth:
    return PolynomialSmooth(((0.0,),))


def smooth_const(a: float) -> PolynomialSmooth:
    return PolynomialSmooth(((float(a),),))


def smooth_linear(a: float, b: float, b_y: float = 0.0) -> PolynomialSmooth:
    """a + b x + b_y y."""
    return PolynomialSmooth(((float(a), float(b_y)), (float(b),)))


SMOOTH_CATALOG = ("zero", "const", "linear")

_SINGULAR_TAGS = {
    "step": RegularityTag.JUMP,
    "kink": RegularityTag.W11,
    "xlog": RegularityTag.W11,
    "powkink": RegularityTag.W21,
    "power": RegularityTag.W21,
}


def _profile_step(x, order, side):
    if order == 0:
        if x == 0.0:
            return 1.0 if side == "+" else 0.0
        return 1.0 if x > 0.0 else 0.0
    if x == 0.0:
        raise UnsupportedRegularityError(
            "step profile has no derivative at x = 0")
    return 0.0


def _profile_kink(x, order, side):
    if order == 0:
        return abs(x)
    if order == 1:
        if x == 0.0:
            return 1.0 if side == "+" else -1.0
        return math.copysign(1.0, x)
    if x == 0.0:
        raise UnsupportedRegularityError(
            "kink profile has no second derivative at x = 0")
    return 0.0


def _profile_xlog(x, order, side):
    if x == 0.0:
        if order == 0:
            return 0.0  # continuous extension
        raise SingularPointError(
            "x log|x| has a logarithmic derivative singularity at x = 0")
    if order == 0:
        return x * math.log(abs(x))
    if order == 1:
        return math.log(abs(x)) + 1.0
    return 1.0 / x


def _profile_powkink(x, order, side):
    if order == 0:
        return x * abs(x)
    if order == 1:
        return 2.0 * abs(x)
    if x == 0.0:
        return 2.0 if side == "+" else -2.0
    return 2.0 * math.copysign(1.0, x)


def _make_profile_power(alpha):
    def profile(x, order, side):
        if order == 0:
            return abs(x) ** (1.0 + alpha)
        if order == 1:
            if x == 0.0:
                return 0.0
            return (1.0 + alpha) * abs(x) ** alpha * math.copysign(1.0, x)
        if x == 0.0:
            raise SingularPointError(
                "|x|^{1+alpha} has an unbounded second derivative at x = 0")
        return (1.0 + alpha) * alpha * abs(x) ** (alpha - 1.0)
    return profile


@dataclass(frozen=True)
class SingularPart:
    """Catalog profile times a y-polynomial strength c(y) = sum c_k y^k."""

    kind: str
    c: tuple[float, ...] = (1.0,)
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in _SINGULAR_TAGS:
            raise ConfigurationError(
                f"unknown singular profile {self.kind!r}; "
                f"catalog: {sorted(_SINGULAR_TAGS)}")
        if self.kind == "power":
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise ConfigurationError(
                    "power profile needs 0 < alpha < 1")
        elif self.alpha is not None:
            raise ConfigurationError(
                f"alpha is only meaningful for the power profile")

    @property
    def tag(self) -> RegularityTag:
        return _SINGULAR_TAGS[self.kind]

    def strength(self, y: float, dy_order: int = 0) -> float:
        total = 0.0
        for k, ck in enumerate(self.c):
            if k < dy_order or ck == 0.0:
                continue
            total += ck * math.perm(k, dy_order) * y ** (k - dy_order)
        return total

    def profile(self, x: float, dx_order: int, side: str) -> float:
        if self.kind == "power":
            return _make_profile_power(self.alpha)(x, dx_order, side)
        fn = {"step": _profile_step, "kink": _profile_kink,
              "xlog": _profile_xlog, "powkink": _profile_powkink}[self.kind]
        return fn(x, dx_order, side)


# Mollifier: the standard even bump on (-1, 1), normalized to unit mass.

@lru_cache(maxsize=8)
def _gauss_legendre(n: int):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return nodes, weights


def _bump_raw(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ui**2))
    return out


@lru_cache(maxsize=1)
def _bump_mass() -> float:
    nodes, weights = _gauss_legendre(200)
    return float(np.sum(weights * _bump_raw(nodes)))


def mollifier(u: np.ndarray, order: int = 0) -> np.ndarray:
    """The bump phi and its first two derivatives on (-1, 1)."""
    u = np.asarray(u, dtype=float)
    phi = _bump_raw(u) / _bump_mass()
    if order == 0:
        return phi
    with np.errstate(divide="ignore", invalid="ignore"):
        q = 1.0 - u**2
        g1 = np.where(np.abs(u) < 1.0, -2.0 * u / q**2, 0.0)
        if order == 1:
            return phi * g1
        g2 = np.where(np.abs(u) < 1.0, -2.0 / q**2 - 8.0 * u**2 / q**3, 0.0)
        return phi * (g2 + g1**2)


@dataclass(frozen=True)
class MollifiedPart:
    """Convolution of a catalog profile with phi_eps in x.

    Derivatives land on the mollifier, so every order is available even
    when the base profile is rough:

        m^(k)(x) = eps^{-k} * integral base(x - eps u) phi^(k)(u) du.

    Evaluated by fixed-order Gauss-Legendre quadrature split at the
    profile's singular point.  The bump is smooth but not analytic at the
    support endpoints, so convergence in the order is subgeometric; 192
    nodes put all three derivative orders at ~1e-12 absolute.
    """

    base: SingularPart
    eps: float
    quad_order: int = 192

    def strength(self, y: float, dy_order: int = 0) -> float:
        return self.base.strength(y, dy_order)

    def profile(self, x: float, dx_order: int, side: str) -> float:
        nodes, weights = _gauss_legendre(self.quad_order)
        u_star = x / self.eps  # base argument crosses 0 here
        pieces = []
        if -1.0 < u_star < 1.0:
            pieces = [(-1.0, u_star), (u_star, 1.0)]
        else:
            pieces = [(-1.0, 1.0)]
        total = 0.0
        for lo, hi in pieces:
            mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
            if half <= 0.0:
                continue
            u = mid + half * nodes
            base_vals = np.array(
                [self.base.profile(x - self.eps * ui, 0, "+") for ui in u])
            total += half * float(
                np.sum(weights * base_vals * mollifier(u, dx_order)))
        return total / self.eps**dx_order


@dataclass(frozen=True)
class ConormalPotential:
    """V(x, y) = smooth(x, y) + singular-in-x part; real valued.

    The regularity tag is derived from the singular part, never user-set.
    """

    smooth: PolynomialSmooth
    singular: SingularPart | MollifiedPart | None = None

    @property
    def tag(self) -> RegularityTag:
        if self.singular is None or isinstance(self.singular, MollifiedPart):
            return RegularityTag.SMOOTH
        return self.singular.tag

    def eval(self, x: float, y: float = 0.0, dx_order: int = 0,
             dy_order: int = 0, side: str = "+") -> float:
        """Pointwise classical evaluation of d^dx_order d^dy_order V.

        Away from x = 0 every catalog entry is smooth and any order up to 2
        is available.  At x = 0 the one-sided convention applies where the
        two-sided limit fails; orders the class does not admit there raise
        UnsupportedRegularityError, and non-removable singularities raise
        SingularPointError.
        """
        if dx_order not in (0, 1, 2) or dy_order < 0:
            raise ConfigurationError(
                f"unsupported derivative order dx={dx_order}, dy={dy_order}")
        total = self.smooth.eval(x, y, dx_order, dy_order)
        if self.singular is not None:
            c = self.singular.strength(y, dy_order)
            if c != 0.0:
                total += c * self.singular.profile(x, dx_order, side)
        if not math.isfinite(total):
            raise SingularPointError(
                f"potential evaluation not finite at (x={x}, y={y}, "
                f"dx_order={dx_order})")
        return total

    def __call__(self, x: float, y: float = 0.0) -> float:
        return self.eval(x, y)


def potential(smooth: PolynomialSmooth | None = None,
              singular: str | None = None, c: float | tuple = 1.0,
              alpha: float | None = None) -> ConormalPotential:
    """Convenience builder: potential(smooth_linear(-2, 0), 'kink', 1.0)."""
    sm = smooth if smooth is not None else smooth_zero()
    if singular is None or singular == "none":
        return ConormalPotential(sm, None)
    cs = tuple(float(v) for v in (c if isinstance(c, (tuple, list)) else (c,)))
    return ConormalPotential(sm, SingularPart(singular, cs, alpha))


def r_symbol(V: ConormalPotential, m, x: float, y: float = 0.0,
             eta: float = 0.0) -> float:
    """r(x, y, eta) = -V(x, y) - h^{11}(x, y) eta^2  (-V for d = 1)."""
    if m.dim == 1:
        return -V.eval(x)
    return -V.eval(x, y) - m.dual(x, y) * eta**2


def mollify(V: ConormalPotential, eps: float) -> ConormalPotential:
    """Smooth V by convolving its singular part with the eps-bump in x.

    The smooth part is untouched.  A potential with no singular part is
    returned unchanged.  The result carries the SMOOTH tag; for continuous
    inputs it converges uniformly to V as eps shrinks.
    """
    if not eps > 0.0:
        raise ConfigurationError(f"mollification width must be > 0, got {eps}")
    if V.singular is None:
        return V
    base = V.singular
    if isinstance(base, MollifiedPart):
        raise ConfigurationError("potential is already mollified")
    return ConormalPotential(V.smooth, MollifiedPart(base, float(eps)))
