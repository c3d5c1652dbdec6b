"""Collar metric model and the interface curvature condition.

Coordinates are Fermi coordinates (x, y) relative to the hypersurface
Y = {x = 0}: x is the signed distance to Y and the metric is

    g = dx^2 + h(x, y) dy^2          (d = 2; for d = 1 there is no y).

The oriented unit normal is N = d/dx.  The shape operator of Y at (0, y)
is built from -(1/2) dh/dx(0, y) raised by 1/h(0, y); its eigenvalues are
the principal curvatures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, UnsupportedRegularityError
from .potentials import ConormalPotential, RegularityTag

ScalarFn = Callable[[float, float], float]


@dataclass(frozen=True)
class MetricModel:
    """Flat-normal collar metric g = dx^2 + h(x,y) dy^2.

    For dim == 1 the tangential factor is absent and all h-callables are
    ignored.  Callables take (x, y) and return floats; h must be positive
    wherever it is queried.
    """

    dim: int
    h: ScalarFn | None = None
    h_x: ScalarFn | None = None
    h_y: ScalarFn | None = None
    h_xx: ScalarFn | None = None
    h_yy: ScalarFn | None = None
    name: str = "custom"
    params: tuple = field(default=())

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigurationError(f"dim must be 1 or 2, got {self.dim}")
        if self.dim == 2 and self.h is None:
            raise ConfigurationError("dim=2 metric requires h(x, y)")

    def h_at(self, x: float, y: float = 0.0) -> float:
        """Tangential metric coefficient, checked positive."""
        if self.dim == 1:
            raise ConfigurationError("d=1 metric has no tangential block")
        val = float(self.h(x, y))
        if not val > 0.0:
            raise ConfigurationError(
                f"metric {self.name!r} is not positive definite at "
                f"(x={x}, y={y}): h={val}"
            )
        return val

    def dual(self, x: float, y: float = 0.0) -> float:
        """h^{11}(x, y) = 1/h(x, y)."""
        return 1.0 / self.h_at(x, y)

    def dual_x(self, x: float, y: float = 0.0) -> float:
        g = self.h_at(x, y)
        return -float(self.h_x(x, y)) / g**2

    def dual_y(self, x: float, y: float = 0.0) -> float:
        g = self.h_at(x, y)
        return -float(self.h_y(x, y)) / g**2

    def dual_xx(self, x: float, y: float = 0.0) -> float:
        g = self.h_at(x, y)
        gx = float(self.h_x(x, y))
        gxx = float(self.h_xx(x, y))
        return (2.0 * gx**2 - g * gxx) / g**3

    def dual_yy(self, x: float, y: float = 0.0) -> float:
        g = self.h_at(x, y)
        gy = float(self.h_y(x, y))
        gyy = float(self.h_yy(x, y))
        return (2.0 * gy**2 - g * gyy) / g**3


def flat_metric(dim: int = 1) -> MetricModel:
    """Euclidean collar: h = 1 identically."""
    one = lambda x, y: 1.0
    zero = lambda x, y: 0.0
    if dim == 1:
        return MetricModel(dim=1, name="flat")
    return MetricModel(dim=2, h=one, h_x=zero, h_y=zero, h_xx=zero,
                       h_yy=zero, name="flat")


def power_metric(a: float) -> MetricModel:
    """h(x, y) = (1 + a x)^2; principal curvature -a at the interface."""
    return MetricModel(
        dim=2,
        h=lambda x, y: (1.0 + a * x) ** 2,
        h_x=lambda x, y: 2.0 * a * (1.0 + a * x),
        h_y=lambda x, y: 0.0,
        h_xx=lambda x, y: 2.0 * a**2,
        h_yy=lambda x, y: 0.0,
        name="power",
        params=(a,),
    )


def exp_metric(k: float) -> MetricModel:
    """h(x, y) = exp(2 k x); principal curvature -k at the interface."""
    return MetricModel(
        dim=2,
        h=lambda x, y: np.exp(2.0 * k * x),
        h_x=lambda x, y: 2.0 * k * np.exp(2.0 * k * x),
        h_y=lambda x, y: 0.0,
        h_xx=lambda x, y: 4.0 * k**2 * np.exp(2.0 * k * x),
        h_yy=lambda x, y: 0.0,
        name="exp",
        params=(k,),
    )


METRIC_CATALOG = {"flat": flat_metric, "power": power_metric, "exp": exp_metric}


def metric_from_name(name: str, param: float = 0.0, dim: int = 2) -> MetricModel:
    if name == "flat":
        return flat_metric(dim)
    if name == "power":
        return power_metric(param)
    if name == "exp":
        return exp_metric(param)
    raise ConfigurationError(
        f"unknown metric {name!r}; catalog: {sorted(METRIC_CATALOG)}"
    )


def dual_metric(m: MetricModel, x: float, y: float = 0.0) -> np.ndarray:
    """Inverse tangential metric h^{ij}(x, y) as a (d-1, d-1) matrix.

    For d = 1 the tangential block is empty (shape (0, 0)).
    """
    if m.dim == 1:
        return np.zeros((0, 0))
    return np.array([[m.dual(x, y)]])


def principal_curvatures(m: MetricModel, y: float = 0.0) -> list[float]:
    """Eigenvalues of the interface shape operator at (0, y), ascending.

    Sign convention fixed by the oriented normal N = d/dx: for a unit
    tangent v the normal curvature is <II(v, v), N> = -(1/2) h_x(0,y) / h(0,y).
    """
    if m.dim == 1:
        return []
    return [-0.5 * float(m.h_x(0.0, y)) / m.h_at(0.0, y)]


@dataclass(frozen=True)
class CurvatureCheck:
    """Outcome of the interface non-degeneracy check at one base point."""

    satisfied: bool
    vacuous: bool
    normal_gradient: float      # one-sided dV/dx at (0, y) on the chosen side
    hull: tuple[float, ...]     # endpoints of conv(2 V(0,y) k_j)
    potential_value: float      # V(0, y)

    def __bool__(self) -> bool:
        return self.satisfied


def curvature_condition(m: MetricModel, V: ConormalPotential, y: float = 0.0,
                        side: str = "+") -> CurvatureCheck:
    """Check -dV/dN not in conv(2 V k_1, ..., 2 V k_{d-1}) at (0, y).

    The x-derivative of V is taken one-sided from the indicated side.  When
    V(0, y) >= 0 the tangent energy shell over (0, y) is empty, so the
    condition holds vacuously and the result is flagged.

    For d = 1 the hull is empty and the condition reduces to dV/dx != 0.
    """
    if V.tag is RegularityTag.JUMP:
        raise UnsupportedRegularityError(
            "curvature condition needs a one-sided x-derivative at the "
            "interface; jump potentials have none"
        )
    if side not in ("+", "-"):
        raise ConfigurationError(f"side must be '+' or '-', got {side!r}")

    v0 = V.eval(0.0, y)
    if v0 >= 0.0:
        return CurvatureCheck(satisfied=True, vacuous=True,
                              normal_gradient=float("nan"), hull=(),
                              potential_value=v0)

    dv = V.eval(0.0, y, dx_order=1, side=side)
    if m.dim == 1:
        return CurvatureCheck(satisfied=dv != 0.0, vacuous=False,
                              normal_gradient=dv, hull=(),
                              potential_value=v0)

    hull_points = tuple(2.0 * v0 * k for k in principal_curvatures(m, y))
    lo, hi = min(hull_points), max(hull_points)
    inside = lo <= -dv <= hi
    return CurvatureCheck(satisfied=not inside, vacuous=False,
                          normal_gradient=dv, hull=(lo, hi),
                          potential_value=v0)
