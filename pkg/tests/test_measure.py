"""Husimi densities, box masses, transport invariance, shell masses."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import erf

from conoflow import (ConfigurationError, HypothesisViolationError,
                      PhasePoint, PhaseSpaceBox, WaveState, box_mass,
                      coherent_state, estimate, flat_metric, flow_box,
                      full_window_box, grid_1d, husimi, invariance_defect,
                      potential, propagate, shell_concentration, smooth_const,
                      smooth_zero)
from conoflow.quantum import state_norm

FREE = potential(smooth_zero())
H = 0.01
GRID = grid_1d(-6.0, 6.0, 2**12)
RHO0 = PhasePoint(-1.0, 1.0)
U0 = coherent_state(GRID, H, RHO0)


def gaussian_overlap_peak(h, d=1):
    """|<g,g>|^2/(2 pi h)^d for the normalized window: the peak density."""
    return 1.0 / (2.0 * math.pi * h) ** d


def test_husimi_self_overlap_peak():
    # oracle: the overlap of identical normalized Gaussians is 1, checked
    # by an explicit quadrature of the defining integral
    sigma = math.sqrt(H)
    norm2, _ = quad(lambda x: math.exp(-x**2 / sigma**2)
                    / math.sqrt(math.pi * sigma**2), -10 * sigma, 10 * sigma)
    assert norm2 == pytest.approx(1.0, abs=1e-12)
    assert husimi(U0, RHO0) == pytest.approx(gaussian_overlap_peak(H),
                                             rel=1e-6)


def test_husimi_gaussian_tail():
    far = PhasePoint(RHO0.x + 10 * math.sqrt(H), RHO0.xi)
    assert husimi(U0, far) <= math.exp(-25) * gaussian_overlap_peak(H)


def test_husimi_zero_state():
    zero = WaveState(GRID, np.zeros(GRID.n, dtype=complex), H)
    for rho in (RHO0, PhasePoint(0.0, 0.0)):
        assert husimi(zero, rho) == 0.0


def test_husimi_window_width_guard():
    with pytest.raises(ConfigurationError):
        husimi(U0, RHO0, sigma=10 * math.sqrt(H))


def test_box_mass_total_is_norm_squared():
    assert box_mass(U0, full_window_box(U0)) == pytest.approx(1.0, abs=1e-3)


def test_box_mass_concentration_and_tail():
    s5 = 5 * math.sqrt(H)
    tight = PhaseSpaceBox(((RHO0.x - s5, RHO0.x + s5),
                           (RHO0.xi - s5, RHO0.xi + s5)))
    assert box_mass(U0, tight) >= 0.99
    far = PhaseSpaceBox(((3.0, 4.0), (-2.0, -1.0)))
    assert box_mass(U0, far) <= 1e-6


def test_box_mass_additivity_and_monotonicity():
    full = full_window_box(U0)
    (xl, xh), (kl, kh) = full.intervals
    pieces = [PhaseSpaceBox(((a, b), (c, d)))
              for a, b in ((xl, -1.0), (-1.0, xh))
              for c, d in ((kl, 1.0), (1.0, kh))]
    total = sum(box_mass(U0, p) for p in pieces)
    assert total == pytest.approx(box_mass(U0, full), abs=1e-3)
    inner = PhaseSpaceBox(((-1.3, -0.7), (0.7, 1.3)))
    outer = PhaseSpaceBox(((-1.6, -0.4), (0.4, 1.6)))
    assert box_mass(U0, inner) <= box_mass(U0, outer) + 1e-12


def test_box_mass_resolution_convergence_and_guard():
    box = PhaseSpaceBox(((-1.3, -0.7), (0.7, 1.3)))
    m8 = box_mass(U0, box, resolution=8)
    m16 = box_mass(U0, box, resolution=16)
    assert abs(m16 - m8) < 1e-3
    with pytest.raises(ConfigurationError):
        box_mass(U0, box, resolution=4)


def test_estimate_bundle():
    boxes = [PhaseSpaceBox(((-1.3, -0.7), (0.7, 1.3))),
             PhaseSpaceBox(((2.0, 3.0), (0.0, 1.0)))]
    est = estimate(U0, boxes)
    assert est.total_mass == pytest.approx(1.0, abs=1e-3)
    assert est.masses[0] >= 0.99 and est.masses[1] <= 1e-6
    assert est.h == H


def test_invariance_defect_t_zero():
    box = PhaseSpaceBox(((-1.2, -0.8), (0.8, 1.2)))
    fb = flow_box(FREE, flat_metric(1), box, 0.0, n_per_axis=5)
    res = invariance_defect(U0, U0, box, fb)
    # identity transport: the image box is the box itself
    assert res.defect == 0.0
    assert res.image_box.intervals == box.intervals
    assert res.hypothesis_infimum > 0


def test_invariance_defect_free_motion():
    box = PhaseSpaceBox(((-1.2, -0.8), (0.8, 1.2)))
    T = 0.6
    fb = flow_box(FREE, flat_metric(1), box, T, n_per_axis=5)
    uT = propagate(U0, FREE, T)
    res = invariance_defect(U0, uT, box, fb)
    assert res.defect <= 3.0 * math.sqrt(H)
    assert res.mass_before == pytest.approx(res.mass_after,
                                            abs=3.0 * math.sqrt(H))


def test_invariance_defect_refuses_on_hypothesis_failure():
    # a box with a turning point on the interface: witness infimum is 0
    V = potential(smooth_const(0.0), "powkink", 1.0)   # V = x|x|, r = -x|x|
    m = flat_metric(1)
    box = PhaseSpaceBox(((-0.02, 0.02), (-0.02, 0.02)))
    fb = flow_box(V, m, box, 0.05, n_per_axis=3)
    assert not fb.hypothesis_ok
    g = grid_1d(-4.0, 4.0, 2**10)
    u = coherent_state(g, 0.04, PhasePoint(0.0, 0.0))
    with pytest.raises(HypothesisViolationError) as err:
        invariance_defect(u, u, box, fb)
    assert err.value.infimum == fb.hypothesis_infimum


def shell_mass_oracle(xi0, h, sigma, delta):
    """Gaussian tail integral for a plane wave: the Husimi momentum
    profile is N(xi0, s^2) with s = h / (sigma sqrt(2)); the on-shell band
    |xi^2 - xi0^2| < delta maps to an interval in xi."""
    s = h / (sigma * math.sqrt(2.0))
    lo = math.sqrt(xi0**2 - delta)
    hi = math.sqrt(xi0**2 + delta)
    def cdf(t):
        return 0.5 * (1.0 + erf((t - xi0) / (s * math.sqrt(2.0))))
    inside = cdf(hi) - cdf(lo) + cdf(-lo) - cdf(-hi)
    return 1.0 - inside


def test_shell_concentration_plane_wave_matches_oracle():
    g = grid_1d(-6.0, 6.0, 2**12)
    h = 0.01
    k = h * g.wavenumbers(0)
    xi0 = float(k[np.argmin(np.abs(k - 1.0))])
    psi = np.exp(1j * xi0 * g.coords(0) / h).astype(complex)
    psi /= state_norm(g, psi)
    u = WaveState(g, psi, h)
    for delta in (0.1, 0.25):
        got = shell_concentration(u, FREE, xi0**2, delta)
        want = shell_mass_oracle(xi0, h, math.sqrt(h), delta)
        assert got == pytest.approx(want, abs=0.01)
    # the off-shell mass dies as h shrinks at fixed delta
    vals = []
    for hv in (0.02, 0.01, 0.005):
        kv = hv * g.wavenumbers(0)
        xs = float(kv[np.argmin(np.abs(kv - 1.0))])
        psiv = np.exp(1j * xs * g.coords(0) / hv).astype(complex)
        psiv /= state_norm(g, psiv)
        vals.append(shell_concentration(WaveState(g, psiv, hv), FREE,
                                        xs**2, 0.25))
    assert vals[0] > vals[1] > vals[2]


def test_shell_concentration_off_shell_complement():
    # centering the band at the wrong level puts almost all mass outside
    off = shell_concentration(U0, FREE, 1.0 + U0.h * 0.0 + 2.0, 0.1)
    assert off >= 0.99


def test_shell_concentration_positive_band_required():
    with pytest.raises(Exception):
        shell_concentration(U0, FREE, 0.0, -1.0)


def test_bounding_box_inflation():
    pts = np.array([[0.0, 1.0], [2.0, -1.0]])
    box = PhaseSpaceBox.bounding(pts, inflate=0.5)
    assert box.intervals == ((-0.5, 2.5), (-1.5, 1.5))
    with pytest.raises(ConfigurationError):
        PhaseSpaceBox(((1.0, 1.0),))
