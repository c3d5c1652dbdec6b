"""Flow engine: classification, stepping, crossing, glancing, transport.

Derived expectations come from closed forms (piecewise parabolas for the
kink, free motion) or from an independent fixed-step RK4 reference built
here, never from the engine under test.
"""

import math

import numpy as np
import pytest

from conoflow import (ClassTag, NearGlancingError, OneSidedLimitWarning,
                      PhasePoint, PreconditionError,
                      UnsupportedRegularityError, classify, cross_interface,
                      flat_metric, flow_box, glancing_modulus, hamiltonian,
                      integrate, mollify, normal_acceleration,
                      normal_velocity, potential, power_metric,
                      step_glancing, step_smooth)
from conoflow.flow import r_dx, r_deta, r_dy
from conoflow.measure import PhaseSpaceBox
from conoflow import smooth_const, smooth_linear, smooth_zero

M1 = flat_metric(1)
M2 = flat_metric(2)
KINK = potential(smooth_const(-2.0), "kink", 1.0)
FREE = potential(smooth_zero())
GLANCE_V = potential(smooth_linear(-1.0, 1.0), "powkink", 1.0)  # -1+x+x|x|

T_HIT = math.sqrt(2.0) - 1.0          # kink interface hit from (-1, 1)
T_STAR = T_HIT + 0.5
X_END = math.sqrt(2.0) - 0.25
XI_END = math.sqrt(2.0) - 0.5


def rk4_reference(V, m, rho0, T, n_steps):
    """Fixed-step classical RK4, independent of the engine's integrator."""
    dim = m.dim
    z = rho0.as_array(dim).astype(float)

    def f(z):
        if dim == 1:
            return np.array([2.0 * z[1], r_dx(V, m, z[0])])
        return np.array([2.0 * z[1],
                         r_dx(V, m, z[0], z[2], z[3]),
                         -r_deta(V, m, z[0], z[2], z[3]),
                         r_dy(V, m, z[0], z[2], z[3])])

    dt = T / n_steps
    for _ in range(n_steps):
        k1 = f(z)
        k2 = f(z + 0.5 * dt * k1)
        k3 = f(z + 0.5 * dt * k2)
        k4 = f(z + dt * k3)
        z = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return PhasePoint.from_array(z, dim)


def test_hamiltonian_examples():
    assert hamiltonian(FREE, M1, PhasePoint(2.0, 1.0)) == pytest.approx(1.0)
    assert hamiltonian(KINK, M1, PhasePoint(-1.0, 1.0)) == pytest.approx(0.0)
    Vc = potential(smooth_const(-1.0))
    assert hamiltonian(Vc, M2, PhasePoint(0.0, 0.0, 0.0, 1.0)) \
        == pytest.approx(0.0)


def test_normal_velocity_and_acceleration():
    assert normal_velocity(FREE, M1, PhasePoint(0.0, 0.7)) == pytest.approx(1.4)
    # flat d=2, V = -1 + x: 2 dr/dx = -2 dV/dx = -2
    Vl = potential(smooth_linear(-1.0, 1.0))
    rho = PhasePoint(0.0, 0.3, 0.0, 0.5)
    assert normal_acceleration(Vl, M2, rho) == pytest.approx(-2.0)
    # d=1 kink at x = -1: dr/dx = -sign(x) = 1
    assert normal_acceleration(KINK, M1, PhasePoint(-1.0, 1.0)) \
        == pytest.approx(2.0)
    # finite-difference cross-check of dr/dx off the interface
    d = 1e-6
    fd = (hamiltonian(KINK, M1, PhasePoint(-1.0 + d, 1.0))
          - hamiltonian(KINK, M1, PhasePoint(-1.0 - d, 1.0))) / (2 * d)
    assert normal_acceleration(KINK, M1, PhasePoint(-1.0, 1.0)) \
        == pytest.approx(-2.0 * fd, rel=1e-8)


def test_normal_acceleration_one_sided_warns():
    with pytest.warns(OneSidedLimitWarning):
        val = normal_acceleration(KINK, M1, PhasePoint(0.0, 0.0))
    assert val == pytest.approx(-2.0)


def test_classify_cases():
    tol = 1e-6
    assert classify(KINK, M1, PhasePoint(0.0, math.sqrt(2.0)), tol).tag \
        is ClassTag.HYPERBOLIC
    glancing = classify(potential(smooth_linear(-1.0, 1.0)), M2,
                        PhasePoint(0.0, 0.0, 0.0, 1.0), tol)
    assert glancing.tag is ClassTag.GLANCING2
    assert glancing.hp2_f == pytest.approx(-2.0)
    off = classify(potential(smooth_const(-1.0)), M1, PhasePoint(0.0, 0.0),
                   tol)
    assert off.tag is ClassTag.OFFSHELL and off.p == pytest.approx(-1.0)
    assert classify(KINK, M1, PhasePoint(-1.0, 1.0), tol).tag \
        is ClassTag.INTERIOR
    # constant potential at an interface rest point: every witness vanishes
    degen = classify(potential(smooth_const(0.0)), M1, PhasePoint(0.0, 0.0),
                     tol)
    assert degen.tag is ClassTag.DEGENERATE


def test_classify_partition_unique():
    tol = 1e-5
    points = [PhasePoint(x, xi) for x in (-1.0, 0.0, 1e-7)
              for xi in (0.0, 1e-7, 0.5)]
    for rho in points:
        cls = classify(KINK, M1, rho, tol)
        expected = (ClassTag.OFFSHELL if abs(cls.p) > tol
                    else ClassTag.INTERIOR if abs(cls.f) > tol
                    else ClassTag.HYPERBOLIC if abs(cls.hp_f) > tol
                    else ClassTag.GLANCING2 if cls.hp2_f is not None
                    and abs(cls.hp2_f) > tol else ClassTag.DEGENERATE)
        assert cls.tag is expected


def test_step_smooth_free_motion():
    res = step_smooth(FREE, M1, PhasePoint(0.0, 1.0), 0.5)
    assert res.point.x == pytest.approx(1.0, abs=1e-12)
    assert res.point.xi == pytest.approx(1.0)
    assert not res.interface_hit


def test_step_smooth_kink_parabola_and_hit():
    # x(t) = -1 + 2t + t^2, xi = 1 + t until the interface
    res = step_smooth(KINK, M1, PhasePoint(-1.0, 1.0), 1.0, tol=1e-10)
    assert res.interface_hit
    assert res.hit_time == pytest.approx(T_HIT, abs=1e-9)
    assert res.point.x == pytest.approx(0.0, abs=1e-9)
    assert res.point.xi == pytest.approx(math.sqrt(2.0), abs=1e-9)
    # interior checkpoint against the closed form
    mid = step_smooth(KINK, M1, PhasePoint(-1.0, 1.0), 0.2)
    assert mid.point.x == pytest.approx(-1 + 0.4 + 0.04, abs=1e-10)
    assert not mid.interface_hit


def test_step_smooth_tangential_drift():
    Vc = potential(smooth_const(-1.0))
    res = step_smooth(Vc, M2, PhasePoint(0.5, 0.0, 0.0, 1.0), 0.25)
    assert res.point.y == pytest.approx(0.5, abs=1e-12)
    assert res.point.x == pytest.approx(0.5)
    assert res.point.eta == pytest.approx(1.0)


def test_step_smooth_negative_dt():
    res = step_smooth(KINK, M1, PhasePoint(-1.0, 1.0), -0.3)
    assert res.point.xi == pytest.approx(0.7, abs=1e-12)
    assert res.point.x == pytest.approx(-1 - 0.6 + 0.09, abs=1e-10)


def test_cross_interface_kink_exact():
    x_exit = 1.164213562
    res = cross_interface(KINK, M1, PhasePoint(0.0, math.sqrt(2.0)), x_exit)
    assert res.point.xi == pytest.approx(math.sqrt(2.0 - x_exit), abs=1e-12)
    assert res.t_elapsed == pytest.approx(0.5, abs=1e-9)
    # conservation is exact by construction
    p0 = hamiltonian(KINK, M1, PhasePoint(0.0, math.sqrt(2.0)))
    assert hamiltonian(KINK, M1, res.point) == pytest.approx(p0, abs=1e-14)


def test_cross_interface_free():
    res = cross_interface(FREE, M1, PhasePoint(-0.3, 0.8), 0.7)
    assert res.point.xi == pytest.approx(0.8)
    assert res.t_elapsed == pytest.approx(1.0 / 1.6, abs=1e-12)


def test_cross_interface_rejects_jump():
    step = potential(smooth_const(-2.0), "step", 1.0)
    with pytest.raises(UnsupportedRegularityError):
        cross_interface(step, M1, PhasePoint(0.0, math.sqrt(2.0)), 0.5)


def test_cross_interface_sign_mismatch():
    with pytest.raises(PreconditionError):
        cross_interface(KINK, M1, PhasePoint(-0.01, 1.0), -0.5)


def test_cross_interface_near_glancing_detection():
    # on the tangent shell the reconstructed xi^2 = -x - x^2 dies at x = 0
    res_err = None
    with pytest.raises(NearGlancingError) as res_err:
        cross_interface(GLANCE_V, M2, PhasePoint(-0.01, -0.0999, 0.0, 1.0),
                        0.01, time_direction=-1.0)
    assert res_err.value.point is not None


def test_glancing_modulus_closed_forms():
    rho = PhasePoint(0.0, 0.0, 0.0, 1.0)
    Vl = potential(smooth_linear(-1.0, 1.0))
    assert glancing_modulus(Vl, M2, rho, 0.1) == pytest.approx(0.1)
    for t in (0.1, 0.01, 1e-3, 1e-4):
        assert glancing_modulus(GLANCE_V, M2, rho, t) \
            == pytest.approx(8 * t * t + t, abs=1e-10)
    Vp = potential(smooth_linear(-1.0, 1.0), "power", 1.0, alpha=0.5)
    # integral of 0.75 |s|^{-1/2} over |s| <= 2 t^2 is 3 sqrt(2) t
    assert glancing_modulus(Vp, M2, rho, 0.1) \
        == pytest.approx(3 * math.sqrt(2) * 0.1 + 0.1, abs=1e-9)


def test_glancing_modulus_monotone_vanishing():
    rho = PhasePoint(0.0, 0.0, 0.0, 1.0)
    vals = [glancing_modulus(GLANCE_V, M2, rho, t)
            for t in (0.2, 0.1, 0.05, 0.01, 1e-3)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 2e-3


def test_glancing_modulus_regularity_guard():
    rho = PhasePoint(0.0, 0.0, 0.0, 1.0)
    with pytest.raises(UnsupportedRegularityError):
        glancing_modulus(potential(smooth_linear(-1.0, 1.0), "kink", 1.0),
                         M2, rho, 0.1)


def test_step_glancing_expansion_endpoint():
    # flat d=2, V = -1 + x, launch (0,0,0,1): dr/dx = -1, dy/dt = 2 eta
    Vl = potential(smooth_linear(-1.0, 1.0))
    rho = PhasePoint(0.0, 0.0, 0.0, 1.0)
    seg = step_glancing(Vl, M2, rho, 0.1, tol=1e-10)
    p = seg.point
    assert p.x == pytest.approx(-0.01, abs=2e-5)
    assert p.xi == pytest.approx(-0.1, abs=2e-4)
    assert p.y == pytest.approx(0.2, abs=2e-5)
    assert p.eta == pytest.approx(1.0, abs=1e-10)
    # time reversal flips xi and the tangential drift
    back = step_glancing(Vl, M2, rho, -0.1, tol=1e-10).point
    assert back.x == pytest.approx(p.x, abs=1e-9)
    assert back.xi == pytest.approx(-p.xi, abs=1e-9)
    assert back.y == pytest.approx(-p.y, abs=1e-9)


def test_step_glancing_powkink_vs_reference():
    # independent check: RK4 started from the expansion at t = 1e-4
    rho = PhasePoint(0.0, 0.0, 0.0, 1.0)
    seg = step_glancing(GLANCE_V, M2, rho, 0.1, tol=1e-10)
    t_in = 1e-4
    launch = PhasePoint(-t_in**2, -t_in, 2 * t_in, 1.0)
    ref = rk4_reference(GLANCE_V, M2, launch, 0.1 - t_in, 40000)
    assert seg.point.x == pytest.approx(ref.x, abs=1e-7)
    assert seg.point.xi == pytest.approx(ref.xi, abs=1e-6)
    assert seg.point.y == pytest.approx(ref.y, abs=1e-7)


def test_step_glancing_preconditions():
    rho = PhasePoint(0.0, 0.0, 0.0, 1.0)
    with pytest.raises(UnsupportedRegularityError):
        step_glancing(potential(smooth_linear(-1.0, 1.0), "kink", 1.0),
                      M2, rho, 0.1)
    with pytest.raises(PreconditionError):
        step_glancing(GLANCE_V, M2, PhasePoint(-1.0, 1.0, 0.0, 1.0), 0.1)
    with pytest.raises(PreconditionError):
        step_glancing(GLANCE_V, M2, rho, 2.0)   # modulus too large


def test_glancing_residual_law():
    # |x(t) - A t^2| / (t^2 R(t)) stays bounded as t shrinks
    rho = PhasePoint(0.0, 0.0, 0.0, 1.0)
    power_v = potential(smooth_linear(-1.0, 1.0), "power", 1.0, alpha=0.5)
    for V, spans in ((GLANCE_V, (1e-1, 1e-2, 1e-3, 1e-4)),
                     (power_v, (5e-2, 1e-2, 1e-3, 1e-4))):
        ratios = []
        for t in spans:
            seg = step_glancing(V, M2, rho, t, tol=1e-10)
            ratios.append(seg.measured_c)
        assert max(ratios) < 1.0


def test_integrate_free_line():
    traj = integrate(FREE, M1, PhasePoint(0.0, 1.0), 3.0)
    assert traj.endpoint.x == pytest.approx(6.0, abs=1e-9)
    assert traj.endpoint.xi == pytest.approx(1.0)
    assert traj.completed


def test_integrate_kink_crossing_endpoint():
    traj = integrate(KINK, M1, PhasePoint(-1.0, 1.0), T_STAR, tol=1e-10)
    assert traj.endpoint.x == pytest.approx(X_END, abs=1e-8)
    assert traj.endpoint.xi == pytest.approx(XI_END, abs=1e-8)
    assert traj.energy_drift <= 1e-10
    regimes = {s.regime for s in traj.segments}
    assert regimes == {"smooth", "hyperbolic-crossing"}
    # samples are strictly ordered in time and segments partition [0, T]
    assert np.all(np.diff(traj.times) > 0)
    assert traj.segments[0].t0 == 0.0
    assert traj.segments[-1].t1 == pytest.approx(T_STAR)
    for a, b in zip(traj.segments, traj.segments[1:]):
        assert a.t1 == pytest.approx(b.t0)


def test_integrate_oscillation_many_crossings():
    # the kink well traps the zero-energy trajectory between x = +-2
    period = 4.0 * math.sqrt(2.0)   # quarter period = sqrt(2) from turn
    traj = integrate(KINK, M1, PhasePoint(-1.0, 1.0), period, tol=1e-9)
    assert traj.completed
    assert traj.endpoint.x == pytest.approx(-1.0, abs=1e-6)
    assert traj.endpoint.xi == pytest.approx(1.0, abs=1e-6)
    crossings = [s for s in traj.segments if s.regime == "hyperbolic-crossing"]
    assert len(crossings) == 2


def test_integrate_reversibility_crossing():
    traj = integrate(KINK, M1, PhasePoint(-1.0, 1.0), T_STAR, tol=1e-10)
    back = integrate(KINK, M1, traj.endpoint, -T_STAR, tol=1e-10)
    assert back.endpoint.x == pytest.approx(-1.0, abs=1e-9)
    assert back.endpoint.xi == pytest.approx(1.0, abs=1e-9)


def test_integrate_reversibility_glancing():
    traj = integrate(GLANCE_V, M2, PhasePoint(0.0, 0.0, 0.0, 1.0), 0.1,
                     tol=1e-8)
    back = integrate(GLANCE_V, M2, traj.endpoint, -0.1, tol=1e-8)
    e = back.endpoint
    assert max(abs(e.x), abs(e.xi), abs(e.y), abs(e.eta - 1.0)) <= 1e-7


def test_integrate_smooth_matches_fixed_step_reference():
    V = potential(smooth_linear(-1.0, 0.5))
    rho0 = PhasePoint(0.2, 0.4)
    traj = integrate(V, M1, rho0, 1.0, tol=1e-10)
    ref = rk4_reference(V, M1, rho0, 1.0, 20000)
    assert traj.endpoint.x == pytest.approx(ref.x, abs=1e-8)
    assert traj.endpoint.xi == pytest.approx(ref.xi, abs=1e-8)


def test_integrate_energy_conservation_matrix():
    cases = [
        (KINK, M1, PhasePoint(-1.0, 1.0), T_STAR),
        (potential(smooth_linear(0.5, -1.0), "xlog", 0.5), M1,
         PhasePoint(-0.5, 1.2), 0.8),
        (GLANCE_V, M2, PhasePoint(0.0, 0.0, 0.0, 1.0), 0.1),
        (potential(smooth_const(-2.0), "power", 1.0, alpha=0.5), M1,
         PhasePoint(-1.0, 1.0), 1.0),
    ]
    tol = 1e-8
    for V, m, rho0, T in cases:
        traj = integrate(V, m, rho0, T, tol=tol)
        assert traj.completed, (V.singular, traj.status)
        assert traj.energy_drift <= tol * (1 + abs(T))


def test_integrate_caratheodory_continuity():
    # endpoint displacement / initial displacement stays bounded as the
    # perturbation shrinks (continuous data-to-solution map)
    base = integrate(KINK, M1, PhasePoint(-1.0, 1.0), T_STAR,
                     tol=1e-11).endpoint
    consts = []
    for delta in (1e-3, 1e-4, 1e-5):
        pert = integrate(KINK, M1, PhasePoint(-1.0 + delta, 1.0), T_STAR,
                         tol=1e-11).endpoint
        move = math.hypot(pert.x - base.x, pert.xi - base.xi)
        consts.append(move / delta)
    assert max(consts) / min(consts) < 1.5
    assert max(consts) < 10.0


def test_integrate_jump_interface_refused():
    step = potential(smooth_const(-2.0), "step", 1.0)
    with pytest.raises(UnsupportedRegularityError):
        integrate(step, M1, PhasePoint(-1.0, 1.0), 1.0)
    # but a jump potential away from the interface integrates fine
    traj = integrate(step, M1, PhasePoint(-1.0, 0.1), 0.05)
    assert traj.completed


def test_integrate_degenerate_ends_maximal():
    # rest point of a constant potential on the interface: no continuation
    V = potential(smooth_const(0.0), "kink", 0.0)
    assert V.tag.name == "W11"
    traj = integrate(V, M1, PhasePoint(0.0, 0.0), 1.0)
    assert not traj.completed
    assert traj.status == "degenerate-ended"


def test_integrate_near_glancing_w11_ends():
    # W11 trajectory aimed to arrive at the interface with tiny momentum
    xi0 = 1e-4
    x0 = -0.5
    rho = PhasePoint(x0, math.sqrt(xi0**2 + abs(x0)))
    V = potential(smooth_const(0.0), "kink", -1.0)   # V = -|x|, r = |x|
    traj = integrate(V, M1, rho, 2.0)
    assert traj.status in ("near-glancing-ended", "degenerate-ended")


def test_integrate_t_zero_identity():
    traj = integrate(KINK, M1, PhasePoint(-1.0, 1.0), 0.0)
    assert len(traj.times) == 1 and traj.completed


def test_mollified_flow_converges_to_crossing():
    errs = []
    for eps in (1e-1, 1e-2, 1e-3):
        traj = integrate(mollify(KINK, eps), M1, PhasePoint(-1.0, 1.0),
                         T_STAR, tol=1e-10)
        e = traj.endpoint
        errs.append(math.hypot(e.x - X_END, e.xi - XI_END))
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] <= 1e-3


def test_flow_box_kink_cloud():
    box = PhaseSpaceBox(((-1.05, -0.95), (0.95, 1.05)))
    res = flow_box(KINK, M1, box, T_STAR, tol=1e-9, n_per_axis=5)
    assert not res.failures
    center = res.image_points.mean(axis=0)
    assert center[0] == pytest.approx(X_END, abs=0.05)
    assert center[1] == pytest.approx(XI_END, abs=0.05)
    assert res.hypothesis_infimum > 0.5
    assert res.hypothesis_ok


def test_flow_box_identity_at_t_zero():
    box = PhaseSpaceBox(((-1.1, -0.9), (0.9, 1.1)))
    res = flow_box(KINK, M1, box, 0.0, n_per_axis=4)
    assert np.allclose(res.image_points, res.entry_points)


def test_flow_box_glancing_hypothesis_flags():
    Vl = potential(smooth_linear(-1.0, 1.0))
    box = PhaseSpaceBox(((-0.05, 0.05), (-0.05, 0.05),
                         (-0.05, 0.05), (0.95, 1.05)))
    res = flow_box(Vl, M2, box, 0.2, tol=1e-8, n_per_axis=3)
    # the box straddles an exact tangency: the transversal witness dies,
    # but the second-order witness keeps the variant bounded away from 0
    assert res.hypothesis_infimum == pytest.approx(0.0, abs=1e-12)
    assert not res.hypothesis_ok
    assert res.second_order_infimum > 1.0


def test_flow_box_partial_failures_reported():
    step = potential(smooth_const(-2.0), "step", 1.0)
    box = PhaseSpaceBox(((-1.05, -0.95), (0.95, 1.05)))
    res = flow_box(step, M1, box, 1.0, n_per_axis=3)
    assert len(res.failures) == res.n_samples


def test_curved_metric_flow_conserves_energy():
    # tangential momentum drives x through the curved dual metric
    m = power_metric(0.5)
    V = potential(smooth_const(-1.0))
    rho0 = PhasePoint(0.1, 0.2, 0.0, 0.8)
    traj = integrate(V, m, rho0, 1.0, tol=1e-10)
    assert traj.completed
    assert traj.energy_drift <= 1e-9
    ref = rk4_reference(V, m, rho0, 1.0, 20000)
    assert traj.endpoint.x == pytest.approx(ref.x, abs=1e-7)
    assert traj.endpoint.eta == pytest.approx(ref.eta, abs=1e-7)
