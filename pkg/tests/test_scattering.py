"""Characteristics, variational system, field map, and fixed-point tests.

Closed-form oracles: free transport (identically zero deviations), an
x-independent exponentially decaying field (trajectories in quadrature),
and the single-mode analytic image of the zero field.
"""

import math

import numpy as np
import pytest

from helpers import constant_field, make_spec, small_grids
from vlandau import fields as F
from vlandau import params as P
from vlandau import scattering as S
from vlandau.profiles import HypothesisError


# ---------------------------------------------------------------------------
# free transport
# ---------------------------------------------------------------------------

def test_free_transport_is_exact(ref_tgrid, ref_phase):
    E = F.zero_field(ref_tgrid, ref_phase.xgrid)
    traj = S.solve_characteristics(E, ref_phase, a=1.0)
    assert np.abs(traj.dX).max() == 0.0
    assert np.abs(traj.dV).max() == 0.0
    assert traj.inner_iterations == 1
    # absolute coordinates reproduce x + v t and v
    x = np.repeat(ref_phase.xgrid.points, ref_phase.nv).reshape(
        ref_phase.xgrid.n, ref_phase.nv)
    v = np.tile(ref_phase.v, ref_phase.xgrid.n).reshape(
        ref_phase.xgrid.n, ref_phase.nv)
    t = ref_tgrid.times[:, None, None]
    assert np.abs(traj.X() - (x[None] + v[None] * t)).max() <= 1e-12
    assert np.abs(traj.V() - v[None]).max() <= 1e-12


def test_free_transport_variational_identity(ref_tgrid, ref_phase):
    E = F.zero_field(ref_tgrid, ref_phase.xgrid)
    traj = S.solve_characteristics(E, ref_phase, a=1.0)
    var = S.solve_variational(E, traj)
    for arr in (var.xi, var.eta, var.chi, var.omega):
        assert np.abs(arr).max() <= 1e-12
    t = ref_tgrid.times[:, None, None]
    assert np.abs(var.dX_dx() - 1.0).max() <= 1e-12
    assert np.abs(var.dX_dv() - t).max() <= 1e-12
    assert np.abs(var.dV_dx()).max() <= 1e-12
    assert np.abs(var.dV_dv() - 1.0).max() <= 1e-12
    assert np.abs(var.jacobian_minus_one()).max() <= 1e-12


def test_zero_field_trajectory_report_is_zero(ref_tgrid, ref_phase,
                                              ref_params):
    E = F.zero_field(ref_tgrid, ref_phase.xgrid)
    traj = S.solve_characteristics(E, ref_phase, a=1.0)
    rep = S.check_trajectory_bounds(traj, E, ref_params)
    assert rep.ratio_v == 0.0 and rep.ratio_x == 0.0 and rep.passed


# ---------------------------------------------------------------------------
# x-independent decaying field: trajectories in closed form
# ---------------------------------------------------------------------------

def test_constant_in_x_field_closed_form():
    a, eps = 1.0, 1e-4
    tg, phase = small_grids(t_end=20.0, steps=120)   # dt = 0.1
    E = constant_field(tg, phase.xgrid, lambda t: eps * math.exp(-a * t))
    traj = S.solve_characteristics(E, phase, a=a)
    ts = tg.times
    T = tg.t_end

    # velocity: product rule integrates e^{-a s} exactly
    dv_exact = -eps * (np.exp(-a * ts) - math.exp(-a * T)) / a
    got_v = traj.dV[:, 0, 0]
    assert np.allclose(got_v, dv_exact, rtol=5e-13, atol=1e-22)
    # no dependence on the phase-space label
    assert np.ptp(traj.dV, axis=(1, 2)).max() == 0.0

    # position: trapezoid-moment rule; composite error <= (dt^2/12) int|h''|
    dx_exact = eps * ((np.exp(-a * ts) - math.exp(-a * T)) / a ** 2
                      - (T - ts) * math.exp(-a * T) / a)
    got_x = traj.dX[:, 0, 0]
    tol = 0.5 * tg.dt ** 2 * eps * np.exp(-a * ts)
    assert np.all(np.abs(got_x - dx_exact) <= tol)


def test_constant_in_x_field_bound_ratios():
    # |E|_{a,t0} = eps; the velocity inequality saturates up to the
    # neglected horizon tail e^{-a (T - t0)}
    a, eps = 1.0, 1e-4
    tg, phase = small_grids(t_end=28.0, steps=200)
    E = constant_field(tg, phase.xgrid, lambda t: eps * math.exp(-a * t))
    traj = S.solve_characteristics(E, phase, a=a)
    params = P.derive_constants(a, 0.002, 0.002, 2, t0=tg.t0)
    rep = S.check_trajectory_bounds(traj, E, params)
    assert rep.norm_e == pytest.approx(eps, rel=1e-12)
    assert rep.ratio_v <= 1.0
    assert rep.ratio_v == pytest.approx(1.0 - math.exp(-(tg.t_end - tg.t0)),
                                        rel=1e-9)
    # position ratio approaches (1 + 1/(a t0))/2 at the window start
    assert rep.ratio_x <= 1.0
    assert rep.ratio_x == pytest.approx(0.5 * (1 + 1 / (a * tg.t0)),
                                        rel=2e-3)


def test_field_too_large_precondition():
    tg, phase = small_grids()
    E = constant_field(tg, phase.xgrid, lambda t: 1.0)
    with pytest.raises(S.ConvergenceError, match="field too large"):
        S.solve_characteristics(E, phase, a=1.0)


def test_characteristics_tail_certificates():
    a, eps = 1.0, 1e-4
    tg, phase = small_grids()
    E = constant_field(tg, phase.xgrid, lambda t: eps * math.exp(-a * t))
    traj = S.solve_characteristics(E, phase, a=a)
    assert traj.tail_bound_x == pytest.approx(
        eps * math.exp(-tg.t_end), rel=1e-12)     # |E| e^{-a T}/a^2
    assert traj.tail_bound_v == pytest.approx(
        eps * math.exp(-tg.t_end), rel=1e-12)     # |E| e^{-a T}/a
    # without a rate the tails are not certified
    traj2 = S.solve_characteristics(E, phase)
    assert traj2.tail_bound_x is None and traj2.tail_bound_v is None


# ---------------------------------------------------------------------------
# variational derivatives against label finite differences
# ---------------------------------------------------------------------------

def test_variational_matches_label_finite_differences(ref_solve):
    traj, var = ref_solve.traj, ref_solve.var
    phase = traj.phase
    dx_lbl = phase.xgrid.dx
    dv_lbl = phase.dv

    # periodic central difference of dX over the x label
    fd_xi = (np.roll(traj.dX, -1, axis=1)
             - np.roll(traj.dX, 1, axis=1)) / (2 * dx_lbl)
    tol_x = dx_lbl ** 2 * np.abs(traj.dX).max() + 1e-14
    assert np.abs(fd_xi - var.xi).max() <= tol_x

    # v-label differences see curvature amplified by powers of t (the
    # evaluation point slides like x + v t), so compare against the
    # second-order truncation model (h^2/6) f''' with f''' measured from
    # the data itself
    def check_v_derivative(table, deviation):
        fd = (table[:, :, 2:] - table[:, :, :-2]) / (2 * dv_lbl)
        err = np.abs(fd - deviation[:, :, 1:-1]).max()
        d3 = np.abs(table[:, :, 4:] - 2 * table[:, :, 3:-1]
                    + 2 * table[:, :, 1:-3]
                    - table[:, :, :-4]).max() / (2 * dv_lbl ** 3)
        assert err <= 1.5 * (dv_lbl ** 2 / 6) * d3 + 1e-13

    check_v_derivative(traj.dX, var.eta)

    # same for the velocity deviations
    fd_chi = (np.roll(traj.dV, -1, axis=1)
              - np.roll(traj.dV, 1, axis=1)) / (2 * dx_lbl)
    assert np.abs(fd_chi - var.chi).max() <= dx_lbl ** 2 \
        * np.abs(traj.dV).max() + 1e-14
    check_v_derivative(traj.dV, var.omega)


def test_jacobian_identity(ref_solve):
    var = ref_solve.var
    t = var.tgrid.times[:, None, None]
    direct = (var.dX_dx() * var.dV_dv() - var.dX_dv() * var.dV_dx()) - 1.0
    stable = var.jacobian_minus_one()
    # the assembled form agrees with the naive determinant up to the
    # cancellation noise of the O(t) products, which dwarfs the signal
    assert np.abs(direct - stable).max() <= 1e-13 * float(t.max())
    assert np.abs(stable).max() <= 1e-20


# ---------------------------------------------------------------------------
# field map
# ---------------------------------------------------------------------------

def test_field_map_zero_single_mode_closed_form():
    b = np.pi / 2
    c1, scale = 3e-5, 1.2
    spec = make_spec({0: 8e-5, 1: c1}, shape="sech", rate=b, scale=scale)
    tg, phase = small_grids()
    out = S.field_map_zero(spec, 0.0, tg, phase.xgrid)
    xs = phase.xgrid.points
    ts = tg.times
    amp = 2 * c1 * scale * (np.pi / b) / np.cosh(np.pi * ts / (2 * b))
    expect = amp[:, None] * np.sin(xs)[None, :]
    assert np.allclose(out.values, expect, rtol=1e-14, atol=1e-20)


def test_field_map_zero_mode_zero_only_vanishes():
    spec = make_spec({0: 1e-4})
    tg, phase = small_grids()
    assert np.all(S.field_map_zero(spec, 0.0, tg, phase.xgrid).values == 0.0)


def test_split_map_at_zero_field_equals_series(ref_spec, ref_tgrid,
                                               ref_phase):
    E = F.zero_field(ref_tgrid, ref_phase.xgrid)
    out = S.apply_field_map(E, ref_spec, 0.0, ref_phase, a=1.0,
                            method="split")
    series = S.field_map_zero(ref_spec, 0.0, ref_tgrid, ref_phase.xgrid)
    # free flight leaves no displacement, so the spectral correction is 0
    assert np.array_equal(out.values, series.values)


def test_homogeneous_profile_map_vanishes():
    spec = make_spec({0: 1e-4})
    tg, phase = small_grids()
    E = F.zero_field(tg, phase.xgrid)
    split = S.apply_field_map(E, spec, 0.0, phase, a=1.0, method="split")
    assert np.abs(split.values).max() == 0.0
    direct = S.apply_field_map(E, spec, 0.0, phase, a=1.0, method="direct")
    # uniformly loaded cells: kernel summation cancels to roundoff
    assert np.abs(direct.values).max() <= 1e-15


def test_apply_field_map_rejects_unknown_method(ref_spec):
    tg, phase = small_grids()
    E = F.zero_field(tg, phase.xgrid)
    with pytest.raises(ValueError, match="unknown field-map method"):
        S.apply_field_map(E, ref_spec, 0.0, phase, method="fft")


def test_apply_field_map_accepts_precomputed_trajectories(ref_spec):
    tg, phase = small_grids()
    E = F.zero_field(tg, phase.xgrid)
    traj = S.solve_characteristics(E, phase, a=1.0)
    out1 = S.apply_field_map(E, ref_spec, 0.0, phase, traj=traj,
                             method="split")
    out2 = S.apply_field_map(E, ref_spec, 0.0, phase, method="split")
    assert np.array_equal(out1.values, out2.values)


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

def test_density_mass_and_mean_drift():
    spec = make_spec({0: 8e-5, 1: 1e-5})
    tg, phase = small_grids(nx=32, nv=129)
    E = F.zero_field(tg, phase.xgrid)
    traj = S.solve_characteristics(E, phase, a=1.0)
    rho = S.deposit_density(traj, spec, 0.0, phase.xgrid)
    # cloud-in-cell conserves the deposited mass row by row
    from vlandau.profiles import neutral_density
    rho0 = neutral_density(spec, 0.0)
    mean = rho.values.mean(axis=1)
    # the mean differs from c0 T(0) only by the velocity-window truncation
    b = np.pi / 2
    truncation = 8e-5 * (4.0 / b) * math.atan(math.exp(-b * phase.v_max))
    drift = abs(float(mean[0]) - rho0)
    assert drift == pytest.approx(truncation, rel=0.02)
    assert np.ptp(mean) <= 1e-18                     # time-independent


def test_density_pert_free_flow_matches_transforms():
    # with E = 0 the perturbation is the analytic free-streaming sum
    spec = make_spec({0: 8e-5, 1: 1e-5, 2: 4e-6})
    tg, phase = small_grids(nx=32)
    E = F.zero_field(tg, phase.xgrid)
    traj = S.solve_characteristics(E, phase, a=1.0)
    pert = S.deposit_density_pert(traj, spec, 0.0, phase.xgrid)
    xs = phase.xgrid.points
    ts = tg.times
    expect = np.zeros_like(pert.values)
    for k, c in ((1, 1e-5), (2, 4e-6)):
        trans = np.asarray(spec.shape_transform(k * ts))
        expect += 2 * c * trans[:, None] * np.cos(k * xs)[None, :]
    assert np.array_equal(pert.values, expect)


# ---------------------------------------------------------------------------
# fixed point on a coarse grid
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_solve():
    spec = make_spec({0: 8e-5, 1: 1e-5})
    params = P.derive_constants(1.0, 0.002, 0.002, 2, t0=8.0)
    tg, phase = small_grids(nx=32, nv=65, t_end=28.0, steps=100)
    return S.picard_solve(spec, params, 0.0, tg, phase)


def test_small_solve_converges(small_solve):
    r = small_solve
    assert r.converged and r.iterations <= 10
    assert r.residual_norm <= 1e-10
    assert r.iterate_norms[0] > 0
    assert all(c <= 0.25 for c in r.contraction_ratios)
    assert r.method == "split"


def test_small_solve_checks_and_certificates(small_solve):
    r = small_solve
    names = {"field_weighted", "field_dx_sup", "field_dx_weighted",
             "density_sup", "density_pert_weighted", "traj_velocity",
             "traj_position", "dXdx_weighted", "dXdv_weighted",
             "dVdx_weighted", "dVdv_weighted", "dXdx_sup",
             "dXdv_sup_moment1", "jacobian_deviation",
             "field_density_consistency", "fixed_point_residual"}
    assert set(r.checks) == names
    for c in r.checks.values():
        assert c.passed, f"{c.name}: {c.value} > {c.bound}"
    certs = r.certificates
    assert certs["time_tail_position"] > 0
    assert certs["mean_density_drift"] < 1e-7
    assert certs["inner_residual"] < 1e-12
    assert certs["variational_residual"] < 1e-12


def test_small_solve_manifest_structure(small_solve):
    m = small_solve.manifest()
    assert m["passed"] is True
    assert m["grids"]["nx"] == 32 and m["grids"]["nv"] == 65
    assert m["reduction_partition"] == S.PARTITION_NOTE
    assert len(m["contraction_ratios"]) == m["iterations"] - 1
    assert m["checks"]["traj_velocity"]["bound"] == 1.0


def test_picard_iteration_limit_raises():
    spec = make_spec({0: 8e-5, 1: 1e-5})
    params = P.derive_constants(1.0, 0.002, 0.002, 2, t0=8.0)
    tg, phase = small_grids()
    with pytest.raises(S.ConvergenceError, match="did not reach"):
        S.picard_solve(spec, params, 0.0, tg, phase, tol=1e-30, max_iter=2)
    with pytest.raises(ValueError):
        S.picard_solve(spec, params, 0.0, tg, phase, max_iter=0)


def test_picard_gates():
    tg, phase = small_grids()
    good_spec = make_spec({0: 8e-5, 1: 1e-5})
    bad_params = P.derive_constants(1.0, 0.002, 0.01, 2, t0=8.0)
    with pytest.raises(P.AdmissibilityError):
        S.picard_solve(good_spec, bad_params, 0.0, tg, phase)
    params = P.derive_constants(1.0, 0.002, 0.002, 2, t0=8.0)
    with pytest.raises(HypothesisError, match="mean density"):
        S.picard_solve(make_spec({1: 1e-5}), params, 0.0, tg, phase)
    with pytest.raises(HypothesisError, match="not resolved"):
        S.picard_solve(make_spec({0: 8e-5, 8: 1e-6}), params, 0.0, tg, phase)
    with pytest.raises(HypothesisError):
        S.picard_solve(make_spec({0: 1.0}), params, 0.0, tg, phase)


def test_homogeneous_profile_fixed_point_in_one_iteration():
    # a pure k=0 profile maps every field history toward 0; starting at 0
    # the first image is already the fixed point
    spec = make_spec({0: 8e-5})
    params = P.derive_constants(1.0, 0.002, 0.002, 2, t0=8.0)
    tg, phase = small_grids()
    r = S.picard_solve(spec, params, 0.0, tg, phase)
    assert r.converged and r.iterations == 1
    assert np.all(r.field.values == 0.0)


# ---------------------------------------------------------------------------
# weighted product estimate
# ---------------------------------------------------------------------------

def _times():
    return np.linspace(1.0, 10.0, 91)     # includes t = 2.0 exactly


def test_product_bound_two_exponentials_saturates():
    a, t0 = 1.0, 8.0
    ts = np.linspace(t0, 20.0, 121)
    f = np.exp(-a * ts)
    rep = S.check_nonlinear_norm_product(ts, [(f, 0), (f, 0)], k=0, a=a,
                                         t0=t0)
    assert rep.case == "t0"
    assert rep.constant == pytest.approx(math.exp(-a * t0), rel=1e-14)
    assert rep.factor_norms == pytest.approx((1.0, 1.0), rel=1e-12)
    assert rep.lhs == pytest.approx(rep.rhs, rel=1e-12)   # equality case
    assert rep.passed


def test_product_bound_mixed_moments():
    a, t0 = 1.0, 8.0
    ts = np.linspace(t0, 20.0, 121)
    f1 = ts * np.exp(-a * ts)
    f2 = np.exp(-a * ts)
    rep = S.check_nonlinear_norm_product(ts, [(f1, 1), (f2, 0)], k=1, a=a,
                                         t0=t0)
    assert rep.case == "t0" and rep.passed
    assert rep.lhs == pytest.approx(rep.rhs, rel=1e-12)


def test_product_bound_interior_peak_case():
    # sum k_i - k = 2 with (n-1) a = 1 peaks at t1 = 2 > t0 = 1
    a, t0 = 1.0, 1.0
    ts = _times()
    f = ts * np.exp(-a * ts)
    rep = S.check_nonlinear_norm_product(ts, [(f, 1), (f, 1)], k=0, a=a,
                                         t0=t0)
    assert rep.case == "t1"
    assert rep.constant == pytest.approx(4.0 * math.exp(-2.0), rel=1e-14)
    assert rep.lhs == pytest.approx(rep.rhs, rel=1e-12)
    assert rep.passed


def test_product_bound_validation():
    ts = _times()
    f = np.exp(-ts)
    with pytest.raises(ValueError, match="two factors"):
        S.check_nonlinear_norm_product(ts, [(f, 0)], k=0, a=1.0, t0=1.0)
    with pytest.raises(ValueError, match="exceeds"):
        S.check_nonlinear_norm_product(ts, [(f, 0), (f, 0)], k=1, a=1.0,
                                       t0=1.0)
