"""Threshold classification, bulk budgets, entropy machinery, decay fits."""

import numpy as np
import pytest
from scipy.integrate import quad

import flockfem as ff
from flockfem import diagnostics as dg
from flockfem.errors import DegenerateSeries
from flockfem.stepping import SimState, constant_state
from flockfem.scenarios import two_flock_preset


def state_from(mesh, rho, w, u):
    return SimState(
        rho=ff.interpolate(mesh, "P3", rho),
        w=ff.interpolate(mesh, "P3", w),
        u=ff.interpolate(mesh, "P2", u),
    )


# -- entropy field and threshold ------------------------------------------------


def test_e_field_constant_state(const_table16):
    state = constant_state(const_table16.mesh, rho=1.0, u=0.7, w=1.0)
    _, vals, lo, hi = dg.e_field(state, const_table16)
    assert np.max(np.abs(vals - 1.0)) <= 1e-12
    assert lo == pytest.approx(1.0, abs=1e-12)
    assert hi == pytest.approx(1.0, abs=1e-12)


def test_e_field_negative_when_density_thin(const_table16):
    mesh = const_table16.mesh
    state = state_from(
        mesh,
        rho=lambda x: np.full_like(x, 0.01),
        w=lambda x: np.ones_like(x),
        u=lambda x: -np.sin(2 * np.pi * x) / (2 * np.pi),
    )
    _, _, lo, _ = dg.e_field(state, const_table16)
    assert lo < 0.0
    verdict = dg.classify_threshold(state, const_table16)
    assert verdict.verdict == "blow_up_predicted"


def test_threshold_positive_for_preset(mesh100, rat_table100):
    cs = two_flock_preset(mesh100, rat_table100, "cucker_smale")
    v_cs = dg.classify_threshold(cs, rat_table100)
    assert v_cs.verdict == "global_existence_predicted"
    assert v_cs.e0_min > 0.0
    sm = two_flock_preset(mesh100, rat_table100, "s_model")
    v_sm = dg.classify_threshold(sm, rat_table100)
    # w0 * rho_phi == 1, so e0 = du0/dx + 1 with minimum slope -5/6
    assert v_sm.e0_min == pytest.approx(1.0 / 6.0, abs=0.02)
    assert v_sm.verdict == "global_existence_predicted"


def test_threshold_zero_velocity_is_global(rat_table16):
    mesh = rat_table16.mesh
    state = state_from(
        mesh,
        rho=lambda x: 1.0 + 0.5 * np.cos(2 * np.pi * x),
        w=lambda x: 0.5 + 0.1 * np.sin(2 * np.pi * x) ** 2,
        u=lambda x: np.zeros_like(x),
    )
    assert dg.classify_threshold(state, rat_table16).verdict == "global_existence_predicted"


def test_threshold_invariant_under_velocity_shift(rat_table16):
    mesh = rat_table16.mesh

    def u0(x):
        return 0.05 * np.sin(2 * np.pi * x)

    a = state_from(mesh, lambda x: 1.0 + 0.3 * np.cos(2 * np.pi * x), lambda x: np.ones_like(x), u0)
    b = state_from(mesh, lambda x: 1.0 + 0.3 * np.cos(2 * np.pi * x), lambda x: np.ones_like(x),
                   lambda x: u0(x) + 3.7)
    va, vb = dg.classify_threshold(a, rat_table16), dg.classify_threshold(b, rat_table16)
    assert va.e0_min == pytest.approx(vb.e0_min, abs=1e-12)
    assert va.verdict == vb.verdict


def test_e_field_same_code_path_for_unit_weight(rat_table16):
    mesh = rat_table16.mesh
    rho = lambda x: 1.0 + 0.4 * np.sin(2 * np.pi * x)
    u = lambda x: 0.1 * np.cos(2 * np.pi * x)
    ones = lambda x: np.ones_like(x)
    cs_like = state_from(mesh, rho, ones, u)
    sm_like = state_from(mesh, rho, ones, u)
    _, va, _, _ = dg.e_field(cs_like, rat_table16)
    _, vb, _, _ = dg.e_field(sm_like, rat_table16)
    assert np.array_equal(va, vb)


# -- bulk statistics --------------------------------------------------------------


def test_bulk_stats_uniform_motion(rat_table16):
    state = constant_state(rat_table16.mesh, rho=1.0, u=0.9)
    rec = dg.bulk_stats(state, rat_table16)
    assert rec.mass == pytest.approx(1.0, abs=1e-13)
    assert rec.momentum == pytest.approx(0.9, abs=1e-13)
    assert rec.energy == pytest.approx(0.405, abs=1e-13)
    assert rec.v2 == pytest.approx(0.0, abs=1e-12)
    assert rec.amplitude == pytest.approx(0.0, abs=1e-12)


def test_bulk_stats_sine_velocity(const_table16):
    mesh = const_table16.mesh
    state = state_from(
        mesh,
        rho=lambda x: np.ones_like(x),
        w=lambda x: np.ones_like(x),
        u=lambda x: np.sin(2 * np.pi * x),
    )
    rec = dg.bulk_stats(state, const_table16)
    assert rec.momentum == pytest.approx(0.0, abs=1e-12)
    # u is the P2 interpolant of the sine, so closed forms hold to O(h^3)
    assert rec.energy == pytest.approx(0.25, abs=1e-4)
    assert rec.v2 == pytest.approx(0.25, abs=1e-4)
    assert rec.amplitude == pytest.approx(2.0, abs=1e-3)


def test_bulk_stats_preset_momentum_negative(mesh100, rat_table100):
    state = two_flock_preset(mesh100, rat_table100, "cucker_smale")
    rec = dg.bulk_stats(state, rat_table100)
    assert rec.momentum < 0.0


def test_v2_matches_direct_variance_quadrature(rat_table16, rng):
    mesh = rat_table16.mesh
    state = SimState(
        rho=ff.FEFunction(mesh, "P3", 1.0 + rng.random(mesh.n_dof("P3"))),
        w=ff.interpolate(mesh, "P3", lambda x: np.ones_like(x)),
        u=ff.FEFunction(mesh, "P2", rng.standard_normal(mesh.n_dof("P2"))),
    )
    rec = dg.bulk_stats(state, rat_table16)
    wq = mesh.global_quad_weights.ravel()
    rho_q = state.rho.at_quad().ravel()
    u_q = state.u.at_quad().ravel()
    u_bar = rec.momentum / rec.mass
    direct = 0.5 * np.sum(wq * rho_q * (u_q - u_bar) ** 2)
    assert rec.v2 == pytest.approx(direct, abs=1e-10)
    assert rec.v2 >= -1e-12


# -- relative entropy ---------------------------------------------------------------


def test_relative_entropy_uniform_density(rat_table16):
    state = constant_state(rat_table16.mesh, rho=1.7, u=0.0)
    ent = dg.relative_entropy(state)
    assert ent.H == pytest.approx(0.0, abs=1e-13)
    assert ent.l1_dev == pytest.approx(0.0, abs=1e-13)
    assert ent.holds


def test_relative_entropy_closed_forms(mesh16):
    state = state_from(
        mesh16,
        rho=lambda x: 1.0 + 0.5 * np.sin(2 * np.pi * x),
        w=lambda x: np.ones_like(x),
        u=lambda x: np.zeros_like(x),
    )
    ent = dg.relative_entropy(state)
    assert ent.l1_dev == pytest.approx(1.0 / np.pi, abs=1e-4)
    assert ent.ck_upper == pytest.approx(1.0 / 8.0, abs=1e-4)
    # high-order quadrature oracle for the entropy integral
    oracle, _ = quad(lambda x: (1 + 0.5 * np.sin(2 * np.pi * x))
                     * np.log(1 + 0.5 * np.sin(2 * np.pi * x)), 0, 1, limit=200)
    assert ent.H == pytest.approx(oracle, abs=1e-4)
    assert 0.5 * ent.l1_dev**2 <= ent.H <= ent.ck_upper + 1e-10
    assert ent.holds


def test_relative_entropy_positive_for_non_uniform(rat_table16, rng):
    mesh = rat_table16.mesh
    state = SimState(
        rho=ff.FEFunction(mesh, "P3", 1.0 + 0.5 * rng.random(mesh.n_dof("P3"))),
        w=ff.interpolate(mesh, "P3", lambda x: np.ones_like(x)),
        u=ff.interpolate(mesh, "P2", lambda x: np.zeros_like(x)),
    )
    ent = dg.relative_entropy(state)
    assert ent.H > 0.0
    assert ent.holds


def test_relative_entropy_marks_non_positive_density(mesh16):
    state = state_from(
        mesh16,
        rho=lambda x: np.sin(2 * np.pi * x),  # negative on half the torus
        w=lambda x: np.ones_like(x),
        u=lambda x: np.zeros_like(x),
    )
    ent = dg.relative_entropy(state)
    assert not ent.positive_density
    assert ent.H is None


# -- limiting-distribution bound ------------------------------------------------------


def test_entropy_bound_uniform_state(rat_table16):
    state = constant_state(rat_table16.mesh, rho=1.3, u=0.4, w=1.0)
    res = dg.entropy_bound(state, rat_table16)
    assert res.q_tilde <= 1e-12
    assert res.feasible
    assert res.bound == pytest.approx(0.0, abs=1e-10)


def test_entropy_bound_unit_weight_reduction(rat_table16):
    mesh = rat_table16.mesh
    state = state_from(
        mesh,
        rho=lambda x: 1.0 + 0.3 * np.sin(2 * np.pi * x),
        w=lambda x: np.ones_like(x),
        u=lambda x: 0.02 * np.cos(2 * np.pi * x),
    )
    res = dg.entropy_bound(state, rat_table16, c_param=2.0)
    spec = rat_table16.spec
    rec = dg.bulk_stats(state, rat_table16)
    # with w == 1 the bound collapses to Q mass |phi|_inf / (c (|phi|_L1 - Q))
    reduced = res.q_tilde * rec.mass * spec.inf_norm / (2.0 * (spec.l1_norm - res.q_tilde))
    assert res.feasible
    assert res.bound == pytest.approx(reduced, rel=1e-9)
    assert res.w_max - res.w_min <= 1e-9


def test_entropy_bound_infeasible_when_gradient_dominates(const_table16):
    mesh = const_table16.mesh
    state = state_from(
        mesh,
        rho=lambda x: np.full_like(x, 0.01),
        w=lambda x: np.ones_like(x),
        u=lambda x: -np.sin(2 * np.pi * x) / (2 * np.pi),
    )
    res = dg.entropy_bound(state, const_table16)
    assert not res.feasible
    assert res.bound is None


# -- small data -------------------------------------------------------------------------


def test_small_data_unit_weight_kills_eta(rat_table16):
    mesh = rat_table16.mesh
    state = state_from(
        mesh,
        rho=lambda x: 1.0 + 0.2 * np.cos(2 * np.pi * x),
        w=lambda x: np.ones_like(x),
        u=lambda x: 1e-3 * np.sin(2 * np.pi * x),
    )
    rep = dg.small_data_report(state, rat_table16)
    assert rep.eta == pytest.approx(0.0, abs=1e-12)


def test_small_data_zero_velocity_satisfied(rat_table16):
    state = constant_state(rat_table16.mesh, rho=2.0, u=0.0, w=1.0)
    rep = dg.small_data_report(state, rat_table16)
    assert rep.amplitude0 == pytest.approx(0.0, abs=1e-14)
    assert rep.epsilon_max > 0.0
    assert rep.satisfied
    assert rep.witness is not None and 0 < rep.witness < rep.epsilon_max


def test_small_data_two_flock_report(mesh100, rat_table100):
    state = two_flock_preset(mesh100, rat_table100, "s_model")
    rep = dg.small_data_report(state, rat_table100)
    assert np.isfinite(rep.eta) and rep.eta >= 0.0
    assert rep.epsilon_max > 0.0
    assert rep.u0_inf == pytest.approx(1.0 / (6.0 * np.pi), abs=1e-4)


# -- decay-rate fit ------------------------------------------------------------------------


def test_fit_decay_rate_exact_exponential():
    t = np.linspace(0.0, 2.0, 20)
    fitted, theoretical = dg.fit_decay_rate(t, 3.0 * np.exp(-2.0 * t),
                                            w_min=1.0, mass=2.0, c1=0.5)
    assert fitted == pytest.approx(2.0, abs=1e-9)
    assert theoretical == pytest.approx(1.0)


def test_fit_decay_rate_constant_series():
    t = np.linspace(0.0, 1.0, 10)
    fitted, _ = dg.fit_decay_rate(t, np.full(10, 0.7))
    assert fitted == pytest.approx(0.0, abs=1e-12)


def test_fit_decay_rate_degenerate_cases():
    with pytest.raises(DegenerateSeries):
        dg.fit_decay_rate([0.0, 1.0], [1.0, 0.5])
    with pytest.raises(DegenerateSeries):
        dg.fit_decay_rate([0.0, 0.5, 1.0], [1.0, 0.0, 0.5])
    with pytest.raises(DegenerateSeries):
        dg.fit_decay_rate(np.linspace(0, 1, 9), np.ones(9), window=(0.8, 0.9))
