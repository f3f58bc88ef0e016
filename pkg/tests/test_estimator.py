import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from jumpscale.coefficients import constant_rate_model, qbm_model
from jumpscale.estimator import (
    ScalingLedger,
    decompose,
    ratio_standard_error,
    reconstruct,
    standard_error,
    standard_error_from_sums,
    total_transition_rate,
    validity_error,
)
from jumpscale.flow import build_nojump_path, population_factors
from jumpscale.hilbert import FockVector, StateSpec, make_initial_state
from jumpscale.jumps import trajectory_stream
from jumpscale.trajectories import TrajectoryConfig, prepare_mcwf, run_mcwf_trajectory

from conftest import LINDBLAD, basis


def ledger(**kw):
    base = dict(beta=2.0, grid=[0.0, 1.0], a0=[2.0, 2.0], p_tot=[0.0, 0.01], n=100,
                n_j=[0, 1], a_tot_bar=[2.0, 1.99])
    base.update(kw)
    return ScalingLedger(**base)


def test_worked_example():
    assert reconstruct(ledger(), 1) == pytest.approx(1.995, abs=1e-15)


def test_initial_value_is_the_no_jump_value():
    assert reconstruct(ledger(), 0) == 2.0


def test_terms_at_time_zero():
    terms = decompose(ledger(beta=7.0), 0)
    assert terms.T_B == 0.0
    assert terms.T_C == -2.0 / 7.0 and terms.T_D == 2.0 / 7.0
    assert terms.T_C + terms.T_D == 0.0


def test_unit_beta_with_matching_jump_fraction():
    led = ledger(beta=1.0, p_tot=[0.0, 0.25], n_j=[0, 25], a_tot_bar=[2.0, 3.1])
    assert reconstruct(led, 1) == pytest.approx(3.1, rel=1e-15)


ledgers = st.builds(
    lambda beta, n, frac, p, a0, abar: ledger(beta=beta, n=n, n_j=[0, int(frac * n)], p_tot=[0.0, p],
                                              a0=[a0, a0], a_tot_bar=[a0, abar]),
    st.floats(1, 1e6), st.integers(1, 10**6), st.floats(0, 1), st.floats(0, 0.5),
    st.floats(-10, 10), st.floats(-10, 10))


@given(ledgers)
def test_terms_sum_to_the_reconstruction_bitwise(led):
    for k in (None, 0, 1):
        terms = decompose(led, k)
        total = terms.T_A + (terms.T_B + (terms.T_C + terms.T_D))
        np.testing.assert_array_equal(total, reconstruct(led, k))


@given(st.floats(1, 1e6), st.floats(0, 0.5), st.floats(-10, 10), st.integers(1, 10**6))
def test_deterministic_limit(beta, p, a0, n):
    led = ledger(beta=beta, n=n, n_j=[0, 0], p_tot=[0.0, p], a0=[a0, a0], a_tot_bar=[a0, a0])
    # T_C and T_D cancel exactly, leaving a0 + T_B
    assert reconstruct(led, 1) == a0 + (-(p * a0) / beta)


@pytest.mark.parametrize("kw", [dict(beta=0.5), dict(n=0), dict(n_j=[0, 101]), dict(n_j=[1, 1]),
                                dict(p_tot=[0.1, 0.2]), dict(a_tot_bar=[2.1, 2.0]), dict(a0=[1.0])])
def test_ledger_validation(kw):
    with pytest.raises(ValueError):
        ledger(**kw)


def test_ledger_rejects_decreasing_jump_counts():
    with pytest.raises(ValueError):
        ledger(grid=[0, 1, 2], a0=[2, 2, 2], p_tot=[0, 0.1, 0.2], n_j=[0, 3, 2], a_tot_bar=[2, 2, 2])


def test_standard_error_of_jump_free_ensemble():
    np.testing.assert_array_equal(standard_error(np.zeros((10, 4)), 100.0), 0.0)


def test_standard_error_two_trajectories():
    beta, c = 50.0, 0.3
    y = np.array([[0.0], [2 * beta * c]])
    assert standard_error(y, beta)[0] == pytest.approx(c, rel=1e-15)


def test_standard_error_needs_two():
    with pytest.raises(ValueError):
        standard_error(np.zeros((1, 3)), 1.0)
    with pytest.raises(ValueError):
        standard_error_from_sums(0.0, 0.0, 1, 1.0)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=50), st.floats(1, 1e5))
def test_running_sums_match_direct(ys, beta):
    y = np.array(ys)[:, None]
    direct = standard_error(y, beta)
    sums = standard_error_from_sums(y.sum(0), (y * y).sum(0), y.shape[0], beta)
    # the one-pass variance loses up to sqrt(eps) of the scale when the spread is tiny
    np.testing.assert_allclose(sums, direct, rtol=1e-6, atol=1e-7 * np.abs(y).max() / beta)


def test_ratio_error_reduces_to_plain_error_for_unit_trace():
    rng = np.random.default_rng(0)
    y = rng.normal(size=(200, 3))
    yi = np.zeros_like(y)
    sums = dict(y=y.sum(0), y2=(y * y).sum(0), yi=yi.sum(0), yi2=(yi * yi).sum(0), y_yi=(y * yi).sum(0))
    got = ratio_standard_error(np.ones(3), np.ones(3), sums, 200, 10.0)
    np.testing.assert_allclose(got, standard_error(y, 10.0), rtol=1e-12)


@pytest.mark.parametrize("p, expected", [(0.01, 0.01), (0.0, 0.0)])
def test_validity_error(p, expected):
    assert validity_error(p) == expected


def test_validity_error_floored_by_multi_jumps():
    assert validity_error(0.01, n_multi=5, n=100) == 0.05


@pytest.mark.parametrize("p", [-0.1, 1.0, 2.0])
def test_validity_error_domain(p):
    with pytest.raises(ValueError):
        validity_error(p)


def test_total_rate_vanishes_at_zero():
    path = build_nojump_path(FockVector(basis(2, 10)), qbm_model(LINDBLAD), np.linspace(0, 2, 5))
    assert total_transition_rate(path, 1e4)[0] == 0.0


def test_total_rate_constant_model_closed_form():
    up, down, beta = 0.01, 0.03, 20.0
    grid = np.linspace(0, 4, 9)
    path = build_nojump_path(FockVector(basis(1, 10)), constant_rate_model(1.0, up, down), grid)
    np.testing.assert_allclose(total_transition_rate(path, beta), beta * (2 * up + down) * grid, rtol=1e-12)


def test_total_rate_matches_adaptive_quadrature():
    model = qbm_model(LINDBLAD)
    psi = make_initial_state(StateSpec("coherent", np.sqrt(2)), 30)
    p0 = psi.populations()
    weights = model.jump_weights(30)
    beta = 1e4

    def flux(s):
        pops = p0 * population_factors(0.0, [s], model, 30)[0]
        return float(model.rates(np.array([s]))[:, 0] @ (weights @ pops) / pops.sum())

    ref = beta * integrate.quad(flux, 0, 5, limit=400, epsabs=0, epsrel=1e-12)[0]
    path = build_nojump_path(psi, model, np.linspace(0, 5, 61))
    assert total_transition_rate(path, beta)[-1] == pytest.approx(ref, rel=1e-6)


def test_affine_identity_on_an_ensemble():
    cfg = TrajectoryConfig(LINDBLAD, "mcwf", 1e4, np.linspace(0, 5, 11), initial=StateSpec("coherent", np.sqrt(2)))
    sh = prepare_mcwf(cfg)
    recs = [run_mcwf_trajectory(cfg, trajectory_stream(0, i), i, shared=sh) for i in range(2000)]
    recs = [r for r in recs if not r.multi_jump]
    n = len(recs)
    a0 = sh.path.observable_curve
    vals = np.array([r.values for r in recs])
    jumped = np.array([r.jumped_by for r in recs])
    y = np.where(jumped, vals, 0.0)
    led = ScalingLedger(cfg.beta, cfg.sample_grid, a0, total_transition_rate(sh.path, cfg.beta), n,
                        jumped.sum(0), vals.mean(0))
    affine = (1 - led.p_tot / cfg.beta) * a0 + y.mean(0) / cfg.beta
    np.testing.assert_allclose(reconstruct(led), affine, rtol=1e-13)
    assert np.all(standard_error(y, cfg.beta) >= 0)
