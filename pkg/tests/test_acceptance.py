"""Acceptance suite: one verdict line per criterion, at full ensemble sizes.

Run with ``pytest tests/test_acceptance.py -v -s``; the verdicts are also
collected in the terminal summary under "acceptance criteria".
"""

import time

import numpy as np
import pytest

from jumpscale.coefficients import constant_rate_model, qbm_model
from jumpscale.ensemble import FULL_N_TRAJ, PRESETS, QUICK_N_TRAJ, compare, oracle_curve, run_ensemble
from jumpscale.estimator import decompose, reconstruct
from jumpscale.flow import build_nojump_path
from jumpscale.hilbert import FockVector, make_initial_state
from jumpscale.oracle import DensityMatrix, heating_moment, integrate_master, master_curve, path_integral_expectation

from conftest import basis, record_verdict

pytestmark = pytest.mark.slow

FIG1 = PRESETS["fig1"].with_overrides(n_traj=FULL_N_TRAJ)
FIG2 = PRESETS["fig2"].with_overrides(n_traj=FULL_N_TRAJ)
Z_BOUND = 3.0


@pytest.fixture(scope="session")
def fig1_run():
    return run_ensemble(FIG1)


@pytest.fixture(scope="session")
def fig1_low_beta_run():
    return run_ensemble(FIG1.with_overrides(beta=FIG1.beta / 10, n_traj=FIG1.n_traj * 10, seed=1))


@pytest.fixture(scope="session")
def fig2_run():
    return run_ensemble(FIG2)


@pytest.fixture(scope="session")
def fig1_oracle():
    return oracle_curve(FIG1)


@pytest.fixture(scope="session")
def fig2_oracle():
    return oracle_curve(FIG2)


def local_extrema(y):
    """Interior indices where y has a strict local maximum (+1) or minimum (-1)."""
    d = np.sign(np.diff(y))
    idx = np.flatnonzero(d[:-1] * d[1:] < 0) + 1
    return {int(i): int(-d[i - 1]) for i in idx}


def test_criterion_1_lindblad_reproduction(fig1_run, fig1_oracle):
    rep = compare(fig1_run, fig1_oracle)
    within = bool(np.all(np.abs(rep.z) <= Z_BOUND))
    exact_start = fig1_run.reconstructed[0] == 2.0
    ok = within and exact_start
    record_verdict(1, ok, f"max |z| = {rep.max_abs_z:.3g} over {rep.t.size} times, "
                          f"{int(np.sum(np.abs(rep.z) > Z_BOUND))} above {Z_BOUND:g}; "
                          f"<n>(0) = {fig1_run.reconstructed[0]!r}")
    assert ok


def test_criterion_2_non_lindblad_reproduction(fig2_run, fig2_oracle):
    rep = compare(fig2_run, fig2_oracle)
    frac = rep.fraction_within(Z_BOUND)
    orc_ext = local_extrema(fig2_oracle.value)
    rec_ext = local_extrema(fig2_run.reconstructed)
    tracked = [i for i, kind in orc_ext.items()
               if any(rec_ext.get(j) == kind for j in (i - 1, i, i + 1))]
    ok = frac >= 0.99 and len(orc_ext) >= 2 and len(tracked) >= 2
    record_verdict(2, ok, f"fraction |z| <= {Z_BOUND:g} = {frac:.3f}, max |z| = {rep.max_abs_z:.3g}; "
                          f"oracle extrema {len(orc_ext)}, tracked {len(tracked)}")
    assert ok


def test_criterion_3_scaling_identities(fig1_run, fig2_run):
    start_ok, bitwise_ok = True, True
    for res in (fig1_run, fig2_run):
        led = res.ledger()
        start_ok &= bool(reconstruct(led, 0) == led.a0[0])
        terms = decompose(led)
        bitwise_ok &= bool(np.array_equal(terms.total, reconstruct(led)))
        bitwise_ok &= bool(np.array_equal(terms.total, res.T_A + (res.T_B + (res.T_C + res.T_D))))
    tb, tc, td = fig2_run.T_B[-1], fig2_run.T_C[-1], fig2_run.T_D[-1]
    cancel_ok = abs(tb + tc) <= 0.1 * max(abs(tb), abs(tc))
    ok = start_ok and bitwise_ok and cancel_ok
    record_verdict(3, ok, f"start exact {start_ok}, term sum bitwise {bitwise_ok}; horizon "
                          f"T_B = {tb:.3e}, T_C = {tc:.3e}, |T_B + T_C| = {abs(tb + tc):.3e} "
                          f"vs bound {0.1 * max(abs(tb), abs(tc)):.3e} (T_C + T_D = {tc + td:.3e})")
    assert ok


def test_criterion_4_beta_robustness(fig1_run, fig1_low_beta_run):
    se = np.hypot(fig1_run.stderr, fig1_low_beta_run.stderr)
    diff = np.abs(fig1_run.reconstructed - fig1_low_beta_run.reconstructed)
    bad = diff > 3 * se
    ratio = np.max(np.divide(diff, se, out=np.zeros_like(diff), where=se > 0))
    ok = not bad.any()
    record_verdict(4, ok, f"{int(bad.sum())} of {diff.size} times outside 3 combined stderr, "
                          f"max ratio {ratio:.3g}")
    assert ok


def test_criterion_5_one_jump_validity(fig1_run, fig2_run):
    counts = [res.summary["n_multi"] for res in (fig1_run, fig2_run)]
    matches = [res.summary["validity_error"] == res.p_tot[-1] for res in (fig1_run, fig2_run)]
    ok = counts == [0, 0] and all(matches)
    record_verdict(5, ok, f"multi-jump counts {counts[0]} (lindblad) and {counts[1]} (non-lindblad) "
                          f"of {FULL_N_TRAJ}; validity_error == p_tot(horizon): {matches}")
    assert ok


def test_criterion_6_oracle_self_consistency():
    devs, drift = [], 0.0
    for cfg in (FIG1, FIG2):
        rho0 = DensityMatrix.from_state(make_initial_state(cfg.state, cfg.n_max))
        states = integrate_master(rho0, cfg.params, cfg.sample_grid)
        master = np.array([rho.expectation() for rho in states])
        devs.append(float(np.max(np.abs(heating_moment(rho0.expectation(), cfg.params, cfg.sample_grid) - master))))
        drift = max(drift, max(max(abs(rho.trace - 1), rho.hermiticity_defect) for rho in states))
    lam = 0.5
    grid = np.linspace(0, 5, 11)
    damp = master_curve(DensityMatrix.from_state(FockVector(basis(1, 10))), constant_rate_model(1.0, 0.0, lam), grid)
    damp_err = float(np.max(np.abs(damp - np.exp(-lam * grid))))
    ok = max(devs) <= 1e-8 and drift <= 1e-10 and damp_err <= 1e-8
    record_verdict(6, ok, f"moment vs master {devs[0]:.2e} / {devs[1]:.2e}, trace and hermiticity drift "
                          f"{drift:.2e}, damping error {damp_err:.2e}")
    assert ok


def test_criterion_7_path_integral_oracle(fig1_run, fig1_oracle):
    psi = make_initial_state(FIG1.state, FIG1.n_max)
    model = qbm_model(FIG1.params)
    grid = FIG1.sample_grid
    lam = build_nojump_path(psi, model, grid).sample_cumulative_rate
    pi = np.array([path_integral_expectation(psi, model, float(t)) for t in grid])
    master_gap = np.abs(pi - fig1_oracle.value)
    master_ok = bool(np.all(master_gap <= 2 * lam**2 + 1e-8))
    rep = compare(fig1_run, pi)
    mc_ok = bool(np.all(np.abs(rep.z) <= Z_BOUND))
    ok = master_ok and mc_ok
    record_verdict(7, ok, f"vs master max gap {master_gap.max():.2e} (within bound: {master_ok}); "
                          f"vs Monte Carlo max |z| = {rep.max_abs_z:.3g}")
    assert ok


def test_criterion_8_jump_statistics(fig1_run, fig2_run):
    worst = []
    for res in (fig1_run, fig2_run):
        n = res.summary["n_traj"]
        p = 1 - np.exp(-res.p_tot)
        sigma = np.sqrt(p * (1 - p) / n)
        dev = np.abs(res.n_any / n - p)
        z = np.divide(dev, sigma, out=np.where(dev > 0, np.inf, 0.0), where=sigma > 0)
        worst.append(float(z.max()))
    ok = max(worst) <= 4
    record_verdict(8, ok, f"max deviation {worst[0]:.2f} sigma (lindblad), {worst[1]:.2f} sigma (non-lindblad)")
    assert ok


def test_criterion_9_determinism_and_scaling(tmp_path):
    cfg = PRESETS["fig1"].with_overrides(n_traj=20_000, seed=7)
    files = [run_ensemble(cfg, workers=w).write(tmp_path / f"w{w}.csv").read_bytes() for w in (1, 4, 16)]
    identical = files[0] == files[1] == files[2]
    quick = PRESETS["fig1"].with_overrides(n_traj=QUICK_N_TRAJ)
    start = time.perf_counter()
    run_ensemble(quick, workers=1)
    t1 = time.perf_counter() - start
    start = time.perf_counter()
    run_ensemble(quick, workers=4)
    t4 = time.perf_counter() - start
    speedup = t1 / t4
    ok = identical and speedup >= 3
    record_verdict(9, ok, f"1/4/16 workers identical {identical}; speedup 1 -> 4 workers {speedup:.2f}x "
                          f"({t1:.1f} s vs {t4:.1f} s)")
    assert ok
