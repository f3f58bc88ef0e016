import numpy as np
import pytest

from jumpscale.ensemble import (
    COLUMNS,
    PRESETS,
    EnsembleResult,
    OracleCurve,
    RunConfig,
    chunk_bounds,
    compare,
    oracle_curve,
    read_key_values,
    run_ensemble,
)
from jumpscale.errors import ConfigError
from jumpscale.estimator import ScalingLedger, reconstruct, total_transition_rate
from jumpscale.jumps import trajectory_stream
from jumpscale.trajectories import prepare_mcwf, run_mcwf_trajectory

FIG1 = PRESETS["fig1"]
FIG2 = PRESETS["fig2"]

CONFIG_TEXT = """\
# quick lindblad run
model.theta_bar = 1.2e-6
model.g_bar = 0.5e-8
model.r = 10
sim.unravelling = mcwf
sim.beta = 1e4
sim.t_final = 5   # horizon
sim.samples = 11
sim.n_traj = 2e3
state.kind = coherent
state.value = 1.4142135623730951
"""


@pytest.fixture(scope="module")
def small_fig1():
    return run_ensemble(FIG1.with_overrides(n_traj=3000, samples=11))


def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(CONFIG_TEXT, encoding="utf-8")
    cfg = RunConfig.load(path)
    assert cfg.r == 10.0 and cfg.t_final == 5.0 and cfg.n_traj == 2000
    assert cfg.state_value == complex(np.sqrt(2))
    assert cfg.seed == 0 and cfg.n_max == 30


def test_config_text_round_trip():
    for cfg in PRESETS.values():
        assert RunConfig.from_mapping(read_key_values(cfg.to_text())) == cfg


@pytest.mark.parametrize("text", [
    CONFIG_TEXT + "sim.colour = red\n",
    CONFIG_TEXT + "sim.beta = 2\n",
    CONFIG_TEXT.replace("sim.beta = 1e4", "sim.beta = lots"),
    CONFIG_TEXT.replace("sim.samples = 11", "sim.samples = 1.5"),
    CONFIG_TEXT.replace("sim.samples = 11", "sim.samples = 1"),
    CONFIG_TEXT.replace("model.r = 10\n", ""),
    CONFIG_TEXT.replace("sim.unravelling = mcwf", "sim.unravelling = both"),
    CONFIG_TEXT + "just words\n",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        RunConfig.from_mapping(read_key_values(text))


def test_mcwf_needs_lindblad_rates():
    with pytest.raises(ConfigError):
        FIG2.with_overrides(unravelling="mcwf").trajectory_config()


def test_overrides_skip_none():
    cfg = FIG1.with_overrides(seed=None, n_traj=7)
    assert cfg.seed == FIG1.seed and cfg.n_traj == 7


def test_chunk_bounds_cover_ids():
    assert chunk_bounds(5000, 2048) == [(0, 2048), (2048, 4096), (4096, 5000)]


def test_single_trajectory_matches_the_estimator():
    cfg = FIG1.with_overrides(n_traj=1, samples=11, seed=4)
    res = run_ensemble(cfg)
    tcfg = cfg.trajectory_config()
    sh = prepare_mcwf(tcfg)
    rec = run_mcwf_trajectory(tcfg, trajectory_stream(4, 0), 0, shared=sh)
    led = ScalingLedger(cfg.beta, cfg.sample_grid, sh.path.observable_curve,
                        total_transition_rate(sh.path, cfg.beta), 1, rec.jumped_by.astype(int), rec.values)
    np.testing.assert_allclose(res.reconstructed, reconstruct(led), rtol=1e-14)
    np.testing.assert_array_equal(res.stderr, 0.0)


@pytest.mark.parametrize("base", [FIG1, FIG2])
def test_no_dissipation_gives_the_initial_value(base):
    res = run_ensemble(base.with_overrides(theta_bar=0.0, g_bar=0.0, n_traj=50, samples=5))
    # doubled runs divide by the reconstructed trace, which is the stored no-jump trace here
    expected = res.a0 if base.unravelling == "mcwf" else res.a0 / res.trace
    np.testing.assert_array_equal(res.reconstructed, expected)
    np.testing.assert_array_equal(res.stderr, 0.0)
    np.testing.assert_array_equal(res.n_j, 0)


def test_initial_value_is_exact(small_fig1):
    assert small_fig1.reconstructed[0] == small_fig1.a0[0]
    assert small_fig1.reconstructed[0] == pytest.approx(2.0, rel=1e-14)


def test_result_invariants(small_fig1):
    s = small_fig1.summary
    assert s["n_kept"] + s["n_multi"] == s["n_traj"]
    assert np.all(np.diff(small_fig1.n_j) >= 0)
    for name in COLUMNS:
        assert np.all(np.isfinite(small_fig1.columns[name]))
    assert s["P_c"] == small_fig1.p_tot[-1]
    assert s["validity_error"] >= s["P_c"]


def test_terms_sum_to_the_reconstruction(small_fig1):
    c = small_fig1.columns
    np.testing.assert_array_equal(c["T_A"] + (c["T_B"] + (c["T_C"] + c["T_D"])), c["reconstructed"])


def test_result_file_round_trip(small_fig1, tmp_path):
    path = small_fig1.write(tmp_path / "r.csv")
    back = EnsembleResult.read(path)
    assert back.same_as(small_fig1)
    assert back.write(tmp_path / "again.csv").read_bytes() == path.read_bytes()


def test_result_file_header(small_fig1, tmp_path):
    lines = small_fig1.write(tmp_path / "r.csv").read_text().splitlines()
    header = next(line for line in lines if not line.startswith("#"))
    assert header.split(",") == list(COLUMNS)


def test_worker_count_does_not_change_the_output(tmp_path):
    cfg = FIG1.with_overrides(n_traj=1500, samples=11, seed=12)
    files = []
    for workers in (1, 4, 16):
        res = run_ensemble(cfg, workers=workers, chunk=100)
        files.append(res.write(tmp_path / f"w{workers}.csv").read_bytes())
    assert files[0] == files[1] == files[2]


def test_doubled_run_has_unit_trace_at_start():
    res = run_ensemble(FIG2.with_overrides(n_traj=2000, samples=7))
    assert res.trace[0] == pytest.approx(1.0, rel=1e-15)
    assert res.reconstructed[0] == res.a0[0] / res.trace[0]
    assert res.reconstructed[0] == pytest.approx(0.5, rel=1e-14)
    np.testing.assert_allclose(res.trace, 1.0, atol=1e-3)


def test_beta_consistency():
    lo = run_ensemble(FIG1.with_overrides(beta=1e2, n_traj=20_000, samples=11, seed=1))
    hi = run_ensemble(FIG1.with_overrides(beta=1e3, n_traj=20_000, samples=11, seed=2))
    se = np.hypot(lo.stderr, hi.stderr)
    assert np.all(np.abs(lo.reconstructed - hi.reconstructed) <= 3 * se + 1e-15)


def test_compare_identical_curves():
    cols = {name: np.zeros(3) for name in COLUMNS}
    cols["t"] = np.array([0.0, 1.0, 2.0])
    cols["reconstructed"] = np.array([1.0, 2.0, 3.0])
    cols["stderr"] = np.array([0.0, 0.1, 0.1])
    res = EnsembleResult(cols, {})
    rep = compare(res, OracleCurve(cols["t"], cols["reconstructed"].copy()))
    np.testing.assert_array_equal(rep.z, 0.0)
    assert not rep.flagged.any() and rep.frac_within_3 == 1.0


def test_compare_shifted_curve():
    cols = {name: np.zeros(3) for name in COLUMNS}
    cols["t"] = np.array([0.0, 1.0, 2.0])
    cols["stderr"] = np.array([0.5, 0.1, 0.2])
    cols["reconstructed"] = np.array([1.0, 2.0, 3.0]) + 2 * cols["stderr"]
    rep = compare(EnsembleResult(cols, {}), np.array([1.0, 2.0, 3.0]))
    assert rep.max_abs_z == pytest.approx(2.0, rel=1e-12)


def test_compare_flags_zero_error_mismatch():
    cols = {name: np.zeros(2) for name in COLUMNS}
    cols["t"] = np.array([0.0, 1.0])
    cols["reconstructed"] = np.array([1.0, 1.5])
    rep = compare(EnsembleResult(cols, {}), np.array([1.0, 1.0]))
    assert rep.flagged.tolist() == [False, True]
    assert rep.max_abs_z == np.inf


def test_compare_grid_mismatch():
    cols = {name: np.zeros(3) for name in COLUMNS}
    cols["t"] = np.array([0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        compare(EnsembleResult(cols, {}), OracleCurve(np.array([0.0, 1.0]), np.zeros(2)))
    with pytest.raises(ValueError):
        compare(EnsembleResult(cols, {}), OracleCurve(np.array([0.0, 1.0, 3.0]), np.zeros(3)))


def test_oracle_curve_round_trip(tmp_path):
    orc = oracle_curve(FIG1.with_overrides(samples=6))
    back = OracleCurve.read(orc.write(tmp_path / "o.csv"))
    np.testing.assert_array_equal(back.t, orc.t)
    np.testing.assert_array_equal(back.value, orc.value)
    assert orc.value[0] == pytest.approx(2.0, rel=1e-14)
