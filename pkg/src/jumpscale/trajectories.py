"""Single stochastic realizations for both unravellings.

Two implementations of each driver share one random-stream layout:

* ``method="stepwise"`` walks the integration grid with the per-step
  primitives from :mod:`jumpscale.flow` and :mod:`jumpscale.jumps`.
* ``method="fast"`` (default) uses the closed-form diagonal flow: a
  trajectory sits on the shared no-jump path until its first jump, and after
  a jump its state is propagated analytically to exactly the times needed.

Stream layout.  mcwf: one uniform per integration step, drawn up front
(``stream.random(n_steps)``), compared against the scaled jump probability
at the step's left endpoint.  doubled: per jump, one uniform for the waiting
time and one for the channel; a final waiting-time uniform that lands past
the horizon ends the trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coefficients import OhmicParams, OscillatorModel, qbm_model
from .errors import ConfigError, GuardTrip, LeakageError
from .flow import (
    DEFAULT_DT,
    build_doubled_path,
    build_nojump_path,
    doubled_segment,
    evolve_doubled,
    evolve_nojump,
    fine_grid,
)
from .hilbert import (
    LEAKAGE_TOL,
    DensityAccumulator,
    DoubledVector,
    FockVector,
    StateSpec,
    check_leakage,
    make_initial_state,
    observable_weights,
)
from .jumps import (
    MAX_STEP_PROBABILITY,
    CumulativeTable,
    JumpEvent,
    StepProbabilities,
    apply_jump_doubled,
    apply_jump_mcwf,
    decide,
    doubled_rates,
    sample_waiting_time,
    step_probabilities_mcwf,
)

MAX_CUMULATIVE_PROBABILITY = 0.5


@dataclass(frozen=True, eq=False)
class TrajectoryConfig:
    """Everything one realization needs.

    ``model`` may be :class:`OhmicParams` (the QBM model is built from it)
    or any :class:`OscillatorModel`.
    """

    model: object
    unravelling: str
    beta: float
    sample_grid: np.ndarray
    n_max: int = 30
    initial: StateSpec = StateSpec("fock", 0)
    observable: object = "number"
    dt: float = DEFAULT_DT
    snapshots: bool = False

    def __post_init__(self):
        if isinstance(self.model, OhmicParams):
            object.__setattr__(self, "params", self.model)
            object.__setattr__(self, "model", qbm_model(self.model))
        elif isinstance(self.model, OscillatorModel):
            object.__setattr__(self, "params", None)
        else:
            raise ConfigError("model must be OhmicParams or OscillatorModel")
        grid = np.asarray(self.sample_grid, dtype=float)
        object.__setattr__(self, "sample_grid", grid)
        if self.unravelling not in ("mcwf", "doubled"):
            raise ConfigError(f"unknown unravelling {self.unravelling!r}")
        if self.beta < 1:
            raise ConfigError("beta must be >= 1")
        if grid.size < 2 or grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
            raise ConfigError("sample grid must start at 0 and increase strictly")
        if self.unravelling == "mcwf" and self.model.classify(self.horizon) != "lindblad":
            raise ConfigError("mcwf unravelling needs nonnegative rates; use the doubled unravelling")

    @property
    def horizon(self) -> float:
        return float(self.sample_grid[-1])


@dataclass
class TrajectoryRecord:
    values: np.ndarray
    jumped_by: np.ndarray
    jump_log: list = field(default_factory=list)
    trace: np.ndarray | None = None
    snapshots: list | None = None

    @property
    def multi_jump(self) -> bool:
        return len(self.jump_log) >= 2


# ---------------------------------------------------------------- mcwf ----

@dataclass(frozen=True, eq=False)
class McwfShared:
    """Read-only data shared by all mcwf trajectories of one configuration."""

    cfg: TrajectoryConfig
    path: object
    psi0: FockVector
    step_probs: np.ndarray  # (n_ch, n_steps) scaled, left endpoints
    weights: np.ndarray
    obs: np.ndarray

    @property
    def times(self):
        return self.path.times

    @property
    def sample_index(self):
        return self.path.sample_index


def prepare_mcwf(cfg: TrajectoryConfig) -> McwfShared:
    if cfg.unravelling != "mcwf":
        raise ConfigError("prepare_mcwf needs an mcwf configuration")
    psi0 = make_initial_state(cfg.initial, cfg.n_max)
    path = build_nojump_path(psi0, cfg.model, cfg.sample_grid, cfg.dt, cfg.observable)
    h = np.diff(path.times)
    probs = cfg.beta * h * path.step_rates[:, :-1]
    total = probs.sum(axis=0)
    if total.max() >= MAX_STEP_PROBABILITY:
        j = int(np.argmax(total))
        raise GuardTrip(f"scaling too aggressive: step probability {total[j]:.3g}", time=path.times[j])
    p_tot = cfg.beta * path.cumulative_rate[-1]
    if p_tot > MAX_CUMULATIVE_PROBABILITY:
        raise GuardTrip(f"cumulative scaled jump probability {p_tot:.3g} > "
                        f"{MAX_CUMULATIVE_PROBABILITY}: two-jump regime", time=cfg.horizon)
    return McwfShared(cfg, path, psi0, probs, cfg.model.jump_weights(cfg.n_max),
                      observable_weights(cfg.observable, cfg.n_max))


def _post_jump_pops(sh: McwfShared, p_post: np.ndarray, j0: int, idx: np.ndarray) -> np.ndarray:
    """Normalized populations at grid indices ``idx`` for a state p_post at times[j0]."""
    integrals = sh.path.integrals
    damp = (integrals[:, idx] - integrals[:, [j0]]).T @ sh.weights
    pops = p_post * np.exp(-damp)
    return pops / pops.sum(axis=1, keepdims=True)


def _next_own_jump(sh: McwfShared, u: np.ndarray, p_post: np.ndarray, j0: int, start: int):
    """First step >= start where u falls below the jump probability of the
    own (post-jump) flow; returns (step, per-channel probabilities) or None."""
    n_steps = u.size
    if start >= n_steps:
        return None
    beta = sh.cfg.beta
    h = np.diff(sh.times)[start:]
    rates = sh.path.rates[:, start:n_steps]
    support = p_post > 0
    wmax = np.array([w[support].max() for w in sh.weights])
    bound = beta * h * (rates * wmax[:, None]).sum(axis=0)
    if bound.max() >= MAX_STEP_PROBABILITY:
        idx = np.arange(start, n_steps)
        loads = _post_jump_pops(sh, p_post, j0, idx) @ sh.weights.T
        exact = beta * h * (rates * loads.T).sum(axis=0)
        if exact.max() >= MAX_STEP_PROBABILITY:
            k = int(np.argmax(exact))
            raise GuardTrip(f"scaling too aggressive: step probability {exact[k]:.3g}",
                            time=sh.times[start + k])
    cand = start + np.flatnonzero(u[start:] < bound)
    if cand.size == 0:
        return None
    loads = _post_jump_pops(sh, p_post, j0, cand) @ sh.weights.T  # (m, n_ch)
    probs = beta * (sh.times[cand + 1] - sh.times[cand])[:, None] * sh.path.rates[:, cand].T * loads
    hit = np.flatnonzero(u[cand] < probs.sum(axis=1))
    if hit.size == 0:
        return None
    return int(cand[hit[0]]), probs[hit[0]]


def _mcwf_fast(sh: McwfShared, u: np.ndarray, trajectory_id: int) -> TrajectoryRecord:
    sidx = sh.sample_index
    values = sh.path.observable_curve.copy()
    jumped = np.zeros(sidx.size, dtype=bool)
    log = []
    total_shared = sh.step_probs.sum(axis=0)
    hits = np.flatnonzero(u < total_shared)
    if hits.size == 0:
        return TrajectoryRecord(values, jumped, log, np.ones_like(values))
    j = int(hits[0])
    probs = sh.step_probs[:, j]
    p_state = np.abs(sh.path.amplitudes[j]) ** 2
    while True:
        ch = decide(StepProbabilities(probs), u[j])
        t = float(sh.times[j])
        log.append(JumpEvent(t, ch, trajectory_id))
        op = sh.cfg.model.operators[ch - 1]
        # populations after a ladder jump: a -> n p_n shifted down, a† -> (n+1) p_n shifted up
        p_post = np.zeros_like(p_state)
        if op == "lower":
            p_post[:-1] = np.arange(1, p_state.size) * p_state[1:]
        else:
            p_post[1:] = np.arange(1, p_state.size) * p_state[:-1]
        if p_post.sum() == 0.0:
            raise GuardTrip("jump annihilated the state", trajectory_id=trajectory_id, time=t)
        p_post /= p_post.sum()
        after = sidx > j
        if np.any(after):
            pops = _post_jump_pops(sh, p_post, j, sidx[after])
            leak = pops[:, -2:].sum(axis=1)
            if leak.max() > LEAKAGE_TOL:
                raise LeakageError(f"population {leak.max():.3e} above n_max-2",
                                   trajectory_id=trajectory_id, time=t)
            values[after] = pops @ sh.obs
            jumped[after] = True
        nxt = _next_own_jump(sh, u, p_post, j, j + 1)
        if nxt is None:
            break
        j_new, probs = nxt
        p_state = _post_jump_pops(sh, p_post, j, np.array([j_new]))[0]
        j = j_new
    return TrajectoryRecord(values, jumped, log, np.ones_like(values))


def _mcwf_stepwise(cfg: TrajectoryConfig, u: np.ndarray, trajectory_id: int,
                   integrator: str) -> TrajectoryRecord:
    model = cfg.model
    psi = make_initial_state(cfg.initial, cfg.n_max)
    times, sidx = fine_grid(cfg.sample_grid, cfg.dt)
    sample_at = {int(j): k for k, j in enumerate(sidx)}
    values = np.empty(sidx.size)
    jumped = np.zeros(sidx.size, dtype=bool)
    log = []
    for j in range(times.size):
        if j in sample_at:
            k = sample_at[j]
            check_leakage(psi, time=times[j])
            values[k] = float(psi.populations() @ observable_weights(cfg.observable, cfg.n_max))
            jumped[k] = bool(log)
        if j == times.size - 1:
            break
        h = times[j + 1] - times[j]
        try:
            probs = step_probabilities_mcwf(psi, times[j], h, cfg.beta, model)
        except GuardTrip as exc:
            exc.trajectory_id = trajectory_id
            raise
        ch = decide(probs, u[j])
        if ch:
            log.append(JumpEvent(float(times[j]), ch, trajectory_id))
            psi = apply_jump_mcwf(psi, ch, model)
        psi, _ = evolve_nojump(psi, times[j], h, model, method=integrator)
        psi = psi.normalize()
    return TrajectoryRecord(values, jumped, log, np.ones_like(values))


def run_mcwf_trajectory(cfg: TrajectoryConfig, stream, trajectory_id: int = 0,
                        shared: McwfShared | None = None, method: str = "fast",
                        integrator: str = "exact") -> TrajectoryRecord:
    """One scaled MCWF realization.

    Each integration step compares the step's uniform against the scaled
    jump probability of the state at the step's start; on a jump the state
    is replaced by L_i psi / |L_i psi| and then flows on under the unscaled
    non-Hermitian Hamiltonian.
    """
    if cfg.unravelling != "mcwf":
        raise ConfigError("run_mcwf_trajectory needs an mcwf configuration")
    sh = shared if shared is not None else prepare_mcwf(cfg)
    u = np.asarray(stream.random(sh.times.size - 1), dtype=float)
    if method == "fast":
        return _mcwf_fast(sh, u, trajectory_id)
    if method == "stepwise":
        return _mcwf_stepwise(cfg, u, trajectory_id, integrator)
    raise ValueError(f"unknown method {method!r}")


# ------------------------------------------------------------- doubled ----

@dataclass(frozen=True, eq=False)
class DoubledShared:
    cfg: TrajectoryConfig
    pair0: DoubledVector
    path: object
    times: np.ndarray
    sample_index: np.ndarray
    integrals: np.ndarray
    table: CumulativeTable
    obs: np.ndarray

    @property
    def a0(self) -> np.ndarray:
        return self.path.cross_terms(self.obs, self.sample_index)

    @property
    def trace0(self) -> np.ndarray:
        return self.path.cross_terms(np.ones_like(self.obs), self.sample_index)


def _check_segment(cfg, times, total_rate, trajectory_id=None):
    step = cfg.beta * 0.5 * np.diff(times) * (total_rate[1:] + total_rate[:-1])
    if step.size and step.max() >= MAX_STEP_PROBABILITY:
        j = int(np.argmax(step))
        raise GuardTrip(f"scaling too aggressive: step probability {step[j]:.3g}",
                        trajectory_id=trajectory_id, time=times[j])


def prepare_doubled(cfg: TrajectoryConfig) -> DoubledShared:
    if cfg.unravelling != "doubled":
        raise ConfigError("prepare_doubled needs a doubled configuration")
    psi0 = make_initial_state(cfg.initial, cfg.n_max)
    pair0 = DoubledVector.from_state(psi0)
    path, times, sidx = build_doubled_path(pair0, cfg.model, cfg.sample_grid, cfg.dt)
    _check_segment(cfg, times, path.total_rate)
    table = CumulativeTable.from_rates(times, cfg.beta * path.total_rate)
    if table.horizon_value > MAX_CUMULATIVE_PROBABILITY:
        raise GuardTrip(f"cumulative scaled jump probability {table.horizon_value:.3g} > "
                        f"{MAX_CUMULATIVE_PROBABILITY}: two-jump regime", time=cfg.horizon)
    return DoubledShared(cfg, pair0, path, times, sidx, cfg.model.integrals(times), table,
                         observable_weights(cfg.observable, cfg.n_max))


def _doubled_fast(sh: DoubledShared, stream, trajectory_id: int) -> TrajectoryRecord:
    cfg, model = sh.cfg, sh.cfg.model
    sidx = sh.sample_index
    ones = np.ones_like(sh.obs)
    values, trace = sh.a0.copy(), sh.trace0.copy()
    jumped = np.zeros(sidx.size, dtype=bool)
    snaps = [sh.path.pair_at(j) for j in sidx] if cfg.snapshots else None
    log = []
    seg = sh.path
    table = sh.table
    while True:
        tau = sample_waiting_time(table, stream.random())
        if tau is None:
            break
        # last segment node at or before tau, then flow exactly to tau
        k = int(np.searchsorted(seg.times, tau, side="right")) - 1
        start = seg.pair_at(k)
        if tau > seg.times[k]:
            pair = doubled_segment(start, [seg.times[k], tau], model).pair_at(1)
        else:
            pair = start
        probs = doubled_rates(pair, tau, cfg.beta, model)
        ch = decide(StepProbabilities(probs / probs.sum()), stream.random())
        pair = apply_jump_doubled(pair, ch, tau, model)
        log.append(JumpEvent(float(tau), ch, trajectory_id))
        first = int(np.searchsorted(sh.times, tau, side="right"))
        seg_times = np.concatenate([[tau], sh.times[first:]])
        integ = np.concatenate([model.integrals(np.array([tau])), sh.integrals[:, first:]], axis=1)
        seg = doubled_segment(pair, seg_times, model, integ)
        _check_segment(cfg, seg_times, seg.total_rate, trajectory_id)
        table = CumulativeTable.from_rates(seg_times, cfg.beta * seg.total_rate)
        after = np.flatnonzero(sidx >= first)
        if after.size:
            local = sidx[after] - first + 1
            for grid_j in local:
                check_leakage(FockVector(seg.upper[grid_j]), time=seg.times[grid_j])
                check_leakage(FockVector(seg.lower[grid_j]), time=seg.times[grid_j])
            values[after] = seg.cross_terms(sh.obs, local)
            trace[after] = seg.cross_terms(ones, local)
            jumped[after] = True
            if snaps is not None:
                for a, loc in zip(after, local):
                    snaps[a] = seg.pair_at(int(loc))
    return TrajectoryRecord(values, jumped, log, trace, snaps)


def _doubled_stepwise(cfg: TrajectoryConfig, stream, trajectory_id: int,
                      integrator: str) -> TrajectoryRecord:
    model = cfg.model
    obs = observable_weights(cfg.observable, cfg.n_max)
    times, sidx = fine_grid(cfg.sample_grid, cfg.dt)
    sample_at = {int(j): k for k, j in enumerate(sidx)}
    pair = DoubledVector.from_state(make_initial_state(cfg.initial, cfg.n_max))
    values = np.empty(sidx.size)
    trace = np.empty(sidx.size)
    jumped = np.zeros(sidx.size, dtype=bool)
    snaps = [] if cfg.snapshots else None
    log = []

    def total_rate(p, t):
        return float(doubled_rates(p, t, cfg.beta, model).sum())

    target = -np.log1p(-stream.random())
    cum = 0.0
    t = 0.0
    for j in range(times.size):
        if j in sample_at:
            k = sample_at[j]
            values[k] = pair.weight * float((np.conj(pair.lower.amplitudes) * obs
                                             * pair.upper.amplitudes).sum().real)
            trace[k] = pair.weight * float(np.vdot(pair.lower.amplitudes, pair.upper.amplitudes).real)
            jumped[k] = bool(log)
            if snaps is not None:
                snaps.append(pair)
        if j == times.size - 1:
            break
        t_end = times[j + 1]
        while True:
            r0 = total_rate(pair, t)
            nxt = evolve_doubled(pair, t, t_end - t, model, method=integrator)
            r1 = total_rate(nxt, t_end)
            h = t_end - t
            inc = 0.5 * h * (r0 + r1)
            if inc >= MAX_STEP_PROBABILITY:
                raise GuardTrip(f"scaling too aggressive: step probability {inc:.3g}",
                                trajectory_id=trajectory_id, time=t)
            if cum + inc < target:
                cum += inc
                pair, t = nxt, t_end
                break
            local = CumulativeTable(np.array([t, t_end]), np.array([0.0, inc]), np.array([r0, r1]))
            tau = sample_waiting_time(local, -np.expm1(-(target - cum)))
            if tau is None:  # rounding at the step edge
                tau = t_end
            if tau > t:
                pair = evolve_doubled(pair, t, tau - t, model, method=integrator)
            probs = doubled_rates(pair, tau, cfg.beta, model)
            ch = decide(StepProbabilities(probs / probs.sum()), stream.random())
            pair = apply_jump_doubled(pair, ch, tau, model)
            log.append(JumpEvent(float(tau), ch, trajectory_id))
            target = -np.log1p(-stream.random())
            cum = 0.0
            t = tau
            if t >= t_end:
                break
    return TrajectoryRecord(values, jumped, log, trace, snaps)


def run_doubled_trajectory(cfg: TrajectoryConfig, stream, trajectory_id: int = 0,
                           shared: DoubledShared | None = None, method: str = "fast",
                           integrator: str = "exact") -> TrajectoryRecord:
    """One scaled realization of the doubled-space process.

    Jump times come from inverting the waiting-time distribution built from
    the scaled absolute rates along the current no-jump flow; the channel is
    then chosen in proportion to those rates.  Values are
    weight * Re <psi|A|phi> and ``trace`` is the same with A = 1.
    """
    if cfg.unravelling != "doubled":
        raise ConfigError("run_doubled_trajectory needs a doubled configuration")
    if method == "fast":
        sh = shared if shared is not None else prepare_doubled(cfg)
        return _doubled_fast(sh, stream, trajectory_id)
    if method == "stepwise":
        return _doubled_stepwise(cfg, stream, trajectory_id, integrator)
    raise ValueError(f"unknown method {method!r}")


def accumulate_density(records, n_max: int) -> list:
    """Per-sample-time sums of weighted |phi><psi| over doubled records."""
    records = list(records)
    if not records:
        raise ValueError("no records to accumulate")
    if any(rec.snapshots is None for rec in records):
        raise ValueError("state snapshots are disabled; run with snapshots=True")
    n_samples = len(records[0].snapshots)
    accs = [DensityAccumulator(n_max + 1) for _ in range(n_samples)]
    for rec in records:
        for acc, pair in zip(accs, rec.snapshots):
            acc.add(pair)
    return accs
