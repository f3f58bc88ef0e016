"""Stochastic ingredients: scaled jump probabilities, channel choice, jump
maps for both unravellings and waiting-time sampling by inversion.

Channels are numbered from 1 in model order (up = 1, down = 2 for the
oscillator models); 0 means "no jump".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import GuardTrip
from .hilbert import DoubledVector, FockVector, ladder_apply

MAX_STEP_PROBABILITY = 0.1


@dataclass(frozen=True)
class StepProbabilities:
    per_channel: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.per_channel))


@dataclass(frozen=True)
class JumpEvent:
    time: float
    channel: int
    trajectory_id: int = 0


def trajectory_stream(master_seed: int, trajectory_id: int) -> np.random.Generator:
    """Independent, reproducible random stream for one trajectory.

    Philox is counter-based and the SeedSequence spawn key makes the
    stream a pure function of (master_seed, trajectory_id), independent of
    which worker runs the trajectory.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(trajectory_id),))
    return np.random.Generator(np.random.Philox(seq))


def step_probabilities_mcwf(psi: FockVector, t: float, dt: float, beta: float, model) -> StepProbabilities:
    """P_i = beta dt gamma_i(t) <psi|L_i† L_i|psi> for a normalized psi."""
    if beta < 1:
        raise ValueError("beta must be >= 1")
    rates = model.rates(np.array([t]))[:, 0]
    if np.any(rates < 0):
        raise ValueError(f"negative decay rate at t={t}; use the doubled unravelling")
    loads = model.jump_weights(psi.n_max) @ psi.populations()
    probs = StepProbabilities(beta * dt * rates * loads)
    if probs.total >= MAX_STEP_PROBABILITY:
        raise GuardTrip(
            f"scaling too aggressive: jump probability {probs.total:.3g} in one step", time=t)
    return probs


def decide(probs: StepProbabilities, u: float) -> int:
    """Cumulative-interval rule: channel k iff u falls in its slice of [0, total)."""
    edge = 0.0
    for k, p in enumerate(probs.per_channel, start=1):
        edge += p
        if u < edge:
            return k
    return 0


def apply_jump_mcwf(psi: FockVector, channel: int, model) -> FockVector:
    out, _ = ladder_apply(model.operators[channel - 1], psi)
    if out.norm_squared() == 0.0:
        raise ValueError(f"channel {channel} annihilates the state; jump bookkeeping is inconsistent")
    return out.normalize()


def _pair_loads(pair: DoubledVector, model) -> np.ndarray:
    pops = pair.upper.populations() + pair.lower.populations()
    return model.jump_weights(pair.n_max) @ pops / pops.sum()


def doubled_rates(pair: DoubledVector, t: float, beta: float, model) -> np.ndarray:
    """Scaled jump rates beta |gamma_i(t)| |L_i theta|^2 / |theta|^2 (per unit time)."""
    if pair.norm_squared() == 0.0:
        raise ValueError("zero doubled vector")
    rates = model.rates(np.array([t]))[:, 0]
    return beta * np.abs(rates) * _pair_loads(pair, model)


def apply_jump_doubled(pair: DoubledVector, channel: int, t: float, model) -> DoubledVector:
    """theta -> |theta|/|J_i theta| (C_i phi, D_i psi) with C_i = sgn(gamma_i) D_i."""
    op = model.operators[channel - 1]
    rate = float(model.rates(np.array([t]))[channel - 1, 0])
    sign = -1.0 if rate < 0 else 1.0  # sgn(0) := +1
    phi, _ = ladder_apply(op, pair.upper)
    psi, _ = ladder_apply(op, pair.lower)
    jn2 = phi.norm_squared() + psi.norm_squared()
    if jn2 == 0.0:
        raise ValueError(f"channel {channel} annihilates the pair")
    scale = np.sqrt(pair.norm_squared() / jn2)
    return DoubledVector(phi.scaled(sign * scale), psi.scaled(scale), pair.log_weight)


@dataclass(frozen=True, eq=False)
class CumulativeTable:
    """Integrated scaled rate Lambda_beta on a grid, starting from zero.

    With ``rates`` given the rate is taken piecewise linear between nodes
    (consistent with trapezoidal accumulation) and Lambda is inverted on the
    resulting piecewise quadratic; otherwise Lambda is interpolated linearly.
    """

    times: np.ndarray
    cumulative: np.ndarray
    rates: np.ndarray | None = None

    def __post_init__(self):
        if self.cumulative[0] != 0.0:
            raise ValueError("cumulative table must start at zero")
        if np.any(np.diff(self.cumulative) < 0):
            raise ValueError("non-monotone cumulative table")

    @classmethod
    def from_rates(cls, times, rates) -> CumulativeTable:
        times = np.asarray(times, dtype=float)
        rates = np.asarray(rates, dtype=float)
        steps = 0.5 * np.diff(times) * (rates[1:] + rates[:-1])
        return cls(times, np.concatenate([[0.0], np.cumsum(steps)]), rates)

    @property
    def horizon_value(self) -> float:
        return float(self.cumulative[-1])

    def value(self, t: float) -> float:
        j = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 2))
        return self._local(j, t - self.times[j])

    def _local(self, j: int, x: float) -> float:
        h = self.times[j + 1] - self.times[j]
        if self.rates is None:
            return self.cumulative[j] + (self.cumulative[j + 1] - self.cumulative[j]) * x / h
        r0, r1 = self.rates[j], self.rates[j + 1]
        return self.cumulative[j] + r0 * x + (r1 - r0) * x * x / (2 * h)


def sample_waiting_time(table: CumulativeTable, u: float):
    """Jump time tau with Lambda(tau) = -ln(1 - u), or None past the horizon."""
    target = -np.log1p(-u)
    if table.horizon_value < target:
        return None
    if target == 0.0:
        # u = 0: jump at the first grid time where the rate has built up
        return float(table.times[np.argmax(table.cumulative > 0)])
    j = int(np.searchsorted(table.cumulative, target, side="left")) - 1
    j = min(max(j, 0), table.times.size - 2)
    h = table.times[j + 1] - table.times[j]
    lo, hi = table._local(j, 0.0) - target, table._local(j, h) - target
    if hi <= 0.0:
        return float(table.times[j + 1])
    if lo >= 0.0:
        return float(table.times[j])
    x = brentq(lambda x: table._local(j, x) - target, 0.0, h, xtol=1e-15, rtol=1e-14)
    return float(table.times[j] + x)
