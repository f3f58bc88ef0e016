"""Deterministic (no-jump) propagation.

For oscillator models H_S = omega0 a†a and every L_i† L_i is diagonal in the
number basis, so the non-Hermitian flow has the closed form

    c_n(t) = c_n(s) exp(-i omega0 n (t - s) - 1/2 sum_i w_i(n) [I_i(t) - I_i(s)])

with w_i the diagonal of L_i† L_i and I_i(t) = int_0^t gamma_i.  That exact
propagator is the default; ``method="rk4"`` runs a classical fixed-step
Runge-Kutta integrator on the same generator as an independent check.

None of the functions here take the scaling factor beta: the deterministic
flow is never rescaled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import GuardTrip
from .hilbert import (
    DoubledVector,
    FockVector,
    check_leakage,
    observable_weights,
)

DEFAULT_DT = 1e-3
MAX_SHRINK = 0.1
DOUBLED_NORM_TOL = 1e-8


def fine_grid(sample_grid, dt: float = DEFAULT_DT):
    """Integration substeps covering ``sample_grid`` with spacing <= dt.

    Each sample interval is split into equal substeps so that every sample
    time is a grid point.  Returns ``(times, sample_index)``.
    """
    grid = np.asarray(sample_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("sample grid needs at least two points")
    if grid[0] != 0.0:
        raise ValueError("sample grid must start at t=0")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("sample grid must be strictly increasing")
    if not dt > 0:
        raise ValueError("dt must be > 0")
    pieces = [grid[:1]]
    index = [0]
    for a, b in zip(grid[:-1], grid[1:]):
        m = max(1, int(np.ceil((b - a) / dt - 1e-9)))
        pieces.append(np.linspace(a, b, m + 1)[1:])
        index.append(index[-1] + m)
    times = np.concatenate(pieces)
    times[index] = grid  # sample times exactly, not linspace-rounded
    return times, np.asarray(index)


def decay_factors(s: float, times, model, n_max: int, integrals_at_times=None) -> np.ndarray:
    """exp(-i H_eff (t - s)) diagonal for every t in ``times``; shape (m, dim)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    n = np.arange(n_max + 1)
    w = model.jump_weights(n_max)
    it = model.integrals(times) if integrals_at_times is None else integrals_at_times
    is_ = model.integrals(np.array([s]))[:, 0]
    damping = (it - is_[:, None]).T @ w  # (m, dim)
    return np.exp(-1j * model.omega0 * np.outer(times - s, n) - 0.5 * damping)


def population_factors(s: float, times, model, n_max: int, integrals_at_times=None) -> np.ndarray:
    """|decay_factors|^2 without the phases; real, shape (m, dim)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    w = model.jump_weights(n_max)
    it = model.integrals(times) if integrals_at_times is None else integrals_at_times
    is_ = model.integrals(np.array([s]))[:, 0]
    return np.exp(-((it - is_[:, None]).T @ w))


def _generator(model, t: float, n_max: int) -> np.ndarray:
    # diagonal of -i H_eff(t)
    n = np.arange(n_max + 1)
    rates = model.rates(np.array([t]))[:, 0]
    return -1j * model.omega0 * n - 0.5 * rates @ model.jump_weights(n_max)


def _rk4_nojump(c: np.ndarray, t: float, dt: float, model) -> np.ndarray:
    n_max = c.size - 1
    g0 = _generator(model, t, n_max)
    gh = _generator(model, t + dt / 2, n_max)
    g1 = _generator(model, t + dt, n_max)
    k1 = g0 * c
    k2 = gh * (c + dt / 2 * k1)
    k3 = gh * (c + dt / 2 * k2)
    k4 = g1 * (c + dt * k3)
    return c + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve_nojump(state: FockVector, t: float, dt: float, model, method: str = "exact"):
    """Integrate i dpsi/dt = H psi over [t, t+dt] with unscaled rates.

    Returns the unnormalized state and the shrink 1 - |psi_out|^2/|psi_in|^2.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    c = state.amplitudes
    if method == "exact":
        out = c * decay_factors(t, [t + dt], model, state.n_max)[0]
    elif method == "rk4":
        out = _rk4_nojump(c, t, dt, model)
    else:
        raise ValueError(f"unknown method {method!r}")
    new = FockVector(out)
    shrink = 1.0 - new.norm_squared() / state.norm_squared()
    if shrink > MAX_SHRINK:
        raise GuardTrip(f"no-jump step shrank the norm by {shrink:.3g}; dt too large", time=t)
    return new, shrink


def _pair_loads(upper: np.ndarray, lower: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """m_i = sum_n w_i(n) (|phi_n|^2 + |psi_n|^2) / |theta|^2, shape (..., n_ch)."""
    pops = np.abs(upper) ** 2 + np.abs(lower) ** 2
    return (pops @ weights.T) / pops.sum(axis=-1, keepdims=True)


def _rk4_doubled(upper, lower, log_w, t, dt, model):
    n_max = upper.size - 1
    weights = model.jump_weights(n_max)

    def rhs(tt, phi, psi):
        g = _generator(model, tt, n_max)
        fphi, fpsi = g * phi, g * psi
        nrm2 = np.vdot(phi, phi).real + np.vdot(psi, psi).real
        drift = (np.vdot(phi, fphi).real + np.vdot(psi, fpsi).real) / nrm2
        rates = model.rates(np.array([tt]))[:, 0]
        loads = _pair_loads(phi, psi, weights)
        dlw = float(np.sum((np.abs(rates) - rates) * loads))
        return fphi - drift * phi, fpsi - drift * psi, dlw

    k1 = rhs(t, upper, lower)
    k2 = rhs(t + dt / 2, upper + dt / 2 * k1[0], lower + dt / 2 * k1[1])
    k3 = rhs(t + dt / 2, upper + dt / 2 * k2[0], lower + dt / 2 * k2[1])
    k4 = rhs(t + dt, upper + dt * k3[0], lower + dt * k3[1])
    comb = [dt / 6 * (a + 2 * b + 2 * c + d) for a, b, c, d in zip(k1, k2, k3, k4)]
    return upper + comb[0], lower + comb[1], log_w + comb[2]


def evolve_doubled(pair: DoubledVector, t: float, dt: float, model, method: str = "exact") -> DoubledVector:
    """Deterministic part of the doubled-space process over [t, t+dt].

    The stored pair keeps its norm.  The represented pair grows by
    exp(int sum_i (|gamma_i| - gamma_i) m_i) which is recorded in the log
    weight; the increment is exactly zero while all rates are >= 0.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    nrm2 = pair.norm_squared()
    if nrm2 == 0.0:
        raise ValueError("zero doubled vector")
    phi, psi = pair.upper.amplitudes, pair.lower.amplitudes
    if method == "exact":
        fac = decay_factors(t, [t + dt], model, pair.n_max)[0]
        phi1, psi1 = phi * fac, psi * fac
        scale = np.sqrt(nrm2 / (np.vdot(phi1, phi1).real + np.vdot(psi1, psi1).real))
        phi1, psi1 = phi1 * scale, psi1 * scale
        weights = model.jump_weights(pair.n_max)
        rates = model.rates(np.array([t, t + dt]))
        gap = np.abs(rates) - rates
        l0 = _pair_loads(phi, psi, weights)
        l1 = _pair_loads(phi1, psi1, weights)
        dlw = 0.5 * dt * float(gap[:, 0] @ l0 + gap[:, 1] @ l1)
        log_w = pair.log_weight + dlw
    elif method == "rk4":
        phi1, psi1, log_w = _rk4_doubled(phi, psi, pair.log_weight, t, dt, model)
    else:
        raise ValueError(f"unknown method {method!r}")
    out = DoubledVector(FockVector(phi1), FockVector(psi1), log_w)
    drift = abs(out.norm() / np.sqrt(nrm2) - 1.0)
    if drift > DOUBLED_NORM_TOL:
        raise GuardTrip(f"doubled flow norm drift {drift:.2e} in one step", time=t)
    return out


@dataclass(frozen=True, eq=False)
class NoJumpPath:
    """The normalized no-jump flow g_t(psi0) on the integration grid.

    ``loads[i, j]`` is <L_i† L_i> in the normalized state at ``times[j]``
    and ``cumulative_rate`` is Lambda(t_j) = int_0^t sum_i gamma_i loads_i,
    trapezoidal on the integration substeps.
    """

    times: np.ndarray
    sample_index: np.ndarray
    amplitudes: np.ndarray
    rates: np.ndarray
    integrals: np.ndarray
    loads: np.ndarray
    cumulative_rate: np.ndarray
    observable: np.ndarray

    @property
    def sample_grid(self) -> np.ndarray:
        return self.times[self.sample_index]

    @property
    def n_max(self) -> int:
        return self.amplitudes.shape[1] - 1

    @property
    def states(self) -> list:
        return [FockVector(self.amplitudes[j]) for j in self.sample_index]

    @property
    def observable_curve(self) -> np.ndarray:
        pops = np.abs(self.amplitudes[self.sample_index]) ** 2
        return pops @ self.observable

    @property
    def sample_cumulative_rate(self) -> np.ndarray:
        return self.cumulative_rate[self.sample_index]

    @property
    def step_rates(self) -> np.ndarray:
        """gamma_i(t_j) <L_i† L_i>(t_j) per channel, shape (n_ch, n_times)."""
        return self.rates * self.loads


def build_nojump_path(psi0: FockVector, model, sample_grid, dt: float = DEFAULT_DT,
                      observable="number", method: str = "exact") -> NoJumpPath:
    times, sample_index = fine_grid(sample_grid, dt)
    n_max = psi0.n_max
    weights = model.jump_weights(n_max)
    integrals = model.integrals(times)
    c0 = psi0.normalize().amplitudes
    if method == "exact":
        amps = c0 * decay_factors(0.0, times, model, n_max, integrals)
        amps /= np.linalg.norm(amps, axis=1, keepdims=True)
        amps[0] = c0  # the flow is the identity at t = 0; skip the renormalization rounding
    elif method == "rk4":
        amps = np.empty((times.size, n_max + 1), dtype=np.complex128)
        amps[0] = c0
        for j in range(times.size - 1):
            nxt = _rk4_nojump(amps[j], times[j], times[j + 1] - times[j], model)
            amps[j + 1] = nxt / np.linalg.norm(nxt)
    else:
        raise ValueError(f"unknown method {method!r}")
    for j in sample_index:
        check_leakage(FockVector(amps[j]), time=times[j])
    loads = (np.abs(amps) ** 2 @ weights.T).T
    rates = model.rates(times)
    lam = cumulative_trapezoid((rates * loads).sum(axis=0), times, initial=0.0)
    return NoJumpPath(times, sample_index, amps, rates, integrals, loads, lam,
                      observable_weights(observable, n_max))


@dataclass(frozen=True, eq=False)
class DoubledPath:
    """No-jump flow of a doubled pair on (a tail of) the integration grid.

    ``upper``/``lower`` keep the initial pair norm; ``log_weight`` carries
    the growth of the represented pair.  ``cumulative_rate`` integrates the
    unscaled total jump rate sum_i |gamma_i| m_i from ``times[0]``.
    """

    times: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    log_weight: np.ndarray
    rates: np.ndarray
    loads: np.ndarray
    cumulative_rate: np.ndarray

    def pair_at(self, j: int) -> DoubledVector:
        return DoubledVector(FockVector(self.upper[j]), FockVector(self.lower[j]),
                             float(self.log_weight[j]))

    def cross_terms(self, weights: np.ndarray, idx=slice(None)) -> np.ndarray:
        """weight * Re <psi|A|phi> at the requested grid indices."""
        val = np.sum(np.conj(self.lower[idx]) * weights * self.upper[idx], axis=-1).real
        return np.exp(self.log_weight[idx]) * val

    @property
    def total_rate(self) -> np.ndarray:
        return (np.abs(self.rates) * self.loads).sum(axis=0)


def doubled_segment(pair: DoubledVector, times, model, integrals_at_times=None) -> DoubledPath:
    """Propagate ``pair`` from ``times[0]`` along ``times`` without jumps."""
    times = np.asarray(times, dtype=float)
    n_max = pair.n_max
    weights = model.jump_weights(n_max)
    fac = decay_factors(times[0], times, model, n_max, integrals_at_times)
    up = pair.upper.amplitudes * fac
    lo = pair.lower.amplitudes * fac
    nrm2 = (np.abs(up) ** 2 + np.abs(lo) ** 2).sum(axis=1)
    scale = np.sqrt(pair.norm_squared() / nrm2)[:, None]
    up, lo = up * scale, lo * scale
    loads = _pair_loads(up, lo, weights).T
    rates = model.rates(times)
    gap = ((np.abs(rates) - rates) * loads).sum(axis=0)
    if times.size > 1:
        log_w = pair.log_weight + cumulative_trapezoid(gap, times, initial=0.0)
        lam = cumulative_trapezoid((np.abs(rates) * loads).sum(axis=0), times, initial=0.0)
    else:
        log_w = np.array([pair.log_weight])
        lam = np.zeros(1)
    return DoubledPath(times, up, lo, log_w, rates, loads, lam)


def build_doubled_path(pair0: DoubledVector, model, sample_grid, dt: float = DEFAULT_DT,
                       method: str = "exact"):
    """Shared no-jump doubled path plus its integration grid and sample index."""
    times, sample_index = fine_grid(sample_grid, dt)
    if method == "exact":
        path = doubled_segment(pair0, times, model, model.integrals(times))
    elif method == "rk4":
        n = times.size
        up = np.empty((n, pair0.n_max + 1), dtype=np.complex128)
        lo = np.empty_like(up)
        lw = np.empty(n)
        up[0], lo[0], lw[0] = pair0.upper.amplitudes, pair0.lower.amplitudes, pair0.log_weight
        for j in range(n - 1):
            up[j + 1], lo[j + 1], lw[j + 1] = _rk4_doubled(
                up[j], lo[j], lw[j], times[j], times[j + 1] - times[j], model)
        weights = model.jump_weights(pair0.n_max)
        loads = _pair_loads(up, lo, weights).T
        rates = model.rates(times)
        lam = cumulative_trapezoid((np.abs(rates) * loads).sum(axis=0), times, initial=0.0)
        path = DoubledPath(times, up, lo, lw, rates, loads, lam)
    else:
        raise ValueError(f"unknown method {method!r}")
    for j in sample_index:
        check_leakage(FockVector(path.upper[j]), time=times[j])
        check_leakage(FockVector(path.lower[j]), time=times[j])
    return path, times, sample_index
