"""Deterministic references for the Monte Carlo reconstruction.

* :func:`integrate_master` integrates the time-local master equation

      drho/dt = -i omega0 [n, rho] + sum_i gamma_i(t) (L_i rho L_i† - 1/2 {L_i† L_i, rho})

  for the truncated density matrix with fixed-step RK4.
* :func:`heating_moment` integrates the closed equation for <n> that follows
  from it, d<n>/dt = gamma_up (<n> + 1) - gamma_down <n>.
* :func:`path_integral_expectation` evaluates the first-order (one-jump)
  expansion of the trajectory average by quadrature over the jump time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import OhmicParams, qbm_model
from .errors import OracleError
from .flow import DEFAULT_DT, fine_grid, population_factors
from .hilbert import FockVector, observable_weights

TRACE_TOL = 1e-10
HERMITICITY_TOL = 1e-10
STEP_HERMITICITY_TOL = 1e-12
POSITIVITY_TOL = -1e-8
REGIME_LIMIT = 0.1
MIN_NODES = 1001


def _as_model(model):
    return qbm_model(model) if isinstance(model, OhmicParams) else model


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        rho = np.array(self.entries, dtype=np.complex128, copy=True)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError("density matrix must be square")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @classmethod
    def from_state(cls, psi: FockVector) -> DensityMatrix:
        c = psi.normalize().amplitudes
        return cls(np.outer(c, np.conj(c)))

    @property
    def n_max(self) -> int:
        return self.entries.shape[0] - 1

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    @property
    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    @property
    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.entries + self.entries.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def populations(self) -> np.ndarray:
        return np.diag(self.entries).real.copy()

    def expectation(self, observable="number") -> float:
        return float(self.populations() @ observable_weights(observable, self.n_max))


def _liouvillian(model, n_max: int):
    n = np.arange(n_max + 1, dtype=float)
    weights = model.jump_weights(n_max)
    comm = -1j * model.omega0 * (n[:, None] - n[None, :])
    anti = [0.5 * (w[:, None] + w[None, :]) for w in weights]
    sq = np.sqrt(n[1:])
    shift = np.outer(sq, sq)

    def apply(rho, t):
        g = model.rates(np.array([t]))[:, 0]
        out = comm * rho
        for gi, op, ac in zip(g, model.operators, anti):
            out -= gi * ac * rho
            if op == "lower":  # a rho a†
                out[:-1, :-1] += gi * shift * rho[1:, 1:]
            else:  # a† rho a, truncated
                out[1:, 1:] += gi * shift * rho[:-1, :-1]
        return out

    return apply


def integrate_master(rho0: DensityMatrix, model, grid, dt: float = DEFAULT_DT) -> list:
    """RK4 on substeps of at most ``dt`` between consecutive grid times.

    Trace and hermiticity are checked after every substep and positivity at
    every grid time when all rates stay nonnegative; a breach raises
    :class:`OracleError` naming the time and the defect.
    """
    model = _as_model(model)
    rho = np.array(rho0.entries)
    if rho0.hermiticity_defect > HERMITICITY_TOL or abs(rho0.trace - 1) > TRACE_TOL:
        raise ValueError("initial density matrix must be hermitian with unit trace")
    times, sample_index = fine_grid(grid, dt)
    lindblad = model.classify(float(times[-1])) == "lindblad"
    gen = _liouvillian(model, rho0.n_max)
    out = [DensityMatrix(rho)]
    next_sample = 1
    for j in range(times.size - 1):
        t, h = times[j], times[j + 1] - times[j]
        k1 = gen(rho, t)
        k2 = gen(rho + h / 2 * k1, t + h / 2)
        k3 = gen(rho + h / 2 * k2, t + h / 2)
        k4 = gen(rho + h * k3, t + h)
        rho = rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        defect = float(np.max(np.abs(rho - rho.conj().T)))
        if defect > STEP_HERMITICITY_TOL:
            raise OracleError(f"hermiticity defect {defect:.2e} at t={times[j + 1]:.6g}")
        drift = abs(np.trace(rho) - 1.0)
        if drift > TRACE_TOL:
            raise OracleError(f"trace drift {drift:.2e} at t={times[j + 1]:.6g}")
        if next_sample < sample_index.size and j + 1 == sample_index[next_sample]:
            dm = DensityMatrix(rho)
            if lindblad and dm.min_eigenvalue < POSITIVITY_TOL:
                raise OracleError(f"eigenvalue {dm.min_eigenvalue:.2e} at t={times[j + 1]:.6g}")
            out.append(dm)
            next_sample += 1
    return out


def master_curve(rho0: DensityMatrix, model, grid, observable="number", dt: float = DEFAULT_DT) -> np.ndarray:
    return np.array([rho.expectation(observable) for rho in integrate_master(rho0, model, grid, dt)])


def heating_moment(n0: float, model, grid, dt: float = DEFAULT_DT) -> np.ndarray:
    """<n>(t_k) from the scalar moment equation, RK4 on the master-equation substeps."""
    if n0 < 0:
        raise ValueError("n0 must be >= 0")
    model = _as_model(model)
    ops = model.operators
    up = np.array([op == "raise" for op in ops], dtype=float)
    down = np.array([op == "lower" for op in ops], dtype=float)

    def rhs(n, t):
        g = model.rates(np.array([t]))[:, 0]
        return (g @ up) * (n + 1.0) - (g @ down) * n

    times, sample_index = fine_grid(grid, dt)
    vals = np.empty(times.size)
    vals[0] = n = float(n0)
    for j in range(times.size - 1):
        t, h = times[j], times[j + 1] - times[j]
        k1 = rhs(n, t)
        k2 = rhs(n + h / 2 * k1, t + h / 2)
        k3 = rhs(n + h / 2 * k2, t + h / 2)
        k4 = rhs(n + h * k3, t + h)
        n = n + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        vals[j + 1] = n
    return vals[sample_index]


def _post_jump_pops(pops: np.ndarray, op: str) -> np.ndarray:
    out = np.zeros_like(pops)
    k = np.arange(1, pops.shape[-1], dtype=float)
    if op == "lower":
        out[..., :-1] = k * pops[..., 1:]
    else:
        out[..., 1:] = k * pops[..., :-1]
    return out


def path_integral_expectation(psi0: FockVector, model, t: float, observable="number",
                              nodes: int = MIN_NODES, jump_window: float | None = None) -> float:
    """One-jump expansion of <A>(t) by trapezoidal quadrature over the jump time.

    [1 - Lambda(t)] <A>_0(t) + int_0^w ds sum_i gamma_i(s) |L_i g_s psi0|^2 <A>_{i,s}(t)

    where <A>_{i,s}(t) is taken along the no-jump flow restarted at s from
    the normalized post-jump state and w = ``jump_window`` (default t).
    Only diagonal observables are supported, so populations suffice.
    """
    model = _as_model(model)
    if nodes < MIN_NODES:
        raise ValueError(f"need at least {MIN_NODES} quadrature nodes")
    if t < 0:
        raise ValueError("t must be >= 0")
    n_max = psi0.n_max
    obs = observable_weights(observable, n_max)
    weights = model.jump_weights(n_max)
    p0 = psi0.normalize().populations()

    pops_t = p0 * population_factors(0.0, [t], model, n_max)[0]
    a0 = float(pops_t @ obs / pops_t.sum())
    if t == 0.0:
        return a0

    window = t if jump_window is None else float(jump_window)
    if not 0.0 <= window <= t:
        raise ValueError("jump window must lie in [0, t]")

    def flow_from_zero(s):
        p_s = p0 * population_factors(0.0, s, model, n_max)
        p_s /= p_s.sum(axis=1, keepdims=True)
        return p_s, model.rates(s)

    s = np.linspace(0.0, t, nodes)
    p_s, rates = flow_from_zero(s)
    lam_t = float(np.trapezoid((rates * (p_s @ weights.T).T).sum(axis=0), s))
    if lam_t > REGIME_LIMIT:
        raise OracleError(f"cumulative jump probability {lam_t:.3g} exceeds {REGIME_LIMIT}: "
                          "not in the one-jump regime")
    if window == 0.0:
        return a0
    if window != t:
        s = np.linspace(0.0, window, nodes)
        p_s, rates = flow_from_zero(s)
    it = model.integrals(np.array([t]))[:, 0]
    prop = np.exp(-((it[:, None] - model.integrals(s)).T @ weights))  # populations s -> t
    flux = np.zeros(s.size)
    integrand = np.zeros(s.size)
    for i, op in enumerate(model.operators):
        rate_i = rates[i] * (p_s @ weights[i])  # gamma_i |L_i g_s psi0|^2
        post_t = _post_jump_pops(p_s, op) * prop
        norm = post_t.sum(axis=1)
        safe = norm > 0
        val = np.zeros(s.size)
        val[safe] = (post_t[safe] @ obs) / norm[safe]
        flux += rate_i
        integrand += rate_i * val
    lam = float(np.trapezoid(flux, s))
    return float((1.0 - lam) * a0 + np.trapezoid(integrand, s))
