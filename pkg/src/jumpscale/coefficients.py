"""Time-dependent decay coefficients and the channel/model interface.

Quantum Brownian motion in the secular approximation with a high-temperature
Ohmic Lorentz-Drude reservoir.  Times are in units of 1/omega_c, so the
oscillator frequency is omega_0 = 1/r.  The model has two ladder channels:

    up   (L = a†)  rate Delta(t) - Gamma(t)
    down (L = a)   rate Delta(t) + Gamma(t)

in that fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .hilbert import ladder_weights

SIGN_TOL = -1e-18
SCAN_SPACING = 1e-3


@dataclass(frozen=True)
class OhmicParams:
    """Dimensionless reservoir parameters.

    theta_bar = 2 alpha^2 kT / omega_c, g_bar = alpha^2 omega_0 / omega_c,
    r = omega_c / omega_0.
    """

    theta_bar: float
    g_bar: float
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("r must be > 0")
        if self.theta_bar < 0 or self.g_bar < 0:
            raise ValueError("theta_bar and g_bar must be >= 0")

    @property
    def omega0(self) -> float:
        return 1.0 / self.r


@dataclass(frozen=True)
class ChannelRates:
    gamma_up: float
    gamma_down: float


SERIES_RADIUS = 1.0
SERIES_TERMS = 24


def _phi(k: int, x):
    """phi_k(x) = sum_n x^n / (n + k)! for complex x, free of cancellation near 0."""
    x = np.asarray(x, dtype=complex)
    small = np.abs(x) < SERIES_RADIUS
    out = np.empty_like(x)
    xs = x[small]
    acc = np.zeros_like(xs)
    fact = np.array([float(np.prod(np.arange(1, n + k + 1))) for n in range(SERIES_TERMS)])
    for n in reversed(range(SERIES_TERMS)):
        acc = acc * xs + 1.0 / fact[n]
    out[small] = acc
    xl = x[~small]
    if k == 1:
        half = np.exp(0.5j * xl.imag)
        # e^x - 1 = expm1(Re x) e^{i Im x} + 2i sin(Im x / 2) e^{i Im x / 2}
        out[~small] = (np.expm1(xl.real) * half * half + 2j * np.sin(0.5 * xl.imag) * half) / xl
    else:
        out[~small] = (_phi(1, xl) - 1.0) / xl
    return out


def _damped_integrals(t, w):
    # int_0^t e^{-s} (cos ws + i sin ws) ds = t phi_1(z t) with z = -1 + i w
    t = np.asarray(t, dtype=float)
    return t * _phi(1, (-1.0 + 1j * w) * t)


def _damped_double_integrals(t, w):
    # the same integrated once more over [0, t]: t^2 phi_2(z t)
    t = np.asarray(t, dtype=float)
    return t * t * _phi(2, (-1.0 + 1j * w) * t)


def _real_or_scalar(out):
    return out if out.ndim else float(out)


def delta_coefficient(t, p: OhmicParams):
    """Delta(t) = theta_bar r^2/(1+r^2) (1 - e^{-t}(cos(t/r) - sin(t/r)/r)) = theta_bar int_0^t e^{-s} cos(s/r) ds."""
    return _real_or_scalar(p.theta_bar * _damped_integrals(t, 1.0 / p.r).real)


def gamma_coefficient(t, p: OhmicParams):
    """Gamma(t) = g_bar r^2/(1+r^2) (1 - e^{-t} cos(t/r) - r e^{-t} sin(t/r)) = g_bar r int_0^t e^{-s} sin(s/r) ds."""
    return _real_or_scalar(p.g_bar * p.r * _damped_integrals(t, 1.0 / p.r).imag)


def delta_integral(t, p: OhmicParams):
    """int_0^t Delta(s) ds in closed form."""
    return _real_or_scalar(p.theta_bar * _damped_double_integrals(t, 1.0 / p.r).real)


def gamma_integral(t, p: OhmicParams):
    """int_0^t Gamma(s) ds in closed form."""
    return _real_or_scalar(p.g_bar * p.r * _damped_double_integrals(t, 1.0 / p.r).imag)


def channel_rates(t: float, p: OhmicParams) -> ChannelRates:
    d = delta_coefficient(t, p)
    g = gamma_coefficient(t, p)
    return ChannelRates(gamma_up=d - g, gamma_down=d + g)


def scan_grid(horizon: float, spacing: float = SCAN_SPACING) -> np.ndarray:
    n = int(np.ceil(horizon / spacing)) + 1
    return np.linspace(0.0, horizon, n)


def classify(p: OhmicParams, horizon: float) -> str:
    """``"lindblad"`` if both channel rates stay >= -1e-18 on [0, horizon]."""
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    return qbm_model(p).classify(horizon)


@dataclass(frozen=True)
class Channel:
    """One decay channel: a ladder jump operator and its rate gamma(t).

    ``rate_integral`` (t -> int_0^t gamma) is optional; without it the
    integral is evaluated by adaptive quadrature, which is slow but only
    matters for ad hoc test models.
    """

    operator: str
    rate: Callable
    rate_integral: Callable | None = None
    name: str = ""

    def integral(self, t):
        if self.rate_integral is not None:
            return self.rate_integral(t)
        t = np.asarray(t, dtype=float)
        vals = np.array([quad(self.rate, 0.0, ti, limit=200)[0] for ti in t.ravel()])
        return vals.reshape(t.shape) if t.ndim else float(vals[0])


@dataclass(frozen=True)
class OscillatorModel:
    """H_S = omega0 a†a with ladder decay channels.

    Everything downstream (flows, jumps, oracles) depends only on this
    interface, so any set of ladder channels with known rates can be run.
    """

    omega0: float
    channels: tuple

    def rates(self, t) -> np.ndarray:
        """Channel rates, shape (n_channels,) + shape(t)."""
        return np.array([np.broadcast_to(ch.rate(t), np.shape(t)) for ch in self.channels])

    def integrals(self, t) -> np.ndarray:
        return np.array([np.broadcast_to(ch.integral(t), np.shape(t)) for ch in self.channels])

    def jump_weights(self, n_max: int) -> np.ndarray:
        """Diagonals of L_i† L_i, shape (n_channels, n_max + 1)."""
        return np.array([ladder_weights(ch.operator, n_max) for ch in self.channels])

    @property
    def operators(self) -> tuple:
        return tuple(ch.operator for ch in self.channels)

    def classify(self, horizon: float) -> str:
        if not horizon > 0:
            raise ValueError("horizon must be > 0")
        rates = self.rates(scan_grid(horizon))
        return "non_lindblad" if np.any(rates < SIGN_TOL) else "lindblad"


def qbm_model(p: OhmicParams) -> OscillatorModel:
    up = Channel(
        "raise",
        lambda t: delta_coefficient(t, p) - gamma_coefficient(t, p),
        lambda t: delta_integral(t, p) - gamma_integral(t, p),
        name="up",
    )
    down = Channel(
        "lower",
        lambda t: delta_coefficient(t, p) + gamma_coefficient(t, p),
        lambda t: delta_integral(t, p) + gamma_integral(t, p),
        name="down",
    )
    return OscillatorModel(p.omega0, (up, down))


def constant_rate_model(omega0: float, gamma_up: float, gamma_down: float) -> OscillatorModel:
    up = Channel(
        "raise",
        lambda t: np.full(np.shape(t), gamma_up) if np.ndim(t) else gamma_up,
        lambda t: gamma_up * np.asarray(t, dtype=float) if np.ndim(t) else gamma_up * t,
        name="up",
    )
    down = Channel(
        "lower",
        lambda t: np.full(np.shape(t), gamma_down) if np.ndim(t) else gamma_down,
        lambda t: gamma_down * np.asarray(t, dtype=float) if np.ndim(t) else gamma_down * t,
        name="down",
    )
    return OscillatorModel(omega0, (up, down))
