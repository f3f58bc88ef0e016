"""Reconstruction of unscaled expectations from a scaled-jump ensemble.

With jump probabilities multiplied by beta and the deterministic flow left
alone, the unscaled expectation is recovered as

    <A>(t) = (1 - P_tot/beta - (N - N_j)/(beta N)) <A>_0 + <A>_tot / beta

where <A>_0 is the no-jump curve, P_tot = beta * Lambda the scaled
cumulative jump probability along it, N_j the number of realizations that
jumped by t and <A>_tot the mean over all realizations.  The error of this
one-jump truncation is estimated by P_c = P_tot(horizon).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class ScalingLedger:
    """Per-sample-time ensemble statistics entering the reconstruction.

    ``n`` counts the realizations kept in the means (multi-jump
    realizations are dropped and reported in ``n_multi``).
    """

    beta: float
    grid: np.ndarray
    a0: np.ndarray
    p_tot: np.ndarray
    n: int
    n_j: np.ndarray
    a_tot_bar: np.ndarray
    n_multi: int = 0

    def __post_init__(self):
        for name in ("grid", "a0", "p_tot", "a_tot_bar"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "n_j", np.asarray(self.n_j, dtype=np.int64))
        k = self.grid.size
        if any(getattr(self, f).shape != (k,) for f in ("a0", "p_tot", "n_j", "a_tot_bar")):
            raise ValueError("ledger columns must match the grid length")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if self.n < 1:
            raise ValueError("ensemble size must be >= 1")
        if self.p_tot[0] != 0.0 or self.n_j[0] != 0:
            raise ValueError("p_tot and n_j must vanish at t = 0")
        if np.any(np.diff(self.n_j) < 0) or np.any(self.n_j < 0) or np.any(self.n_j > self.n):
            raise ValueError("n_j must be non-decreasing within [0, N]")
        if abs(self.a_tot_bar[0] - self.a0[0]) > 1e-12:
            raise ValueError("ensemble mean must equal the no-jump value at t = 0")


@dataclass(frozen=True)
class TermBreakdown:
    T_A: object
    T_B: object
    T_C: object
    T_D: object

    @property
    def total(self):
        return self.T_A + (self.T_B + (self.T_C + self.T_D))


def total_transition_rate(path, beta: float) -> np.ndarray:
    """P_tot at the sample times: beta times the integrated jump rate of ``path``."""
    return beta * path.sample_cumulative_rate


def decompose(ledger: ScalingLedger, k=None) -> TermBreakdown:
    """The four terms of the reconstruction at index ``k`` (all times if None)."""
    sl = slice(None) if k is None else k
    beta = ledger.beta
    a0 = ledger.a0[sl]
    frac = (ledger.n - ledger.n_j[sl]) / ledger.n
    # T_C and T_D share the division by beta so that they cancel exactly
    # when every realization is jump-free
    return TermBreakdown(
        T_A=a0,
        T_B=-(ledger.p_tot[sl] * a0) / beta,
        T_C=-(frac * a0) / beta,
        T_D=ledger.a_tot_bar[sl] / beta,
    )


def reconstruct(ledger: ScalingLedger, k=None):
    """Reconstructed unscaled expectation; bitwise the sum of :func:`decompose`."""
    return decompose(ledger, k).total


def standard_error(y, beta: float) -> np.ndarray:
    """sample_std(y_i) / (beta sqrt(N)) per sample time.

    ``y`` has shape (N, K) with y_i = a_i - [not jumped by t_k] a0, i.e. zero
    for realizations still on the no-jump path.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[0] < 2:
        raise ValueError("standard error needs N >= 2")
    return y.std(axis=0, ddof=1) / (beta * np.sqrt(y.shape[0]))


def standard_error_from_sums(sum_y, sum_y2, n: int, beta: float) -> np.ndarray:
    """Same as :func:`standard_error` from running sums of y and y^2."""
    if n < 2:
        raise ValueError("standard error needs N >= 2")
    sum_y = np.asarray(sum_y, dtype=float)
    var = (np.asarray(sum_y2, dtype=float) - sum_y * sum_y / n) / (n - 1)
    return np.sqrt(np.maximum(var, 0.0)) / (beta * np.sqrt(n))


def ratio_standard_error(num, den, sums: dict, n: int, beta: float) -> np.ndarray:
    """Delta-method standard error of num/den for two reconstructions.

    Both reconstructions are affine in the means of their per-realization
    terms with slope 1/beta, so the ratio's fluctuation is that of
    mean(y - R y_I) / (beta den) with R = num/den.  ``sums`` holds
    ``y``, ``y2``, ``yi``, ``yi2`` and ``y_yi`` (the cross sum).
    """
    if n < 2:
        raise ValueError("standard error needs N >= 2")
    ratio = np.asarray(num, dtype=float) / np.asarray(den, dtype=float)
    sz = sums["y"] - ratio * sums["yi"]
    sz2 = sums["y2"] - 2 * ratio * sums["y_yi"] + ratio**2 * sums["yi2"]
    var = (sz2 - sz * sz / n) / (n - 1)
    return np.sqrt(np.maximum(var, 0.0)) / (beta * np.sqrt(n) * np.abs(den))


def validity_error(p_c: float, n_multi: int = 0, n: int = 1) -> float:
    """Relative error estimate of the one-jump truncation.

    Equal to P_c, floored at the observed multi-jump fraction.
    """
    if not 0.0 <= p_c < 1.0:
        raise ValueError("P_c must lie in [0, 1)")
    return max(float(p_c), n_multi / n if n else 0.0)
