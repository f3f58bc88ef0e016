"""Truncated Fock-space states, ladder operators and doubled-space pairs.

Every operator used by the oscillator models is either a ladder operator or
diagonal in the number basis, so states are stored as plain amplitude
vectors and operators as index shifts and weight vectors.  All arithmetic is
complex128.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import LeakageError

COHERENT_TAIL_TOL = 1e-8
LEAKAGE_TOL = 1e-6


def _frozen(array, dtype=np.complex128):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class FockVector:
    """Amplitudes c_0..c_{n_max} over the truncated number basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _frozen(self.amplitudes)
        if amps.ndim != 1 or amps.size < 2:
            raise ValueError("a FockVector needs n_max >= 1 (at least two levels)")
        if not np.all(np.isfinite(amps)):
            raise ValueError("FockVector amplitudes must be finite")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_max(self) -> int:
        return self.amplitudes.size - 1

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def norm(self) -> float:
        return float(np.sqrt(self.norm_squared()))

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def normalize(self) -> FockVector:
        nrm = self.norm()
        if nrm == 0.0:
            raise ValueError("cannot normalize a zero vector")
        # already-normalized vectors are returned untouched so that
        # normalize(normalize(x)) is bitwise equal to normalize(x)
        if abs(nrm - 1.0) <= 1e-14:
            return self
        return FockVector(self.amplitudes / nrm)

    def top_population(self, levels: int = 2) -> float:
        """Fraction of the norm sitting in the top ``levels`` basis states."""
        pops = self.populations()
        total = pops.sum()
        if total == 0.0:
            return 0.0
        return float(pops[-levels:].sum() / total)

    def scaled(self, factor) -> FockVector:
        return FockVector(self.amplitudes * factor)


def check_leakage(state: FockVector, tol: float = LEAKAGE_TOL, *, time=None):
    """Raise LeakageError when too much population sits near the cutoff."""
    leak = state.top_population(2)
    if leak > tol:
        raise LeakageError(
            f"population {leak:.3e} above n_max-2 exceeds {tol:.1e}; increase n_max",
            time=time,
        )


@dataclass(frozen=True)
class StateSpec:
    """Initial-state recipe: ``fock`` (int n), ``coherent`` (complex xi) or
    ``superposition`` (sequence of amplitudes over |0>, |1>, ...)."""

    kind: str
    value: object


def make_initial_state(spec: StateSpec, n_max: int) -> FockVector:
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    dim = n_max + 1
    if spec.kind == "fock":
        n = int(spec.value)
        if not 0 <= n <= n_max:
            raise ValueError(f"Fock level {n} outside 0..{n_max}")
        amps = np.zeros(dim, dtype=np.complex128)
        amps[n] = 1.0
        return FockVector(amps)
    if spec.kind == "coherent":
        xi = complex(spec.value)
        mean = abs(xi) ** 2
        tail = float(poisson.sf(n_max, mean)) if mean > 0 else 0.0
        if tail > COHERENT_TAIL_TOL:
            raise ValueError(
                f"coherent state truncated at n_max={n_max} loses {tail:.2e} "
                f"population (> {COHERENT_TAIL_TOL:.0e})"
            )
        if xi == 0:
            return make_initial_state(StateSpec("fock", 0), n_max)
        n = np.arange(dim)
        # log-space to avoid overflow of xi**n / sqrt(n!)
        log_mag = -mean / 2 + n * np.log(abs(xi)) - 0.5 * gammaln(n + 1)
        amps = np.exp(log_mag) * np.exp(1j * np.angle(xi) * n)
        return FockVector(amps).normalize()
    if spec.kind == "superposition":
        coeffs = np.asarray(spec.value, dtype=np.complex128).ravel()
        if coeffs.size == 0:
            raise ValueError("superposition needs at least one amplitude")
        if coeffs.size > dim:
            raise ValueError("superposition has more amplitudes than basis states")
        amps = np.zeros(dim, dtype=np.complex128)
        amps[: coeffs.size] = coeffs
        return FockVector(amps).normalize()
    raise ValueError(f"unknown initial-state kind {spec.kind!r}")


def ladder_apply(kind: str, state: FockVector) -> tuple[FockVector, bool]:
    """Apply ``a`` (``"lower"``) or ``a†`` (``"raise"``) without normalizing.

    Returns the new vector and a leakage flag which is True when ``raise``
    dropped nonzero amplitude off the top of the basis.
    """
    c = state.amplitudes
    n = np.arange(c.size)
    out = np.zeros_like(c)
    if kind == "lower":
        out[:-1] = np.sqrt(n[1:]) * c[1:]
        return FockVector(out), False
    if kind == "raise":
        out[1:] = np.sqrt(n[1:]) * c[:-1]
        return FockVector(out), bool(c[-1] != 0)
    raise ValueError(f"unknown ladder kind {kind!r}")


def ladder_weights(kind: str, n_max: int) -> np.ndarray:
    """Diagonal of L†L for a ladder jump operator in the truncated basis.

    For ``raise`` this is the truncated product a a†, whose top entry is 0
    because a† maps |n_max> out of the basis.
    """
    n = np.arange(n_max + 1, dtype=float)
    if kind == "lower":
        return n
    if kind == "raise":
        w = n + 1.0
        w[-1] = 0.0
        return w
    raise ValueError(f"unknown ladder kind {kind!r}")


def observable_weights(observable, n_max: int) -> np.ndarray:
    """Diagonal of an observable: ``"number"``, ``"identity"`` or explicit weights."""
    if isinstance(observable, str):
        if observable == "number":
            return np.arange(n_max + 1, dtype=float)
        if observable == "identity":
            return np.ones(n_max + 1)
        raise ValueError(f"unknown observable {observable!r}")
    w = np.asarray(observable, dtype=float)
    if w.shape != (n_max + 1,):
        raise ValueError(f"diagonal observable needs {n_max + 1} weights, got {w.shape}")
    return w


def observable_expectation(state: FockVector, observable) -> float:
    """<psi|A|psi> / <psi|psi> for a diagonal observable."""
    pops = state.populations()
    total = pops.sum()
    if total == 0.0:
        raise ValueError("expectation of a zero-norm state")
    return float(pops @ observable_weights(observable, state.n_max) / total)


@dataclass(frozen=True, eq=False)
class DoubledVector:
    """A pair (phi, psi) in the doubled space plus a log weight.

    The stored pair keeps its norm along the deterministic flow; growth of
    the represented norm (which happens while some rate is negative) is
    carried in ``log_weight`` so that the pair represents
    ``exp(log_weight/2) * (phi, psi)``.
    """

    upper: FockVector
    lower: FockVector
    log_weight: float = 0.0

    def __post_init__(self):
        if self.upper.n_max != self.lower.n_max:
            raise ValueError("doubled pair components must share n_max")
        if not np.isfinite(self.log_weight):
            raise ValueError("log_weight must be finite")

    @classmethod
    def from_state(cls, psi: FockVector) -> DoubledVector:
        return cls(psi, psi, 0.0)

    @property
    def n_max(self) -> int:
        return self.upper.n_max

    @property
    def weight(self) -> float:
        return float(np.exp(self.log_weight))

    def norm_squared(self) -> float:
        return self.upper.norm_squared() + self.lower.norm_squared()

    def norm(self) -> float:
        return float(np.sqrt(self.norm_squared()))


def cross_expectation(pair: DoubledVector, observable) -> complex:
    """weight * <psi|A|phi> for the represented pair (no normalization)."""
    if pair.norm_squared() == 0.0:
        raise ValueError("cross expectation of a zero pair")
    w = observable_weights(observable, pair.n_max)
    val = np.sum(np.conj(pair.lower.amplitudes) * w * pair.upper.amplitudes)
    return complex(pair.weight * val)


@dataclass
class DensityAccumulator:
    """Running sum of weighted |phi><psi| outer products."""

    dim: int
    matrix_sum: np.ndarray = field(default=None)
    count: int = 0

    def __post_init__(self):
        if self.matrix_sum is None:
            self.matrix_sum = np.zeros((self.dim, self.dim), dtype=np.complex128)

    def add(self, pair: DoubledVector):
        self.matrix_sum += pair.weight * np.outer(
            pair.upper.amplitudes, np.conj(pair.lower.amplitudes)
        )
        self.count += 1

    def add_matrix(self, matrix, count: int = 1):
        self.matrix_sum += matrix
        self.count += count

    def merge(self, other: DensityAccumulator) -> DensityAccumulator:
        if other.dim != self.dim:
            raise ValueError("cannot merge accumulators of different dimension")
        return DensityAccumulator(
            self.dim, self.matrix_sum + other.matrix_sum, self.count + other.count
        )

    def mean(self) -> np.ndarray:
        if self.count == 0:
            raise ValueError("empty accumulator")
        return self.matrix_sum / self.count
