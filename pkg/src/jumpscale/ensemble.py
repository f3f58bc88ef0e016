"""Run configuration, parallel ensemble execution, result files and oracle comparison.

Reproducibility contract: trajectory ``i`` always draws from
``trajectory_stream(seed, i)``; trajectories are grouped in fixed chunks of
``CHUNK_SIZE`` ids, each chunk is summed in id order and chunk sums are added
in chunk order.  None of this depends on the number of workers, so results
are bitwise identical for any worker count.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .coefficients import OhmicParams
from .errors import ConfigError
from .estimator import (
    ScalingLedger,
    decompose,
    ratio_standard_error,
    standard_error_from_sums,
    total_transition_rate,
    validity_error,
)
from .hilbert import StateSpec, make_initial_state
from .jumps import trajectory_stream
from .oracle import DensityMatrix, master_curve
from .trajectories import (
    TrajectoryConfig,
    prepare_doubled,
    prepare_mcwf,
    run_doubled_trajectory,
    run_mcwf_trajectory,
)

log = logging.getLogger(__name__)

CHUNK_SIZE = 2048
QUICK_N_TRAJ = 50_000
FULL_N_TRAJ = 600_000

# config-file key -> RunConfig attribute
KEYS = {
    "model.theta_bar": "theta_bar",
    "model.g_bar": "g_bar",
    "model.r": "r",
    "sim.unravelling": "unravelling",
    "sim.beta": "beta",
    "sim.dt": "dt",
    "sim.t_final": "t_final",
    "sim.samples": "samples",
    "sim.n_max": "n_max",
    "sim.n_traj": "n_traj",
    "sim.seed": "seed",
    "state.kind": "state_kind",
    "state.value": "state_value",
    "observable": "observable",
}


def _parse_int(text: str, key: str) -> int:
    try:
        val = float(text) if any(c in text for c in ".eE") else int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None
    if float(val) != int(val):
        raise ConfigError(f"{key}: expected an integer, got {text!r}")
    return int(val)


def _parse_float(text: str, key: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _parse_state_value(kind: str, text: str):
    try:
        if kind == "fock":
            return _parse_int(text, "state.value")
        if kind == "coherent":
            return complex(text.replace(" ", ""))
        if kind == "superposition":
            return tuple(complex(p.strip().replace(" ", "")) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"state.value: cannot parse {text!r} for kind {kind!r}") from None
    raise ConfigError(f"state.kind must be fock, coherent or superposition, got {kind!r}")


def _format_state_value(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format_scalar(v) for v in value)
    return _format_scalar(value)


def _format_scalar(v) -> str:
    if isinstance(v, complex):
        return repr(v.real) if v.imag == 0 else repr(v).strip("()")
    return repr(v)


@dataclass(frozen=True)
class RunConfig:
    theta_bar: float
    g_bar: float
    r: float
    unravelling: str
    beta: float
    t_final: float
    samples: int = 60
    dt: float = 1e-3
    n_max: int = 30
    n_traj: int = QUICK_N_TRAJ
    seed: int = 0
    state_kind: str = "fock"
    state_value: object = 0
    observable: str = "number"

    def __post_init__(self):
        if self.unravelling not in ("mcwf", "doubled"):
            raise ConfigError(f"sim.unravelling must be mcwf or doubled, got {self.unravelling!r}")
        if self.theta_bar < 0 or self.g_bar < 0:
            raise ConfigError("model.theta_bar and model.g_bar must be >= 0")
        for key in ("r", "t_final", "dt"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be > 0")
        if self.beta < 1:
            raise ConfigError("sim.beta must be >= 1")
        if self.samples < 2:
            raise ConfigError("sim.samples must be >= 2")
        if self.n_max < 1:
            raise ConfigError("sim.n_max must be >= 1")
        if self.n_traj < 1:
            raise ConfigError("sim.n_traj must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("sim.seed must be a 64-bit unsigned integer")
        if self.observable not in ("number", "identity"):
            raise ConfigError(f"observable must be number or identity, got {self.observable!r}")
        if self.state_kind not in ("fock", "coherent", "superposition"):
            raise ConfigError(f"state.kind must be fock, coherent or superposition, got {self.state_kind!r}")

    @classmethod
    def from_mapping(cls, mapping: dict) -> RunConfig:
        """Build from ``key = value`` strings keyed exactly as in config files."""
        unknown = set(mapping) - set(KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kw = {}
        for key, text in mapping.items():
            attr = KEYS[key]
            ftype = {f.name: f.type for f in fields(cls)}[attr]
            if attr == "state_value":
                continue
            if ftype == "float":
                kw[attr] = _parse_float(text, key)
            elif ftype == "int":
                kw[attr] = _parse_int(text, key)
            else:
                kw[attr] = text
        missing = [k for k, a in KEYS.items()
                   if a in ("theta_bar", "g_bar", "r", "unravelling", "beta", "t_final") and a not in kw]
        if missing:
            raise ConfigError(f"missing config keys: {', '.join(missing)}")
        if "state.value" in mapping:
            kw["state_value"] = _parse_state_value(kw.get("state_kind", "fock"), mapping["state.value"])
        return cls(**kw)

    @classmethod
    def load(cls, path) -> RunConfig:
        return cls.from_mapping(read_key_values(Path(path).read_text(encoding="utf-8")))

    def to_text(self) -> str:
        lines = []
        for key, attr in KEYS.items():
            val = getattr(self, attr)
            text = _format_state_value(val) if attr == "state_value" else (
                repr(val) if isinstance(val, float) else str(val))
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, **kw) -> RunConfig:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    @property
    def params(self) -> OhmicParams:
        return OhmicParams(self.theta_bar, self.g_bar, self.r)

    @property
    def sample_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.samples)

    @property
    def state(self) -> StateSpec:
        return StateSpec(self.state_kind, self.state_value)

    def trajectory_config(self) -> TrajectoryConfig:
        try:
            return TrajectoryConfig(self.params, self.unravelling, self.beta, self.sample_grid,
                                    n_max=self.n_max, initial=self.state,
                                    observable=self.observable, dt=self.dt)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def read_key_values(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = val
    return out


PRESETS = {
    "fig1": RunConfig(theta_bar=1.2e-6, g_bar=0.5e-8, r=10.0, unravelling="mcwf", beta=1e4,
                      t_final=5.0, samples=60, n_max=30, state_kind="coherent",
                      state_value=complex(np.sqrt(2.0))),
    "fig2": RunConfig(theta_bar=2.4e-6, g_bar=0.5e-8, r=0.1, unravelling="doubled", beta=1e5,
                      t_final=3.0, samples=60, n_max=30, state_kind="superposition",
                      state_value=(complex(1.0), complex(1.0))),
}
PRESETS["fig3"] = PRESETS["fig2"]


# ------------------------------------------------------------- workers ----

@dataclass
class ChunkSums:
    """Per-sample-time sums over one chunk of trajectories."""

    n_kept: int
    n_multi: int
    n_j: np.ndarray
    n_any: np.ndarray
    dev: np.ndarray  # sum of (a_i - a0) over kept realizations
    y: np.ndarray
    y2: np.ndarray
    dev_i: np.ndarray  # same for the identity term
    yi: np.ndarray
    yi2: np.ndarray
    y_yi: np.ndarray
    multi_ids: list = field(default_factory=list)

    @classmethod
    def zeros(cls, k: int) -> ChunkSums:
        z = np.zeros(k)
        return cls(0, 0, np.zeros(k, dtype=np.int64), np.zeros(k, dtype=np.int64),
                   z.copy(), z.copy(), z.copy(), z.copy(), z.copy(), z.copy(), z.copy())

    def merge(self, other: ChunkSums) -> ChunkSums:
        arrays = {f.name: getattr(self, f.name) + getattr(other, f.name)
                  for f in fields(self) if f.name not in ("multi_ids",)}
        return ChunkSums(**arrays, multi_ids=self.multi_ids + other.multi_ids)


_WORKER = {}


def _init_worker(tcfg: TrajectoryConfig, seed: int):
    shared = prepare_mcwf(tcfg) if tcfg.unravelling == "mcwf" else prepare_doubled(tcfg)
    _WORKER.update(cfg=tcfg, seed=seed, shared=shared)


def _run_chunk(bounds) -> ChunkSums:
    lo, hi = bounds
    tcfg, seed, shared = _WORKER["cfg"], _WORKER["seed"], _WORKER["shared"]
    if tcfg.unravelling == "mcwf":
        run, a0, i0 = run_mcwf_trajectory, shared.path.observable_curve, None
    else:
        run, a0, i0 = run_doubled_trajectory, shared.a0, shared.trace0
    sums = ChunkSums.zeros(a0.size)
    for tid in range(lo, hi):
        rec = run(tcfg, trajectory_stream(seed, tid), trajectory_id=tid, shared=shared)
        sums.n_any += rec.jumped_by
        if rec.multi_jump:
            sums.n_multi += 1
            sums.multi_ids.append(tid)
            continue
        sums.n_kept += 1
        if not rec.jump_log:
            continue
        jb = rec.jumped_by
        sums.n_j += jb
        # y_i = a_i where jumped, 0 elsewhere
        y = np.where(jb, rec.values, 0.0)
        sums.dev += np.where(jb, rec.values - a0, 0.0)
        sums.y += y
        sums.y2 += y * y
        if i0 is not None:
            yi = np.where(jb, rec.trace, 0.0)
            sums.dev_i += np.where(jb, rec.trace - i0, 0.0)
            sums.yi += yi
            sums.yi2 += yi * yi
            sums.y_yi += y * yi
    return sums


def chunk_bounds(n_traj: int, chunk: int = CHUNK_SIZE) -> list:
    return [(lo, min(lo + chunk, n_traj)) for lo in range(0, n_traj, chunk)]


# -------------------------------------------------------------- result ----

COLUMNS = ("t", "a0", "p_tot", "n_j", "a_tot_bar", "reconstructed", "stderr",
           "T_A", "T_B", "T_C", "T_D", "trace", "n_any")
INT_COLUMNS = ("n_j", "n_any")
SUMMARY_KEYS = ("unravelling", "beta", "seed", "n_traj", "n_kept", "n_multi", "P_c",
                "validity_error", "max_abs_z")


@dataclass(eq=False)
class EnsembleResult:
    """Per-sample-time reconstruction table plus run summary.

    In doubled runs ``a0``, ``a_tot_bar`` and the T terms refer to the
    observable numerator and ``reconstructed`` is that numerator divided by
    the reconstructed ``trace``; in mcwf runs ``reconstructed`` is the
    numerator itself and ``trace`` is reported as a diagnostic.
    """

    columns: dict
    summary: dict
    wall_time: float = 0.0

    def __getattr__(self, name):
        cols = self.__dict__.get("columns", {})
        if name in cols:
            return cols[name]
        raise AttributeError(name)

    def ledger(self) -> ScalingLedger:
        c = self.columns
        return ScalingLedger(float(self.summary["beta"]), c["t"], c["a0"], c["p_tot"],
                             int(self.summary["n_kept"]), c["n_j"], c["a_tot_bar"],
                             int(self.summary["n_multi"]))

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"# {k} = {_summary_text(self.summary.get(k))}" for k in SUMMARY_KEYS]
        lines.append(",".join(COLUMNS))
        n = self.columns["t"].size
        for j in range(n):
            row = []
            for name in COLUMNS:
                v = self.columns[name][j]
                row.append(str(int(v)) if name in INT_COLUMNS else f"{v:.16e}")
            lines.append(",".join(row))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> EnsembleResult:
        summary, header, rows = {}, None, []
        for raw in Path(path).read_text(encoding="utf-8").splitlines():
            if raw.startswith("#"):
                key, val = (s.strip() for s in raw[1:].split("=", 1))
                summary[key] = _summary_value(key, val)
            elif header is None:
                header = raw.split(",")
            elif raw.strip():
                rows.append(raw.split(","))
        if header != list(COLUMNS):
            raise ValueError(f"unexpected result header {header}")
        cols = {}
        for j, name in enumerate(COLUMNS):
            vals = [r[j] for r in rows]
            cols[name] = (np.array([int(v) for v in vals], dtype=np.int64) if name in INT_COLUMNS
                          else np.array([float(v) for v in vals]))
        return cls(cols, summary)

    def same_as(self, other: EnsembleResult) -> bool:
        return (self.summary == other.summary
                and all(np.array_equal(self.columns[c], other.columns[c]) for c in COLUMNS))


def _summary_text(val) -> str:
    if val is None:
        return "none"
    return repr(val) if isinstance(val, float) else str(val)


def _summary_value(key: str, text: str):
    if text == "none":
        return None
    if key == "unravelling":
        return text
    if key in ("seed", "n_traj", "n_kept", "n_multi"):
        return int(text)
    return float(text)


def build_result(cfg: RunConfig, shared, sums: ChunkSums, wall_time: float = 0.0) -> EnsembleResult:
    """Push merged sums through the reconstruction."""
    beta, n = cfg.beta, sums.n_kept
    if n < 1:
        raise ConfigError("every trajectory jumped more than once; nothing to reconstruct")
    grid = cfg.sample_grid
    if cfg.unravelling == "mcwf":
        a0 = shared.path.observable_curve
        p_tot = total_transition_rate(shared.path, beta)
        i0 = np.ones_like(a0)
    else:
        a0, i0 = shared.a0, shared.trace0
        p_tot = beta * shared.path.cumulative_rate[shared.sample_index]
    ledger = ScalingLedger(beta, grid, a0, p_tot, n, sums.n_j, a0 + sums.dev / n, sums.n_multi)
    terms = decompose(ledger)
    numerator = terms.total
    ledger_i = ScalingLedger(beta, grid, i0, p_tot, n, sums.n_j, i0 + sums.dev_i / n, sums.n_multi)
    trace = decompose(ledger_i).total
    if cfg.unravelling == "mcwf":
        reconstructed = numerator
        stderr = (standard_error_from_sums(sums.y, sums.y2, n, beta) if n >= 2
                  else np.zeros_like(a0))
    else:
        reconstructed = numerator / trace
        stderr = (ratio_standard_error(numerator, trace, {"y": sums.y, "y2": sums.y2, "yi": sums.yi,
                                                          "yi2": sums.yi2, "y_yi": sums.y_yi}, n, beta)
                  if n >= 2 else np.zeros_like(a0))
    cols = {
        "t": grid, "a0": ledger.a0, "p_tot": ledger.p_tot, "n_j": ledger.n_j,
        "a_tot_bar": ledger.a_tot_bar, "reconstructed": reconstructed, "stderr": stderr,
        "T_A": terms.T_A, "T_B": terms.T_B, "T_C": terms.T_C, "T_D": terms.T_D,
        "trace": trace, "n_any": sums.n_any.astype(np.int64),
    }
    p_c = float(p_tot[-1])
    summary = {
        "unravelling": cfg.unravelling, "beta": float(beta), "seed": int(cfg.seed),
        "n_traj": int(cfg.n_traj), "n_kept": int(n), "n_multi": int(sums.n_multi),
        "P_c": p_c, "validity_error": validity_error(p_c, sums.n_multi, cfg.n_traj),
        "max_abs_z": None,
    }
    return EnsembleResult(cols, summary, wall_time)


def run_ensemble(cfg: RunConfig, workers: int = 1, chunk: int = CHUNK_SIZE) -> EnsembleResult:
    """Run ``cfg.n_traj`` trajectories and reconstruct the unscaled expectation."""
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    start = time.perf_counter()
    tcfg = cfg.trajectory_config()
    bounds = chunk_bounds(cfg.n_traj, chunk)
    if workers == 1:
        _init_worker(tcfg, cfg.seed)
        parts = [_run_chunk(b) for b in bounds]
        shared = _WORKER["shared"]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(tcfg, cfg.seed)) as pool:
            parts = list(pool.map(_run_chunk, bounds))
        shared = prepare_mcwf(tcfg) if tcfg.unravelling == "mcwf" else prepare_doubled(tcfg)
    sums = ChunkSums.zeros(cfg.samples)
    for part in parts:
        sums = sums.merge(part)
    if sums.n_multi:
        log.warning("%d of %d trajectories jumped more than once; excluded from the means "
                    "(first ids: %s)", sums.n_multi, cfg.n_traj, sums.multi_ids[:10])
    return build_result(cfg, shared, sums, time.perf_counter() - start)


# -------------------------------------------------------------- oracle ----

@dataclass(eq=False)
class OracleCurve:
    t: np.ndarray
    value: np.ndarray

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        rows = ["t,value"] + [f"{a:.16e},{b:.16e}" for a, b in zip(self.t, self.value)]
        path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> OracleCurve:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1])


def oracle_curve(cfg: RunConfig) -> OracleCurve:
    """Master-equation reference for ``cfg``'s observable on its sample grid."""
    psi0 = make_initial_state(cfg.state, cfg.n_max)
    vals = master_curve(DensityMatrix.from_state(psi0), cfg.params, cfg.sample_grid,
                        cfg.observable, cfg.dt)
    return OracleCurve(cfg.sample_grid, vals)


@dataclass
class ComparisonReport:
    t: np.ndarray
    z: np.ndarray
    flagged: np.ndarray  # zero stderr with a nonzero difference
    max_abs_z: float
    frac_within_3: float

    def fraction_within(self, bound: float) -> float:
        return float(np.mean(np.abs(self.z) <= bound))

    def to_text(self) -> str:
        lines = [f"# max_abs_z = {self.max_abs_z!r}", f"# frac_within_3 = {self.frac_within_3!r}",
                 "t,z,flagged"]
        lines += [f"{a:.16e},{b:.16e},{int(f)}" for a, b, f in zip(self.t, self.z, self.flagged)]
        return "\n".join(lines) + "\n"


def compare(result: EnsembleResult, oracle) -> ComparisonReport:
    """z = (reconstructed - oracle) / stderr at every sample time."""
    t = result.columns["t"]
    if isinstance(oracle, OracleCurve):
        if oracle.t.shape != t.shape or not np.allclose(oracle.t, t, rtol=0, atol=1e-12):
            raise ValueError("oracle and result grids differ")
        ref = oracle.value
    else:
        ref = np.asarray(oracle, dtype=float)
        if ref.shape != t.shape:
            raise ValueError("oracle and result grids differ")
    diff = result.columns["reconstructed"] - ref
    se = result.columns["stderr"]
    z = np.zeros_like(diff)
    pos = se > 0
    z[pos] = diff[pos] / se[pos]
    flagged = (~pos) & (np.abs(diff) > 1e-12)
    z[flagged] = np.inf * np.sign(diff[flagged])
    max_abs = float(np.max(np.abs(z))) if z.size else 0.0
    return ComparisonReport(t, z, flagged, max_abs, float(np.mean(np.abs(z) <= 3)))
