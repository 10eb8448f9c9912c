"""Monte Carlo NMSE / iteration / runtime experiments over parameter sweeps."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimators import (
    ALGORITHMS,
    als_no_imperfection_baseline,
    check_identifiability,
    clairvoyant_ls,
    hosvd_sti,
    remove_scaling_ambiguity,
    tals_lti,
    tals_sti,
    truth_factors,
)
from .system_model import (
    SystemConfig,
    design_ris_patterns,
    gen_channels,
    gen_imperfections,
    make_rng,
    synthesize_rx,
)

__all__ = [
    "SWEEP_AXES",
    "ExperimentSpec",
    "ResultRow",
    "AggregateResult",
    "nmse",
    "flops_estimate",
    "model_kind",
    "run_monte_carlo",
    "sweep_presets",
    "get_preset",
    "PRESET_NAMES",
]

SWEEP_AXES = ("snr_db", "N", "r_b", "K")
_INT_AXES = ("N", "K")


def nmse(truth, estimate) -> float:
    """``||truth - estimate||_F^2 / ||truth||_F^2`` for a single realisation."""
    truth = np.asarray(truth)
    estimate = np.asarray(estimate)
    if truth.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {estimate.shape}")
    den = float(np.vdot(truth, truth).real)
    if den == 0.0:
        raise ValueError("NMSE is undefined for an all-zero reference")
    diff = truth - estimate
    return float(np.vdot(diff, diff).real) / den


def flops_estimate(cfg: SystemConfig, algorithm: str, iterations: float, kind: str | None = None) -> float:
    """Order-of-magnitude operation count with unit constants.

    TALS-LTI costs ``N^2 K (M + L + ML)`` per iteration, TALS-STI
    ``N^2 K (PM + PL + ML)`` and HOSVD-STI ``N M L P`` in total.  The
    baseline drops the imperfection update; the clairvoyant bound counts as a
    single TALS iteration.
    """
    M, L, N, K, P = cfg.M, cfg.L, cfg.N, cfg.K, cfg.P
    if kind is None:
        kind = "lti" if algorithm == "tals_lti" or (algorithm not in ("tals_sti", "hosvd_sti") and P == 1) else "sti"
    lti_iter = N * N * K * (M + L + M * L)
    sti_iter = N * N * K * (P * M + P * L + M * L)
    if algorithm == "tals_lti":
        return float(iterations) * lti_iter
    if algorithm == "tals_sti":
        return float(iterations) * sti_iter
    if algorithm == "hosvd_sti":
        return float(N * M * L * P)
    if algorithm == "baseline":
        per = N * N * K * (M + L) if kind == "lti" else N * N * K * (P * M + P * L)
        return float(iterations) * per
    if algorithm == "clairvoyant":
        return float(lti_iter if kind == "lti" else sti_iter)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def model_kind(algorithms, cfg: SystemConfig) -> str:
    """Signal model implied by a set of algorithms."""
    algorithms = tuple(algorithms)
    has_lti = "tals_lti" in algorithms
    has_sti = any(a in ("tals_sti", "hosvd_sti") for a in algorithms)
    if has_lti and has_sti:
        raise ValueError("tals_lti cannot be combined with STI estimators in one experiment")
    if has_lti:
        return "lti"
    if has_sti:
        return "sti"
    return "lti" if cfg.P == 1 else "sti"


@dataclass(frozen=True)
class ExperimentSpec:
    base: SystemConfig
    sweep_axis: str
    sweep_values: tuple
    algorithms: tuple
    runs: int | None = None
    name: str = ""

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"sweep_axis must be one of {SWEEP_AXES}, got {self.sweep_axis!r}")
        values = tuple(self.sweep_values)
        if not values:
            raise ValueError("sweep_values must not be empty")
        diffs = np.diff(np.asarray(values, dtype=float))
        if len(values) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError(f"sweep_values must be strictly monotone, got {values}")
        if self.sweep_axis in _INT_AXES:
            values = tuple(int(v) for v in values)
        else:
            values = tuple(float(v) for v in values)
        object.__setattr__(self, "sweep_values", values)
        algos = tuple(self.algorithms)
        if not algos:
            raise ValueError("at least one algorithm is required")
        for a in algos:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}; expected one of {ALGORITHMS}")
        object.__setattr__(self, "algorithms", algos)
        model_kind(algos, self.base)
        if self.runs is not None and self.runs < 1:
            raise ValueError("runs must be >= 1")

    @property
    def n_runs(self) -> int:
        return self.runs if self.runs is not None else self.base.omega

    @property
    def kind(self) -> str:
        return model_kind(self.algorithms, self.base)

    def point_config(self, value) -> SystemConfig:
        cfg = self.base.replace(**{self.sweep_axis: value})
        if self.kind == "lti" and cfg.P != 1:
            cfg = cfg.replace(P=1)
        return cfg


@dataclass
class ResultRow:
    sweep_axis: str
    sweep_value: float
    algorithm: str
    nmse_H: float | None
    nmse_G: float | None
    nmse_E: float | None
    mean_iterations: float | None
    flops: float | None
    runtime_s: float | None
    runs: int
    non_converged: int

    @property
    def skipped(self) -> bool:
        return self.runs == 0


@dataclass
class AggregateResult:
    rows: list = field(default_factory=list)
    skipped: dict = field(default_factory=dict)  # (value, algorithm) -> reason

    def row(self, value, algorithm) -> ResultRow:
        for r in self.rows:
            if r.algorithm == algorithm and r.sweep_value == value:
                return r
        raise KeyError((value, algorithm))

    def series(self, algorithm, attr):
        """Values of ``attr`` across the sweep for one algorithm."""
        return [getattr(r, attr) for r in self.rows if r.algorithm == algorithm]

    def __eq__(self, other):
        if not isinstance(other, AggregateResult):
            return NotImplemented
        return self.rows == other.rows


_COUPLING = {"baseline": "reciprocal", "clairvoyant": "independent"}


def _estimate(algorithm, Y, S, cfg, truth, rng):
    if algorithm == "tals_lti":
        return tals_lti(Y, S, delta=cfg.delta, max_iters=cfg.max_iters, rng=rng)
    if algorithm == "tals_sti":
        return tals_sti(Y, S, delta=cfg.delta, max_iters=cfg.max_iters, rng=rng)
    if algorithm == "hosvd_sti":
        return hosvd_sti(Y, S)
    if algorithm == "baseline":
        return als_no_imperfection_baseline(Y, S, delta=cfg.delta, max_iters=cfg.max_iters, rng=rng)
    return clairvoyant_ls(Y, S, truth)


def _run_chunk(cfg, kind, algorithms, point, run_ids, timing):
    """Simulate runs ``run_ids`` of one sweep point; returns per-run metrics."""
    S = design_ris_patterns(cfg)
    out = []
    for run in run_ids:
        rng = make_rng(cfg.seed, point, run, 0)
        channels = gen_channels(cfg, rng)
        imperfection = gen_imperfections(cfg, rng, kind)
        rx = synthesize_rx(cfg, channels, S, imperfection, rng)
        truth = truth_factors(channels, imperfection)
        metrics = {}
        for algorithm in algorithms:
            algo_rng = make_rng(cfg.seed, point, run, 1 + ALGORITHMS.index(algorithm))
            t0 = time.perf_counter()
            est = _estimate(algorithm, rx.Y, S, cfg, truth, algo_rng)
            elapsed = time.perf_counter() - t0 if timing else 0.0
            aligned = remove_scaling_ambiguity(est, truth, coupling=_COUPLING.get(algorithm, "joint"))
            metrics[algorithm] = (
                nmse(truth.H, aligned.H),
                nmse(truth.G, aligned.G),
                nmse(truth.E, aligned.E),
                est.iterations,
                est.converged,
                elapsed,
            )
        out.append(metrics)
    return out


def _chunks(n, size):
    return [range(i, min(i + size, n)) for i in range(0, n, size)]


def run_monte_carlo(spec: ExperimentSpec, *, workers: int = 1, timing: bool = True, progress=None) -> AggregateResult:
    """Run every (sweep point, algorithm) pair for ``spec.n_runs`` realisations.

    Each run regenerates channels, imperfections and noise from a stream keyed
    by ``(seed, point, run)``; the patterns are deterministic per point.
    Per-run results are gathered in run order before averaging, so the output
    does not depend on ``workers``.  ``timing=False`` records zero runtimes,
    making the result bit-reproducible.

    ``progress``, if given, is called as ``progress(point_index, n_points)``
    after each sweep point.
    """
    kind = spec.kind
    result = AggregateResult()
    n_points = len(spec.sweep_values)
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for point, value in enumerate(spec.sweep_values):
            cfg = spec.point_config(value)
            active = []
            for algorithm in spec.algorithms:
                ident = check_identifiability(cfg, algorithm, kind)
                if ident.ok:
                    active.append(algorithm)
                else:
                    reason = f"{algorithm}: {ident.requirement} violated (K={cfg.K}, N={cfg.N}, k_min={ident.k_min})"
                    result.skipped[(value, algorithm)] = reason
            per_run = []
            if active:
                n = spec.n_runs
                if pool is None:
                    per_run = _run_chunk(cfg, kind, active, point, range(n), timing)
                else:
                    size = max(1, math.ceil(n / (4 * workers)))
                    futures = [pool.submit(_run_chunk, cfg, kind, active, point, c, timing)
                               for c in _chunks(n, size)]
                    for f in futures:
                        per_run.extend(f.result())
            for algorithm in spec.algorithms:
                if algorithm not in active:
                    result.rows.append(ResultRow(spec.sweep_axis, value, algorithm,
                                                 None, None, None, None, None, None, 0, 0))
                    continue
                m = np.array([r[algorithm] for r in per_run], dtype=float)
                mean_it = float(m[:, 3].mean())
                result.rows.append(ResultRow(
                    sweep_axis=spec.sweep_axis,
                    sweep_value=value,
                    algorithm=algorithm,
                    nmse_H=float(m[:, 0].mean()),
                    nmse_G=float(m[:, 1].mean()),
                    nmse_E=float(m[:, 2].mean()),
                    mean_iterations=mean_it,
                    flops=flops_estimate(cfg, algorithm, mean_it, kind),
                    runtime_s=float(m[:, 5].mean()),
                    runs=len(per_run),
                    non_converged=int((m[:, 4] == 0).sum()),
                ))
            if progress is not None:
                progress(point + 1, n_points)
    finally:
        if pool is not None:
            pool.shutdown()
    return result


_FULL_SNR = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
_DESK_SNR = (0.0, 10.0, 20.0, 30.0)
_RB_GRID = (0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0)
_STI_ALL = ("tals_sti", "hosvd_sti", "clairvoyant", "baseline")

# name -> (base overrides, desk overrides, axis, full values, desk values, algorithms)
_PRESETS = {
    "fig4": (dict(M=3, L=2, N=20, K=20, P=1, r_b=0.5), dict(N=8),
             "snr_db", _FULL_SNR, _DESK_SNR, ("tals_lti", "clairvoyant", "baseline")),
    "fig5": (dict(M=3, L=2, K=20, P=1, r_b=0.5, snr_db=20.0), dict(),
             "N", (10, 20, 30, 40), (4, 8, 12, 16), ("tals_lti", "baseline")),
    "fig6": (dict(M=3, L=2, N=50, K=50, P=5, r_b=0.5, channel_model="mmwave"), dict(N=12, K=16, P=4),
             "snr_db", _FULL_SNR, _DESK_SNR, _STI_ALL),
    "fig7": (dict(M=3, L=2, K=50, P=5, r_b=0.5, snr_db=20.0), dict(K=20),
             "N", (10, 20, 30, 40, 50), (4, 8, 12, 16), ("tals_sti", "hosvd_sti")),
    "fig8": (dict(M=3, L=2, N=50, K=50, P=5, r_b=0.5), dict(N=16, K=20),
             "snr_db", _FULL_SNR, _DESK_SNR, ("tals_sti",)),
    "fig9": (dict(M=3, L=2, N=50, K=50, P=5, r_b=0.5), dict(N=16, K=20),
             "snr_db", _FULL_SNR, _DESK_SNR, ("tals_sti", "hosvd_sti")),
    "fig10": (dict(M=3, L=2, K=50, P=5, r_b=0.5, snr_db=20.0), dict(K=16),
              "N", (10, 20, 30, 40, 50, 60, 70, 80), (4, 8, 12, 16), _STI_ALL),
    "fig11": (dict(M=3, L=2, N=50, K=50, P=5, snr_db=20.0), dict(N=16, K=20),
              "r_b", _RB_GRID, _RB_GRID, _STI_ALL),
}

PRESET_NAMES = tuple(_PRESETS)
FULL_RUNS = 3000
DESK_RUNS = 200


def get_preset(name: str, desk_scale: bool = False, base: SystemConfig | None = None) -> ExperimentSpec:
    """Experiment for one named figure; ``desk_scale`` shrinks N, K and the run count."""
    if name not in _PRESETS:
        raise KeyError(f"unknown preset {name!r}; valid presets: {', '.join(PRESET_NAMES)}")
    overrides, desk, axis, full_values, desk_values, algos = _PRESETS[name]
    params = dict(overrides)
    if desk_scale:
        params.update(desk)
    params["omega"] = DESK_RUNS if desk_scale else FULL_RUNS
    base = (base or SystemConfig()).replace(**params)
    values = desk_values if desk_scale else full_values
    label = f"{name}-desk" if desk_scale else name
    return ExperimentSpec(base=base, sweep_axis=axis, sweep_values=values, algorithms=algos, name=label)


def sweep_presets(desk_scale: bool = False) -> list:
    return [get_preset(name, desk_scale) for name in PRESET_NAMES]
