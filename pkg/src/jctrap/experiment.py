"""Drives whole atom sequences through a measurement scheme.

Each atom draws an interaction time, entangles with the field and is
measured according to the configured scheme.  PostSelected mode conditions
on the desired outcome at every step and books its probability; Sampled
mode draws outcomes and marks the trajectory failed on the first
orthogonal one.  Per-step statistics, the cumulative success probability
and the final photon-number distribution are collected; `sweep` scans
spread multiples over seeded ensembles.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import (
    ELASTIC_ROTATION,
    INELASTIC_ROTATION,
    ORTHOGONAL_P_TOL,
    CouplingParams,
    MeasurementScheme,
    cm_project,
    correlated_cm_factors,
    critical_spread,
    jcm_entangle,
    nsm_step,
    orthogonal_rotation,
    project_amplitudes,
    stationary_phase_ratio,
    trapping_time,
)
from .errors import ConfigError, LeakageError, OrthogonalOutcomeError, SimulationError
from .fock import (
    NORM_ATOL,
    FieldState,
    coherent_state,
    default_n_max,
    distribution_stats,
    fock_basis_state,
    renormalize,
    top_level_probability,
)
from .stochastic import SeedSpec, TimingModel, derive_stream, sample_timing

RUN_MODES = ("postselect", "sample")

# A run aborts when the top 3 Fock levels hold more probability than this.
TOP_LEVEL_GUARD = 1e-8

# A trap level counts as converged when it holds more than this probability.
CONVERGENCE_P = 0.9

OUTCOME_POSTSELECTED = "postselected"
OUTCOME_SUCCESS = "sampled_success"
OUTCOME_FAILURE = "sampled_failure"


@dataclass(frozen=True)
class InitialField:
    """Initial cavity field: coherent |alpha> or Fock |n>."""

    kind: str
    alpha: complex = 0j
    n: int = 0

    def __post_init__(self):
        if self.kind not in ("coherent", "fock"):
            raise ConfigError(f"initial field kind must be coherent or fock, got {self.kind!r}")

    @classmethod
    def coherent(cls, alpha: complex) -> "InitialField":
        return cls("coherent", alpha=complex(alpha))

    @classmethod
    def fock(cls, n: int) -> "InitialField":
        return cls("fock", n=int(n))

    def build(self, n_max: int) -> FieldState:
        if self.kind == "coherent":
            state, _ = coherent_state(self.alpha, n_max)
            return state
        return fock_basis_state(self.n, n_max)


@dataclass(frozen=True)
class RunConfig:
    """Full description of one atom-sequence run."""

    scheme: MeasurementScheme
    n_atoms: int
    trap_target: int
    q: int
    initial_field: InitialField
    timing: TimingModel
    coupling: CouplingParams
    n_max: int
    mode: str
    seed: SeedSpec
    omega: float = 1.0
    halt_on_failure: bool = True

    def validate(self) -> None:
        if self.n_atoms < 0:
            raise ConfigError(f"atoms: must be >= 0, got {self.n_atoms}")
        if self.trap_target < 0:
            raise ConfigError(f"trap: must be >= 0, got {self.trap_target}")
        if self.q < 1:
            raise ConfigError(f"q: must be >= 1 in a run config, got {self.q}")
        if self.mode not in RUN_MODES:
            raise ConfigError(f"mode: must be one of {RUN_MODES}, got {self.mode!r}")
        if not self.trap_target < self.n_max - 20:
            raise ConfigError(
                f"nmax: trap level {self.trap_target} needs n_max > {self.trap_target + 20}, "
                f"got {self.n_max}"
            )
        if self.initial_field.kind == "fock" and self.initial_field.n > self.n_max:
            raise ConfigError(
                f"fock: initial level {self.initial_field.n} exceeds n_max {self.n_max}"
            )
        if self.scheme.kind == "superposition":
            if not self.omega > 0:
                raise ConfigError(f"omega: must be > 0, got {self.omega}")
            if not self.timing.ramsey_ratio > 0:
                raise ConfigError("scheme: superposition requires timing.ramsey_ratio > 0")
            if self.timing.ramsey_ratio != self.scheme.ramsey_ratio:
                raise ConfigError(
                    "scheme: timing.ramsey_ratio and scheme.ramsey_ratio disagree "
                    f"({self.timing.ramsey_ratio} vs {self.scheme.ramsey_ratio})"
                )


@dataclass(frozen=True)
class StepRecord:
    """Per-atom record: timing, success probability, field statistics."""

    k: int
    tau_k: float
    T_k: float
    P_k: float
    cum_P: float
    mean_n: float
    delta_n: float
    outcome: str
    p_trap: float
    p_above_trap: float


@dataclass
class RunResult:
    """Outcome of one atom sequence."""

    steps: list[StepRecord]
    final_distribution: np.ndarray
    final_state: FieldState | np.ndarray
    terminated_early: str | None = None
    n_failures: int = 0
    final_cum_P: float = 1.0


def build_run_config(
    *,
    scheme: str,
    trap_target: int,
    n_atoms: int,
    q: int = 1,
    alpha: complex | None = None,
    fock_n: int | None = None,
    spread_mult: float = 0.0,
    spread_time: float | None = None,
    tau_bar: float | None = None,
    law: str = "uniform",
    mode: str = "postselect",
    omega: float = 1.0,
    phi_f: float = -math.pi / 2,
    g: float = 1.0,
    master_seed: int = 0,
    stream_id: int = 0,
    n_max: int | None = None,
    halt_on_failure: bool = True,
    decorrelation: float = 0.0,
) -> RunConfig:
    """Assemble a validated RunConfig with the standard defaults.

    tau_bar defaults to the q-th trapping time of the trap level, the
    spread to spread_mult times the critical spread, n_max to the
    truncation policy, and the superposition Ramsey ratio to the
    stationary-phase closure 2 g sqrt(n_t+1) / omega.
    """
    coupling = CouplingParams(g)
    if (alpha is None) == (fock_n is None):
        raise ConfigError("initial field: set exactly one of alpha or fock")
    initial = InitialField.coherent(alpha) if alpha is not None else InitialField.fock(fock_n)
    if q < 1:
        raise ConfigError(f"q: must be >= 1 in a run config, got {q}")
    if tau_bar is None:
        tau_bar = trapping_time(trap_target, q, coupling)
    if spread_time is None:
        spread_time = spread_mult * critical_spread(trap_target, coupling)
    ratio = 0.0
    if scheme == "superposition":
        ratio = stationary_phase_ratio(trap_target, coupling, omega)
        scheme_obj = MeasurementScheme.superposition(ratio, phi_f=phi_f)
    else:
        scheme_obj = MeasurementScheme(scheme)
    timing = TimingModel(
        tau_bar=tau_bar,
        spread=spread_time,
        law=law,
        ramsey_ratio=ratio,
        decorrelation=decorrelation,
    )
    config = RunConfig(
        scheme=scheme_obj,
        n_atoms=n_atoms,
        trap_target=trap_target,
        q=q,
        initial_field=initial,
        timing=timing,
        coupling=coupling,
        n_max=n_max if n_max is not None else default_n_max(trap_target),
        mode=mode,
        seed=SeedSpec(master_seed, stream_id),
        omega=omega,
        halt_on_failure=halt_on_failure,
    )
    config.validate()
    return config


class _LogSum:
    """Compensated running sum of log P_k (Neumaier), tolerant of P_k = 0."""

    def __init__(self):
        self.total = 0.0
        self.comp = 0.0

    def add(self, p: float) -> None:
        if p <= 0.0 or math.isinf(self.total):
            self.total = float("-inf")
            self.comp = 0.0
            return
        x = math.log(p)
        t = self.total + x
        if abs(self.total) >= abs(x):
            self.comp += (self.total - t) + x
        else:
            self.comp += (x - t) + self.total
        self.total = t

    @property
    def value(self) -> float:
        if math.isinf(self.total):
            return 0.0
        return math.exp(self.total + self.comp)


def run_sequence(config: RunConfig, collect_steps: bool = True) -> RunResult:
    """Run one sequence of config.n_atoms atoms through the scheme.

    PostSelected mode applies the desired projection at every step and
    terminates with reason "impossible post-selection" if its probability
    vanishes.  Sampled mode draws each outcome; the first orthogonal draw
    marks the trajectory failed and, with halt_on_failure, stops it.
    Leakage errors from the dynamics propagate; a run whose top three Fock
    levels exceed the 1e-8 guard aborts the same way.
    """
    config.validate()
    rng = derive_stream(config.seed)
    scheme = config.scheme
    is_nsm = scheme.kind == "nsm"
    sampled = config.mode == "sample"
    trap = config.trap_target

    state: FieldState | None = None
    if is_nsm:
        probs = config.initial_field.build(config.n_max).probabilities()
        dist = probs
    else:
        state = config.initial_field.build(config.n_max)
        dist = state.probabilities()

    steps: list[StepRecord] = []
    cum = _LogSum()
    n_failures = 0
    reason: str | None = None

    for k in range(1, config.n_atoms + 1):
        tau, ramsey_t = sample_timing(config.timing, rng)
        outcome = OUTCOME_POSTSELECTED
        p_k = 1.0

        if is_nsm:
            probs = nsm_step(probs, config.coupling, tau)
            dist = probs
        elif scheme.kind == "superposition":
            success, failure = correlated_cm_factors(
                config.omega, ramsey_t, config.coupling, tau, config.n_max, scheme.phi_f
            )
            d = success * state.amplitudes
            p_k = min(float(np.vdot(d, d).real), 1.0)
            if not sampled:
                if p_k < ORTHOGONAL_P_TOL:
                    reason = "impossible post-selection"
                    break
                state = renormalize(FieldState(d, config.n_max))
            else:
                if rng.random() < p_k:
                    state = renormalize(FieldState(d, config.n_max))
                    outcome = OUTCOME_SUCCESS
                else:
                    d_orth = failure * state.amplitudes
                    state = renormalize(FieldState(d_orth, config.n_max))
                    outcome = OUTCOME_FAILURE
                    n_failures += 1
            dist = state.probabilities()
        else:
            rot = ELASTIC_ROTATION if scheme.kind == "elastic" else INELASTIC_ROTATION
            ent = jcm_entangle(state, config.coupling, tau)
            if not sampled:
                try:
                    state, p_k = cm_project(ent, rot)
                except OrthogonalOutcomeError:
                    reason = "impossible post-selection"
                    break
            else:
                d = project_amplitudes(ent, rot)
                p_k = min(float(np.vdot(d, d).real), 1.0)
                if rng.random() < p_k:
                    state = renormalize(FieldState(d, config.n_max))
                    outcome = OUTCOME_SUCCESS
                else:
                    d_orth = project_amplitudes(ent, orthogonal_rotation(rot))
                    state = renormalize(FieldState(d_orth, config.n_max))
                    outcome = OUTCOME_FAILURE
                    n_failures += 1
            dist = state.probabilities()

        total = float(dist.sum())
        if abs(total - 1.0) > NORM_ATOL:
            raise SimulationError(f"state norm drifted to {total!r} at atom {k}")
        top = top_level_probability(dist)
        if top > TOP_LEVEL_GUARD:
            raise LeakageError(
                f"top-3 Fock levels hold {top:.3e} probability at atom {k}; "
                f"truncation n_max={config.n_max} too small for this run"
            )
        cum.add(p_k)

        if collect_steps:
            moments = distribution_stats(dist)
            steps.append(
                StepRecord(
                    k=k,
                    tau_k=tau,
                    T_k=ramsey_t,
                    P_k=p_k,
                    cum_P=cum.value,
                    mean_n=moments.mean_n,
                    delta_n=moments.delta_n,
                    outcome=outcome,
                    p_trap=float(dist[trap]),
                    p_above_trap=float(dist[trap + 1 :].sum()),
                )
            )
        if outcome == OUTCOME_FAILURE and config.halt_on_failure:
            reason = f"sampled orthogonal outcome at atom {k}"
            break

    return RunResult(
        steps=steps,
        final_distribution=dist,
        final_state=probs if is_nsm else state,
        terminated_early=reason,
        n_failures=n_failures,
        final_cum_P=cum.value,
    )


@dataclass
class NsmComparison:
    """Paired fixed-time and fluctuating-time non-selective runs."""

    fixed: RunResult
    fluctuating: RunResult


def run_nsm_fixed_vs_fluctuating(
    fixed_config: RunConfig, fluctuating_config: RunConfig
) -> NsmComparison:
    """Run the fixed-versus-fluctuating comparison for the NSM scheme."""
    for name, cfg in (("fixed", fixed_config), ("fluctuating", fluctuating_config)):
        if cfg.scheme.kind != "nsm":
            raise ConfigError(f"scheme: {name} config must use the nsm scheme")
    if fixed_config.timing.spread != 0.0:
        raise ConfigError("spread: fixed config must have zero spread")
    if not fluctuating_config.timing.spread > 0.0:
        raise ConfigError("spread: fluctuating config must have positive spread")
    return NsmComparison(
        fixed=run_sequence(fixed_config),
        fluctuating=run_sequence(fluctuating_config),
    )


@dataclass(frozen=True)
class SweepCell:
    multiplier: float
    cell: int
    final_p_trap: float
    cum_P: float
    converged: bool
    error: str | None = None


@dataclass(frozen=True)
class SweepAggregate:
    multiplier: float
    median_final_p_trap: float
    median_cum_P: float
    convergence_fraction: float


@dataclass
class SweepResult:
    cells: list[SweepCell]
    aggregates: list[SweepAggregate]


def _run_cell(base: RunConfig, multiplier: float, cell_index: int) -> SweepCell:
    try:
        spread = multiplier * critical_spread(base.trap_target, base.coupling)
        config = replace(
            base,
            timing=replace(base.timing, spread=spread),
            seed=SeedSpec(base.seed.master_seed, cell_index),
        )
        result = run_sequence(config, collect_steps=False)
    except (SimulationError, ConfigError) as exc:
        return SweepCell(multiplier, cell_index, math.nan, math.nan, False, error=str(exc))
    p_trap = float(result.final_distribution[base.trap_target])
    return SweepCell(multiplier, cell_index, p_trap, result.final_cum_P, p_trap > CONVERGENCE_P)


def sweep(
    base: RunConfig,
    spread_multipliers: list[float],
    ensemble: int,
    workers: int = 1,
) -> SweepResult:
    """Run an ensemble per spread multiplier and aggregate convergence.

    Cell (i, j) uses stream_id = i * ensemble + j derived from the base
    master seed, so the whole table is reproducible from that one seed.
    Per-cell failures are recorded in the cell, not raised.
    """
    if ensemble < 1:
        raise ConfigError(f"ensemble: must be >= 1, got {ensemble}")
    jobs = [
        (mult, i * ensemble + j)
        for i, mult in enumerate(spread_multipliers)
        for j in range(ensemble)
    ]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(lambda mc: _run_cell(base, mc[0], mc[1]), jobs))
    else:
        cells = [_run_cell(base, mult, idx) for mult, idx in jobs]

    aggregates = []
    for i, mult in enumerate(spread_multipliers):
        group = cells[i * ensemble : (i + 1) * ensemble]
        good = [c for c in group if c.error is None]
        aggregates.append(
            SweepAggregate(
                multiplier=mult,
                median_final_p_trap=float(np.median([c.final_p_trap for c in good]))
                if good
                else math.nan,
                median_cum_P=float(np.median([c.cum_P for c in good])) if good else math.nan,
                convergence_fraction=sum(c.converged for c in group) / len(group),
            )
        )
    return SweepResult(cells=cells, aggregates=aggregates)


def sampled_success_estimate(config: RunConfig, trajectories: int) -> float:
    """Fraction of sampled trajectories whose every outcome succeeded.

    Trajectory t runs with stream_id = config.seed.stream_id + t.  For
    fixed times this estimates the PostSelected cumulative probability to
    within binomial error.
    """
    if config.mode != "sample":
        raise ConfigError("mode: sampled_success_estimate requires mode='sample'")
    if trajectories < 1:
        raise ConfigError(f"trajectories: must be >= 1, got {trajectories}")
    successes = 0
    for t in range(trajectories):
        cfg = replace(config, seed=SeedSpec(config.seed.master_seed, config.seed.stream_id + t))
        result = run_sequence(cfg, collect_steps=False)
        if result.n_failures == 0 and result.terminated_early is None:
            successes += 1
    return successes / trajectories


def write_trajectory_csv(path, result: RunResult) -> None:
    """Per-step CSV `k,tau_k,T_k,P_k,cum_P,mean_n,delta_n,outcome`."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k,tau_k,T_k,P_k,cum_P,mean_n,delta_n,outcome\n")
        for s in result.steps:
            reals = (s.tau_k, s.T_k, s.P_k, s.cum_P, s.mean_n, s.delta_n)
            fh.write(f"{s.k}," + ",".join(format(v, ".17g") for v in reals) + f",{s.outcome}\n")


def write_sweep_csv(path, result: SweepResult) -> None:
    """Per-cell CSV `multiplier,cell,final_P_nt,cum_P,converged`."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("multiplier,cell,final_P_nt,cum_P,converged\n")
        for c in result.cells:
            fh.write(
                f"{format(c.multiplier, '.17g')},{c.cell},"
                f"{format(c.final_p_trap, '.17g')},{format(c.cum_P, '.17g')},"
                f"{int(c.converged)}\n"
            )
