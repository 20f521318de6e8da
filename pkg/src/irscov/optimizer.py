"""Projected gradient ascent of the closed-form coverage over reflection phases."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dequiv import (
    PhaseConfig,
    REGIMES,
    coverage_probability,
)
from .scenario import Scenario, cascaded_gains, transmit_snr
from .spatialcorr import CorrelationPair

MODES = ("sweep", "simultaneous")
OBJECTIVES = ("coverage", "aggregate")


@dataclass(frozen=True)
class OptimizerConfig:
    """Step-size and termination settings for the ascent."""

    epsilon: float = 1e-10  # squared objective change below which we stop
    max_iterations: int = 500
    step_init: float = 1.0
    step_shrink: float = 0.5
    sufficient_increase: float = 1e-4  # Armijo slope fraction
    max_backtracks: int = 60
    mode: str = "sweep"  # update surfaces one by one or all at once
    objective: str = "coverage"  # "coverage" at the threshold, or raw "aggregate"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError("mode must be one of %r" % (MODES,))
        if self.objective not in OBJECTIVES:
            raise ValueError("objective must be one of %r" % (OBJECTIVES,))
        if self.epsilon <= 0.0 or self.step_init <= 0.0:
            raise ValueError("epsilon and step_init must be > 0")
        if not 0.0 < self.step_shrink < 1.0:
            raise ValueError("step_shrink must be in (0, 1)")


@dataclass(frozen=True)
class OptimizerState:
    """Snapshot of the ascent at one iteration."""

    iteration: int
    objective_value: float
    coverage: float
    aggregate: float


@dataclass(frozen=True)
class TraceRecord:
    """Per-iteration log entry for the exported trace."""

    iteration: int
    objective_value: float
    coverage: float
    aggregate: float
    step_max: float
    grad_norm: float


@dataclass(frozen=True)
class OptimizerResult:
    """Final phases with the ascent trace."""

    phases: PhaseConfig
    coverage: float
    aggregate: float
    iterations: int
    status: str  # "saturated", "converged", or "max_iterations"
    converged: bool
    final_state: OptimizerState
    trace: list[TraceRecord] = field(default_factory=list)


def project_unit_modulus(raw: np.ndarray) -> np.ndarray:
    """Nearest unit-modulus coefficients; exact zeros map to 1+0j."""
    mag = np.abs(raw)
    out = np.where(mag == 0.0, 1.0 + 0.0j, raw / np.where(mag == 0.0, 1.0, mag))
    return out


def _surface_direction(r1: np.ndarray, r2: np.ndarray, s: np.ndarray) -> np.ndarray:
    # diagonal of R1 Phi R2 for Phi = diag(s)
    return ((r1 * s[None, :]) * r2.T).sum(axis=1)


def _element_direction(r1: np.ndarray, r2: np.ndarray, s: np.ndarray) -> np.ndarray:
    # same vector assembled from per-element-pair products
    return (r1 * r2) @ s


def _quadratic_term(r1, r2, s, regime):
    """Per-surface mean cascade power for unit link gain."""
    if regime == "m-finite":
        left = r1 * s[None, :]
        right = r2 * np.conj(s)[None, :]
        return float(np.sum(left * right.T).real)
    return float(np.vdot(s, (r1 * r2) @ s).real)


def coverage_gradient(
    scenario: Scenario,
    correlations: list[CorrelationPair],
    phases: PhaseConfig,
    threshold: float,
    regime: str = "m-finite",
) -> np.ndarray:
    """Conjugate-coordinate ascent direction of the closed-form coverage.

    Row m is beta_m / beta_direct times the coverage times the direction
    vector of surface m; identically zero in the full-coverage branch.
    """
    if regime not in REGIMES:
        raise ValueError("regime must be one of %r" % (REGIMES,))
    betas, beta_d = cascaded_gains(scenario)
    gamma0 = transmit_snr(scenario.radio)
    agg = 0.0
    for m, pair in enumerate(correlations):
        agg += betas[m] * _quadratic_term(
            pair.incident.entries, pair.departing.entries, phases.coefficients[m], regime
        )
    cov = coverage_probability(agg, threshold, gamma0, beta_d)
    out = np.zeros_like(phases.coefficients)
    if agg >= threshold / gamma0:
        return out  # saturated: the objective is flat here
    direction = _surface_direction if regime == "m-finite" else _element_direction
    for m, pair in enumerate(correlations):
        out[m] = (
            (betas[m] / beta_d)
            * cov
            * direction(pair.incident.entries, pair.departing.entries, phases.coefficients[m])
        )
    return out


def backtracking_search(objective, current, direction, f_current, config: OptimizerConfig):
    """Largest step mu = step_init * shrink**k passing the sufficient-increase rule.

    objective maps a projected candidate to its value. Returns
    (mu, candidate, f_candidate); mu = 0 with the current point when no
    step of the ladder improves enough, which signals convergence.
    """
    gnorm_sq = float(np.vdot(direction, direction).real)
    if gnorm_sq == 0.0:
        return 0.0, current, f_current
    mu = config.step_init
    for _ in range(config.max_backtracks + 1):
        candidate = project_unit_modulus(current + mu * direction)
        f_cand = objective(candidate)
        if f_cand >= f_current + config.sufficient_increase * mu * gnorm_sq:
            return mu, candidate, f_cand
        mu *= config.step_shrink
    return 0.0, current, f_current


class _Ascent:
    """Shared state of one optimization run."""

    def __init__(self, scenario, correlations, threshold, regime, config):
        self.regime = regime
        self.config = config
        self.threshold = threshold
        self.betas, self.beta_d = cascaded_gains(scenario)
        self.gamma0 = transmit_snr(scenario.radio)
        self.pairs = [(p.incident.entries, p.departing.entries) for p in correlations]
        n = correlations[0].order
        self.coeff = PhaseConfig.initial(len(correlations), n).coefficients.copy()
        self.terms = np.array(
            [
                self.betas[m] * _quadratic_term(r1, r2, self.coeff[m], regime)
                for m, (r1, r2) in enumerate(self.pairs)
            ]
        )
        self.aggregate = float(np.sum(self.terms))

    def term(self, m, s):
        r1, r2 = self.pairs[m]
        return self.betas[m] * _quadratic_term(r1, r2, s, self.regime)

    def objective_of(self, agg):
        if self.config.objective == "coverage":
            return coverage_probability(agg, self.threshold, self.gamma0, self.beta_d)
        return agg

    def coverage_of(self, agg):
        return coverage_probability(agg, self.threshold, self.gamma0, self.beta_d)

    def saturated(self, agg):
        return agg >= self.threshold / self.gamma0

    def gradient_block(self, m):
        """Ascent direction for surface m at the current point."""
        agg = self.aggregate
        if self.config.objective == "coverage":
            if self.saturated(agg):
                return np.zeros_like(self.coeff[m])
            scale = (self.betas[m] / self.beta_d) * self.coverage_of(agg)
        else:
            scale = self.betas[m]
        r1, r2 = self.pairs[m]
        direction = _surface_direction if self.regime == "m-finite" else _element_direction
        return scale * direction(r1, r2, self.coeff[m])

    def step_block(self, m):
        """Line-searched update of surface m; returns (mu, grad_norm)."""
        grad = self.gradient_block(m)

        def objective(candidate):
            return self.objective_of(self.aggregate - self.terms[m] + self.term(m, candidate))

        f_cur = self.objective_of(self.aggregate)
        mu, cand, _ = backtracking_search(objective, self.coeff[m], grad, f_cur, self.config)
        if mu > 0.0:
            self.terms[m] = self.term(m, cand)
            self.aggregate = float(np.sum(self.terms))
            self.coeff[m] = cand
        return mu, float(np.linalg.norm(grad))

    def step_all(self):
        """Simultaneous update of every surface with one shared step size."""
        grad = np.vstack([self.gradient_block(m) for m in range(len(self.pairs))])

        def objective(candidate):
            mat = candidate.reshape(self.coeff.shape)
            agg = 0.0
            for m in range(len(self.pairs)):
                agg += self.term(m, mat[m])
            return self.objective_of(agg)

        f_cur = self.objective_of(self.aggregate)
        mu, cand, _ = backtracking_search(
            objective, self.coeff.reshape(-1), grad.reshape(-1), f_cur, self.config
        )
        if mu > 0.0:
            self.coeff = cand.reshape(self.coeff.shape)
            self.terms = np.array(
                [self.term(m, self.coeff[m]) for m in range(len(self.pairs))]
            )
            self.aggregate = float(np.sum(self.terms))
        return mu, float(np.linalg.norm(grad))


def optimize(
    scenario: Scenario,
    correlations: list[CorrelationPair],
    threshold: float,
    regime: str = "m-finite",
    config: OptimizerConfig | None = None,
) -> OptimizerResult:
    """Maximize coverage (or the aggregate itself) over unit-modulus phases.

    Starts every coefficient at angle pi/2, sweeps the surfaces with a
    backtracking line search per block (or steps them simultaneously), and
    stops when the squared objective change drops below epsilon. The
    objective never decreases along the run.
    """
    if regime not in REGIMES:
        raise ValueError("regime must be one of %r" % (REGIMES,))
    if config is None:
        config = OptimizerConfig()
    state = _Ascent(scenario, correlations, threshold, regime, config)

    def norm_for_stop(value, previous):
        delta = value - previous
        if config.objective == "aggregate" and value != 0.0:
            delta /= value
        return delta * delta

    trace: list[TraceRecord] = []
    obj = state.objective_of(state.aggregate)
    status = "max_iterations"
    iterations = 0
    if config.objective == "coverage" and state.saturated(state.aggregate):
        status = "saturated"
    else:
        for it in range(1, config.max_iterations + 1):
            iterations = it
            prev = obj
            if config.mode == "sweep":
                steps = []
                gnorm_sq = 0.0
                for m in range(len(state.pairs)):
                    mu, gn = state.step_block(m)
                    steps.append(mu)
                    gnorm_sq += gn * gn
                step_max = max(steps)
                grad_norm = math.sqrt(gnorm_sq)
            else:
                step_max, grad_norm = state.step_all()
            obj = state.objective_of(state.aggregate)
            trace.append(
                TraceRecord(
                    iteration=it,
                    objective_value=obj,
                    coverage=state.coverage_of(state.aggregate),
                    aggregate=state.aggregate,
                    step_max=step_max,
                    grad_norm=grad_norm,
                )
            )
            if config.objective == "coverage" and state.saturated(state.aggregate):
                status = "saturated"
                break
            if norm_for_stop(obj, prev) < config.epsilon:
                status = "converged"
                break

    coverage = state.coverage_of(state.aggregate)
    final = OptimizerState(
        iteration=iterations,
        objective_value=state.objective_of(state.aggregate),
        coverage=coverage,
        aggregate=state.aggregate,
    )
    return OptimizerResult(
        phases=PhaseConfig(state.coeff),
        coverage=coverage,
        aggregate=state.aggregate,
        iterations=iterations,
        status=status,
        converged=status in ("converged", "saturated"),
        final_state=final,
        trace=trace,
    )
