"""Mean reflected power aggregates and the closed-form coverage probability."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import Scenario, cascaded_gains, transmit_snr
from .spatialcorr import CorrelationPair, NumericalError, cross_element_diag

# "m-finite": few surfaces with many elements, aggregate summed per surface.
# "m-large": many surfaces, aggregate regrouped per element pair.
REGIMES = ("m-finite", "m-large")

IMAG_RESIDUE_REL = 1e-10


@dataclass(frozen=True)
class PhaseConfig:
    """Unit-modulus reflection coefficients, one row per surface."""

    coefficients: np.ndarray  # (m_count, n_elements) complex128

    def __post_init__(self):
        c = self.coefficients
        if c.ndim != 2:
            raise ValueError("phase coefficients must be a 2D array")
        if not np.iscomplexobj(c):
            raise ValueError("phase coefficients must be complex")

    @property
    def m_count(self) -> int:
        return self.coefficients.shape[0]

    @property
    def n_elements(self) -> int:
        return self.coefficients.shape[1]

    def validate(self, tol: float = 1e-12):
        err = np.max(np.abs(np.abs(self.coefficients) - 1.0))
        if err > tol:
            raise ValueError("phase coefficients off the unit circle by %.3e" % err)

    def element_slice(self, n: int) -> np.ndarray:
        """Coefficients of element n across all surfaces, shape (m_count,)."""
        return self.coefficients[:, n]

    @classmethod
    def initial(cls, m_count: int, n_elements: int) -> "PhaseConfig":
        """Common starting point: every coefficient at angle pi/2."""
        return cls(np.full((m_count, n_elements), 1j, dtype=complex))

    @classmethod
    def from_angles(cls, angles: np.ndarray) -> "PhaseConfig":
        angles = np.asarray(angles, dtype=float)
        return cls(np.exp(1j * angles))

    @classmethod
    def random(cls, m_count: int, n_elements: int, seed: int) -> "PhaseConfig":
        rng = np.random.default_rng(seed)
        return cls.from_angles(rng.uniform(0.0, 2.0 * math.pi, (m_count, n_elements)))


def _real_with_residue_check(value: complex, context: str) -> float:
    re, im = value.real, value.imag
    if abs(im) > IMAG_RESIDUE_REL * max(abs(re), 1e-300):
        raise NumericalError(
            "%s: imaginary residue %.3e exceeds %.1e relative" % (context, im, IMAG_RESIDUE_REL)
        )
    return re


def surface_aggregate(
    scenario: Scenario, correlations: list[CorrelationPair], phases: PhaseConfig
) -> float:
    """Mean reflected power summed surface by surface.

    For each surface this is the trace of R1 Phi R2 Phi^H scaled by the
    cascaded link gain, evaluated with the full correlation matrices.
    """
    betas, _ = cascaded_gains(scenario)
    _check_shapes(scenario, correlations, phases)
    total = 0.0 + 0.0j
    for m, pair in enumerate(correlations):
        s = phases.coefficients[m]
        left = pair.incident.entries * s[None, :]  # R1 Phi
        right = pair.departing.entries * np.conj(s)[None, :]  # R2 Phi^H
        total += betas[m] * np.sum(left * right.T)
    return _real_with_residue_check(total, "surface aggregate")


def element_aggregate(
    scenario: Scenario,
    correlations: list[CorrelationPair],
    phases: PhaseConfig,
    literal: bool = False,
) -> float:
    """Mean reflected power regrouped element pair by element pair.

    Algebraically equal to surface_aggregate. The default path contracts
    the per-surface Hadamard products; literal=True walks every element
    pair through the cross-element diagonals instead, which is quadratic
    in panel size per surface and meant for small instances.
    """
    _check_shapes(scenario, correlations, phases)
    if literal:
        return _element_aggregate_literal(scenario, correlations, phases)
    betas, _ = cascaded_gains(scenario)
    total = 0.0 + 0.0j
    for m, pair in enumerate(correlations):
        s = phases.coefficients[m]
        had = pair.incident.entries * pair.departing.entries
        total += betas[m] * np.vdot(s, had @ s)
    return _real_with_residue_check(total, "element aggregate")


def _element_aggregate_literal(scenario, correlations, phases):
    n = correlations[0].order
    total = 0.0 + 0.0j
    for i in range(n):
        psi_i = phases.element_slice(i)
        for p in range(n):
            q1 = cross_element_diag(scenario, correlations, i, p, link=1)
            q2 = cross_element_diag(scenario, correlations, i, p, link=2)
            # trace of diag(q1) Psi_i diag(q2) Psi_p^H
            total += np.sum(q1 * psi_i * q2 * np.conj(phases.element_slice(p)))
    return _real_with_residue_check(total, "element aggregate (literal)")


def _check_shapes(scenario, correlations, phases):
    if len(correlations) != scenario.m_count:
        raise ValueError(
            "expected %d correlation pairs, got %d" % (scenario.m_count, len(correlations))
        )
    if phases.m_count != scenario.m_count or phases.n_elements != correlations[0].order:
        raise ValueError(
            "phase shape (%d, %d) does not match scenario (%d surfaces, order %d)"
            % (phases.m_count, phases.n_elements, scenario.m_count, correlations[0].order)
        )


def aggregate(
    scenario: Scenario,
    correlations: list[CorrelationPair],
    phases: PhaseConfig,
    regime: str = "m-finite",
) -> float:
    """Regime-dispatching wrapper around the two aggregate forms."""
    if regime not in REGIMES:
        raise ValueError("regime must be one of %r" % (REGIMES,))
    if regime == "m-finite":
        return surface_aggregate(scenario, correlations, phases)
    return element_aggregate(scenario, correlations, phases)


def coverage_probability(
    aggregate_value: float, threshold: float, gamma0: float, beta_direct: float
) -> float:
    """Closed-form coverage: probability that the SNR exceeds the threshold.

    Full coverage whenever the aggregate meets threshold/gamma0; otherwise
    the direct-link fading must bridge the deficit, which happens with
    probability exp(-deficit/beta_direct).
    """
    if threshold < 0.0:
        raise ValueError("threshold must be >= 0")
    if gamma0 <= 0.0:
        raise ValueError("gamma0 must be > 0")
    if beta_direct <= 0.0:
        raise ValueError("beta_direct must be > 0")
    if aggregate_value < 0.0:
        raise ValueError("aggregate must be >= 0")
    ratio = threshold / gamma0
    if aggregate_value >= ratio:
        return 1.0
    return math.exp(-(ratio - aggregate_value) / beta_direct)


def mean_snr(aggregate_value: float, beta_direct: float, gamma0: float) -> float:
    """Diagnostic mean SNR gamma0 * (aggregate + beta_direct), exact at any size."""
    return gamma0 * (aggregate_value + beta_direct)


def knee_threshold(aggregate_value: float, gamma0: float) -> float:
    """Largest threshold with closed-form coverage exactly 1."""
    return gamma0 * aggregate_value


def transition_thresholds(
    gamma0: float,
    aggregate_value: float,
    beta_direct: float,
    points: int = 15,
    lo: float = 5e-4,
    hi: float = 4.0,
) -> np.ndarray:
    """Strictly increasing thresholds spanning the coverage transition.

    Point k sits at gamma0 * (aggregate + beta_direct * x_k) with x_k
    log-spaced in [lo, hi], so closed-form coverage runs from exp(-lo)
    down to exp(-hi).
    """
    x = np.logspace(math.log10(lo), math.log10(hi), points)
    return gamma0 * (aggregate_value + beta_direct * x)


@dataclass(frozen=True)
class DeResult:
    """Closed-form evaluation at one threshold."""

    aggregate: float
    coverage: float
    regime: str
    threshold_ratio: float  # threshold / gamma0


def evaluate(
    scenario: Scenario,
    correlations: list[CorrelationPair],
    phases: PhaseConfig,
    threshold: float,
    regime: str = "m-finite",
) -> DeResult:
    """Aggregate and closed-form coverage for one scenario and threshold."""
    agg = aggregate(scenario, correlations, phases, regime)
    gamma0 = transmit_snr(scenario.radio)
    _, beta_d = cascaded_gains(scenario)
    cov = coverage_probability(agg, threshold, gamma0, beta_d)
    return DeResult(
        aggregate=agg, coverage=cov, regime=regime, threshold_ratio=threshold / gamma0
    )
