"""Monte Carlo validation of the closed-form coverage under correlated fading.

Every trial draws its standard normals from an own Philox substream keyed
by (seed, trial index), so results are bit-identical however the trial
range is partitioned. Trials are processed in fixed blocks of TRIAL_BLOCK
and per-block partial sums are reduced in block order, which pins the
floating-point reduction tree independently of worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dequiv import PhaseConfig
from .scenario import Scenario, cascaded_gains, link_gains, transmit_snr
from .spatialcorr import (
    CorrelationPair,
    SamplingFactor,
    sampling_factor,
    scenario_correlations,
)

TRIAL_BLOCK = 4096  # trials per vectorized block, part of the reduction contract

CI_METHODS = ("normal", "clopper-pearson")


@dataclass(frozen=True)
class ChannelDraw:
    """One fading realization: per-surface link vectors and the direct path."""

    incident: np.ndarray  # (m_count, n_elements) complex128
    departing: np.ndarray  # (m_count, n_elements) complex128
    direct: complex


@dataclass(frozen=True)
class McEstimate:
    """Empirical coverage with a two-sided confidence interval."""

    coverage: float
    trials: int
    exceed_count: int
    ci_low: float
    ci_high: float
    ci_method: str
    confidence: float
    seed: int
    threshold: float


@dataclass(frozen=True)
class McMoment:
    """Sample mean of a per-trial statistic with its standard error."""

    value: float
    std_error: float
    trials: int
    seed: int


def _check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)) or seed < 0 or seed >= 2**64:
        raise ValueError("seed must be an integer in [0, 2**64)")
    return int(seed)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Counter-based substream for one trial: Philox keyed by (seed, trial)."""
    key = np.array([seed, trial], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def factor_pairs(
    correlations: list[CorrelationPair],
) -> list[tuple[SamplingFactor, SamplingFactor]]:
    """Sampling factors per surface, factoring each distinct matrix once."""
    cache: dict[int, SamplingFactor] = {}
    out = []
    for pair in correlations:
        f1 = cache.get(id(pair.incident))
        if f1 is None:
            f1 = cache[id(pair.incident)] = sampling_factor(pair.incident)
        f2 = cache.get(id(pair.departing))
        if f2 is None:
            f2 = cache[id(pair.departing)] = sampling_factor(pair.departing)
        out.append((f1, f2))
    return out


def _draw_width(factors) -> int:
    # reals per trial: two quadrature components per latent dimension and
    # link, plus two for the direct path
    return sum(2 * (f1.rank + f2.rank) for f1, f2 in factors) + 2


def sample_channels(
    scenario: Scenario,
    factors: list[tuple[SamplingFactor, SamplingFactor]],
    rng: np.random.Generator,
    beta_direct: float | None = None,
) -> ChannelDraw:
    """One correlated Rayleigh draw for every link of the scenario.

    The flat normal vector is consumed in a fixed order: for each surface
    the incident then departing latent vectors, real parts before
    imaginary parts, then the direct path pair. beta_direct overrides the
    scenario's direct-link gain when given (0 yields an exactly zero
    direct path).
    """
    b1, b2 = link_gains(scenario)
    _, beta_d = cascaded_gains(scenario)
    if beta_direct is not None:
        beta_d = beta_direct
    n = factors[0][0].order
    flat = rng.standard_normal(_draw_width(factors))
    incident = np.empty((len(factors), n), dtype=complex)
    departing = np.empty((len(factors), n), dtype=complex)
    pos = 0
    for m, (f1, f2) in enumerate(factors):
        for target, factor, gain in ((incident, f1, b1[m]), (departing, f2, b2[m])):
            r = factor.rank
            z = (flat[pos : pos + r] + 1j * flat[pos + r : pos + 2 * r]) / math.sqrt(2.0)
            pos += 2 * r
            target[m] = math.sqrt(gain) * (factor.matrix @ z)
    z_d = (flat[pos] + 1j * flat[pos + 1]) / math.sqrt(2.0)
    return ChannelDraw(incident=incident, departing=departing, direct=math.sqrt(beta_d) * z_d)


def instantaneous_snr(
    draw: ChannelDraw, phases: PhaseConfig, gamma0: float, form: str = "surface"
) -> float:
    """SNR of one draw, combining cascades surface by surface or element by element.

    Both forms sum the same terms in different order and agree to rounding.
    """
    if form == "surface":
        total = 0.0 + 0.0j
        for m in range(phases.m_count):
            total += np.sum(
                np.conj(draw.incident[m]) * phases.coefficients[m] * draw.departing[m]
            )
    elif form == "element":
        total = 0.0 + 0.0j
        for n in range(phases.n_elements):
            total += np.sum(
                np.conj(draw.incident[:, n])
                * phases.element_slice(n)
                * draw.departing[:, n]
            )
    else:
        raise ValueError("form must be 'surface' or 'element'")
    return gamma0 * abs(total + draw.direct) ** 2


def _block_normals(seed: int, start: int, count: int, width: int) -> np.ndarray:
    out = np.empty((count, width))
    for t in range(count):
        trial_rng(seed, start + t).standard_normal(out=out[t])
    return out


def _block_stats(scenario, factors, phases, seed, start, count, beta_direct, want_power):
    """Cascade-plus-direct amplitude per trial and, optionally, the summed
    per-surface cascade power. Returns (totals (count,), power or None)."""
    b1, b2 = link_gains(scenario)
    _, beta_d = cascaded_gains(scenario)
    if beta_direct is not None:
        beta_d = beta_direct
    flat = _block_normals(seed, start, count, _draw_width(factors))
    totals = np.zeros(count, dtype=complex)
    power = np.zeros(count) if want_power else None
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    pos = 0
    for m, (f1, f2) in enumerate(factors):
        r1, r2 = f1.rank, f2.rank
        z1 = (flat[:, pos : pos + r1] + 1j * flat[:, pos + r1 : pos + 2 * r1]) * inv_sqrt2
        pos += 2 * r1
        z2 = (flat[:, pos : pos + r2] + 1j * flat[:, pos + r2 : pos + 2 * r2]) * inv_sqrt2
        pos += 2 * r2
        h1 = math.sqrt(b1[m]) * (z1 @ f1.matrix.T)
        h2 = math.sqrt(b2[m]) * (z2 @ f2.matrix.T)
        u = (np.conj(h1) * h2) @ phases.coefficients[m]
        totals += u
        if want_power:
            power += np.abs(u) ** 2
    z_d = (flat[:, pos] + 1j * flat[:, pos + 1]) * inv_sqrt2
    totals += math.sqrt(beta_d) * z_d
    return totals, power


def _blocks(trials: int):
    start = 0
    while start < trials:
        yield start, min(TRIAL_BLOCK, trials - start)
        start += TRIAL_BLOCK


def _binomial_ci(k: int, n: int, method: str, confidence: float) -> tuple[float, float]:
    if method not in CI_METHODS:
        raise ValueError("ci_method must be one of %r" % (CI_METHODS,))
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    alpha = 1.0 - confidence
    p = k / n
    if method == "normal":
        half = stats.norm.ppf(1.0 - alpha / 2.0) * math.sqrt(p * (1.0 - p) / n)
        return max(0.0, p - half), min(1.0, p + half)
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2.0, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1.0 - alpha / 2.0, k + 1, n - k))
    return lo, hi


def estimate_coverage(
    scenario: Scenario,
    phases: PhaseConfig,
    threshold: float,
    trials: int,
    seed: int,
    correlations: list[CorrelationPair] | None = None,
    ci_method: str = "normal",
    confidence: float = 0.95,
    beta_direct: float | None = None,
) -> McEstimate:
    """Empirical coverage probability over counter-based trials.

    correlations defaults to the scenario's sinc-kernel pairs with the
    element-area normalization. The exceed count is integer-exact, so the
    estimate does not depend on how trials are split into blocks.
    """
    seed = _check_seed(seed)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if threshold < 0.0:
        raise ValueError("threshold must be >= 0")
    if correlations is None:
        correlations = scenario_correlations(scenario)
    factors = factor_pairs(correlations)
    gamma0 = transmit_snr(scenario.radio)
    exceed = 0
    for start, count in _blocks(trials):
        totals, _ = _block_stats(
            scenario, factors, phases, seed, start, count, beta_direct, False
        )
        snr = gamma0 * np.abs(totals) ** 2
        exceed += int(np.count_nonzero(snr > threshold))
    p = exceed / trials
    lo, hi = _binomial_ci(exceed, trials, ci_method, confidence)
    return McEstimate(
        coverage=p,
        trials=trials,
        exceed_count=exceed,
        ci_low=lo,
        ci_high=hi,
        ci_method=ci_method,
        confidence=confidence,
        seed=seed,
        threshold=threshold,
    )


def second_moment(
    scenario: Scenario,
    phases: PhaseConfig,
    trials: int,
    seed: int,
    correlations: list[CorrelationPair] | None = None,
) -> McMoment:
    """Sample mean of the summed per-surface cascade power.

    Converges to the closed-form aggregate; the returned standard error
    supports z-score checks against it.
    """
    seed = _check_seed(seed)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if correlations is None:
        correlations = scenario_correlations(scenario)
    factors = factor_pairs(correlations)
    total = 0.0
    total_sq = 0.0
    for start, count in _blocks(trials):
        _, power = _block_stats(
            scenario, factors, phases, seed, start, count, None, True
        )
        total += float(np.sum(power))
        total_sq += float(np.sum(power * power))
    mean = total / trials
    var = max(0.0, total_sq / trials - mean * mean)
    return McMoment(
        value=mean, std_error=math.sqrt(var / trials), trials=trials, seed=seed
    )


def mean_snr_estimate(
    scenario: Scenario,
    phases: PhaseConfig,
    trials: int,
    seed: int,
    correlations: list[CorrelationPair] | None = None,
) -> McMoment:
    """Sample mean SNR, the empirical counterpart of the diagnostic mean."""
    seed = _check_seed(seed)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if correlations is None:
        correlations = scenario_correlations(scenario)
    factors = factor_pairs(correlations)
    gamma0 = transmit_snr(scenario.radio)
    total = 0.0
    total_sq = 0.0
    for start, count in _blocks(trials):
        totals, _ = _block_stats(
            scenario, factors, phases, seed, start, count, None, False
        )
        snr = gamma0 * np.abs(totals) ** 2
        total += float(np.sum(snr))
        total_sq += float(np.sum(snr * snr))
    mean = total / trials
    var = max(0.0, total_sq / trials - mean * mean)
    return McMoment(
        value=mean, std_error=math.sqrt(var / trials), trials=trials, seed=seed
    )
