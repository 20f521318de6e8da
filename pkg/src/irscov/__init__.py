"""Coverage probability of a multi-surface assisted link under correlated fading."""

__version__ = "0.1.0"

from .scenario import (
    ConfigError,
    PanelGeometry,
    PathLossModel,
    Position,
    RadioConfig,
    Scenario,
    cascaded_gains,
    desk_scenario,
    link_gains,
    load_scenario,
    path_loss_linear,
    place_irs_random,
    place_irs_uniform,
    reference_scenario,
    scenario_from_dict,
    scenario_to_dict,
    transmit_snr,
)
from .spatialcorr import (
    CorrelationMatrix,
    CorrelationPair,
    NumericalError,
    SamplingFactor,
    build_correlation,
    cross_element_diag,
    dump_matrix,
    element_position,
    element_positions,
    export_eigenvalues_csv,
    identity_correlation,
    read_matrix_dump,
    sampling_factor,
    scenario_correlations,
    sinc_normalized,
)
from .dequiv import (
    DeResult,
    PhaseConfig,
    REGIMES,
    aggregate,
    coverage_probability,
    element_aggregate,
    evaluate,
    knee_threshold,
    mean_snr,
    surface_aggregate,
    transition_thresholds,
)
from .montecarlo import (
    ChannelDraw,
    McEstimate,
    McMoment,
    estimate_coverage,
    factor_pairs,
    instantaneous_snr,
    mean_snr_estimate,
    sample_channels,
    second_moment,
    trial_rng,
)
from .optimizer import (
    OptimizerConfig,
    OptimizerResult,
    OptimizerState,
    TraceRecord,
    backtracking_search,
    coverage_gradient,
    optimize,
    project_unit_modulus,
)
from .cli import ResultRow, SweepSpec, convert_rate_to_threshold, run_sweep
