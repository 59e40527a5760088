"""Markov chains of overshoots of zero-mean random walks."""

from .errors import (
    ConfigError,
    DegenerateInterval,
    GuardExceeded,
    HeavyTailVariance,
    InsufficientSamples,
    InvalidSpec,
    ModeMismatch,
    NoiseFloor,
    OvershootLabError,
    TruncationTooSmall,
)
from .increments import (
    GaussMix,
    IncrementSpec,
    Laplace,
    LatticePmf,
    RngStream,
    SymmetricPareto,
    mean_abs,
    sample,
    spec_from_json,
    spec_to_json,
    tail_lower,
    tail_upper,
)
from .kernels import (
    LatticeKernel,
    compose_check,
    detailed_balance_p_mc,
    detailed_balance_q,
    p_kernel_mc,
    q_kernel_lattice,
    support_coverage,
    time_reversal_check,
)
from .measures import (
    InvariantMeasure,
    LadderLaws,
    far_level_down_law,
    far_level_up_law,
    ladder_normalization,
    pi_h,
    pi_minus,
    pi_plus,
    pi_plus_via_ladder,
    sample_measure,
    wiener_hopf_residual,
)
from .stats import (
    DriftFit,
    DriftRegressor,
    EmpiricalDistribution,
    GeometricRate,
    RateFit,
    drift_fit,
    drift_limit,
    geometric_rate_fit,
    ks_distance,
    tv_distance,
    v_gamma_distance,
)
from .walk import (
    CrossingEvent,
    EntranceEvent,
    LadderSample,
    chain_batch,
    count_upcrossings,
    cycle_batch,
    entrance_batch,
    ladder_batch,
    sample_ladders,
    simulate_down_chain,
    simulate_entrance_chain,
    simulate_overshoot_chain,
    write_events_csv,
)

__version__ = "0.1.0"
