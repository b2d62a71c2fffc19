"""cfmimo: how adversarial access points degrade the cell-free massive MIMO
downlink - channel estimation chain, closed-form rates for two attack modes,
Monte Carlo validation, and the adversary's min-max power optimizer."""

from .config import (
    ConfigError,
    InfeasibleConfigError,
    SystemConfig,
    apply_overrides,
    load_config,
    snr_from_power,
    validate,
)
from .estimation import (
    EffectiveChannel,
    LmmseStats,
    PowerAllocation,
    TrainingObservation,
    UplinkEstimates,
    downlink_observation,
    effective_channels,
    estimate_effective,
    gamma_coeff,
    kappa_coeff,
    lmmse_stats,
    uplink_estimate,
)
from .model import (
    ChannelRealization,
    LargeScaleFading,
    Layout,
    draw_channels,
    drop_fading,
    generate_layout,
    large_scale,
    path_loss_db,
    rng_stream,
    sample_small_scale,
)
from .rates import (
    ClosedFormTerms,
    RateReport,
    closed_form_terms,
    mc_rate,
    rate_clean,
    rate_data_attack,
    rate_psa,
    sum_rate,
    uniform_full_power_eta,
)
from .minmax import (
    MinMaxProblem,
    SolveTrace,
    assemble_soc,
    build_problem,
    equal_allocation,
    feasible,
    sca_linearize,
    solve_minmax,
)
from .cone import (
    FeasibilityResult,
    SocConstraint,
    residual,
    solve_feasibility,
)

__version__ = "0.1.0"
