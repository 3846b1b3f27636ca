"""Agent-based simulator of a GCU computing market.

One provider auctions perishable computing units to middlemen every fast
tick; middlemen resell to satisficing users and reprice every 10,000 ticks;
users switch middlemen when service or price crosses their tolerance. The
stats layer tracks the mean-price market index, log-bins its changes, and
fits the positive tail (Hill and log-log regression).
"""

from .auction import AllocationResult, Bid, InvariantViolation, allocate, compute_bid, settle_wholesale
from .dynamics import (
    SlowStepRecord,
    TickOutcome,
    compute_service_quality,
    draw_demands,
    evaluate_price_switch,
    evaluate_service_switch,
    fast_tick,
    reassign_user,
    serve_demands,
    slow_step,
    update_price,
)
from .harness import (
    RunFailure,
    RunRecord,
    export,
    export_pooled,
    parse_config,
    run_simulation,
    sweep,
)
from .model import (
    ConfigError,
    MarketState,
    MiddlemanAgent,
    SimConfig,
    UniformSpec,
    UserAgent,
    init_market,
    make_rng,
)
from .stats import (
    AbsorbingDetection,
    DeltaDistribution,
    FitRefusedError,
    Histogram,
    IndexSeries,
    TailFit,
    compute_deltas,
    detect_absorbing_state,
    fit_hill,
    fit_loglog,
    fit_power_law_tail,
    log_binned_histogram,
    market_index,
)

__all__ = [
    "AbsorbingDetection",
    "AllocationResult",
    "Bid",
    "ConfigError",
    "DeltaDistribution",
    "FitRefusedError",
    "Histogram",
    "IndexSeries",
    "InvariantViolation",
    "MarketState",
    "MiddlemanAgent",
    "RunFailure",
    "RunRecord",
    "SimConfig",
    "SlowStepRecord",
    "TailFit",
    "TickOutcome",
    "UniformSpec",
    "UserAgent",
    "allocate",
    "compute_bid",
    "compute_deltas",
    "compute_service_quality",
    "detect_absorbing_state",
    "draw_demands",
    "evaluate_price_switch",
    "evaluate_service_switch",
    "export",
    "export_pooled",
    "fast_tick",
    "fit_hill",
    "fit_loglog",
    "fit_power_law_tail",
    "init_market",
    "log_binned_histogram",
    "make_rng",
    "market_index",
    "parse_config",
    "reassign_user",
    "run_simulation",
    "serve_demands",
    "settle_wholesale",
    "slow_step",
    "sweep",
    "update_price",
]

__version__ = "0.1.0"
