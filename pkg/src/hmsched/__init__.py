"""Max-Weight downlink scheduling with two-layer hierarchical modulation."""
from .channel import ChannelProcess, FadingConfig, init_channel
from .phy import (
    ConfigError,
    PairWeightResult,
    PhyParams,
    PowerSplit,
    concavity_condition,
    grid_power_oracle,
    optimal_power_split,
    rate_base,
    rate_incremental,
    rate_uniform,
)
from .schedulers import ScheduleDecision, lmwdm_decide, mwdm_decide, mwhm_decide, mwum_decide
from .sim import QueueState, SimConfig, SimReport, TrafficConfig, apply_service, gen_arrivals, run

__version__ = "0.1.0"
