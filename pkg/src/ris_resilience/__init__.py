"""RIS-assisted cell-free MIMO downlink resilience simulator.

Library layout:
  system_model -- configuration, geometry, channel generation, blockages
  metrics      -- SINR/rate evaluation, adaption gap, resilience score
  conic        -- solver-agnostic convex programs and the solve contract
  sca          -- convex subproblem builders and the alternating loop
  simulate     -- end-to-end outage scenarios, sweeps, persistence
  cli          -- command-line front end (`ris-resilience ...`)
"""

__version__ = "0.1.0"

from .metrics import (
    DesignPoint,
    ResilienceTrace,
    ResilienceWeights,
    TraceSample,
    achievable_rate,
    adaption_gap,
    best_resilience,
    resilience_components,
    sinr,
    sinr_all,
)
from .sca import (
    IterateEvent,
    ScaSettings,
    alternating_optimize,
    build_beamforming_program,
    build_phase_program,
    certify_design_point,
    initial_design_point,
    rate_adaption,
)
from .system_model import (
    ChannelState,
    ChannelStreams,
    PathlossConfig,
    SystemConfig,
    Topology,
    apply_blockage,
    draw_blockage_mask,
    effective_channels,
    generate_channels,
    generate_topology,
)
from .timing import SyntheticClock, SyntheticCosts, WallClock

__all__ = [
    "__version__",
    "ChannelState",
    "ChannelStreams",
    "DesignPoint",
    "IterateEvent",
    "PathlossConfig",
    "ResilienceTrace",
    "ResilienceWeights",
    "ScaSettings",
    "SyntheticClock",
    "SyntheticCosts",
    "SystemConfig",
    "Topology",
    "TraceSample",
    "WallClock",
    "achievable_rate",
    "adaption_gap",
    "alternating_optimize",
    "apply_blockage",
    "best_resilience",
    "build_beamforming_program",
    "build_phase_program",
    "certify_design_point",
    "draw_blockage_mask",
    "effective_channels",
    "generate_channels",
    "generate_topology",
    "initial_design_point",
    "rate_adaption",
    "resilience_components",
    "sinr",
    "sinr_all",
]
