"""Cut-layer selection for split learning."""

from .baselines import SelectorKind, exhaustive_optimal, naive_select
from .delaymodel import DelayBreakdown, ResourceState, TrainingConfig, epoch_delay
from .montecarlo import FoldedNormalParams, GainSurface, MonteCarloConfig, run_gain_grid
from .netprofile import (
    ArchitectureSpec,
    FlopConvention,
    LayerSpec,
    NetworkProfile,
    build_profile,
    layer_cost,
    parse_architecture,
    reference_architecture,
)
from .ocla import CandidateSet, SplitRegionTable, offline_phase, select_cut_layer
from .simrunner import SimulationConfig, Timeline, simulate_training

__version__ = "0.1.0"
