"""Trace-driven instruction prefetch simulator: next-line, entangling (EIP),
compressed-entry (CEIP), hierarchical compressed (CHEIP) and an online
controller on top of CHEIP."""

from .cache import AccessResult, CacheConfig, CacheHierarchy, Level, LevelConfig, PrefetchStatus
from .compressed import CompressedEntry, NotRepresentable
from .controller import Controller, ControllerConfig
from .hierarchy import BudgetReport, MetadataHierarchy, VirtualTable, budget
from .metrics import SimulationReport, UtilityWeights, percentile, utility
from .sim import SimConfig, Simulator, Variant, simulate
from .trace import (
    ClusterStats,
    Kind,
    SyntheticWorkloadSpec,
    TraceRecord,
    cluster_stats,
    generate_synthetic,
    load_trace,
    save_trace,
)

__version__ = "0.1.0"
