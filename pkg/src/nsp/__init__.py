"""Neyman-Scott processes with gamma weights.

Simulation, exact partition calculus, conjugate cluster models and collapsed
Gibbs inference (sequential and sharded).
"""

from .domain import Domain, GammaWeightPrior, LatentEvent, MarkedPoint, RngStream
from .evaluation import (
    SpeckledMask,
    co_occupancy_accuracy,
    compare_cluster_count,
    enumerate_posterior,
    heldout_predictive_ll,
)
from .generate import CONSTRUCTIONS, GeneratedDataset, sample_nsp, sample_with_background
from .gibbs import AnnealSchedule, ChainRecord, ChainState, SamplerConfig, run_chain
from .parallel import ShardPlan, run_parallel_chain
from .partitions import (
    Partition,
    UrnConfig,
    VCoefficientTable,
    log_eppf,
    log_eppf_with_background,
    log_p_n,
    log_v_coefficient,
)

__version__ = "0.1.0"

__all__ = [
    "Domain", "GammaWeightPrior", "LatentEvent", "MarkedPoint", "RngStream",
    "SpeckledMask", "co_occupancy_accuracy", "compare_cluster_count", "enumerate_posterior",
    "heldout_predictive_ll",
    "CONSTRUCTIONS", "GeneratedDataset", "sample_nsp", "sample_with_background",
    "AnnealSchedule", "ChainRecord", "ChainState", "SamplerConfig", "run_chain",
    "ShardPlan", "run_parallel_chain",
    "Partition", "UrnConfig", "VCoefficientTable", "log_eppf", "log_eppf_with_background",
    "log_p_n", "log_v_coefficient",
]
