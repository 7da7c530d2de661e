"""Space-time multi-resolution approximation of Gaussian processes."""

from .covariance import CovarianceModel
from .data import Location, PointDataset, RasterStack, SpaceTimeExtent
from .engine import MraModel, PredictionField, averaged_predict, mra_cov_dense, mra_loglik, mra_predict
from .estimate import FitSpec, fit, suggest_config
from .oracle import SimulationSpec, exact_krige, exact_loglik, score, simulate_gp
from .partition import PartitionConfig, PartitionTree, partition, shifted_partitions

__version__ = "0.1.0"

__all__ = [
    "CovarianceModel",
    "FitSpec",
    "Location",
    "MraModel",
    "PartitionConfig",
    "PartitionTree",
    "PointDataset",
    "PredictionField",
    "RasterStack",
    "SimulationSpec",
    "SpaceTimeExtent",
    "averaged_predict",
    "exact_krige",
    "exact_loglik",
    "fit",
    "mra_cov_dense",
    "mra_loglik",
    "mra_predict",
    "partition",
    "score",
    "shifted_partitions",
    "simulate_gp",
    "suggest_config",
]
