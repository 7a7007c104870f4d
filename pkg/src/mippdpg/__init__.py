"""Multiplex inhomogeneous Poisson process dot-product graphs.

Simulation of multiplex event streams, histogram intensity estimation, the
doubly unfolded spectral embedding, recovery diagnostics and trajectory
clustering.
"""
from .errors import (ArgumentError, ConfigError, DataError, MippError, ModelValidityError,
                     NumericalError, RankDeficiencyError, ThinningBoundError)
from .model import (LatentModel, build_block_model, build_discontinuous_block_model,
                    build_smooth_block_model, intensity_at, default_discontinuous_spec,
                    default_smooth_spec, validate_positivity)
from .simulate import EventStream, sample_events, sample_histogram
from .binning import UnfoldedIntensity, bin_events, exact_binned_mean
from .embed import Embedding, duase, select_dimension, truncated_svd
from .align import GroundTruth, recovery_error, two_to_infinity_norm
from .clt import normality_report, studentize
from .cluster import agglomerative_cluster, compare_partitions, normalize_and_smooth

__version__ = "0.1.0"

__all__ = [
    "ArgumentError", "ConfigError", "DataError", "MippError", "ModelValidityError",
    "NumericalError", "RankDeficiencyError", "ThinningBoundError",
    "LatentModel", "build_block_model", "build_discontinuous_block_model",
    "build_smooth_block_model", "intensity_at", "default_discontinuous_spec",
    "default_smooth_spec", "validate_positivity",
    "EventStream", "sample_events", "sample_histogram",
    "UnfoldedIntensity", "bin_events", "exact_binned_mean",
    "Embedding", "duase", "select_dimension", "truncated_svd",
    "GroundTruth", "recovery_error", "two_to_infinity_norm",
    "normality_report", "studentize",
    "agglomerative_cluster", "compare_partitions", "normalize_and_smooth",
]
