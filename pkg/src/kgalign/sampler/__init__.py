"""Mini-batch samplers and the building blocks they share."""

from .classifier import CLASSIFIERS, MissingClassError, train_classifier
from .kmeans import EmptyClusterError, KMeansResult, kmeans, kmeans_plusplus
from .metis import edge_cut, metis_partition
from .samplers import (SAMPLERS, BatchAssignment, PartitionerConfig, cmcs, gcn_classify, iscs,
                       metis_cps, overlap, run_sampler, vps)

__all__ = [
    "BatchAssignment", "CLASSIFIERS", "EmptyClusterError", "KMeansResult", "MissingClassError",
    "PartitionerConfig", "SAMPLERS", "cmcs", "edge_cut", "gcn_classify", "iscs", "kmeans",
    "kmeans_plusplus", "metis_cps", "metis_partition", "overlap", "run_sampler", "train_classifier", "vps",
]
