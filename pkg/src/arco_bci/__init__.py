"""Bayesian causal inference with autoregressive causal orders,
exact bounded-parent DAG marginalisation and GP mechanism models."""

import os

# single-threaded BLAS: our matrices are small (N x N with N ~ 200) and
# parallelism happens at the seed level, where oversubscription is ruinous
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

from .core import (
    CausalOrder,
    Dag,
    Dataset,
    ParentSet,
    dag_from_edges,
    make_order,
    make_parent_set,
    permutation_matrix,
    prefix_encoding,
    standardize,
)
from .engine import (
    EngineConfig,
    PosteriorModel,
    ace,
    expected_shd,
    learn,
    posterior_edge_marginals,
    sample_interventional,
)
from .metrics import MmdKernelConfig, WeightedSampleSet, kde, mean_distance, mmd, structure_metrics
from .simgen import GroundTruthScm, ancestral_sample, sample_er_graph, sample_gt_mechanisms, sample_sf_graph

__all__ = [
    "CausalOrder",
    "Dag",
    "Dataset",
    "EngineConfig",
    "GroundTruthScm",
    "MmdKernelConfig",
    "ParentSet",
    "PosteriorModel",
    "WeightedSampleSet",
    "ace",
    "ancestral_sample",
    "dag_from_edges",
    "expected_shd",
    "kde",
    "learn",
    "make_order",
    "make_parent_set",
    "mean_distance",
    "mmd",
    "permutation_matrix",
    "posterior_edge_marginals",
    "prefix_encoding",
    "sample_er_graph",
    "sample_gt_mechanisms",
    "sample_interventional",
    "sample_sf_graph",
    "standardize",
    "structure_metrics",
]

__version__ = "0.1.0"
