"""Subgraph isomorphism counting with graph kernels and ridge regression."""

from .counting import brute_force_count, build_ground_truth, vf2_count
from .graph import Dataset, Graph, Pattern, Skeleton, make_pattern
from .gram import GramMatrix, build_joint_gram, cosine_normalize, poly_transform, rbf_transform
from .regression import EvalReport, RidgeModel, ridge_fit, ridge_predict
from .wl import ColorInterner, FeatureVector, dot_kernel, kwl_histograms, nie_wl_histograms, wl_histograms

__version__ = "0.1.0"

__all__ = [
    "ColorInterner", "Dataset", "EvalReport", "FeatureVector", "Graph", "GramMatrix", "Pattern",
    "RidgeModel", "Skeleton", "brute_force_count", "build_ground_truth", "build_joint_gram",
    "cosine_normalize", "dot_kernel", "kwl_histograms", "make_pattern", "nie_wl_histograms",
    "poly_transform", "rbf_transform", "ridge_fit", "ridge_predict", "vf2_count", "wl_histograms",
]
