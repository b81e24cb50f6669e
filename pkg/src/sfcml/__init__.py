"""Sampling-free collaborative metric learning."""

from .config import RunConfig, load_config
from .data import (
    DatasetSplit,
    InteractionMatrix,
    binarize,
    filter_and_reindex,
    load_dataset,
    parse_ratings,
    split_per_user,
)
from .estimator import SampledCMLRecommender, SFCMLRecommender
from .laplacian import UserGraph, dense_laplacian, lap_vec_product, quadratic_form
from .losses import LossKind, naive_pairwise_grads, naive_pairwise_loss, sfcml_user_grads, sfcml_user_loss
from .metrics import MetricsReport
from .model import EmbeddingModel, load_checkpoint, project_to_sphere, save_checkpoint
from .samplers import SamplerKind, total_variation
from .trainer import TrainConfig, evaluate, fit, grid_search

__version__ = "0.1.0"

__all__ = [
    "DatasetSplit",
    "EmbeddingModel",
    "InteractionMatrix",
    "LossKind",
    "MetricsReport",
    "RunConfig",
    "SFCMLRecommender",
    "SampledCMLRecommender",
    "SamplerKind",
    "TrainConfig",
    "UserGraph",
    "binarize",
    "dense_laplacian",
    "evaluate",
    "filter_and_reindex",
    "fit",
    "grid_search",
    "lap_vec_product",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "naive_pairwise_grads",
    "naive_pairwise_loss",
    "parse_ratings",
    "project_to_sphere",
    "quadratic_form",
    "save_checkpoint",
    "sfcml_user_grads",
    "sfcml_user_loss",
    "split_per_user",
    "total_variation",
]
