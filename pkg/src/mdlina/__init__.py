"""Latent-factor linear non-Gaussian causal structure learning across domains."""

from .data import (
    AugmentedDataset,
    DomainDataset,
    Hyperparams,
    MultiDomainDataset,
    augment,
    read_domain_csv,
    read_manifest,
    standardize,
)
from .evaluation import cross_validate, matched_effect_error, skeleton_metrics, vif
from .lina import fit_structure, neg_log_likelihood, read_dot, score_F, to_dot
from .measurement import MeasurementModel, augmented_model, factor_scores, fit_cfa
from .multidomain import HardAssignment, fit_md, harden_H, md_score, reconstruction_error, update_b_tilde
from .optim import acyclicity_grad, acyclicity_h, expm, penalty_loop
from .synth import GenConfig, gen_multidomain, simulate
from .triad import ClusterSpec, Direction, locate_clusters, pairwise_direction, triad_violated

__version__ = "0.1.0"

__all__ = [
    "AugmentedDataset",
    "ClusterSpec",
    "Direction",
    "DomainDataset",
    "GenConfig",
    "HardAssignment",
    "Hyperparams",
    "MeasurementModel",
    "MultiDomainDataset",
    "acyclicity_grad",
    "acyclicity_h",
    "augment",
    "augmented_model",
    "cross_validate",
    "expm",
    "factor_scores",
    "fit_cfa",
    "fit_md",
    "fit_structure",
    "gen_multidomain",
    "harden_H",
    "locate_clusters",
    "matched_effect_error",
    "md_score",
    "neg_log_likelihood",
    "pairwise_direction",
    "penalty_loop",
    "read_domain_csv",
    "read_dot",
    "read_manifest",
    "reconstruction_error",
    "score_F",
    "simulate",
    "skeleton_metrics",
    "standardize",
    "to_dot",
    "triad_violated",
    "update_b_tilde",
    "vif",
]
