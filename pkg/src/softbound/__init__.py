"""Soft boundary supervision and evaluation for language-driven action localization."""

__version__ = "0.1.0"

from .data import (ExpandedQuery, Segment, SupervisionTarget, VideoRecord, frame_of_time, load_annotations,
                   load_embeddings, load_supervision, save_embeddings, save_supervision)
from .estimators import AnnotationPerturber, BoundaryProbabilityModel, QueryGuidedFusion, ToyBoundaryHead
from .fusion import FusionConfig, cross_attention, fuse, global_branch, local_branch
from .supervision import QueryFeatures, SupervisionConfig, generate_supervision

__all__ = [
    "AnnotationPerturber",
    "BoundaryProbabilityModel",
    "ExpandedQuery",
    "FusionConfig",
    "QueryFeatures",
    "QueryGuidedFusion",
    "Segment",
    "SupervisionConfig",
    "SupervisionTarget",
    "ToyBoundaryHead",
    "VideoRecord",
    "cross_attention",
    "frame_of_time",
    "fuse",
    "generate_supervision",
    "global_branch",
    "load_annotations",
    "load_embeddings",
    "load_supervision",
    "local_branch",
    "save_embeddings",
    "save_supervision",
]
