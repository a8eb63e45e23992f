"""Merged-Average Classifiers via Hashing (MACH).

A K-class problem is split into R independent B-class problems by hashing
class ids; per-class scores are recovered with count-min sketch estimators.
"""
from .core import (
    LabeledSample,
    MachConfig,
    MachModel,
    MetaClassifier,
    SparseVector,
    meta_predict,
    train,
    train_classifier,
    transform_label,
)
from .decoder import Estimator, decode, gather, predict_class, score_all, score_batch, top_k
from .errors import ConfigError, FormatError, MachError, ParseError, ValidationError
from .hashing import UniversalHash, eval_hash, feature_hash, sample_hash
from .sketch import CountMinSketch

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CountMinSketch",
    "Estimator",
    "FormatError",
    "LabeledSample",
    "MachConfig",
    "MachError",
    "MachModel",
    "MetaClassifier",
    "ParseError",
    "SparseVector",
    "UniversalHash",
    "ValidationError",
    "decode",
    "eval_hash",
    "feature_hash",
    "gather",
    "meta_predict",
    "predict_class",
    "sample_hash",
    "score_all",
    "score_batch",
    "top_k",
    "train",
    "train_classifier",
    "transform_label",
]
