"""Hypothesis test for local calibration of binary classifiers on audit features."""

from ._backend import NAME as BACKEND
from .bootstrap import TestConfig, TestResult, bootstrap_null, p_value, run_test
from .data import (AuditDataset, AuditError, AuditRecord, SchemaError, SizeError,
                   ValidationError, load_dataset, standardize_features, write_dataset)
from .kernels import GramPair, KernelSpec, gram_pair, kernel_eval, median_heuristic
from .klce import (KlceEstimate, ThresholdConfig, acceptance_threshold, hoeffding_tail,
                   kce2, klce2, klce2_unbiased)
from .lcb import LcbEstimate, group_trend, lcb_at, lcb_profile

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AuditDataset", "AuditError", "AuditRecord", "GramPair", "KernelSpec",
    "KlceEstimate", "LcbEstimate", "SchemaError", "SizeError", "TestConfig", "TestResult",
    "ThresholdConfig", "ValidationError", "acceptance_threshold", "bootstrap_null",
    "gram_pair", "group_trend", "hoeffding_tail", "kce2", "kernel_eval", "klce2",
    "klce2_unbiased", "lcb_at", "lcb_profile", "load_dataset", "median_heuristic",
    "p_value", "run_test", "standardize_features", "write_dataset",
]
