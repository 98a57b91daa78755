"""Beta-process autoregressive HMM: joint segmentation of multiple time series."""
from .config import RunConfig
from .conjugacy import BehaviorParams, BehaviorSuffStats, MNIWPrior
from .errors import ConfigError, ContractViolation, DataLoadError, NumericDegeneracyError
from .evaluate import hungarian_align, normalized_hamming
from .model import (ModelHypers, SamplerState, SequenceData, compact_features, ibp_log_prob,
                    joint_log_prob, trans_log_prob_collapsed)
from .runner import fit, resume
from .simulate import generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "BehaviorParams", "BehaviorSuffStats", "MNIWPrior", "ConfigError",
    "ContractViolation", "DataLoadError", "NumericDegeneracyError", "hungarian_align",
    "normalized_hamming", "ModelHypers", "SamplerState", "SequenceData", "compact_features",
    "ibp_log_prob", "joint_log_prob", "trans_log_prob_collapsed", "fit", "resume",
    "generate_synthetic", "__version__",
]
