"""Random-effects meta-analysis under normal and non-normal between-study distributions."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ArmData,
    DataError,
    FitResult,
    MetaDataset,
    ModelSpec,
    MODEL_IDS,
    compute_effects,
    get_model_spec,
    read_arm_csv,
    validate_dataset,
)
from .fitting import fit_model  # noqa: E402

__all__ = [
    "ArmData",
    "DataError",
    "FitResult",
    "MetaDataset",
    "ModelSpec",
    "MODEL_IDS",
    "compute_effects",
    "get_model_spec",
    "read_arm_csv",
    "validate_dataset",
    "fit_model",
]
