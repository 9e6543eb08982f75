"""Python bindings for the smile multiple-instance learning library."""

from ._core import (
    ConfigError,
    FormatError,
    ShapeError,
    SmileError,
    Dataset,
    auc,
    evaluate_predictions,
    predict_checkpoint,
    run_cli,
    run_cv,
    scale_adaptive_attention,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "ShapeError",
    "SmileError",
    "Dataset",
    "auc",
    "evaluate_predictions",
    "predict_checkpoint",
    "run_cli",
    "run_cv",
    "scale_adaptive_attention",
]
