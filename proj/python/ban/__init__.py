"""Bi-temporal adapter network for remote-sensing change detection."""

from ._ban import (
    CheckpointError,
    ConfigError,
    DataError,
    Model,
    NumericError,
    ShapeError,
    bcd_metrics,
    bridge_param_count,
    cli,
    f1_from_precision_recall,
    iou_from_f1,
    poly_lr,
    resize_bilinear,
    scd_metrics,
    synthetic_pair,
    weighted_score,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DataError",
    "Model",
    "NumericError",
    "ShapeError",
    "bcd_metrics",
    "bridge_param_count",
    "cli",
    "f1_from_precision_recall",
    "iou_from_f1",
    "poly_lr",
    "resize_bilinear",
    "scd_metrics",
    "synthetic_pair",
    "weighted_score",
]
