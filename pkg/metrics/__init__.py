"""
Evaluation: temporal consistency, flow-warped pixel error and ground-truth edit accuracy.
"""
from metrics.accuracy import boundary_variance, edit_accuracy, edit_effect_series
from metrics.flow import FlowField, block_flow, pixel_mse, warp
from metrics.report import (
    COLUMNS,
    MetricsReport,
    PairedSummary,
    evaluate_sequence,
    paired_summary,
    plot_tem_con_series,
    read_report,
    report_table,
    write_report,
)
from metrics.temporal import frame_features, tem_con

__all__ = [
    "COLUMNS",
    "FlowField",
    "MetricsReport",
    "PairedSummary",
    "block_flow",
    "boundary_variance",
    "edit_accuracy",
    "edit_effect_series",
    "evaluate_sequence",
    "frame_features",
    "paired_summary",
    "pixel_mse",
    "plot_tem_con_series",
    "read_report",
    "report_table",
    "tem_con",
    "warp",
    "write_report",
]
