"""
Metric reports: evaluation of one run, tables, plots and paired comparisons.
"""
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
import torch  # noqa: E402
from scipy import stats  # noqa: E402

from metrics.accuracy import edit_accuracy, edit_effect_series  # noqa: E402
from metrics.flow import BLOCK, RADIUS, pixel_mse  # noqa: E402
from metrics.temporal import tem_con  # noqa: E402
from synthvid import EditTask  # noqa: E402
from utils.errors import ContractError  # noqa: E402
from utils.logger import get_logger  # noqa: E402

logger = get_logger(__name__)

COLUMNS = ["tem_con", "pixel_mse", "edit_accuracy"]
TABLE_NOTE = "tem_con is a pixel-feature surrogate; edit_accuracy is measured against ground-truth edits"


@dataclass
class MetricsReport:
    tem_con: float
    pixel_mse: float
    edit_accuracy: Optional[float] = None
    tem_con_series: List[float] = field(default_factory=list)
    pixel_mse_series: List[float] = field(default_factory=list)
    effect_series: List[float] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)

    def row(self) -> Dict[str, Optional[float]]:
        return {"tem_con": self.tem_con, "pixel_mse": self.pixel_mse, "edit_accuracy": self.edit_accuracy}


def evaluate_sequence(
    edited: torch.Tensor,
    source: torch.Tensor,
    task: Optional[EditTask] = None,
    masks: Optional[torch.Tensor] = None,
    targets: Optional[torch.Tensor] = None,
    block: int = BLOCK,
    radius: int = RADIUS,
    config: Optional[Mapping[str, Any]] = None,
) -> MetricsReport:
    """All metrics for one edited sequence; edit accuracy only when a task is given."""
    tc, tc_series = tem_con(edited)
    mse, mse_series = pixel_mse(edited, source, block, radius)
    report = MetricsReport(tc, mse, tem_con_series=tc_series, pixel_mse_series=mse_series,
                           config=dict(config or {}))
    if task is not None:
        report.effect_series = edit_effect_series(edited, source, task, masks, targets)
        report.edit_accuracy = edit_accuracy(edited, source, task, masks, targets)
    logger.info(
        f"tem_con={report.tem_con:.4f} pixel_mse={report.pixel_mse:.5f} "
        f"edit_accuracy={report.edit_accuracy}"
    )
    return report


def report_table(reports: Union[MetricsReport, Mapping[str, MetricsReport]]) -> pd.DataFrame:
    if isinstance(reports, MetricsReport):
        reports = {"run": reports}
    frame = pd.DataFrame([r.row() for r in reports.values()], index=list(reports), columns=COLUMNS).astype(float)
    frame.index.name = "run"
    return frame


def write_report(
    reports: Union[MetricsReport, Mapping[str, MetricsReport]],
    directory: str,
    name: str = "metrics",
) -> Dict[str, str]:
    """Write ``<name>.txt`` (aligned table) and ``<name>.csv``; returns both paths."""
    os.makedirs(directory, exist_ok=True)
    table = report_table(reports)
    csv_path = os.path.join(directory, f"{name}.csv")
    txt_path = os.path.join(directory, f"{name}.txt")
    table.to_csv(csv_path)
    with open(txt_path, "w", encoding="utf-8") as handle:
        handle.write(table.to_string(float_format=lambda v: f"{v:.5f}", na_rep="-"))
        handle.write(f"\n\n# {TABLE_NOTE}\n")
    logger.info(f"Wrote metrics for {len(table)} runs to {csv_path}")
    return {"csv": csv_path, "txt": txt_path}


def read_report(path: str) -> pd.DataFrame:
    return pd.read_csv(path, index_col="run")


def plot_tem_con_series(series: Mapping[str, Sequence[float]], path: str, boundaries: Sequence[int] = ()) -> str:
    """Per-pair Tem-Con curves, one line per run; ``boundaries`` marks chunk seams."""
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for label, values in series.items():
        ax.plot(range(len(values)), list(values), label=label, linewidth=1.2)
    for b in boundaries:
        ax.axvline(b - 0.5, color="grey", linestyle=":", linewidth=0.8)
    ax.set_xlabel("frame pair")
    ax.set_ylabel("tem_con")
    ax.legend(loc="lower left", fontsize="small")
    fig.tight_layout()
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


@dataclass(frozen=True)
class PairedSummary:
    """Paired difference ``treatment - baseline`` over seeds."""
    n: int
    mean_diff: float
    stderr: float
    p_value: float

    def as_dict(self) -> Dict[str, float]:
        return {"n": self.n, "mean_diff": self.mean_diff, "stderr": self.stderr, "p_value": self.p_value}


def paired_summary(treatment: Sequence[float], baseline: Sequence[float]) -> PairedSummary:
    """Mean +- standard error of paired differences and the paired t-test p-value."""
    if len(treatment) != len(baseline):
        raise ContractError(f"paired samples differ in length: {len(treatment)} vs {len(baseline)}")
    if not treatment:
        raise ContractError("paired summary needs at least one pair")
    diffs = [float(a) - float(b) for a, b in zip(treatment, baseline)]
    n = len(diffs)
    mean = sum(diffs) / n
    if n < 2:
        return PairedSummary(n, mean, math.nan, math.nan)
    stderr = float(stats.sem(diffs))
    if all(d == diffs[0] for d in diffs):
        p_value = 0.0 if mean != 0.0 else 1.0
    else:
        p_value = float(stats.ttest_rel(treatment, baseline).pvalue)
    return PairedSummary(n, mean, stderr, p_value)
