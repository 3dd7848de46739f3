"""Evaluation reports: machine-readable JSON plus an aligned text table."""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from src.colorcast.metrics import RmseNormalization

logger = logging.getLogger(__name__)

REPORT_VERSION = "1.0"

# Full-scale reference numbers (ADE20K + pretrained AlexNet); the desk
# benchmark does not reproduce them.
REFERENCE_RMSE = {
    "all": {"rgb": 53.8815, "semantic": 31.1355},
    "gamma=1": {"rgb": 51.8160, "semantic": 20.1450},
}


class Subset(str, Enum):
    """Test subsets scored separately."""

    ALL = "all"
    GAMMA_ONE = "gamma=1"


def mean_of(values: list[float]) -> float:
    """Arithmetic mean with exact summation (nan for an empty list)."""
    if not values:
        return math.nan
    return math.fsum(values) / len(values)


@dataclass
class ReportRow:
    """Scores of one method on one subset.

    Attributes:
        method: Method name (e.g. "semantic", "rgb/no-gamma", "grey_world").
        subset: Subset the scores belong to.
        per_sample: RMSE of each sample, in manifest order.
        sample_ids: Matching sample ids.
        seed: Training seed for trained methods.
    """

    method: str
    subset: Subset
    per_sample: list[float]
    sample_ids: list[str] = field(default_factory=list)
    seed: int | None = None

    @property
    def mean(self) -> float:
        return mean_of(self.per_sample)

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "subset": self.subset.value,
            "seed": self.seed,
            "mean": self.mean,
            "count": len(self.per_sample),
            "per_sample": self.per_sample,
            "sample_ids": self.sample_ids,
        }


@dataclass
class Comparison:
    """Semantic vs. RGB network on one subset for one seed.

    Attributes:
        subset: Scored subset.
        seed: Training seed (None for the average over seeds).
        rgb_mean: Mean RMSE of the RGB-only network.
        semantic_mean: Mean RMSE of the semantic network.
    """

    subset: Subset
    seed: int | None
    rgb_mean: float
    semantic_mean: float

    @property
    def relative_reduction(self) -> float:
        """(rgb - semantic) / rgb; positive when the mask helps."""
        if self.rgb_mean == 0:
            return 0.0
        return (self.rgb_mean - self.semantic_mean) / self.rgb_mean

    @property
    def semantic_wins(self) -> bool:
        return self.semantic_mean < self.rgb_mean

    def to_dict(self) -> dict[str, Any]:
        return {
            "subset": self.subset.value,
            "seed": self.seed,
            "rgb_mean": self.rgb_mean,
            "semantic_mean": self.semantic_mean,
            "relative_reduction": self.relative_reduction,
            "semantic_wins": self.semantic_wins,
        }


@dataclass
class Report:
    """A complete evaluation report.

    Attributes:
        title: Heading of the text table.
        rows: Score rows.
        rmse_per: RMSE normalization convention used by every row.
        comparisons: Paired RGB/semantic comparisons (ablation only).
        details: Extra JSON-serializable sections (configs, sensitivity results).
        show_reference: Print the published reference values in the footer.
    """

    title: str
    rows: list[ReportRow] = field(default_factory=list)
    rmse_per: RmseNormalization = RmseNormalization.VALUE
    comparisons: list[Comparison] = field(default_factory=list)
    details: dict[str, Any] = field(default_factory=dict)
    show_reference: bool = False

    def row(self, method: str, subset: Subset, seed: int | None = None) -> ReportRow:
        for row in self.rows:
            if row.method == method and row.subset is subset and row.seed == seed:
                return row
        raise KeyError(f"no row for {method}/{subset.value}/seed={seed}")

    def win_counts(self) -> dict[str, dict[str, int]]:
        """Per subset: paired seeds where the semantic network wins."""
        counts: dict[str, dict[str, int]] = {}
        for comparison in self.comparisons:
            if comparison.seed is None:
                continue
            entry = counts.setdefault(comparison.subset.value, {"wins": 0, "pairs": 0})
            entry["pairs"] += 1
            entry["wins"] += int(comparison.semantic_wins)
        return counts

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "version": REPORT_VERSION,
            "title": self.title,
            "rmse_scale": "0-255",
            "rmse_per": self.rmse_per.value,
            "rows": [row.to_dict() for row in self.rows],
        }
        if self.comparisons:
            data["comparisons"] = [c.to_dict() for c in self.comparisons]
            data["win_counts"] = self.win_counts()
        if self.details:
            data["details"] = self.details
        if self.show_reference:
            data["reference_rmse"] = REFERENCE_RMSE
        return data


def format_text(report: Report) -> str:
    """Render a report as an aligned plain-text table."""
    lines = [report.title, "=" * max(len(report.title), 60)]
    lines.append(f"RMSE on the 0-255 scale, per {report.rmse_per.value}")
    lines.append("")

    method_width = max([len("method"), *(len(r.method) for r in report.rows)])
    header = (
        f"{'method':<{method_width}}  {'subset':<8}  {'seed':>4}  "
        f"{'n':>5}  {'mean':>10}"
    )
    lines.append(header)
    lines.append("-" * len(header))
    for row in report.rows:
        seed = "-" if row.seed is None else str(row.seed)
        lines.append(
            f"{row.method:<{method_width}}  {row.subset.value:<8}  {seed:>4}  "
            f"{len(row.per_sample):>5}  {row.mean:>10.4f}"
        )

    if report.comparisons:
        lines.append("")
        lines.append("Semantic vs. RGB")
        lines.append("-" * 60)
        for c in report.comparisons:
            seed = "mean" if c.seed is None else f"seed {c.seed}"
            lines.append(
                f"  {c.subset.value:<8} {seed:<8} rgb {c.rgb_mean:9.4f}  "
                f"semantic {c.semantic_mean:9.4f}  "
                f"reduction {c.relative_reduction:+.1%}"
            )
        for subset, entry in report.win_counts().items():
            lines.append(
                f"  {subset}: semantic wins {entry['wins']}/{entry['pairs']} seeds"
            )

    if report.show_reference:
        lines.append("")
        lines.append(
            "Reference (full scale, ADE20K + pretrained AlexNet, not reproduced):"
        )
        for subset, values in REFERENCE_RMSE.items():
            lines.append(
                f"  {subset:<8} rgb {values['rgb']:.4f}  "
                f"semantic {values['semantic']:.4f}"
            )
    return "\n".join(lines) + "\n"


def save_report(
    report: Report, output_dir: Path | str, stem: str
) -> tuple[Path, Path]:
    """Write ``<stem>.json`` and ``<stem>.txt`` under output_dir.

    Returns:
        Paths of the JSON and text files.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    json_path = output_dir / f"{stem}.json"
    text_path = output_dir / f"{stem}.txt"

    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, ensure_ascii=False, indent=2)
        f.write("\n")
    text_path.write_text(format_text(report), encoding="utf-8")

    logger.info(f"Saved report {json_path}")
    return json_path, text_path


def print_report_summary(report: Report) -> None:
    print("\n" + format_text(report), end="")
