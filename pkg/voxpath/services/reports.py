"""Cross-validation report rendering: a fixed-width table and a JSON twin."""

import json
import logging
from pathlib import Path
from typing import Any, Optional, Union

from voxpath.errors import StorageError
from voxpath.models import MetricReport

logger = logging.getLogger(__name__)

COLUMNS = ("Sensitivity", "Specificity", "Recall", "Scores", "Std. Dev")


def _row(label: str, values: list[str], width: int) -> str:
    return f"{label:<{width}}" + "".join(f"{v:>13}" for v in values)


def render_table(rows: dict[str, MetricReport], show_folds: bool = True) -> str:
    """One line per model, then the per-fold breakdown of each."""
    width = max([len("Model")] + [len(name) for name in rows]) + 2
    lines = [_row("Model", list(COLUMNS), width)]
    lines.append("-" * len(lines[0]))
    for name, report in rows.items():
        lines.append(
            _row(
                name,
                [
                    f"{report.sensitivity:.4f}",
                    f"{report.specificity:.4f}",
                    f"{report.uar:.4f}",
                    f"{report.weighted:.4f}",
                    f"{report.std_dev:.4f}",
                ],
                width,
            )
        )
    if show_folds:
        for name, report in rows.items():
            if not report.folds:
                continue
            lines.append("")
            lines.append(f"{name}: {len(report.folds)} folds (seed {report.seed})")
            for fold in report.folds:
                lines.append(
                    _row(
                        f"  fold {fold.fold} (n={fold.n})",
                        [
                            f"{fold.sensitivity:.4f}",
                            f"{fold.specificity:.4f}",
                            f"{fold.uar:.4f}",
                            f"{fold.weighted:.4f}",
                            "",
                        ],
                        width,
                    )
                )
    return "\n".join(lines)


def report_payload(name: str, report: MetricReport, provenance: Optional[dict[str, Any]] = None) -> dict:
    return {"model": name, "metrics": report.model_dump(), "provenance": provenance or {}}


def write_report(
    path: Union[str, Path],
    name: str,
    report: MetricReport,
    provenance: Optional[dict[str, Any]] = None,
) -> Path:
    """Write <path> as JSON and <path>.txt as the table; returns the table path."""
    path = Path(path)
    table_path = path.with_suffix(path.suffix + ".txt")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(report_payload(name, report, provenance), indent=1, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        table_path.write_text(render_table({name: report}) + "\n", encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write report {path}: {e}", path=str(path))
    logger.info(f"Wrote report to {path} and {table_path}")
    return table_path
