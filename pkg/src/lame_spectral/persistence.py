"""
Report persistence.

write_report stores an EstimateReport as three files in the output directory:
<id>.csv with one row per sample (RFC-4180, CRLF line endings, floats written
with repr so they read back exactly), <id>.json with the full report including
the config echo, and <id>.txt with a human-readable summary.
"""

import csv
from pathlib import Path

import structlog

from .errors import PreconditionError
from .models import EstimateReport

logger = structlog.get_logger(__name__)


def resolve_inside(output_dir: Path | str, name: str) -> Path:
    """output_dir / name, refusing anything that resolves outside output_dir."""
    root = Path(output_dir).resolve()
    path = (root / name).resolve()
    if not path.is_relative_to(root) or path == root:
        raise PreconditionError(f"Refusing to write {name!r} outside {root}")
    return path


def _cell(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def sample_columns(report: EstimateReport) -> list[str]:
    """Descriptor keys in order of first appearance, then the value column."""
    columns: list[str] = []
    for sample in report.samples:
        for key in sample.descriptor:
            if key not in columns:
                columns.append(key)
    return [*columns, "value"]


def write_csv(report: EstimateReport, path: Path) -> Path:
    columns = sample_columns(report)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\r\n")
        writer.writerow(columns)
        for sample in report.samples:
            row = sample.descriptor | {"value": sample.value}
            writer.writerow([_cell(row[column]) if column in row else "" for column in columns])
    return path


def render_summary(report: EstimateReport) -> str:
    lines = [
        f"experiment: {report.experiment_id}",
        f"verdict: {report.verdict.value}",
        f"provenance: {report.provenance or '-'}",
        f"samples: {len(report.samples)}",
        "",
        "checks:",
    ]
    lines += [f"  {name}: {'ok' if ok else 'FAILED'}" for name, ok in report.checks.items()]
    lines += ["", "statistics:"]
    lines += [f"  {name}: {value:.6g}" for name, value in report.statistics.items()]
    if report.tolerances:
        lines += ["", "tolerances:"]
        lines += [f"  {name}: {value:.6g}" for name, value in report.tolerances.items()]
    if report.notes:
        lines += ["", "notes:"]
        lines += [f"  - {note}" for note in report.notes]
    return "\n".join(lines) + "\n"


def write_report(report: EstimateReport, output_dir: Path | str) -> dict[str, Path]:
    """Write <id>.csv, <id>.json and <id>.txt and return their paths by suffix.

    Raises:
        PreconditionError: If a file would land outside output_dir.
    """
    paths = {
        suffix: resolve_inside(output_dir, f"{report.experiment_id}.{suffix}")
        for suffix in ("csv", "json", "txt")
    }
    Path(output_dir).mkdir(parents=True, exist_ok=True)
    try:
        write_csv(report, paths["csv"])
        paths["json"].write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
        paths["txt"].write_text(render_summary(report), encoding="utf-8")
    except OSError as e:
        logger.error("Failed to write report", output_dir=str(output_dir), error=str(e), exc_info=True)
        raise
    logger.info(
        "Report written",
        experiment_id=report.experiment_id,
        verdict=report.verdict.value,
        files=[str(path) for path in paths.values()],
    )
    return paths


def read_report(path: Path | str) -> EstimateReport:
    return EstimateReport.model_validate_json(Path(path).read_text(encoding="utf-8"))
