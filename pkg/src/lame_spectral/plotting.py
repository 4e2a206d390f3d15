"""
Plot scripts for experiment reports.

emit_plot_script writes a gnuplot script next to the report's CSV. Decay reports
become log-log curves with the fitted line and the reference slope -(n-1)/2;
sweep reports become a scatter of the quotient against log10|z|; every other
report is plotted against its first numeric descriptor.
"""

import math
from enum import Enum
from pathlib import Path

import structlog

from .errors import PreconditionError
from .models import EstimateReport
from .persistence import resolve_inside, sample_columns

logger = structlog.get_logger(__name__)


class PlotStyle(str, Enum):
    """How samples are laid out on the axes."""

    AUTO = "auto"
    LOGLOG = "loglog"
    SCATTER = "scatter"
    LINES = "lines"


def _column(columns: list[str], name: str) -> int:
    return columns.index(name) + 1


def _header(report: EstimateReport, output: str) -> list[str]:
    return [
        f"# {report.experiment_id}: verdict {report.verdict.value}",
        f"# provenance {report.provenance or '-'}",
        "set datafile separator ','",
        "set key top right",
        "set grid",
        "set terminal pngcairo size 900,600",
        f"set output '{output}'",
    ]


def _decay_script(report: EstimateReport, columns: list[str], csv_name: str) -> list[str]:
    n = report.parameters.get("n", 2)
    slope = report.statistics.get("slope", math.nan)
    intercept = report.statistics.get("intercept", math.nan)
    reference = -(n - 1) / 2
    t = _column(columns, "t")
    value = _column(columns, "value")
    return [
        "set logscale xy",
        "set xlabel 't'",
        "set ylabel '||e^{it sqrt(L)} f||_inf / ||f||_1'",
        f"fit_line(x) = exp({intercept!r}) * x**({slope!r})",
        f"reference(x) = exp({intercept!r}) * x**({reference!r})",
        f"plot '{csv_name}' using {t}:{value} skip 1 with points pt 7 title 'measured', \\",
        f"     fit_line(x) with lines lw 2 title sprintf('fit, slope %.3f', {slope!r}), \\",
        f"     reference(x) with lines dt 2 title 'slope {reference:g}'",
    ]


def _sweep_script(report: EstimateReport, columns: list[str], csv_name: str) -> list[str]:
    abs_z = _column(columns, "abs_z")
    value = _column(columns, "value")
    return [
        "set xlabel 'log10 |z|'",
        "set ylabel 'quotient'",
        f"plot '{csv_name}' using (log10(${abs_z})):{value} skip 1 with points pt 7 title 'quotient'",
    ]


def _generic_script(
    report: EstimateReport, columns: list[str], csv_name: str, style: PlotStyle
) -> list[str]:
    numeric = [
        key
        for key in columns[:-1]
        if all(
            isinstance(sample.descriptor.get(key), int | float) for sample in report.samples
        )
    ]
    x = _column(columns, numeric[0]) if numeric else 0
    value = _column(columns, "value")
    using = f"{x}:{value}" if x else f"0:{value}"
    lines = []
    if style is PlotStyle.LOGLOG:
        lines.append("set logscale xy")
    mode = "points pt 7" if style is PlotStyle.SCATTER else "linespoints"
    lines += [
        f"set xlabel '{numeric[0] if numeric else 'sample'}'",
        "set ylabel 'value'",
        f"plot '{csv_name}' using {using} skip 1 with {mode} title '{report.experiment_id}'",
    ]
    return lines


def emit_plot_script(
    report: EstimateReport,
    output_dir: Path | str,
    style: PlotStyle = PlotStyle.AUTO,
) -> Path:
    """Write <id>.gp for the report's CSV in output_dir.

    Raises:
        PreconditionError: If the report has fewer than two samples.
    """
    if len(report.samples) < 2:
        raise PreconditionError(
            f"Report {report.experiment_id} has {len(report.samples)} samples; plots need two"
        )
    columns = sample_columns(report)
    csv_name = f"{report.experiment_id}.csv"
    path = resolve_inside(output_dir, f"{report.experiment_id}.gp")
    lines = _header(report, f"{report.experiment_id}.png")
    if style is PlotStyle.AUTO and "t" in columns and "slope" in report.statistics:
        lines += _decay_script(report, columns, csv_name)
    elif style in (PlotStyle.AUTO, PlotStyle.SCATTER) and "abs_z" in columns:
        lines += _sweep_script(report, columns, csv_name)
    else:
        chosen = PlotStyle.LINES if style is PlotStyle.AUTO else style
        lines += _generic_script(report, columns, csv_name, chosen)
    Path(output_dir).mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Plot script written", path=str(path), style=style.value)
    return path
