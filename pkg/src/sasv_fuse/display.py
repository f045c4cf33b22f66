"""
Renders EER results as tables and DET charts.
"""

from pathlib import Path
from typing import Dict, Iterable, Mapping, Sequence, Union

import altair as alt
import pandas as pd

from .metrics import METRICS, DetPoint, EerReport
from .utils import format_percent

PARTITIONS = ("dev", "eval")
METRIC_TITLES = {"sv": "SV-EER", "spf": "SPF-EER", "sasv": "SASV-EER"}


def results_table(
    rows: Mapping[str, Mapping[str, EerReport]],
    partitions: Sequence[str] = PARTITIONS,
) -> pd.DataFrame:
    """
    One row per system, columns (metric, partition), values in percent.

    Metrics a report does not carry are NaN.
    """
    columns = pd.MultiIndex.from_product(
        [[METRIC_TITLES[m] for m in METRICS], list(partitions)]
    )
    records = []
    for reports in rows.values():
        record = []
        for metric in METRICS:
            for partition in partitions:
                report = reports.get(partition)
                value = None if report is None else report.get(metric)
                record.append(float("nan") if value is None else 100.0 * value)
        records.append(record)
    return pd.DataFrame(records, index=list(rows), columns=columns, dtype=float)


def render_table(df: pd.DataFrame) -> str:
    """Plain-text table with two decimals and '-' for missing values."""
    text = df.map(lambda v: format_percent(None if pd.isna(v) else v / 100.0))
    return text.to_string()


def report_row(name: str, reports: Mapping[str, EerReport]) -> str:
    return render_table(results_table({name: reports}, list(reports)))


def det_frame(curves: Mapping[str, Iterable[DetPoint]]) -> pd.DataFrame:
    """Long-format DET points (metric, threshold, FAR %, FRR %)."""
    records = [
        {
            "metric": METRIC_TITLES.get(metric, metric),
            "threshold": point.threshold,
            "far": 100.0 * point.far,
            "frr": 100.0 * point.frr,
        }
        for metric, points in curves.items()
        for point in points
    ]
    return pd.DataFrame(records, columns=["metric", "threshold", "far", "frr"])


def det_chart(curves: Mapping[str, Iterable[DetPoint]]) -> alt.Chart:
    df = det_frame(curves)
    # altair cannot serialize infinite thresholds
    df["threshold"] = df["threshold"].where(df["threshold"].abs() != float("inf"))
    return (
        alt.Chart(df)
        .mark_line(point=False)
        .encode(
            x=alt.X("far:Q", title="False acceptance rate (%)"),
            y=alt.Y("frr:Q", title="False rejection rate (%)"),
            color=alt.Color("metric:N", title=""),
            order="far:Q",
            tooltip=["metric", "threshold", "far", "frr"],
        )
        .properties(title="DET", width=400, height=400)
    )


def save_chart(chart: alt.Chart, path: Union[str, Path]) -> None:
    """Write ``chart`` as HTML or Vega-Lite JSON, chosen by suffix."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        path.write_text(chart.to_json(indent=2) + "\n", encoding="utf-8")
    else:
        path.write_text(chart.to_html(), encoding="utf-8")


def summary_frame(entries: Dict[str, Sequence[float]]) -> pd.DataFrame:
    """Count / mean / std / min / max per named group of numbers."""
    columns = {
        name: pd.Series(values, dtype=float).describe()
        for name, values in entries.items()
    }
    return pd.DataFrame(columns).T
