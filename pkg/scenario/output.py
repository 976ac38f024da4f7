"""Result files: the per-window/summary CSV and gnuplot-style data files."""

from io import StringIO
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union
import logging
import math

import aiofiles
import pandas as pd

from core.errors import SimulationError
from metrics.collector import MetricsReport, merge_reports
from network.mac import SERVICE_CLASSES
from radio.amc import MCS_MODES
from radio.channel import PATHLOSS_REGISTRY


logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "scenario-id", "window", "mcs-mode", "speed-kmh", "pathloss-model", "service-class", "seed",
    "plr", "mean-delay-ms", "mean-jitter-ms", "signed-jitter-ms", "throughput-bps", "dropped-bps",
    "mean-bler",
]

FLOAT_FORMAT = "%.6f"
SUMMARY = "summary"

# axis name -> (case number, report attribute)
PLOT_AXES: Dict[str, Tuple[int, str]] = {
    "speed": (1, "speed_kmh"),
    "pathloss": (2, "pathloss_model"),
    "class": (3, "service_class"),
}

# file name -> report attribute
PLOT_METRICS: Dict[str, str] = {
    "jitter": "mean_jitter",
    "delay": "mean_e2e_delay",
    "dropped": "data_dropped",
    "throughput": "throughput",
}


def _row(report: MetricsReport, window, plr, delay, jitter, signed, rate, dropped, bler) -> list:
    return [
        report.scenario_id, window, report.mcs_mode, report.speed_kmh, report.pathloss_model,
        report.service_class, report.seed, plr, delay, jitter, signed, rate, dropped, bler,
    ]


def reports_frame(reports: Sequence[MetricsReport]) -> pd.DataFrame:
    """One row per metric window followed by one summary row, per scenario"""
    rows = []
    for report in merge_reports(reports):
        series = zip(report.plr_series, report.delay_series, report.jitter_series,
                     report.signed_jitter_series, report.throughput_series, report.dropped_series,
                     report.bler_series)
        for index, values in enumerate(series):
            rows.append(_row(report, str(index), *values))
        rows.append(_row(report, SUMMARY, report.plr, report.mean_e2e_delay, report.mean_jitter,
                         report.signed_jitter, report.throughput, report.data_dropped, report.mean_bler))
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def render_csv(reports: Sequence[MetricsReport]) -> str:
    return reports_frame(reports).to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


async def write_reports_csv(reports: Sequence[MetricsReport], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    async with aiofiles.open(path, "w", encoding="utf-8") as f:
        await f.write(render_csv(reports))
    logger.info(f"Wrote {len(reports)} scenario reports to {path}")
    return path


def _case_of(scenario_id: str) -> int:
    prefix = scenario_id.split("-", 1)[0]
    if len(prefix) == 2 and prefix[0] == "c" and prefix[1].isdigit():
        return int(prefix[1])
    return 0


def _optional(value) -> Union[float, None]:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return float(value)


def load_reports_csv(path: Union[str, Path]) -> List[MetricsReport]:
    """Read the summary rows of a results CSV back as reports without series"""
    try:
        frame = pd.read_csv(path, dtype={"window": str, "scenario-id": str, "mcs-mode": str,
                                         "pathloss-model": str, "service-class": str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise SimulationError(f"Cannot read results {path}: {e}")
    missing = [c for c in REPORT_COLUMNS if c not in frame.columns]
    if missing:
        raise SimulationError(f"{path}: missing column(s) {', '.join(missing)}")

    reports = []
    for row in frame[frame["window"] == SUMMARY].itertuples(index=False):
        values = dict(zip(REPORT_COLUMNS, row))
        reports.append(MetricsReport(
            scenario_id=values["scenario-id"],
            case=_case_of(values["scenario-id"]),
            mcs_mode=values["mcs-mode"],
            speed_kmh=float(values["speed-kmh"]),
            pathloss_model=values["pathloss-model"],
            service_class=values["service-class"],
            seed=int(values["seed"]),
            plr=float(values["plr"]),
            mean_e2e_delay=_optional(values["mean-delay-ms"]),
            mean_jitter=_optional(values["mean-jitter-ms"]) or 0.0,
            signed_jitter=_optional(values["signed-jitter-ms"]) or 0.0,
            throughput=float(values["throughput-bps"]),
            data_dropped=float(values["dropped-bps"]),
            mean_bler=float(values["mean-bler"]),
        ))
    logger.info(f"Loaded {len(reports)} summary rows from {path}")
    return reports


def _axis_order(axis: str, values: List) -> List:
    if axis == "speed":
        return sorted(set(values))
    known = PATHLOSS_REGISTRY.names() if axis == "pathloss" else SERVICE_CLASSES.names()
    present = set(values)
    return [name for name in known if name in present] + sorted(present - set(known))


def plot_tables(reports: Sequence[MetricsReport], axis: str) -> Dict[str, pd.DataFrame]:
    """Metric name -> table indexed by axis value with one column per MCS mode"""
    if not reports:
        raise SimulationError("No reports to build plot data from")
    if axis not in PLOT_AXES:
        raise SimulationError(f"Unknown plot axis '{axis}'; valid axes: {', '.join(PLOT_AXES)}")

    case, attribute = PLOT_AXES[axis]
    selected = [r for r in reports if r.case == case]
    if not selected:
        logger.warning(f"No case-{case} reports for axis '{axis}'")
        return {}

    records = pd.DataFrame([
        {"axis": getattr(r, attribute), "mode": r.mcs_mode,
         **{name: getattr(r, field) for name, field in PLOT_METRICS.items()}}
        for r in selected
    ])
    rows = _axis_order(axis, list(records["axis"]))
    modes = [m for m in MCS_MODES.names() if m in set(records["mode"])]
    tables = {}
    for name in PLOT_METRICS:
        table = records.pivot(index="axis", columns="mode", values=name).astype(float)
        tables[name] = table.reindex(index=rows, columns=modes)
    return tables


async def emit_plot_data(reports: Sequence[MetricsReport], axis: str, out_dir: Union[str, Path]) -> List[Path]:
    """Write ``<axis>_<metric>.dat`` files; missing points are written as '?'"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, table in plot_tables(reports, axis).items():
        missing = int(table.isna().sum().sum())
        if missing:
            logger.warning(f"{axis}_{name}: {missing} missing data point(s)")
        buffer = StringIO()
        if name == "jitter":
            buffer.write("# logscale y\n")
        buffer.write(f"# {axis} " + " ".join(table.columns) + "\n")
        table.to_csv(buffer, sep=" ", header=False, na_rep="?", float_format=FLOAT_FORMAT, lineterminator="\n")
        path = out_dir / f"{axis}_{name}.dat"
        async with aiofiles.open(path, "w", encoding="utf-8") as f:
            await f.write(buffer.getvalue())
        written.append(path)
    logger.info(f"Wrote {len(written)} plot data files for axis '{axis}' to {out_dir}")
    return written
