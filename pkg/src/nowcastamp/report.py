"""Run records and the derived comparison tables.

A RunRecord captures one (model, precision, batch) training run's timing,
energy, and utilization outcome. render_report turns a record collection
into four tables: GPU usage per model, epoch-time speedups, cost increases
relative to a baseline model, and per-model AMP energy reductions.
Rendering is a pure function of its inputs: identical records produce
byte-identical CSV.
"""

import csv
import io
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import ContractViolation, RunRecordError
from .telemetry import (
    energy_reduction_pct,
    percent_reduction,
    relative_increase_pct,
    speedup_ratio_pct,
)

RUN_CSV_COLUMNS = [
    "model", "precision", "batch", "mean_epoch_s", "energy_j",
    "avg_sm", "max_mem_util", "avg_mem",
]


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one training run; metrics_path points at its score CSV."""

    model: str
    precision: str  # "fp32" or "amp"
    batch: int
    mean_epoch_s: float
    energy_j: float = 0.0
    avg_sm: float = 0.0
    max_mem_util: float = 0.0
    avg_mem: float = 0.0
    metrics_path: str | None = None

    def __post_init__(self):
        if self.precision not in ("fp32", "amp"):
            raise ContractViolation(f"precision must be fp32 or amp, got {self.precision!r}")
        if self.mean_epoch_s <= 0:
            raise ContractViolation("mean_epoch_s must be positive for a completed run")


def _num(x: float) -> str:
    return f"{x:.10g}"


def write_run_records(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUN_CSV_COLUMNS)
        for r in records:
            writer.writerow(
                [r.model, r.precision, r.batch, _num(r.mean_epoch_s), _num(r.energy_j),
                 _num(r.avg_sm), _num(r.max_mem_util), _num(r.avg_mem)]
            )


def read_run_records(path) -> list:
    path = Path(path)
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise RunRecordError(f"{path}: empty file") from None
        if header != RUN_CSV_COLUMNS:
            raise RunRecordError(
                f"{path}: header {header!r} does not match {','.join(RUN_CSV_COLUMNS)!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(RUN_CSV_COLUMNS):
                raise RunRecordError(f"{path}: line {lineno}: wrong field count")
            try:
                records.append(
                    RunRecord(
                        model=row[0], precision=row[1], batch=int(row[2]),
                        mean_epoch_s=float(row[3]), energy_j=float(row[4]),
                        avg_sm=float(row[5]), max_mem_util=float(row[6]),
                        avg_mem=float(row[7]),
                    )
                )
            except (ValueError, ContractViolation) as exc:
                raise RunRecordError(f"{path}: line {lineno}: {exc}") from None
    return records


@dataclass(frozen=True)
class ReportBundle:
    """The four rendered tables, each a list of column dicts."""

    usage_rows: list
    timing_rows: list
    relative_rows: list
    energy_rows: list
    baseline: str


def _model_sort_key(name: str):
    # U3-32 style names sort by depth then width; anything else sorts last.
    m = re.match(r"^U(\d+)-(\d+)$", name)
    return (0, int(m.group(1)), int(m.group(2))) if m else (1, 0, name)


def _pick(records_for_precision):
    """One record per precision: the largest-batch run, mirroring the
    published convention of training at the largest feasible batch."""
    return max(records_for_precision, key=lambda r: r.batch)


def render_report(records, baseline_name, param_counts=None) -> ReportBundle:
    """Build all comparison tables from run records.

    param_counts optionally maps model name to a trainable-parameter count;
    models missing from it fall back to the analytical count. The relative
    table compares AMP runs against the baseline model's AMP run (falling
    back to FP32 when no AMP run exists), matching how the published
    relative-cost comparison was constructed.
    """
    records = list(records)
    seen = set()
    for r in records:
        key = (r.model, r.precision, r.batch)
        if key in seen:
            raise ContractViolation(f"duplicate run record for {key}")
        seen.add(key)

    by_model = {}
    for r in records:
        by_model.setdefault(r.model, {}).setdefault(r.precision, []).append(r)
    if baseline_name not in by_model:
        raise ContractViolation(f"baseline {baseline_name!r} not among the records")

    def params_for(model: str) -> int:
        if param_counts and model in param_counts:
            return int(param_counts[model])
        from .unet import count_params, parse_name

        return count_params(parse_name(model))[0]

    models = sorted(by_model, key=_model_sort_key)

    usage_rows = []
    for model in models:
        recs = by_model[model]
        row = {"model": model}
        for prec in ("fp32", "amp"):
            if prec in recs:
                r = _pick(recs[prec])
                row[f"avg_sm_{prec}"] = r.avg_sm
                row[f"max_mem_{prec}"] = r.max_mem_util
                row[f"avg_mem_{prec}"] = r.avg_mem
                row[f"energy_{prec}"] = r.energy_j
            else:
                for col in ("avg_sm", "max_mem", "avg_mem", "energy"):
                    row[f"{col}_{prec}"] = None
        usage_rows.append(row)

    timing_rows = []
    for model in models:
        recs = by_model[model]
        if "fp32" not in recs or "amp" not in recs:
            continue
        r32, ramp = _pick(recs["fp32"]), _pick(recs["amp"])
        timing_rows.append(
            {
                "model": model,
                "batch_fp32": r32.batch,
                "batch_amp": ramp.batch,
                "mean_epoch_s_fp32": r32.mean_epoch_s,
                "mean_epoch_s_amp": ramp.mean_epoch_s,
                "percent_reduction": percent_reduction(r32.mean_epoch_s, ramp.mean_epoch_s),
                "speedup_ratio_pct": speedup_ratio_pct(r32.mean_epoch_s, ramp.mean_epoch_s),
            }
        )

    def anchor(model: str) -> RunRecord:
        recs = by_model[model]
        return _pick(recs["amp"]) if "amp" in recs else _pick(recs["fp32"])

    base = anchor(baseline_name)
    base_params = params_for(baseline_name)
    relative_rows = []
    for model in models:
        r = anchor(model)
        p = params_for(model)
        relative_rows.append(
            {
                "model": model,
                "param_count": p,
                "param_increase_pct": relative_increase_pct(p, base_params),
                "epoch_time_increase_pct": relative_increase_pct(
                    r.mean_epoch_s, base.mean_epoch_s
                ),
                "energy_increase_pct": (
                    relative_increase_pct(r.energy_j, base.energy_j)
                    if r.energy_j > 0 and base.energy_j > 0
                    else None
                ),
            }
        )

    energy_rows = []
    for model in models:
        recs = by_model[model]
        if "fp32" not in recs or "amp" not in recs:
            continue
        e32, eamp = _pick(recs["fp32"]).energy_j, _pick(recs["amp"]).energy_j
        if e32 <= 0:
            continue
        energy_rows.append(
            {
                "model": model,
                "energy_j_fp32": e32,
                "energy_j_amp": eamp,
                "energy_reduction_pct": energy_reduction_pct(e32, eamp),
            }
        )

    return ReportBundle(usage_rows, timing_rows, relative_rows, energy_rows, baseline_name)


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def _rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_cell(row[c]) for c in columns])
    return buf.getvalue()


TABLE_COLUMNS = {
    "usage": ["model", "avg_sm_fp32", "avg_sm_amp", "max_mem_fp32", "max_mem_amp",
              "avg_mem_fp32", "avg_mem_amp", "energy_fp32", "energy_amp"],
    "timing": ["model", "batch_fp32", "batch_amp", "mean_epoch_s_fp32",
               "mean_epoch_s_amp", "percent_reduction", "speedup_ratio_pct"],
    "relative": ["model", "param_count", "param_increase_pct",
                 "epoch_time_increase_pct", "energy_increase_pct"],
    "energy": ["model", "energy_j_fp32", "energy_j_amp", "energy_reduction_pct"],
}


def bundle_csv(bundle: ReportBundle) -> dict:
    """name -> CSV text for each table; stable bytes for identical input."""
    return {
        "usage": _rows_to_csv(bundle.usage_rows, TABLE_COLUMNS["usage"]),
        "timing": _rows_to_csv(bundle.timing_rows, TABLE_COLUMNS["timing"]),
        "relative": _rows_to_csv(bundle.relative_rows, TABLE_COLUMNS["relative"]),
        "energy": _rows_to_csv(bundle.energy_rows, TABLE_COLUMNS["energy"]),
    }


def _text_table(title, rows, columns) -> str:
    cells = [[_csv_cell(row[c]) for c in columns] for row in rows]
    widths = [max(len(col), *(len(r[i]) for r in cells)) if cells else len(col)
              for i, col in enumerate(columns)]
    lines = [title]
    lines.append("  ".join(col.ljust(w) for col, w in zip(columns, widths)))
    lines.append("  ".join("-" * w for w in widths))
    for r in cells:
        lines.append("  ".join(v.rjust(w) for v, w in zip(r, widths)))
    return "\n".join(lines)


def bundle_text(bundle: ReportBundle) -> str:
    parts = [
        _text_table("GPU usage and energy per model", bundle.usage_rows,
                    TABLE_COLUMNS["usage"]),
        _text_table("Mean epoch time and speedup (both definitions)",
                    bundle.timing_rows, TABLE_COLUMNS["timing"]),
        _text_table(f"Cost relative to {bundle.baseline}", bundle.relative_rows,
                    TABLE_COLUMNS["relative"]),
        _text_table("Energy reduction from AMP", bundle.energy_rows,
                    TABLE_COLUMNS["energy"]),
    ]
    return "\n\n".join(parts) + "\n"


def write_report(bundle: ReportBundle, out_dir) -> dict:
    """Write the four CSVs plus the aligned-text summary; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, text in bundle_csv(bundle).items():
        p = out_dir / f"{name}.csv"
        p.write_text(text)
        paths[name] = p
    summary = out_dir / "report.txt"
    summary.write_text(bundle_text(bundle))
    paths["text"] = summary
    return paths
