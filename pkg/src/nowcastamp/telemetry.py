"""Telemetry ingestion and the derived comparison arithmetic.

Parses DCGM-style power/utilization logs, integrates energy with the
trapezoidal rule (power genuinely varies across an epoch, so a rectangle
rule would bias the total), and provides the percentage helpers every
report table is built from. Utilization averages are plain sample means,
not time-weighted: fixed-interval exporters make the two agree, and no
weighting hint exists for irregular logs.

Two speedup definitions coexist on purpose: published per-model speedups
mix 100*(t_fp32 - t_amp)/t_fp32 and 100*(t_fp32/t_amp - 1) across rows, so
reports always carry both, labeled.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

from .errors import ContractViolation, PowerLogError

POWER_LOG_HEADER = ["timestamp_ms", "power_w", "sm_util_pct", "mem_util_pct"]


@dataclass(frozen=True)
class PowerSample:
    timestamp_ms: float
    power_w: float
    sm_util_pct: float
    mem_util_pct: float


@dataclass(frozen=True)
class EnergyReport:
    """Integrated energy plus utilization statistics for one log."""

    energy_joules: float
    avg_sm_util: float
    max_sm_util: float
    avg_mem_util: float
    max_mem_util: float
    sample_count: int
    duration_s: float


def parse_power_log(path) -> list:
    """Parse a power log CSV into timestamp-sorted, validated samples.

    The header must match timestamp_ms,power_w,sm_util_pct,mem_util_pct
    exactly. Rows may arrive out of order; they are sorted on return.
    Errors report the 1-based line number of the offending row.
    """
    path = Path(path)
    samples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PowerLogError(f"{path}: empty file") from None
        if header != POWER_LOG_HEADER:
            raise PowerLogError(
                f"{path}: line 1: header {header!r} does not match "
                f"{','.join(POWER_LOG_HEADER)!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(POWER_LOG_HEADER):
                raise PowerLogError(
                    f"{path}: line {lineno}: expected {len(POWER_LOG_HEADER)} "
                    f"fields, got {len(row)}"
                )
            try:
                ts, power, sm, mem = (float(v) for v in row)
            except ValueError:
                raise PowerLogError(
                    f"{path}: line {lineno}: non-numeric field in {row!r}"
                ) from None
            if power < 0:
                raise PowerLogError(f"{path}: line {lineno}: negative power {power}")
            if not 0 <= sm <= 100 or not 0 <= mem <= 100:
                raise PowerLogError(
                    f"{path}: line {lineno}: utilization outside [0, 100]"
                )
            samples.append(PowerSample(ts, power, sm, mem))
    samples.sort(key=lambda s: s.timestamp_ms)
    return samples


def integrate_energy(samples) -> float:
    """Trapezoidal energy in joules over (seconds, watts); one sample is 0 J."""
    if not samples:
        raise ContractViolation("integrate_energy needs at least one sample")
    total = 0.0
    for a, b in zip(samples, samples[1:]):
        dt_s = (b.timestamp_ms - a.timestamp_ms) / 1000.0
        total += dt_s * (a.power_w + b.power_w) / 2.0
    return total


def util_stats(samples):
    """Sample-mean and max for the SM and memory utilization series."""
    if not samples:
        raise ContractViolation("util_stats needs at least one sample")
    sm = [s.sm_util_pct for s in samples]
    mem = [s.mem_util_pct for s in samples]
    return (sum(sm) / len(sm), max(sm)), (sum(mem) / len(mem), max(mem))


def summarize_power_log(samples) -> EnergyReport:
    (avg_sm, max_sm), (avg_mem, max_mem) = util_stats(samples)
    return EnergyReport(
        energy_joules=integrate_energy(samples),
        avg_sm_util=avg_sm,
        max_sm_util=max_sm,
        avg_mem_util=avg_mem,
        max_mem_util=max_mem,
        sample_count=len(samples),
        duration_s=(samples[-1].timestamp_ms - samples[0].timestamp_ms) / 1000.0,
    )


def percent_reduction(t_fp32: float, t_amp: float) -> float:
    """100 * (t_fp32 - t_amp) / t_fp32."""
    if t_fp32 <= 0 or t_amp <= 0:
        raise ContractViolation("times must be positive")
    return 100.0 * (t_fp32 - t_amp) / t_fp32


def speedup_ratio_pct(t_fp32: float, t_amp: float) -> float:
    """100 * (t_fp32 / t_amp - 1)."""
    if t_fp32 <= 0 or t_amp <= 0:
        raise ContractViolation("times must be positive")
    return 100.0 * (t_fp32 / t_amp - 1.0)


def relative_increase_pct(value: float, baseline: float) -> float:
    """100 * (value / baseline - 1)."""
    if baseline <= 0:
        raise ContractViolation("baseline must be positive")
    return 100.0 * (value / baseline - 1.0)


def energy_reduction_pct(e_fp32: float, e_amp: float) -> float:
    """100 * (e_fp32 - e_amp) / e_fp32."""
    if e_fp32 <= 0:
        raise ContractViolation("baseline energy must be positive")
    return 100.0 * (e_fp32 - e_amp) / e_fp32
