"""Matplotlib figure rendering for the report paths.

Every CLI path that emits a delimited report also drops the matching figure
next to it: loss curves for training runs, speedup / relative-cost / energy
bars for the comparison report, per-lead-time score curves for evaluation,
and the power timeline for telemetry ingestion. The Agg backend keeps this
headless-safe.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricReport, scores


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path


def save_loss_curves(histories: dict, path):
    """histories: label -> list of per-epoch mean losses."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    for label, losses in histories.items():
        ax1.plot(range(1, len(losses) + 1), losses, marker="o", label=label)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("mean training loss")
    ax1.set_title("Loss by epoch")
    ax1.legend()
    for label, losses in histories.items():
        ax2.semilogy(range(1, len(losses) + 1), losses, marker="o", label=label)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("mean training loss (log)")
    ax2.set_title("Loss by epoch (log scale)")
    return _finish(fig, path)


def save_speedup_bars(timing_rows, path):
    """Grouped bars of both speedup definitions per model."""
    models = [r["model"] for r in timing_rows]
    red = [r["percent_reduction"] for r in timing_rows]
    ratio = [r["speedup_ratio_pct"] for r in timing_rows]
    x = np.arange(len(models))
    fig, ax = plt.subplots(figsize=(max(6, 0.8 * len(models) + 2), 4))
    ax.bar(x - 0.2, red, width=0.4, label="100*(t_fp32-t_amp)/t_fp32")
    ax.bar(x + 0.2, ratio, width=0.4, label="100*(t_fp32/t_amp-1)")
    ax.set_xticks(x, models, rotation=45, ha="right")
    ax.set_ylabel("speedup %")
    ax.set_title("Epoch-time speedup from AMP")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def save_energy_reduction_bars(energy_rows, path):
    models = [r["model"] for r in energy_rows]
    red = [r["energy_reduction_pct"] for r in energy_rows]
    fig, ax = plt.subplots(figsize=(max(6, 0.7 * len(models) + 2), 4))
    ax.bar(models, red, color="tab:green")
    ax.set_ylabel("energy reduction %")
    ax.set_title("Energy reduction from AMP")
    plt.setp(ax.get_xticklabels(), rotation=45, ha="right")
    return _finish(fig, path)


def save_relative_bars(relative_rows, baseline, path):
    """Parameter / epoch-time / energy increase relative to the baseline."""
    rows = [r for r in relative_rows if r["model"] != baseline]
    models = [r["model"] for r in rows]
    series = [
        ("parameters", [r["param_increase_pct"] for r in rows]),
        ("epoch time", [r["epoch_time_increase_pct"] for r in rows]),
        ("energy", [(r["energy_increase_pct"] or 0.0) for r in rows]),
    ]
    x = np.arange(len(models))
    fig, ax = plt.subplots(figsize=(max(6, 0.9 * len(models) + 2), 4))
    for i, (label, vals) in enumerate(series):
        ax.bar(x + (i - 1) * 0.27, vals, width=0.27, label=label)
    ax.set_xticks(x, models, rotation=45, ha="right")
    ax.set_ylabel(f"% increase over {baseline}")
    ax.set_title(f"Cost relative to {baseline}")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def save_lead_time_curves(report: MetricReport, path):
    """CSI per threshold and MSE as functions of forecast lead time."""
    leads = np.arange(1, report.n_leads + 1)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    for thr in report.thresholds:
        csi = [
            (scores(report.tables[(thr, int(k))]).csi or np.nan) for k in leads
        ]
        ax1.plot(leads, csi, marker=".", label=f"thr {thr}")
    ax1.set_xlabel("lead time (frames)")
    ax1.set_ylabel("CSI")
    ax1.set_title("CSI by lead time")
    ax1.legend(fontsize=7)
    ax2.plot(leads, report.lead_mse, marker="o", color="tab:red")
    ax2.set_xlabel("lead time (frames)")
    ax2.set_ylabel("MSE")
    ax2.set_title("MSE by lead time")
    return _finish(fig, path)


def save_power_timeline(samples_by_log: dict, path):
    """Power vs time for each ingested telemetry log."""
    fig, ax = plt.subplots(figsize=(8, 3.6))
    for label, samples in samples_by_log.items():
        t0 = samples[0].timestamp_ms
        ts = [(s.timestamp_ms - t0) / 1000.0 for s in samples]
        ax.plot(ts, [s.power_w for s in samples], label=label)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("power (W)")
    ax.set_title("Power draw")
    ax.legend(fontsize=8)
    return _finish(fig, path)
