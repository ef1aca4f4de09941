"""Command-line surface.

Subcommands: gen-data, train, eval, cost, sweep, report, ingest-telemetry.
Exit codes: 0 success, 1 contract violation, 2 I/O or parse error. Report
paths write figures (PNG) next to their delimited output.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import figures
from .data import (
    AdvectionSpec,
    generate_events,
    load_events,
    save_events,
    windows_from_events,
)
from .errors import (
    ContractViolation,
    ModelNameError,
    PowerLogError,
    RunRecordError,
    SeqzFormatError,
)
from .metrics import (
    VIP_THRESHOLDS,
    evaluate_forecast_set,
    mse,
    persistence,
    write_metric_csv,
)
from .reference import REPORTED_PARAM_COUNTS, reference_run_records
from .report import (
    RunRecord,
    bundle_text,
    read_run_records,
    render_report,
    write_report,
    write_run_records,
)
from .seqz import read_seqz
from .telemetry import parse_power_log, summarize_power_log
from .training import (
    SweepSpec,
    TrainConfig,
    forecast_windows,
    run_sweep,
    save_weights,
    train_model,
)
from .unet import count_params, estimate_memory, fits, parse_name


def _parse_velocity(text):
    try:
        vx, vy = (float(v) for v in text.split(","))
    except ValueError:
        raise ContractViolation(f"velocity must be 'vx,vy', got {text!r}") from None
    return (vx, vy)


def cmd_gen_data(args):
    spec = AdvectionSpec(
        height=args.hw, width=args.hw, frames=args.frames, n_blobs=args.blobs,
        velocity=_parse_velocity(args.velocity), amplitude=args.amplitude,
        sigma=args.sigma, decay=args.decay,
    )
    events = generate_events(spec, args.events, args.seed)
    paths = save_events(args.out, events)
    print(f"wrote {len(paths)} events ({args.frames}x{args.hw}x{args.hw}) to {args.out}")


def _write_history_csv(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "seconds", "skipped_steps", "loss_scale"])
        for i, e in enumerate(history, start=1):
            writer.writerow(
                [i, f"{e.mean_loss:.8g}", f"{e.seconds:.4f}", e.skipped_steps,
                 "" if e.loss_scale is None else f"{e.loss_scale:g}"]
            )


def cmd_train(args):
    events = load_events(args.data)
    windows = windows_from_events(events)
    cfg = TrainConfig(
        model=args.model, epochs=args.epochs, batch_size=args.batch,
        lr=args.lr, precision=args.precision, workers=args.workers,
        seed=args.seed,
    )
    result = train_model(cfg, windows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    _write_history_csv(out / "history.csv", result.history)
    save_weights(result.graph, out / "weights")
    figures.save_loss_curves(
        {f"{args.model} {args.precision}": [e.mean_loss for e in result.history]},
        out / "loss_curve.png",
    )

    record = RunRecord(
        model=args.model, precision=args.precision, batch=args.batch,
        mean_epoch_s=result.mean_epoch_seconds,
    )
    write_run_records(out / "runs.csv", [record])

    summary = {
        "model": args.model,
        "precision": args.precision,
        "batch": args.batch,
        "epochs": args.epochs,
        "workers": args.workers,
        "seed": args.seed,
        "lr": args.lr,
        "final_mean_loss": result.history[-1].mean_loss,
        "mean_epoch_s": result.mean_epoch_seconds,
        "skipped_steps": result.total_skipped,
        "final_loss_scale": result.scaler.scale if result.scaler else None,
    }
    if args.test_data:
        test_windows = windows_from_events(load_events(args.test_data))
        preds, truths = forecast_windows(result.graph, test_windows)
        persist = np.stack([persistence(w.input) for w in test_windows])
        summary["test_mse"] = mse(preds, truths)
        summary["persistence_mse"] = mse(persist, truths)
    (out / "run.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(
        f"trained {args.model} [{args.precision}] final loss "
        f"{summary['final_mean_loss']:.6g}, mean epoch "
        f"{summary['mean_epoch_s']:.2f}s, skipped {summary['skipped_steps']} steps"
    )
    if "test_mse" in summary:
        print(
            f"test MSE {summary['test_mse']:.4f} vs persistence "
            f"{summary['persistence_mse']:.4f}"
        )


def _load_forecast_dir(dir_path):
    paths = sorted(Path(dir_path).glob("*.seqz"))
    if not paths:
        raise ContractViolation(f"no .seqz files found in {dir_path}")
    stacks = []
    for p in paths:
        arr = read_seqz(p)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.ndim != 4:
            raise ContractViolation(
                f"{p}: forecast files must be (12,H,W) or (S,12,H,W), got rank {arr.ndim}"
            )
        if stacks and arr.shape[1:] != stacks[0].shape[1:]:
            raise ContractViolation(
                f"{p}: forecast shape {arr.shape[1:]} differs from "
                f"{stacks[0].shape[1:]} in earlier files"
            )
        stacks.append(arr)
    return np.concatenate(stacks), [str(p) for p in paths]


def cmd_eval(args):
    preds, pred_names = _load_forecast_dir(args.pred)
    truths, truth_names = _load_forecast_dir(args.truth)
    if preds.shape != truths.shape:
        raise ContractViolation(
            f"prediction stack {preds.shape} does not match truth stack {truths.shape}"
        )
    try:
        thresholds = tuple(int(t) for t in args.thresholds.split(","))
    except ValueError:
        raise ContractViolation(
            f"--thresholds must be comma-separated integers, got {args.thresholds!r}"
        ) from None
    report = evaluate_forecast_set(preds, truths, thresholds)
    out = Path(args.out)
    write_metric_csv(report, out)
    if not args.no_figures:
        figures.save_lead_time_curves(report, out.with_suffix(".png"))
    print(
        f"scored {preds.shape[0]} forecasts at thresholds {list(thresholds)}: "
        f"overall MSE {report.overall_mse:.4f} -> {out}"
    )


def _print_cost(report, budget):
    rows = [
        ("model", report.model),
        ("batch", report.batch),
        ("precision", report.precision),
        ("trainable params", f"{report.trainable_param_count:,}"),
        ("total params", f"{report.total_param_count:,}"),
        ("forward GFLOPs/sample", f"{report.forward_flops_per_sample / 1e9:.3f}"),
        ("weight bytes", f"{report.weight_bytes:,}"),
        ("activation bytes", f"{report.activation_bytes:,}"),
        ("gradient bytes", f"{report.gradient_bytes:,}"),
        ("optimizer state bytes", f"{report.optimizer_state_bytes:,}"),
        ("total bytes", f"{report.total_bytes:,}"),
    ]
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k.ljust(width)}  {v}")
    if budget is not None:
        verdict = "fits" if fits(report, budget) else "does NOT fit"
        print(f"{'budget'.ljust(width)}  {budget:,} bytes -> {verdict}")


def cmd_cost(args):
    if args.param_table:
        rows = []
        for name, reported in REPORTED_PARAM_COUNTS.items():
            cfg = parse_name(name)
            counted_tr, counted_total = count_params(cfg)
            rows.append((name, counted_tr, counted_total, reported, reported / counted_tr))
        header = ["model", "counted_trainable", "counted_total", "reported", "reported/counted"]
        print("  ".join(header))
        for name, tr, tot, rep, ratio in rows:
            print(f"{name:>7}  {tr:>17,}  {tot:>13,}  {rep:>13,}  {ratio:>16.2f}")
        if args.csv:
            with open(args.csv, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                for name, tr, tot, rep, ratio in rows:
                    writer.writerow([name, tr, tot, rep, f"{ratio:.4f}"])
            print(f"wrote {args.csv}")
        return

    config = parse_name(args.model, height=args.hw, width=args.hw, kernel=args.kernel)
    report = estimate_memory(config, args.batch, args.precision)
    _print_cost(report, args.budget_bytes)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["model", "batch", "precision", "trainable_params", "total_params",
                 "forward_flops_per_sample", "weight_bytes", "activation_bytes",
                 "gradient_bytes", "optimizer_state_bytes", "total_bytes"]
            )
            writer.writerow(
                [report.model, report.batch, report.precision,
                 report.trainable_param_count, report.total_param_count,
                 report.forward_flops_per_sample, report.weight_bytes,
                 report.activation_bytes, report.gradient_bytes,
                 report.optimizer_state_bytes, report.total_bytes]
            )
        print(f"wrote {args.csv}")


def cmd_sweep(args):
    events = load_events(args.data)
    windows = windows_from_events(events)
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    precisions = [p.strip() for p in args.precisions.split(",") if p.strip()]
    batches = [int(b) for b in args.batches.split(",")]
    cells = tuple(
        (m, p, b) for m in models for p in precisions for b in batches
    )
    spec = SweepSpec(
        cells=cells, epochs=args.epochs, seed=args.seed, lr=args.lr,
        workers=args.workers, skip_on_infeasible=args.skip_infeasible,
        budget_bytes=args.budget_bytes,
    )
    results = run_sweep(spec, windows)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    completed = [r.record for r in results if r.status == "completed"]
    write_run_records(out / "runs.csv", completed)
    with open(out / "cells.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "precision", "batch", "status", "detail"])
        for r in results:
            writer.writerow([r.model, r.precision, r.batch, r.status, r.detail])
    for r in results:
        if r.history:
            _write_history_csv(
                out / f"history_{r.model}_{r.precision}_b{r.batch}.csv", r.history
            )
    by_status = {}
    for r in results:
        by_status[r.status] = by_status.get(r.status, 0) + 1
    print(f"sweep finished: {dict(sorted(by_status.items()))} -> {out}")


def cmd_report(args):
    if args.use_reference:
        records = reference_run_records()
        param_counts = REPORTED_PARAM_COUNTS
    else:
        if not args.runs:
            raise ContractViolation("report needs --runs RUNS.csv or --use-reference")
        records = read_run_records(args.runs)
        param_counts = None
        if args.params_csv:
            param_counts = {}
            with open(args.params_csv, newline="") as fh:
                for row in csv.DictReader(fh):
                    param_counts[row["model"]] = int(row["params"])
    bundle = render_report(records, args.baseline, param_counts=param_counts)
    paths = write_report(bundle, args.out)
    out = Path(args.out)
    if not args.no_figures:
        if bundle.timing_rows:
            figures.save_speedup_bars(bundle.timing_rows, out / "speedup.png")
        if bundle.energy_rows:
            figures.save_energy_reduction_bars(bundle.energy_rows, out / "energy_reduction.png")
        if len(bundle.relative_rows) > 1:
            figures.save_relative_bars(bundle.relative_rows, args.baseline,
                                       out / "relative_cost.png")
    print(bundle_text(bundle))
    print(f"report written to {paths['text'].parent}")


def cmd_ingest_telemetry(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    all_samples = {}
    reports = {}
    for log in args.log:
        samples = parse_power_log(log)
        all_samples[Path(log).name] = samples
        reports[Path(log).name] = summarize_power_log(samples)

    with open(out / "energy.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["log", "energy_j", "avg_sm", "max_sm", "avg_mem", "max_mem",
             "samples", "duration_s"]
        )
        total = 0.0
        for name, rep in reports.items():
            writer.writerow(
                [name, f"{rep.energy_joules:.4f}", f"{rep.avg_sm_util:.2f}",
                 f"{rep.max_sm_util:.2f}", f"{rep.avg_mem_util:.2f}",
                 f"{rep.max_mem_util:.2f}", rep.sample_count, f"{rep.duration_s:.3f}"]
            )
            total += rep.energy_joules
        if len(reports) > 1:
            # Multiple logs (one per device) sum to the run's total energy.
            writer.writerow(["TOTAL", f"{total:.4f}", "", "", "", "", "", ""])
    if not args.no_figures:
        figures.save_power_timeline(all_samples, out / "power.png")
    for name, rep in reports.items():
        print(
            f"{name}: {rep.energy_joules:.1f} J over {rep.duration_s:.1f} s, "
            f"avg SM {rep.avg_sm_util:.1f}%, avg mem {rep.avg_mem_util:.1f}%"
        )
    if len(reports) > 1:
        print(f"TOTAL: {total:.1f} J")
    print(f"telemetry summary -> {out / 'energy.csv'}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nowcastamp",
        description="Mixed-precision U-Net nowcasting benchmark toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic advection events")
    p.add_argument("--out", required=True)
    p.add_argument("--events", type=int, default=64)
    p.add_argument("--hw", type=int, default=64)
    p.add_argument("--frames", type=int, default=49)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--blobs", type=int, default=3)
    p.add_argument("--velocity", default="2,0", help="vx,vy pixels/frame")
    p.add_argument("--amplitude", type=float, default=180.0)
    p.add_argument("--sigma", type=float, default=4.0)
    p.add_argument("--decay", type=float, default=0.02)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one model on an event directory")
    p.add_argument("--data", required=True)
    p.add_argument("--model", default="U2-8")
    p.add_argument("--precision", choices=("fp32", "amp"), default="fp32")
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--out", required=True)
    p.add_argument("--test-data", default=None,
                   help="held-out event dir; adds test vs persistence MSE to run.json")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score forecast SEQZ files against truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--thresholds", default=",".join(str(t) for t in VIP_THRESHOLDS))
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cost", help="analytical parameter/FLOP/memory model")
    p.add_argument("--model", default="U4-32")
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--precision", choices=("fp32", "amp"), default="fp32")
    p.add_argument("--hw", type=int, default=384)
    p.add_argument("--kernel", type=int, default=3)
    p.add_argument("--budget-bytes", type=int, default=None)
    p.add_argument("--csv", default=None)
    p.add_argument("--param-table", action="store_true",
                   help="print counted vs reported parameter counts for the whole family")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("sweep", help="train a model x precision x batch grid")
    p.add_argument("--data", required=True)
    p.add_argument("--models", required=True, help="comma-separated, e.g. U2-8,U2-16")
    p.add_argument("--precisions", default="fp32,amp")
    p.add_argument("--batches", default="8")
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--budget-bytes", type=int, default=None)
    p.add_argument("--skip-infeasible", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="comparison tables + figures from run records")
    p.add_argument("--runs", default=None)
    p.add_argument("--baseline", default="U4-32")
    p.add_argument("--params-csv", default=None,
                   help="CSV with model,params columns overriding analytic counts")
    p.add_argument("--use-reference", action="store_true",
                   help="report on the bundled published V100 measurements")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("ingest-telemetry", help="energy/utilization from power logs")
    p.add_argument("--log", action="append", required=True,
                   help="power log CSV; repeat for multiple devices")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_ingest_telemetry)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SeqzFormatError, PowerLogError, RunRecordError, ModelNameError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
