"""Desk-scale mixed-precision U-Net nowcasting benchmark toolkit.

Trains parameterized encoder-decoder networks under emulated FP16/FP32
mixed precision, verifies nowcast-style forecasts, models compute and
memory cost analytically, and reduces telemetry logs into time/energy
comparison reports.
"""

from .amp import LossScaler, PrecisionPolicy, scale_loss, unscale_and_check, update_scale
from .data import AdvectionSpec, EventSequence, SampleWindow, batch_iter, synth_advect, window_event
from .errors import ContractViolation
from .gradcheck import grad_check
from .halffloat import cast_down, cast_up
from .metrics import (
    VIP_THRESHOLDS,
    ContingencyTable,
    MetricReport,
    accumulate,
    binarize,
    evaluate_forecast_set,
    mse,
    persistence,
    scores,
)
from .optim import AdamState, adam_step
from .report import RunRecord, read_run_records, render_report, write_run_records
from .seqz import read_seqz, write_seqz
from .telemetry import (
    EnergyReport,
    PowerSample,
    energy_reduction_pct,
    integrate_energy,
    parse_power_log,
    percent_reduction,
    relative_increase_pct,
    speedup_ratio_pct,
    util_stats,
)
from .tensor import Dtype, Tensor, mixed_mac
from .training import (
    SweepSpec,
    TrainConfig,
    allreduce_mean,
    forecast,
    init_params,
    run_sweep,
    train_model,
)
from .unet import CostReport, UNetConfig, build, count_flops, count_params, estimate_memory, fits, parse_name

__version__ = "0.1.0"
