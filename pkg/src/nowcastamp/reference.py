"""Published V100 benchmark measurements for the U-Net family.

These are the reference numbers from the original large-scale study this
toolkit characterizes: reported trainable-parameter counts, mean epoch
times, energy totals, and DCGM utilization statistics per model and
precision. They are hardware measurements, not reproducible on a CPU; the
toolkit uses them as fixtures to validate its report arithmetic and as a
ready-made demo input for the report command (`report --use-reference`).

Batch sizes follow the published "fp32/amp" convention when the two
precisions used different batches.
"""

# Model -> reported trainable parameter count.
REPORTED_PARAM_COUNTS = {
    "U3-32": 12_062_476,
    "U3-64": 16_496_140,
    "U3-128": 30_807_052,
    "U3-256": 81_203_212,
    "U4-32": 16_556_044,
    "U4-64": 31_053_836,
    "U4-128": 82_204_684,
    "U4-256": 273_127_436,
    "U5-32": 31_113_740,
    "U5-64": 82_451_468,
    "U5-128": 274_128_908,
    "U5-256": 1_013_491_724,
    "U6-32": 82_511_372,
    "U6-64": 274_375_692,
}

# Model -> reported "% increase over the U{d}-32 of its depth family".
REPORTED_PARAM_INCREASE_PCT = {
    "U3-64": 36.75,
    "U3-128": 155.39,
    "U3-256": 573.18,
    "U4-64": 87.56,
    "U4-128": 396.52,
    "U4-256": 1549.71,
    "U5-64": 165.00,
    "U5-128": 781.05,
    "U5-256": 3157.37,
    "U6-64": 232.5,
}

# Model -> (batch_fp32, batch_amp, mean epoch seconds fp32, amp, published
# speedup %). The published speedup column mixes two definitions across
# rows; both are recomputed by the report path.
EPOCH_TIMES = {
    "U3-32": (48, 48, 179.093, 140.338, 21.63),
    "U3-64": (16, 32, 277.04, 191.588, 30.84),
    "U3-128": (16, 16, 570.643, 339.558, 40.49),
    "U3-256": (8, 8, 1853.6725, 821.852, 125.54),
    "U4-32": (32, 32, 173.485, 137.725, 25.96),
    "U4-64": (16, 32, 295.35, 194.518, 34.14),
    "U4-128": (8, 8, 749.98, 417.005, 44.39),
    "U4-256": (4, 8, 2537.88, 1121.4, 55.81),
    "U5-32": (32, 32, 176.50, 139.26, 21.10),
    "U5-64": (16, 32, 325.10, 210.21, 35.34),
    "U5-128": (8, 16, 1045.185, 520.845, 100.67),
    "U6-32": (4, 4, 392.87, 345.86, 13.59),
    "U6-64": (4, 4, 1106.48, 562.92, 95.55),
}

# Model -> (avg SM util %, max mem-bandwidth util %, avg mem util %,
# energy J) per precision.
GPU_USAGE = {
    "U3-32": {"fp32": (61.5, 40.5, 90.5, 991_870.0), "amp": (55.0, 34.0, 84.0, 834_312.0)},
    "U3-64": {"fp32": (78.0, 49.0, 75.0, 1_169_834.0), "amp": (67.0, 42.0, 90.5, 1_026_087.0)},
    "U3-128": {"fp32": (89.5, 49.5, 76.5, 1_318_431.0), "amp": (81.5, 44.0, 76.5, 1_255_385.0)},
    "U3-256": {"fp32": (96.0, 38.0, 100.0, 1_540_444.0), "amp": (94.0, 37.0, 59.5, 1_428_421.0)},
    "U4-32": {"fp32": (64.5, 40.0, 84.0, 959_247.0), "amp": (59.0, 34.0, 75.5, 826_726.0)},
    "U4-64": {"fp32": (77.0, 48.0, 75.0, 1_163_470.0), "amp": (70.5, 42.5, 87.0, 1_057_388.0)},
    "U4-128": {"fp32": (91.0, 62.0, 84.5, 1_416_633.0), "amp": (88.5, 39.0, 62.5, 1_255_483.0)},
    "U4-256": {"fp32": (93.0, 73.5, 100.0, 1_474_127.0), "amp": (94.5, 32.0, 59.5, 1_349_416.0)},
    "U5-32": {"fp32": (63.0, 41.0, 83.5, 951_037.0), "amp": (58.0, 34.0, 74.0, 815_611.0)},
    "U5-64": {"fp32": (80.5, 47.0, 75.0, 1_156_716.0), "amp": (71.5, 41.0, 83.5, 1_098_744.0)},
    "U5-128": {"fp32": (93.0, 54.0, 95.0, 1_307_724.0), "amp": (88.0, 34.5, 73.5, 1_179_121.0)},
    "U6-32": {"fp32": (67.5, 66.0, 28.0, 740_556.0), "amp": (62.0, 65.0, 26.0, 538_298.0)},
    "U6-64": {"fp32": (94.0, 64.5, 26.0, 796_253.0), "amp": (89.0, 58.0, 20.5, 691_416.0)},
}


def reference_run_records():
    """The published measurements as RunRecord rows (two per model)."""
    from .report import RunRecord

    records = []
    for model, (b32, bamp, t32, tamp, _pub) in EPOCH_TIMES.items():
        usage = GPU_USAGE[model]
        for precision, batch, t in (("fp32", b32, t32), ("amp", bamp, tamp)):
            avg_sm, max_mem, avg_mem, energy = usage[precision]
            records.append(
                RunRecord(
                    model=model,
                    precision=precision,
                    batch=batch,
                    mean_epoch_s=t,
                    energy_j=energy,
                    avg_sm=avg_sm,
                    max_mem_util=max_mem,
                    avg_mem=avg_mem,
                )
            )
    return records
