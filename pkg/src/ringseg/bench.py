"""Per-frame wall-clock benchmark of the proposal pipeline.

Timing is observational: the benchmark re-runs the identical pipeline and
reports median/p95 per stage, so its outputs always equal an untimed run.
A warm-up iteration (which also absorbs JIT compilation) is excluded from
the statistics. The kernel backend can be forced per run, which the CLI
uses to compare the compiled and pure-numpy paths on the same frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .cloud import PointCloud
from .pipeline import Stage1Result, run_stage1

STAGES = ("ground", "cluster", "refine", "total")


@dataclass(frozen=True)
class TimingReport:
    backend: str
    repetitions: int
    points_in: int
    proposals_out: int
    points_passed: int
    median_us: dict[str, float]
    p95_us: dict[str, float]

    def to_record(self) -> dict:
        rec: dict = {
            "backend": self.backend,
            "reps": self.repetitions,
            "points_in": self.points_in,
            "proposals": self.proposals_out,
            "points_passed": self.points_passed,
        }
        for stage in STAGES:
            rec[f"{stage}_us_med"] = round(self.median_us[stage], 1)
            rec[f"{stage}_us_p95"] = round(self.p95_us[stage], 1)
        return rec


def benchmark_stage1(
    cloud: PointCloud,
    ground_params,
    cluster_params,
    refine_params,
    num_rings: int,
    repetitions: int = 10,
    backend: str | None = None,
) -> tuple[TimingReport, Stage1Result]:
    """Run the pipeline repetitions times and aggregate per-stage timings.

    Returns the report plus the (identical across runs) pipeline result.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    previous = kernels.select_backend(backend) if backend else None
    try:
        args = (ground_params, cluster_params, refine_params, num_rings)
        result = run_stage1(cloud, *args)  # warm-up, excluded
        samples = {stage: [] for stage in STAGES}
        for _ in range(repetitions):
            timings: dict = {}
            result = run_stage1(cloud, *args, timings=timings)
            for stage in STAGES:
                samples[stage].append(timings[stage] * 1e6)
        report = TimingReport(
            backend=kernels.active_backend(),
            repetitions=repetitions,
            points_in=result.points_in,
            proposals_out=len(result.proposals),
            points_passed=result.points_passed,
            median_us={s: float(np.median(samples[s])) for s in STAGES},
            p95_us={s: float(np.percentile(samples[s], 95)) for s in STAGES},
        )
        return report, result
    finally:
        if previous:
            kernels.select_backend(previous)
