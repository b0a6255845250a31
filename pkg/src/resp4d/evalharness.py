"""Parameter sweeps and search-strategy timing comparisons."""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, replace
from pathlib import Path

from .imgcore import Dataset
from .matcher import CCOEFF_NORMED, CCORR_NORMED
from .reconstructor import (
    BASELINE_METHOD,
    UPDATING_METHOD,
    ReconstructionConfig,
    reconstruct,
)
from .tracker import RoiSpec

DEFAULT_THRESHOLDS = (0.5, 1.0, 2.0)
DEFAULT_MEASURES = (CCORR_NORMED, CCOEFF_NORMED)
DEFAULT_REFERENCES = (1, 2)
DEFAULT_METHODS = (BASELINE_METHOD, UPDATING_METHOD)


@dataclass
class SweepCell:
    reference: int
    method: str
    measure: str
    threshold_px: float
    rate: float
    matches: int
    widened: int
    seconds: float


def sweep(
    dataset: Dataset,
    rois: RoiSpec,
    thresholds=DEFAULT_THRESHOLDS,
    measures=DEFAULT_MEASURES,
    references=DEFAULT_REFERENCES,
    methods=DEFAULT_METHODS,
    base_config: ReconstructionConfig | None = None,
) -> list[SweepCell]:
    """One reconstruction per grid cell, cells run sequentially.

    The grid is the full cross of references x methods x measures x
    thresholds, in that nesting order.
    """
    base = base_config or ReconstructionConfig()
    cells = []
    for reference in references:
        for method in methods:
            for measure in measures:
                for threshold in thresholds:
                    config = replace(
                        base,
                        reference=reference,
                        method=method,
                        measure=measure,
                        threshold_px=threshold,
                    )
                    _, report = reconstruct(dataset, rois, config)
                    cells.append(
                        SweepCell(
                            reference=reference,
                            method=method,
                            measure=measure,
                            threshold_px=threshold,
                            rate=report.reconstruction_rate,
                            matches=sum(report.per_sequence_matches.values()),
                            widened=report.widened_count,
                            seconds=report.seconds,
                        )
                    )
    return cells


def write_rates_csv(cells: list[SweepCell], path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["reference", "method", "measure", "threshold_px", "rate_percent", "matches", "widened", "seconds"]
        )
        for c in cells:
            writer.writerow(
                [c.reference, c.method, c.measure, c.threshold_px,
                 f"{c.rate:.4f}", c.matches, c.widened, f"{c.seconds:.3f}"]
            )


@dataclass
class TimingComparison:
    full_seconds: float  # median over runs
    region_seconds: float
    speedup: float
    decisions_identical: bool
    widened_region: int
    full_runs: list[float]
    region_runs: list[float]


def compare_timing(
    dataset: Dataset,
    rois: RoiSpec,
    config: ReconstructionConfig | None = None,
    runs: int = 3,
) -> TimingComparison:
    """Time region-restricted search against full-frame search.

    Both variants run the same method on the same in-memory dataset (load time
    is excluded by construction); per-variant time is the median of ``runs``
    repeats.  Decisions are compared so callers can confirm the region
    restriction changed nothing but speed.
    """
    base = config or ReconstructionConfig()
    region_config = base
    full_config = replace(base, search_radius=None)

    def run(cfg):
        times = []
        last = None
        for _ in range(runs):
            _, report = reconstruct(dataset, rois, cfg)
            times.append(report.seconds)
            last = report
        return statistics.median(times), times, last

    full_med, full_times, full_rep = run(full_config)
    region_med, region_times, region_rep = run(region_config)

    key = lambda d: (d.sequence_index, d.reference_timepoint, d.data_frame_index, d.accepted)
    identical = list(map(key, full_rep.decisions)) == list(map(key, region_rep.decisions))
    return TimingComparison(
        full_seconds=full_med,
        region_seconds=region_med,
        speedup=full_med / region_med,
        decisions_identical=identical,
        widened_region=region_rep.widened_count,
        full_runs=full_times,
        region_runs=region_times,
    )


def write_timing_csv(comparison: TimingComparison, path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "run", "seconds", "median_seconds", "speedup"])
        for variant, times, median in (
            ("full_frame", comparison.full_runs, comparison.full_seconds),
            ("region", comparison.region_runs, comparison.region_seconds),
        ):
            for i, t in enumerate(times):
                writer.writerow([variant, i, f"{t:.4f}", f"{median:.4f}", f"{comparison.speedup:.3f}"])
