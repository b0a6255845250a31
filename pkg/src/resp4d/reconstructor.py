"""Sort matched data frames into a time-resolved (4D) volume.

For every eligible reference timepoint (all but the boundary frames) each
interleaved sequence contributes the data frames whose enclosing navigators
agree with the timepoint's breathing state.  Matched frames are averaged
pixelwise per slice position, slices are stacked in ascending position order,
and empty bins are recorded in a completeness map and stored black.

Which templates face the interleaved navigators depends on the method: the
updating method localizes with the template set of the specific reference
frame being compared (so template appearance is state-aligned on both sides),
the baseline uses the frame-0 set everywhere.  A config switch exposes the
cheaper frame-0 behaviour for the updating method as well.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .criterion import AGGREGATIONS, AGG_SUM, DisplacementSummary, MatchDecision
from .errors import ValidationError
from .imgcore import Dataset, InterleavedSequence, quantize_u16
from .matcher import MEASURES, CCOEFF_NORMED
from .tracker import (
    DEFAULT_MIN_SCORE,
    DEFAULT_SEARCH_RADIUS,
    FIXED,
    UPDATING,
    RoiSpec,
    TemplateSet,
    TrackTrace,
    locate_in_navigator,
    track_reference,
)

BASELINE_METHOD = "baseline"
UPDATING_METHOD = "updating"
METHODS = (BASELINE_METHOD, UPDATING_METHOD)

SOURCE_MATCHED_FRAME = "matched_reference_frame"
SOURCE_INITIAL = "initial"
TEMPLATE_SOURCES = (SOURCE_MATCHED_FRAME, SOURCE_INITIAL)


@dataclass
class ReconstructionConfig:
    reference: int = 1
    method: str = UPDATING_METHOD
    measure: str = CCOEFF_NORMED
    threshold_px: float = 1.0
    search_radius: int | None = DEFAULT_SEARCH_RADIUS  # None searches the full frame
    min_score: float = DEFAULT_MIN_SCORE
    aggregation: str = AGG_SUM
    interleaved_template_source: str = SOURCE_MATCHED_FRAME
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.reference not in (1, 2):
            raise ValidationError(f"reference must be 1 or 2, got {self.reference!r}")
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.measure not in MEASURES:
            raise ValidationError(f"measure must be one of {MEASURES}, got {self.measure!r}")
        if self.threshold_px < 0:
            raise ValidationError(f"threshold must be non-negative, got {self.threshold_px}")
        if self.search_radius is not None and self.search_radius < 1:
            raise ValidationError(f"search radius must be >= 1 or None, got {self.search_radius}")
        if self.aggregation not in AGGREGATIONS:
            raise ValidationError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")
        if self.interleaved_template_source not in TEMPLATE_SOURCES:
            raise ValidationError(
                f"interleaved template source must be one of {TEMPLATE_SOURCES}, "
                f"got {self.interleaved_template_source!r}"
            )
        if self.jobs < 1:
            raise ValidationError(f"jobs must be >= 1, got {self.jobs}")


@dataclass
class SliceBin:
    reference_timepoint: int
    slice_position_mm: float
    frame_indices: list[int]  # data-frame ordinals within the sequence
    averaged: np.ndarray | None  # float64 (H, W), None when the bin is empty


@dataclass
class Volume4D:
    timepoints: list[int]
    slice_positions_mm: list[float]
    voxels: np.ndarray  # (n_timepoints, n_slices, H, W) float64
    completeness: np.ndarray  # (n_timepoints, n_slices) bool
    voxel_spacing_mm: tuple[float, float, float]  # (row, column, slice step)
    bins: list[SliceBin] = field(default_factory=list)


@dataclass
class ReconstructionReport:
    reconstruction_rate: float  # percent of (eligible timepoint, slice) cells filled
    per_sequence_matches: dict[int, int]
    sequence_slice_mm: dict[int, float]  # acquisition index -> slice position
    missing: dict[int, list[float]]  # timepoint -> slice positions left empty
    widened_count: int
    seconds: float
    config: ReconstructionConfig
    decisions: list[MatchDecision] = field(default_factory=list)


def average_bin(frames) -> np.ndarray:
    """Pixelwise double-precision mean of a non-empty list of frames."""
    if not frames:
        raise ValueError("cannot average an empty bin")
    arrays = [np.asarray(getattr(f, "pixels", f), dtype=np.float64) for f in frames]
    return np.mean(np.stack(arrays), axis=0)


def _locate_chain(
    seq: InterleavedSequence,
    templates: list,
    measure: str,
    radius: int | None,
    min_score: float,
) -> tuple[np.ndarray, int]:
    """Localize every navigator of a sequence, chaining priors nav to nav."""
    navs = seq.navigators()
    pos = np.zeros((len(navs), len(templates), 2))
    widened = 0
    prior = None
    for n, nav in enumerate(navs):
        results = locate_in_navigator(nav, templates, prior, measure, radius, min_score)
        for v, res in enumerate(results):
            pos[n, v] = res.position
            widened += int(res.widened)
        prior = [res.position for res in results]
    return pos, widened


def _magnitudes(ref_xy: np.ndarray, nav_xy: np.ndarray) -> np.ndarray:
    d = ref_xy - nav_xy
    return np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1])


def _displacement_tables(
    dataset: Dataset,
    trace: TrackTrace,
    sets: list[TemplateSet],
    config: ReconstructionConfig,
) -> tuple[list[np.ndarray], int]:
    """Per-vessel displacement D[s][r, n, v] between reference navigator r and
    navigator n of interleaved sequence s."""
    seqs = dataset.interleaved
    n_ref = trace.n_frames
    per_frame_sets = (
        config.method == UPDATING_METHOD
        and config.interleaved_template_source == SOURCE_MATCHED_FRAME
    )
    widened = 0
    if per_frame_sets:
        located: dict[tuple[int, int], np.ndarray] = {}
        tasks = [(r, s) for r in range(n_ref) for s in range(len(seqs))]

        def run(task):
            r, s = task
            return task, _locate_chain(
                seqs[s], sets[r].templates, config.measure, config.search_radius, config.min_score
            )

        if config.jobs > 1:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                outcomes = list(pool.map(run, tasks))
        else:
            outcomes = [run(t) for t in tasks]
        for (r, s), (pos, wid) in outcomes:
            located[(r, s)] = pos
            widened += wid
        tables = []
        for s, seq in enumerate(seqs):
            n_navs = len(seq.navigators())
            table = np.zeros((n_ref, n_navs, len(trace.labels)))
            for r in range(n_ref):
                table[r] = _magnitudes(trace.positions[r][None, :, :], located[(r, s)])
            tables.append(table)
    else:
        base = sets[0].templates
        chains = []

        def run0(s):
            return _locate_chain(seqs[s], base, config.measure, config.search_radius, config.min_score)

        if config.jobs > 1:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                chains = list(pool.map(run0, range(len(seqs))))
        else:
            chains = [run0(s) for s in range(len(seqs))]
        tables = []
        for s, (pos, wid) in enumerate(chains):
            widened += wid
            # trace (r, v, 2) against navigators (n, v, 2) -> (r, n, v)
            tables.append(_magnitudes(trace.positions[:, None, :, :], pos[None, :, :, :]))
    return tables, widened


def reconstruct(
    dataset: Dataset, rois: RoiSpec, config: ReconstructionConfig | None = None
) -> tuple[Volume4D, ReconstructionReport]:
    """Run the full pipeline on an in-memory dataset."""
    config = config or ReconstructionConfig()
    t0 = time.perf_counter()
    ref = dataset.reference(config.reference)
    n_ref = len(ref.frames)
    if n_ref < 3:
        raise ValidationError("reference sequence too short: no eligible timepoints")

    mode = UPDATING if config.method == UPDATING_METHOD else FIXED
    radius = None if config.method == BASELINE_METHOD else config.search_radius
    trace, sets = track_reference(ref, rois, config.measure, radius, mode, config.min_score)
    widened = int(trace.widened.sum())

    tables, loc_widened = _displacement_tables(dataset, trace, sets, config)
    widened += loc_widened

    n_vessels = len(rois)
    seqs = dataset.interleaved
    eligible = list(range(1, n_ref - 1))
    decisions: list[MatchDecision] = []
    accepted_masks = []
    for s, seq in enumerate(seqs):
        table = tables[s]  # (n_ref, n_navs, V)
        sums = table.sum(axis=2)  # (n_ref, n_navs)
        n_data = len(seq.data_frames())
        # totals[i - 1, k] pairs timepoint i with data frame ordinal 2k + 1
        totals = sums[:-2, :n_data] + sums[2:, 1 : n_data + 1]
        values = totals if config.aggregation == AGG_SUM else totals / (2 * n_vessels)
        accepted = values < config.threshold_px
        accepted_masks.append(accepted)
        for idx_i, i in enumerate(eligible):
            for k in range(n_data):
                decisions.append(
                    MatchDecision(
                        reference_timepoint=i,
                        sequence_index=s,
                        data_frame_index=2 * k + 1,
                        summary=DisplacementSummary(
                            preceding=table[i - 1, k].copy(),
                            following=table[i + 1, k + 1].copy(),
                            total=float(totals[idx_i, k]),
                        ),
                        threshold=config.threshold_px,
                        aggregation=config.aggregation,
                        accepted=bool(accepted[idx_i, k]),
                    )
                )

    order = np.argsort([seq.data_slice_position_mm for seq in seqs], kind="stable")
    slice_positions = [float(seqs[s].data_slice_position_mm) for s in order]
    h, w = dataset.frame_shape
    voxels = np.zeros((len(eligible), len(seqs), h, w))
    completeness = np.zeros((len(eligible), len(seqs)), dtype=bool)
    bins: list[SliceBin] = []
    for idx_i, i in enumerate(eligible):
        for si, s in enumerate(order):
            seq = seqs[s]
            ks = np.nonzero(accepted_masks[s][idx_i])[0]
            indices = [2 * int(k) + 1 for k in ks]
            averaged = None
            if indices:
                averaged = average_bin([seq.frames[d].pixels for d in indices])
                voxels[idx_i, si] = averaged
                completeness[idx_i, si] = True
            bins.append(
                SliceBin(
                    reference_timepoint=i,
                    slice_position_mm=slice_positions[si],
                    frame_indices=indices,
                    averaged=averaged,
                )
            )

    volume = Volume4D(
        timepoints=eligible,
        slice_positions_mm=slice_positions,
        voxels=voxels,
        completeness=completeness,
        voxel_spacing_mm=(
            dataset.in_plane_spacing_mm[0],
            dataset.in_plane_spacing_mm[1],
            dataset.slice_gap_mm,
        ),
        bins=bins,
    )
    per_sequence = {
        s: int(accepted_masks[s].sum()) for s in range(len(seqs))
    }
    missing = {}
    for idx_i, i in enumerate(eligible):
        empty = [slice_positions[si] for si in range(len(seqs)) if not completeness[idx_i, si]]
        if empty:
            missing[i] = empty
    report = ReconstructionReport(
        reconstruction_rate=100.0 * completeness.sum() / completeness.size,
        per_sequence_matches=per_sequence,
        sequence_slice_mm={s: float(seq.data_slice_position_mm) for s, seq in enumerate(seqs)},
        missing=missing,
        widened_count=widened,
        seconds=time.perf_counter() - t0,
        config=config,
        decisions=decisions,
    )
    return volume, report


# --- persistence ------------------------------------------------------------


def save_reconstruction(volume: Volume4D, report: ReconstructionReport, out_dir: Path | str) -> Path:
    """Write the output directory: manifest, per-timepoint stacks, report, audits.

    Wall-clock timing is deliberately not serialized so identical runs produce
    bit-identical directories; it stays available on the in-memory report.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    stack_names = []
    for idx_i, i in enumerate(volume.timepoints):
        name = f"t{i:04d}.u16le"
        stack_names.append(name)
        (out / name).write_bytes(quantize_u16(volume.voxels[idx_i]).astype("<u2").tobytes())

    h, w = volume.voxels.shape[2:]
    manifest = {
        "timepoints": volume.timepoints,
        "slice_positions_mm": volume.slice_positions_mm,
        "frame_shape": [h, w],
        "voxel_spacing_mm": list(volume.voxel_spacing_mm),
        "completeness": volume.completeness.tolist(),
        "stacks": stack_names,
        "config": asdict(report.config),
    }
    (out / "volume4d.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    report_obj = {
        "reconstruction_rate": report.reconstruction_rate,
        "per_sequence_matches": {str(k): v for k, v in report.per_sequence_matches.items()},
        "missing": {str(k): v for k, v in report.missing.items()},
        "widened_count": report.widened_count,
        "config": asdict(report.config),
    }
    (out / "report.json").write_text(json.dumps(report_obj, indent=2, sort_keys=True) + "\n")

    with open(out / "matches.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["reference_timepoint", "sequence_index", "data_frame_index", "total", "accepted"])
        for d in report.decisions:
            writer.writerow(
                [d.reference_timepoint, d.sequence_index, d.data_frame_index,
                 f"{d.summary.total:.6f}", int(d.accepted)]
            )

    with open(out / "acquisition_correlation.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["acquisition_index", "slice_position_mm", "matches"])
        for s in sorted(report.per_sequence_matches):
            writer.writerow(
                [s, f"{report.sequence_slice_mm[s]:.3f}", report.per_sequence_matches[s]]
            )
    return out
