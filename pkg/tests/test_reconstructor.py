"""End-to-end binning pipeline on phantoms with analytically known matches."""

import csv
import json

import numpy as np
import pytest

from resp4d.errors import ValidationError
from resp4d.imgcore import DATA, NAVIGATOR, Dataset, Frame, InterleavedSequence, ReferenceSequence
from resp4d.phantom import BreathingSignal, VesselSpec, generate_phantom, oracle_matches, render_frame, suggested_rois
from resp4d.reconstructor import (
    BASELINE_METHOD,
    UPDATING_METHOD,
    ReconstructionConfig,
    average_bin,
    reconstruct,
    save_reconstruction,
)
from resp4d.tracker import Roi

from conftest import replay_spec


def _decision_key(d):
    return (d.sequence_index, d.reference_timepoint, d.data_frame_index)


@pytest.mark.parametrize("method", [UPDATING_METHOD, BASELINE_METHOD])
def test_replay_phantom_reconstructs_fully(replay, method):
    # Breathing period an exact odd multiple of the frame period: every
    # eligible timepoint recurs exactly in each interleaved sequence, so both
    # methods fill every (timepoint, slice) cell.
    spec, dataset, truth, rois = replay
    config = ReconstructionConfig(method=method)
    volume, report = reconstruct(dataset, rois, config)

    assert report.reconstruction_rate == 100.0
    assert report.missing == {}
    assert report.widened_count == 0
    assert volume.completeness.all()
    assert volume.timepoints == list(range(1, spec.reference_frames - 1))
    assert volume.slice_positions_mm == sorted(volume.slice_positions_mm)
    assert volume.voxels.shape == (
        spec.reference_frames - 2,
        spec.sequences,
        spec.frame_height,
        spec.frame_width,
    )
    assert all(count > 0 for count in report.per_sequence_matches.values())

    # tracked decisions agree with decisions brute-forced from true centres
    oracle = oracle_matches(truth, threshold=config.threshold_px)
    got = {_decision_key(d): d for d in report.decisions}
    assert set(got) == set(oracle)
    for key, (accepted, total) in oracle.items():
        assert got[key].accepted == accepted
        assert got[key].summary.total == pytest.approx(total, abs=0.5)


def test_zero_threshold_rejects_everything(replay):
    spec, dataset, _, rois = replay
    volume, report = reconstruct(dataset, rois, ReconstructionConfig(threshold_px=0.0))
    assert report.reconstruction_rate == 0.0
    assert not volume.completeness.any()
    assert np.all(volume.voxels == 0.0)
    assert report.per_sequence_matches == {0: 0, 1: 0}
    assert set(report.missing) == set(range(1, spec.reference_frames - 1))
    assert all(len(v) == spec.sequences for v in report.missing.values())
    assert not any(d.accepted for d in report.decisions)


def test_shifted_sequence_contributes_nothing():
    spec = replay_spec(
        vessels=(VesselSpec(x=24.0, y=64.0, radius_px=2.5),),
        frame_height=128,
        sequence_offsets_px=((1, 30.0),),
    )
    dataset, truth = generate_phantom(spec, seed=3)
    rois = suggested_rois(spec, truth)
    volume, report = reconstruct(dataset, rois, ReconstructionConfig())
    assert report.per_sequence_matches[1] == 0
    assert report.per_sequence_matches[0] > 0
    shifted_mm = report.sequence_slice_mm[1]
    for tp in range(1, spec.reference_frames - 1):
        assert tp in report.missing
        assert shifted_mm in report.missing[tp]
    assert report.reconstruction_rate == 50.0


def test_bins_are_consistent_with_completeness_and_voxels(replay):
    _, dataset, _, rois = replay
    volume, report = reconstruct(dataset, rois, ReconstructionConfig())
    n_slices = len(volume.slice_positions_mm)
    assert len(volume.bins) == len(volume.timepoints) * n_slices
    for b, bin_ in enumerate(volume.bins):
        ti, si = divmod(b, n_slices)
        assert bin_.reference_timepoint == volume.timepoints[ti]
        assert bin_.slice_position_mm == volume.slice_positions_mm[si]
        assert volume.completeness[ti, si] == bool(bin_.frame_indices)
        assert all(k % 2 == 1 for k in bin_.frame_indices)
        if bin_.frame_indices:
            seq = next(
                s for s in dataset.interleaved if s.data_slice_position_mm == bin_.slice_position_mm
            )
            expected = average_bin([seq.frames[k].pixels for k in bin_.frame_indices])
            assert np.array_equal(bin_.averaged, expected)
            assert np.array_equal(volume.voxels[ti, si], expected)
        else:
            assert bin_.averaged is None


def test_mean_aggregation_matches_scaled_sum_threshold(replay):
    _, dataset, _, rois = replay
    n_vessels = len(rois)
    _, by_sum = reconstruct(dataset, rois, ReconstructionConfig(threshold_px=1.0))
    _, by_mean = reconstruct(
        dataset, rois, ReconstructionConfig(threshold_px=1.0 / (2 * n_vessels), aggregation="mean")
    )
    sum_flags = {_decision_key(d): d.accepted for d in by_sum.decisions}
    mean_flags = {_decision_key(d): d.accepted for d in by_mean.decisions}
    assert sum_flags == mean_flags
    assert by_sum.reconstruction_rate == by_mean.reconstruction_rate


def test_reconstruction_is_deterministic(replay):
    _, dataset, _, rois = replay
    va, ra = reconstruct(dataset, rois, ReconstructionConfig())
    vb, rb = reconstruct(dataset, rois, ReconstructionConfig())
    assert np.array_equal(va.voxels, vb.voxels)
    assert np.array_equal(va.completeness, vb.completeness)
    sig_a = [(_decision_key(d), d.accepted, d.summary.total) for d in ra.decisions]
    sig_b = [(_decision_key(d), d.accepted, d.summary.total) for d in rb.decisions]
    assert sig_a == sig_b


def test_parallel_jobs_match_serial(replay):
    _, dataset, _, rois = replay
    va, ra = reconstruct(dataset, rois, ReconstructionConfig(jobs=1))
    vb, rb = reconstruct(dataset, rois, ReconstructionConfig(jobs=3))
    assert np.array_equal(va.voxels, vb.voxels)
    assert [(d.accepted, d.summary.total) for d in ra.decisions] == [
        (d.accepted, d.summary.total) for d in rb.decisions
    ]


def test_initial_template_source_also_fills_the_replay(replay):
    # no appearance modulation here, so frame-0 templates are just as good
    _, dataset, _, rois = replay
    _, report = reconstruct(
        dataset, rois, ReconstructionConfig(interleaved_template_source="initial")
    )
    assert report.reconstruction_rate == 100.0


def test_reference_two_works_as_well(replay):
    _, dataset, _, rois = replay
    _, report = reconstruct(dataset, rois, ReconstructionConfig(reference=2))
    assert report.reconstruction_rate == 100.0


@pytest.mark.parametrize(
    "kwargs, fragment",
    [
        (dict(reference=3), "reference"),
        (dict(method="adaptive"), "method"),
        (dict(measure="ssd"), "measure"),
        (dict(threshold_px=-0.5), "threshold"),
        (dict(search_radius=0), "search radius"),
        (dict(aggregation="median"), "aggregation"),
        (dict(interleaved_template_source="latest"), "template source"),
        (dict(jobs=0), "jobs"),
    ],
)
def test_config_validation(kwargs, fragment):
    with pytest.raises(ValidationError, match=fragment):
        ReconstructionConfig(**kwargs)


def test_too_short_reference_is_rejected():
    blob = render_frame((32, 32), [(16.0, 16.0, 2.0, 2.0, 900.0)], background=50.0)

    def frame(i, kind, slice_mm):
        return Frame(pixels=blob, kind=kind, timestamp_ms=200.0 * i, slice_position_mm=slice_mm)

    ref = ReferenceSequence(frames=[frame(0, NAVIGATOR, 0.0), frame(1, NAVIGATOR, 0.0)], frame_period_ms=200.0)
    seq = InterleavedSequence(
        frames=[frame(2, NAVIGATOR, 0.0), frame(3, DATA, 10.0), frame(4, NAVIGATOR, 0.0)],
        data_slice_position_mm=10.0,
        sequence_index=0,
    )
    dataset = Dataset(
        reference_1=ref,
        reference_2=ref,
        interleaved=[seq],
        in_plane_spacing_mm=(1.82, 1.82),
        slice_gap_mm=4.0,
    )
    rois = [Roi("v0", 10, 10, 13, 13)]
    with pytest.raises(ValidationError, match="too short"):
        reconstruct(dataset, rois, ReconstructionConfig())


def test_average_bin_arithmetic():
    with pytest.raises(ValueError, match="empty"):
        average_bin([])
    one = np.full((4, 4), 37, dtype=np.uint16)
    out = average_bin([one])
    assert out.dtype == np.float64
    assert np.array_equal(out, np.full((4, 4), 37.0))
    a = np.full((4, 4), 100, dtype=np.uint16)
    b = np.full((4, 4), 200, dtype=np.uint16)
    assert np.array_equal(average_bin([a, b]), np.full((4, 4), 150.0))


def test_save_reconstruction_layout(tmp_path, replay):
    spec, dataset, _, rois = replay
    volume, report = reconstruct(dataset, rois, ReconstructionConfig())
    out = save_reconstruction(volume, report, tmp_path / "out")

    manifest = json.loads((out / "volume4d.json").read_text())
    assert manifest["timepoints"] == volume.timepoints
    assert manifest["frame_shape"] == [spec.frame_height, spec.frame_width]
    assert manifest["stacks"] == [f"t{i:04d}.u16le" for i in volume.timepoints]
    assert manifest["voxel_spacing_mm"] == [1.82, 1.82, spec.slice_gap_mm]
    stack_bytes = spec.sequences * spec.frame_height * spec.frame_width * 2
    for name in manifest["stacks"]:
        assert (out / name).stat().st_size == stack_bytes

    # the first stack holds the quantized voxels of the first timepoint
    raw = np.frombuffer((out / manifest["stacks"][0]).read_bytes(), dtype="<u2")
    expected = np.rint(np.clip(volume.voxels[0], 0, 65535)).astype(np.uint16)
    assert np.array_equal(raw.reshape(expected.shape), expected)

    report_obj = json.loads((out / "report.json").read_text())
    assert "seconds" not in report_obj
    assert report_obj["reconstruction_rate"] == report.reconstruction_rate
    assert report_obj["config"]["method"] == "updating"

    with open(out / "matches.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(report.decisions)
    assert rows[0].keys() == {
        "reference_timepoint",
        "sequence_index",
        "data_frame_index",
        "total",
        "accepted",
    }

    with open(out / "acquisition_correlation.csv", newline="") as fh:
        corr = list(csv.DictReader(fh))
    assert [int(r["acquisition_index"]) for r in corr] == sorted(report.per_sequence_matches)
    assert [int(r["matches"]) for r in corr] == [
        report.per_sequence_matches[s] for s in sorted(report.per_sequence_matches)
    ]


def test_saved_directories_are_bit_identical(tmp_path, replay):
    _, dataset, _, rois = replay
    for run in ("a", "b"):
        volume, report = reconstruct(dataset, rois, ReconstructionConfig())
        save_reconstruction(volume, report, tmp_path / run)
    files_a = sorted(p.name for p in (tmp_path / "a").iterdir())
    files_b = sorted(p.name for p in (tmp_path / "b").iterdir())
    assert files_a == files_b
    for name in files_a:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
