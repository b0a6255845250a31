"""Tracking through reference sequences: drift, ramps, and template updates."""

import csv
import math

import numpy as np
import pytest

from resp4d.errors import TrackingError, ValidationError
from resp4d.imgcore import NAVIGATOR, Frame, ReferenceSequence
from resp4d.matcher import CCOEFF_NORMED, CCORR_NORMED
from resp4d.phantom import generate_phantom, render_frame, suggested_rois
from resp4d.tracker import (
    FIXED,
    UPDATING,
    Roi,
    TemplateSet,
    locate_in_navigator,
    rois_from_obj,
    rois_to_obj,
    track_reference,
    write_trace_csv,
)

from conftest import split_vessel_spec


def _sequence(centres, shape=(48, 48), radius=2.0, peak=900.0, background=50.0):
    """Noise-free single-blob navigator sequence with the blob at ``centres``."""
    frames = [
        Frame(
            pixels=render_frame(shape, [(cx, cy, radius, radius, peak)], background=background),
            kind=NAVIGATOR,
            timestamp_ms=200.0 * i,
            slice_position_mm=0.0,
        )
        for i, (cx, cy) in enumerate(centres)
    ]
    return ReferenceSequence(frames=frames, frame_period_ms=200.0)


_ROI = [Roi(label="v0", x=18, y=18, width=13, height=13)]  # centred on (24, 24)


@pytest.mark.parametrize("mode", [FIXED, UPDATING])
@pytest.mark.parametrize("measure", [CCOEFF_NORMED, CCORR_NORMED])
def test_static_scene_drifts_exactly_zero(mode, measure):
    ref = _sequence([(24.0, 24.0)] * 60)
    trace, _ = track_reference(ref, _ROI, measure=measure, mode=mode)
    assert np.all(trace.positions == np.array([18.0, 18.0]))
    assert np.all(trace.scores == 1.0)
    assert not trace.widened.any()


@pytest.mark.parametrize("mode", [FIXED, UPDATING])
def test_integer_ramp_is_tracked_exactly(mode):
    centres = [(24.0, 12.0 + i) for i in range(25)]
    ref = _sequence(centres, shape=(48, 48))
    rois = [Roi(label="v0", x=18, y=6, width=13, height=13)]
    trace, _ = track_reference(ref, rois, mode=mode)
    expected = np.array([[[18.0, 6.0 + i]] for i in range(25)])
    assert np.array_equal(trace.positions, expected)
    assert not trace.widened.any()


@pytest.mark.parametrize("mode", [FIXED, UPDATING])
def test_subpixel_sinusoid_stays_within_quarter_pixel(mode):
    centres = [(24.0, 24.0 + 3.0 * math.sin(2.0 * math.pi * i / 20.0)) for i in range(41)]
    ref = _sequence(centres)
    trace, _ = track_reference(ref, _ROI, mode=mode)
    half = _ROI[0].width // 2
    tracked = trace.positions[:, 0, :] + half
    truth = np.asarray(centres)
    err = np.hypot(*(tracked - truth).T)
    assert err.max() <= 0.25


def test_modes_agree_on_rigid_motion():
    centres = [(24.0 + 1.5 * math.cos(0.4 * i), 24.0 + 2.5 * math.sin(0.3 * i)) for i in range(30)]
    ref = _sequence(centres)
    upd, _ = track_reference(ref, _ROI, mode=UPDATING)
    fix, _ = track_reference(ref, _ROI, mode=FIXED)
    gap = np.hypot(*(upd.positions - fix.positions)[:, 0, :].T)
    assert gap.max() <= 0.3


def test_shape_change_defeats_fixed_templates():
    # The split vessel widens with the breathing state.  Updated templates
    # follow the pair; the frame-0 template sees two mirror alignments and
    # keeps locking half a separation off centre.
    spec = split_vessel_spec()
    dataset, truth = generate_phantom(spec, seed=5)
    rois = suggested_rois(spec, truth)
    half = rois[0].width // 2
    centres = truth.nav_positions["ref1"]

    errors = {}
    for mode in (UPDATING, FIXED):
        trace, _ = track_reference(dataset.reference_1, rois, mode=mode)
        tracked = trace.positions + half
        errors[mode] = float(np.mean(np.hypot(*(tracked - centres).transpose(2, 0, 1))))
    assert errors[UPDATING] <= 0.5
    assert errors[FIXED] > 2.0 * errors[UPDATING]
    assert errors[FIXED] > 0.5


def test_updating_returns_one_template_set_per_frame():
    spec = split_vessel_spec()
    dataset, truth = generate_phantom(spec, seed=5)
    rois = suggested_rois(spec, truth)
    trace, sets = track_reference(dataset.reference_1, rois, mode=UPDATING)
    assert len(sets) == trace.n_frames
    assert [s.frame_index for s in sets] == list(range(trace.n_frames))
    for ts in sets:
        assert len(ts.templates) == len(rois)
        for tpl, roi in zip(ts.templates, rois):
            assert (tpl.width, tpl.height) == (roi.width, roi.height)


def test_fixed_returns_only_the_initial_set():
    ref = _sequence([(24.0, 24.0)] * 5)
    _, sets = track_reference(ref, _ROI, mode=FIXED)
    assert len(sets) == 1
    assert sets[0].frame_index == 0


def test_degenerate_initial_roi_is_rejected():
    ref = _sequence([(24.0, 24.0)] * 3)
    corner = [Roi(label="v0", x=0, y=0, width=5, height=5)]  # flat background
    with pytest.raises(TrackingError, match="frame 0"):
        track_reference(ref, corner, mode=UPDATING)


def test_degenerate_updated_template_names_vessel_and_frame():
    blob = render_frame((48, 48), [(24.0, 24.0, 2.0, 2.0, 900.0)], background=50.0)
    flat = render_frame((48, 48), [], background=50.0)
    frames = [
        Frame(pixels=p, kind=NAVIGATOR, timestamp_ms=200.0 * i, slice_position_mm=0.0)
        for i, p in enumerate([blob, flat])
    ]
    ref = ReferenceSequence(frames=frames, frame_period_ms=200.0)
    with pytest.raises(TrackingError, match=r"vessel 'v0' at frame 1"):
        track_reference(ref, _ROI, mode=UPDATING)


def test_roi_outside_frame_is_rejected():
    ref = _sequence([(24.0, 24.0)] * 3)
    bad = [Roi(label="v0", x=40, y=40, width=13, height=13)]
    with pytest.raises(ValidationError, match="does not fit"):
        track_reference(ref, bad, mode=FIXED)


def test_unknown_mode_and_measure_are_rejected():
    ref = _sequence([(24.0, 24.0)] * 3)
    with pytest.raises(ValueError, match="mode"):
        track_reference(ref, _ROI, mode="adaptive")
    with pytest.raises(ValueError, match="measure"):
        track_reference(ref, _ROI, measure="ssd")
    with pytest.raises(ValidationError, match="no ROIs"):
        track_reference(ref, [], mode=FIXED)


def test_locate_in_same_frame_is_exact():
    ref = _sequence([(24.0, 24.0)] * 2)
    _, sets = track_reference(ref, _ROI, mode=FIXED)
    results = locate_in_navigator(ref.frames[0], sets[0], prior=[(18.0, 18.0)])
    assert len(results) == 1
    assert results[0].position == (18.0, 18.0)
    assert results[0].score == pytest.approx(1.0, abs=1e-9)
    assert not results[0].widened


def test_locate_follows_a_shift_within_the_region():
    ref = _sequence([(24.0, 24.0)])
    shifted = _sequence([(24.0, 27.0)])
    _, sets = track_reference(ref, _ROI, mode=FIXED)
    (res,) = locate_in_navigator(shifted.frames[0], sets[0], prior=[(18.0, 18.0)], search_radius=5)
    assert res.position == (18.0, 21.0)
    assert not res.widened


def test_locate_widens_when_the_prior_is_wrong():
    ref = _sequence([(24.0, 24.0)])
    _, sets = track_reference(ref, _ROI, mode=FIXED)
    (res,) = locate_in_navigator(ref.frames[0], sets[0], prior=[(2.0, 2.0)], search_radius=3)
    assert res.widened
    assert res.position == (18.0, 18.0)


def test_locate_rejects_mismatched_priors():
    ref = _sequence([(24.0, 24.0)])
    _, sets = track_reference(ref, _ROI, mode=FIXED)
    with pytest.raises(ValueError, match="priors"):
        locate_in_navigator(ref.frames[0], sets[0], prior=[(0.0, 0.0), (1.0, 1.0)])


def test_empty_roi_rectangle_is_rejected():
    with pytest.raises(ValidationError, match="empty"):
        Roi(label="v0", x=0, y=0, width=0, height=5)


def test_rois_json_round_trip_and_validation():
    rois = [Roi("a", 1, 2, 5, 7), Roi("b", 10, 12, 9, 9)]
    assert rois_from_obj(rois_to_obj(rois)) == rois
    with pytest.raises(ValidationError, match="duplicate"):
        rois_from_obj(rois_to_obj([Roi("a", 1, 2, 5, 7), Roi("a", 3, 4, 5, 7)]))
    with pytest.raises(ValidationError, match="non-empty"):
        rois_from_obj([])
    with pytest.raises(ValidationError, match="bad ROI entry"):
        rois_from_obj([{"label": "a", "x": 1, "y": 2, "w": 5}])


def test_trace_csv_layout(tmp_path):
    centres = [(24.0, 24.0 + i) for i in range(4)]
    ref = _sequence(centres)
    trace, _ = track_reference(ref, _ROI, mode=UPDATING)
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0].keys() == {"vessel", "frame", "x", "y", "score", "widened"}
    assert len(rows) == 4
    assert [r["frame"] for r in rows] == ["0", "1", "2", "3"]
    assert all(r["vessel"] == "v0" for r in rows)
    assert float(rows[2]["y"]) == pytest.approx(trace.positions[2, 0, 1], abs=1e-6)
    assert {r["widened"] for r in rows} <= {"0", "1"}
