"""Shared phantoms.

The replay phantom is built so that breathing states recur exactly: one
period is 19 frames (3800 ms / 200 ms) and 19 is odd, so the navigator state
sequence cycles through all 19 lattice phases in both the reference and the
interleaved sequences.  Every eligible reference timepoint therefore has a
data frame whose enclosing navigators sit at bit-identical breathing states,
which makes reconstruction rates and oracle decisions exact.
"""

import time

import pytest

from resp4d.evalharness import sweep
from resp4d.phantom import (
    BreathingSignal,
    PhantomSpec,
    SignalComponent,
    VesselSpec,
    generate_phantom,
    suggested_rois,
)
from resp4d.reconstructor import ReconstructionConfig


def replay_spec(**overrides):
    base = dict(
        frame_height=64,
        frame_width=80,
        vessels=(
            VesselSpec(x=24.0, y=20.0, radius_px=2.5, peak_intensity=1200.0),
            VesselSpec(x=56.0, y=38.0, radius_px=3.0, peak_intensity=900.0),
        ),
        background=100.0,
        noise_std=0.0,
        signal=BreathingSignal(
            amplitude_px=6.0, components=(SignalComponent(3800.0, 1.0),), seed=19
        ),
        reference_frames=24,
        sequences=2,
        data_frames_per_sequence=19,
        frame_period_ms=200.0,
    )
    base.update(overrides)
    return PhantomSpec(**base)


@pytest.fixture(scope="session")
def replay():
    spec = replay_spec()
    dataset, truth = generate_phantom(spec, seed=3)
    rois = suggested_rois(spec, truth)
    return spec, dataset, truth, rois


def split_vessel_spec():
    """Modulated phantom for the method comparison.

    The single vessel renders as a horizontal blob pair whose separation
    widens with breathing state.  A rest-state template on the widened pair
    sees two mirror-symmetric response lobes that tie up to noise, so fixed
    templates lock half a separation left or right at random, while a
    current-state template stays unimodal.
    """
    return PhantomSpec(
        frame_height=80,
        frame_width=96,
        vessels=(
            VesselSpec(
                x=48.0,
                y=40.0,
                radius_px=1.0,
                peak_intensity=1200.0,
                modulation_depth=0.97,
                split_rest_px=3.0,
                split_gain_px=5.0,
            ),
        ),
        background=10.0,
        noise_std=4.0,
        signal=BreathingSignal(
            amplitude_px=12.0, components=(SignalComponent(3800.0, 1.0),), seed=19
        ),
        reference_frames=66,
        sequences=10,
        data_frames_per_sequence=19,
        frame_period_ms=200.0,
        sequence_phase_jitter_ms=40.0,
        sequence_amp_jitter=0.03,
    )


@pytest.fixture(scope="session")
def modulated_sweep():
    """Full comparison grid on the modulated phantom, run once per session."""
    spec = split_vessel_spec()
    dataset, truth = generate_phantom(spec, seed=5)
    rois = suggested_rois(spec, truth)
    t0 = time.perf_counter()
    cells = sweep(dataset, rois, base_config=ReconstructionConfig())
    elapsed = time.perf_counter() - t0
    return cells, elapsed
