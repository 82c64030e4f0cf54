"""Shared simulation helpers for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from echosonar import acoustic_sim as sim
from echosonar import rangeprofile as rp
from echosonar.chirp import ChirpSpec, generate_chirp, repeat_chirps

SPEC = ChirpSpec()


def transmit(n_windows: int, spec: ChirpSpec = SPEC):
    return repeat_chirps(generate_chirp(spec), n_windows)


def expected_cells(point, scene: sim.Scene, spec: ChirpSpec = SPEC) -> np.ndarray:
    """Integer cut-window cell of a scatterer's direct reflection, per channel.

    The simulator rounds each path to the nearest sample; the cut window
    starts at the (rounded) direct arrival, so the echo lands at the
    difference of the two rounded delays.
    """
    d, _ = sim.echo_paths(np.asarray(point, dtype=float)[None], np.array([1.0]), scene, spec)
    return d[0, 0] - sim.direct_delays(scene, spec)


def continuous_cells(point, scene: sim.Scene, spec: ChirpSpec = SPEC) -> np.ndarray:
    """Unrounded echo delay (samples) minus the rounded direct delay, per channel."""
    s = np.asarray(scene.speaker_pos, dtype=float)
    m = scene.mics.positions
    p = np.asarray(point, dtype=float)
    path = np.linalg.norm(p - s) + np.linalg.norm(p - m, axis=1)
    return path * spec.sample_rate_hz / spec.sound_speed_mps - sim.direct_delays(scene, spec)


def process(scene: sim.Scene, n_windows: int, keep_signed: bool = True, spec: ChirpSpec = SPEC):
    return rp.process_recording(sim.propagate(scene, transmit(n_windows, spec), spec), spec,
                                keep_signed=keep_signed)


@pytest.fixture(scope="session")
def spec() -> ChirpSpec:
    return SPEC
