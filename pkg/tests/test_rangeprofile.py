import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SPEC, expected_cells, process, transmit
from echosonar import acoustic_sim as sim
from echosonar import rangeprofile as rp
from echosonar.chirp import SampleBuffer, generate_chirp
from echosonar.errors import AnchorError, InputError, ShapeError


def test_cell_size():
    assert rp.cell_size_m(SPEC) == pytest.approx(343 / 96_000)
    assert rp.N_CUT_CELLS * rp.cell_size_m(SPEC) == pytest.approx(0.9147, abs=1e-3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 511), st.integers(0, 2**31 - 1))
def test_xcorr_peaks_at_circular_delay(d, seed):
    t = generate_chirp(SPEC).samples
    r = rp.xcorr_fd(np.roll(t, d), t)
    assert int(np.argmax(r)) == d


def test_xcorr_batched_and_shape_errors():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 4, 64))
    t = rng.standard_normal(64)
    r = rp.xcorr_fd(x, t)
    np.testing.assert_allclose(r[1, 2], rp.xcorr_fd(x[1, 2], t))
    with pytest.raises(ShapeError):
        rp.xcorr_fd(x, rng.standard_normal(32))


def test_dechirp_windows():
    rec = sim.propagate(sim.Scene(), transmit(5), SPEC)
    profs = rp.dechirp(rec, SPEC)
    assert len(profs) == 5
    assert profs[2].magnitudes.shape == (7, 512)
    assert profs[2].start_sample == 1024
    assert np.all(profs[2].magnitudes >= 0)
    with pytest.raises(InputError):
        rp.dechirp(SampleBuffer(np.zeros((7, 700))), SPEC)


def test_anchor_equals_offset_plus_direct_delay():
    for offset in (0, 137, 2000):
        scene = sim.Scene(static_scatterers=[sim.Scatterer((0.1, 0.4, 0.1), 0.3)], start_offset_samples=offset)
        pr = process(scene, 12, keep_signed=False)
        np.testing.assert_array_equal(pr.anchor.anchor_cell, offset + sim.direct_delays(scene, SPEC))


def test_anchor_from_dechirped_profiles():
    scene = sim.Scene(start_offset_samples=300)
    rec = sim.propagate(scene, transmit(10), SPEC)
    profs = rp.dechirp(rec, SPEC, keep_signed=True)[2:7]
    info = rp.find_anchor(profs, rp.detect_onset(rec))
    np.testing.assert_array_equal(info.anchor_cell, 300 + sim.direct_delays(scene, SPEC))


def test_anchor_dead_channel():
    rec = sim.propagate(sim.Scene(), transmit(10), SPEC)
    rec.samples[3] = 0.0
    with pytest.raises(AnchorError) as err:
        rp.process_recording(rec, SPEC)
    assert err.value.channel == 3


def test_anchor_silent_recording():
    with pytest.raises(AnchorError):
        rp.process_recording(SampleBuffer(np.zeros((7, 6000))), SPEC)


def test_cut_window_and_padding():
    mags = np.tile(np.arange(512.0), (7, 1))
    prof = rp.RangeProfile(mags, 0, rp.cell_size_m(SPEC), start_sample=0)
    info = rp.AnchorInfo(np.array([10, 11, 12, 13, 14, 15, 300]), 0, 512)
    cut = rp.cut_window(prof, info)
    assert cut.magnitudes.shape == (7, 256)
    np.testing.assert_array_equal(cut.magnitudes[0], np.arange(10, 266))
    assert cut.padded  # channel 6 runs off the end of the window
    np.testing.assert_array_equal(cut.magnitudes[6, 212:], 0.0)


def test_cut_places_static_echo_at_geometric_cell():
    scene = sim.Scene(surface_plane_enabled=False)
    p = (0.0, 0.4, 0.07)
    target = sim.Scene(surface_plane_enabled=False, static_scatterers=[sim.Scatterer(p, 0.05)])
    ref, pr = process(scene, 8), process(target, 8)
    loc = rp.locate_echo(pr.profiles()[4], ref.profiles()[4])
    np.testing.assert_array_equal(loc, expected_cells(p, target))
    # 0.4 m straight out from the speaker: ~0.8 m of round trip less the direct path
    s, m0 = np.array(scene.speaker_pos), scene.mics.positions[0]
    extra_m = 0.4 + np.linalg.norm(np.array(p) - m0) - np.linalg.norm(s - m0)
    assert abs(int(loc[0]) - extra_m * 48_000 / 343) <= 1


def test_successive_subtract():
    cs = rp.cell_size_m(SPEC)
    a = rp.RangeProfile(np.array([[1.0, 5.0, 2.0]]), 3, cs)
    b = rp.RangeProfile(np.array([[3.0, 1.0, 2.0]]), 4, cs)
    np.testing.assert_array_equal(rp.successive_subtract(b, a).magnitudes, [[2.0, 0.0, 0.0]])
    with pytest.raises(InputError):
        rp.successive_subtract(a, b)
    with pytest.raises(ShapeError):
        rp.successive_subtract(rp.RangeProfile(np.ones((1, 4)), 4, cs), a)


def test_static_scene_subtracts_to_zero_and_output_nonnegative():
    clutter = [sim.Scatterer((0.1, 0.5, 0.05), 0.5), sim.Scatterer((-0.2, 0.3, 0.2), 0.1)]
    pr = process(sim.Scene(static_scatterers=clutter), 15, keep_signed=False)
    np.testing.assert_array_equal(pr.subtracted, 0.0)
    wrist = np.array([0.0, 0.3, 0.1]) + 0.01 * np.arange(15)[:, None]
    moving = sim.Scene(static_scatterers=clutter, moving_scatterers=sim.ScattererTrack(wrist[:, None], [0.05]))
    pr = process(moving, 15, keep_signed=False)
    assert pr.subtracted.min() >= 0 and pr.subtracted.max() > 0
    assert pr.subtracted.shape == (7, 256, pr.cut.shape[0] - 1)


def test_moving_scatterer_energy_follows_echo():
    # the rectified difference peaks at the new echo and stays within the main
    # correlation lobe (about +/-16 cells) around the old and new echo cells
    n_win = 20
    y = 0.3 + 0.01 * np.arange(n_win)
    pos = np.stack([np.zeros(n_win), y, np.full(n_win, 0.1)], axis=1)[:, None]
    scene = sim.Scene(surface_plane_enabled=False, moving_scatterers=sim.ScattererTrack(pos, [0.05]))
    pr = process(scene, n_win, keep_signed=False)
    for t in range(2, pr.subtracted.shape[2]):
        raw = pr.window_starts[t + 1] // 512
        e = pr.subtracted[0, :, t] ** 2
        new, old = expected_cells(pos[raw, 0], scene)[0], expected_cells(pos[raw - 1, 0], scene)[0]
        assert abs(int(np.argmax(e)) - new) <= 10
        assert e[old - 20: new + 21].sum() / e.sum() > 0.75


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2047))
def test_start_offset_invariance_property(offset):
    wrist = np.array([0.02, 0.35, 0.1]) + 0.015 * np.sin(np.arange(12) / 2.0)[:, None]
    track = sim.ScattererTrack(wrist[:, None], [0.05])
    a = process(sim.Scene(moving_scatterers=track), 12, keep_signed=False)
    b = process(sim.Scene(moving_scatterers=track, start_offset_samples=offset), 12, keep_signed=False)
    np.testing.assert_array_equal(a.cut, b.cut)
    np.testing.assert_array_equal(b.window_starts - a.window_starts, offset)


def test_process_recording_too_short():
    for n_win in (1, 2, 3):
        with pytest.raises(InputError):
            rp.process_recording(sim.propagate(sim.Scene(), transmit(n_win), SPEC), SPEC)
