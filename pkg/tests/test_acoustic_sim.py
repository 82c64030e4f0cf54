import numpy as np
import pytest

from conftest import SPEC, transmit
from echosonar import acoustic_sim as sim
from echosonar.errors import ConfigError
from echosonar.skeleton import N_JOINTS


def test_uma8_geometry():
    m = sim.MicArrayGeometry.uma8()
    assert m.positions.shape == (7, 3)
    np.testing.assert_allclose(np.linalg.norm(m.positions[1:, :2], axis=1), 0.045)
    with pytest.raises(ConfigError):
        sim.MicArrayGeometry(np.zeros((7, 3)))
    with pytest.raises(ConfigError):
        sim.MicArrayGeometry(np.zeros((6, 3)))


def test_direct_delays_from_geometry():
    scene = sim.Scene()
    d = np.linalg.norm(np.array(scene.speaker_pos) - scene.mics.positions, axis=1)
    np.testing.assert_array_equal(sim.direct_delays(scene, SPEC), np.rint(d * 48_000 / 343))


def test_echo_paths_direct_and_images():
    scene = sim.Scene()
    p = np.array([[0.05, 0.3, 0.1]])
    d, a = sim.echo_paths(p, np.array([0.1]), scene, SPEC)
    assert d.shape == (1, 3, 7)
    s = np.array(scene.speaker_pos)
    m = scene.mics.positions
    din = np.linalg.norm(p[0] - s)
    dout = np.linalg.norm(p[0] - m, axis=1)
    np.testing.assert_array_equal(d[0, 0], np.rint((din + dout) * 48_000 / 343))
    np.testing.assert_allclose(a[0, 0], 0.1 / (din * dout))
    # both table images are longer and weaker than the direct reflection
    assert np.all(d[0, 1:] >= d[0, :1]) and np.all(a[0, 1:] < a[0, :1])
    d2, _ = sim.echo_paths(p, np.array([0.1]), sim.Scene(surface_plane_enabled=False), SPEC)
    assert d2.shape == (1, 1, 7)


def test_propagate_empty_room_is_direct_path():
    scene = sim.Scene(surface_plane_enabled=False)
    tx = transmit(4)
    rec = sim.propagate(scene, tx, SPEC)
    assert rec.samples.shape == (7, 4 * 512)
    d = sim.direct_delays(scene, SPEC)
    amp = 1.0 / np.linalg.norm(np.array(scene.speaker_pos) - scene.mics.positions, axis=1)
    for ch in range(7):
        np.testing.assert_allclose(rec.samples[ch, 512:1024], amp[ch] * np.roll(tx.samples[:512], d[ch]),
                                   atol=1e-12)


def test_start_offset_prepends_silence():
    tx = transmit(4)
    a = sim.propagate(sim.Scene(), tx, SPEC).samples
    b = sim.propagate(sim.Scene(start_offset_samples=100), tx, SPEC).samples
    np.testing.assert_array_equal(b[:, :100], 0.0)
    np.testing.assert_array_equal(b[:, 100:], a)
    with pytest.raises(ConfigError):
        sim.propagate(sim.Scene(start_offset_samples=4 * 512), tx, SPEC)


def test_ultrasound_gain_scales_only_scatterer_paths():
    tx = transmit(3)
    sc = [sim.Scatterer((0.0, 0.3, 0.1), 0.1)]
    base = sim.propagate(sim.Scene(), tx, SPEC).samples
    e0 = sim.propagate(sim.Scene(static_scatterers=sc), tx, SPEC).samples - base
    e6 = sim.propagate(sim.Scene(static_scatterers=sc, ultrasound_gain_db=6.0), tx, SPEC).samples - base
    np.testing.assert_allclose(e6, e0 * 10 ** (6 / 20), atol=1e-12)


def test_noise_is_seeded_and_scaled():
    tx = transmit(20)
    clean = sim.propagate(sim.Scene(), tx, SPEC).samples
    a = sim.propagate(sim.Scene(noise_snr_db=20.0, noise_seed=3), tx, SPEC).samples
    b = sim.propagate(sim.Scene(noise_snr_db=20.0, noise_seed=3), tx, SPEC).samples
    np.testing.assert_array_equal(a, b)
    snr = 10 * np.log10(np.mean(clean[0] ** 2) / np.mean((a[0] - clean[0]) ** 2))
    assert snr == pytest.approx(20.0, abs=1.5)


def test_track_must_cover_transmit():
    track = sim.ScattererTrack(np.zeros((2, 1, 3)) + [0.0, 0.3, 0.1], [0.1])
    with pytest.raises(ConfigError):
        sim.propagate(sim.Scene(moving_scatterers=track), transmit(3), SPEC)


def test_tx_must_be_periodic():
    bad = transmit(2)
    bad.samples[600] += 1.0
    with pytest.raises(ConfigError):
        sim.propagate(sim.Scene(), bad, SPEC)


@pytest.mark.parametrize("kind", sim.STAGES)
def test_gesture_trajectories(kind):
    tr = sim.gesture_trajectory(kind, 6.0, 1)
    poses = tr.poses_mm()
    assert poses.shape == (len(tr.times_s), N_JOINTS, 3)
    assert np.all(np.isfinite(poses))
    assert np.all(tr.flexion >= 0) and np.all(tr.flexion <= 1)
    np.testing.assert_array_equal(poses, sim.gesture_trajectory(kind, 6.0, 1).poses_mm())
    # hand stays over the table within reach of the array
    wrist = poses[:, 0] / 1000.0
    assert np.all(wrist[:, 2] > 0) and np.all(np.linalg.norm(wrist, axis=1) < 0.6)


@pytest.mark.parametrize("kind", ["1-finger", "2-finger", "3-finger", "4-finger", "5-finger"])
def test_stage_moves_only_its_finger_groups(kind):
    tr = sim.gesture_trajectory(kind, 20.0, 2)
    n = int(kind[0])
    moving = np.ptp(tr.flexion, axis=0) > 0.2
    groups = sim.finger_groups(kind)
    assert all(len(g) == n for g in groups)
    assert moving.sum() >= n


def test_mixed_template_insertions():
    tr = sim.gesture_trajectory("mixed", 60.0, 3, template_every=3)
    assert len(tr.template_intervals) >= 3
    for a, b in tr.template_intervals:
        assert 0 <= a < b <= tr.times_s[-1]
        i = np.argmin(np.abs(tr.times_s - (a + b) / 2))
        np.testing.assert_allclose(tr.flexion[i], sim.LOVE_FLEXION, atol=0.05)
    assert sim.gesture_trajectory("mixed", 60.0, 3).template_intervals == []


def test_mixed_poses_exclude_template():
    assert len(sim.MIXED_POSES) == 15
    assert tuple(sim.LOVE_FLEXION) not in {tuple(p) for p in sim.MIXED_POSES}


def test_unknown_kind_rejected():
    with pytest.raises(ConfigError):
        sim.gesture_trajectory("6-finger", 5.0, 0)
