import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from echosonar import pose as posemod
from echosonar.chirp import ChirpSpec, SampleBuffer
from echosonar.dataset import features as feat
from echosonar.dataset import formats
from echosonar.errors import FormatError, InputError, ShapeError
from echosonar.skeleton import CANONICAL_HAND, HandKinematicParams, HandPose, hand_pose_from_params

# ---------------------------------------------------------------------------
# features


def test_window_ends():
    np.testing.assert_array_equal(feat.window_ends(120, 25), [49, 74, 99])
    with pytest.raises(InputError):
        feat.window_ends(49, 10)
    with pytest.raises(InputError):
        feat.window_ends(100, 0)


def test_assemble_features_slices_stream():
    stream = np.arange(2 * 4 * 60, dtype=float).reshape(2, 4, 60)
    wins = feat.assemble_features(stream, 5, np.arange(60) * 10_000)
    assert len(wins) == 3
    assert wins[1].tensor.shape == (2, 4, 50)
    np.testing.assert_array_equal(wins[1].tensor, stream[:, :, 5:55])
    assert wins[1].end_index == 54 and wins[1].end_timestamp_us == 540_000
    # the list-of-profiles form gives the same windows
    alt = feat.assemble_features([stream[:, :, t] for t in range(60)], 5, np.arange(60) * 10_000)
    np.testing.assert_array_equal(alt[2].tensor, wins[2].tensor)
    with pytest.raises(ShapeError):
        feat.assemble_features(stream, 5, np.arange(59))


def test_nearest_frames_ties_and_gaps():
    idx, gap = feat.nearest_frames([0, 5, 15, 100], [0, 10, 20])
    np.testing.assert_array_equal(idx, [0, 0, 1, 2])  # 5 and 15 are ties: earlier frame wins
    np.testing.assert_array_equal(gap, [0, 5, 5, 80])


def test_align_labels_drops_far_windows(caplog):
    stream = np.zeros((1, 4, 60))
    ts = np.arange(60) * 10_667
    wins = feat.assemble_features(stream, 5, ts)
    gt_t = np.array([ts[49], ts[54] + 5_000, ts[59] + 30_000])
    gt_j = np.stack([np.full((21, 3), k, dtype=float) for k in range(3)])
    out, rep = feat.align_labels(wins, gt_t, gt_j)
    assert rep.n_windows == 3 and rep.n_dropped == 1 and rep.max_gap_us == 5_000
    assert out[0].label.joints[0, 0] == 0.0 and out[1].label.joints[0, 0] == 1.0
    assert out[2].label is None
    assert "dropped" in caplog.text


def test_quantize_is_idempotent_and_close():
    x = np.random.default_rng(0).normal(scale=300, size=1000)
    q = feat.quantize_mm(x)
    np.testing.assert_array_equal(feat.quantize_mm(q), q)
    assert np.max(np.abs(q - x)) <= feat.LABEL_QUANTUM_MM / 2


@settings(max_examples=40, deadline=None)
@given(st.integers(-5, 5), st.integers(0, 2**31 - 1))
def test_shift_tensor_translates_with_zero_fill(s, seed):
    x = np.random.default_rng(seed).random((2, 12, 3))
    y = feat.shift_tensor(x, s)
    for k in range(12):
        src = k - s
        expect = x[:, src] if 0 <= src < 12 else 0.0
        np.testing.assert_array_equal(y[:, k], expect)


def test_shift_tensor_inverse_on_interior():
    x = np.random.default_rng(1).random((7, 256, 50))
    back = feat.shift_tensor(feat.shift_tensor(x, 3), -3)
    np.testing.assert_array_equal(back[:, :253], x[:, :253])


def test_augment_shifts_tensor_and_label():
    cell_m = 343 / 96_000
    pose = HandPose(feat.quantize_mm(hand_pose_from_params(HandKinematicParams(), CANONICAL_HAND).joints))
    w = feat.FeatureWindow(np.random.default_rng(2).random((7, 256, 50)), 123, pose, 49)
    augs = feat.augment(w, (2, -1), cell_m)
    assert [a.shift for a in augs] == [2, -1]
    np.testing.assert_array_equal(augs[0].tensor, feat.shift_tensor(w.tensor, 2))
    np.testing.assert_allclose(augs[1].label.joints[:, 1] - pose.joints[:, 1], -cell_m * 1000, atol=1e-9)
    for a in augs:
        assert a.end_timestamp_us == 123 and a.end_index == 49
    with pytest.raises(InputError):
        feat.augment(w, (0,), cell_m)
    with pytest.raises(InputError):
        feat.augment(w, (4,), cell_m)
    with pytest.raises(InputError):
        feat.augment(feat.FeatureWindow(w.tensor, 0), (1,), cell_m)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=5, max_size=5),
       st.tuples(st.floats(-0.1, 0.1), st.floats(0.15, 0.5), st.floats(0.05, 0.2)),
       st.sampled_from(feat.DEFAULT_SHIFTS))
def test_augmented_flexion_angles_bit_identical(flexion, wrist, s):
    pose = hand_pose_from_params(HandKinematicParams(wrist_pos=wrist, flexion=tuple(flexion)))
    label = HandPose(feat.quantize_mm(pose.joints))
    moved = feat.shift_label(label, s, 343 / 96_000)
    np.testing.assert_array_equal(posemod.flexion_angles(moved).degrees, posemod.flexion_angles(label).degrees)


def test_curriculum_order_and_leave_one_out(caplog):
    ms = [formats.SessionManifest(f"x{k}", f"s{k % 2}", st_, room_id=f"r{k % 3}")
          for k, st_ in enumerate(["mixed", "2-finger", "1-finger", "1-finger", "5-finger"])]
    order = feat.curriculum_order(ms)
    assert [s for s, _ in order] == ["1-finger", "2-finger", "5-finger", "mixed"]
    assert [m.session_id for m in order[0][1]] == ["x2", "x3"]
    assert "3-finger" in caplog.text
    folds = feat.leave_one_group_out(ms, "subject_id")
    assert [g for g, _, _ in folds] == ["s0", "s1"]
    for g, train, test in folds:
        assert {m.subject_id for m in test} == {g} and g not in {m.subject_id for m in train}
        assert len(train) + len(test) == len(ms)
    with pytest.raises(InputError):
        feat.leave_one_group_out(ms[:1])


# ---------------------------------------------------------------------------
# formats


@settings(max_examples=25, deadline=None)
@given(hnp.arrays(np.float32, st.tuples(st.integers(1, 8), st.integers(0, 300)),
                  elements=st.floats(-1, 1, width=32)))
def test_audio_round_trip(x):
    data = formats.encode_audio(SampleBuffer(x.astype(np.float64), 44_100))
    buf = formats.decode_audio(data)
    assert buf.sample_rate_hz == 44_100
    np.testing.assert_array_equal(np.atleast_2d(buf.samples), x)
    assert formats.encode_audio(buf) == data


def test_audio_layout_is_interleaved():
    x = np.array([[1.0, 2.0, 3.0], [10.0, 20.0, 30.0]])
    data = formats.encode_audio(SampleBuffer(x, 48_000))
    magic, ver, ch, rate, n = struct.unpack_from("<4sHHIQ", data)
    assert (magic, ver, ch, rate, n) == (b"BVAU", 1, 2, 48_000, 3)
    np.testing.assert_array_equal(np.frombuffer(data[20:], "<f4"), [1, 10, 2, 20, 3, 30])


@settings(max_examples=25, deadline=None)
@given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=1, max_dims=4, max_side=6),
                  elements=st.floats(-1e6, 1e6, width=32)))
def test_tensor_round_trip(x):
    data = formats.encode_tensor(x)
    y = formats.decode_tensor(data)
    np.testing.assert_array_equal(y, x)
    assert formats.encode_tensor(y) == data


@pytest.mark.parametrize("data", [b"", b"XXXX" + bytes(20), formats.encode_tensor(np.ones((2, 3)))[:-4]])
def test_corrupt_binary_rejected(data):
    with pytest.raises(FormatError):
        formats.decode_tensor(data)
    with pytest.raises(FormatError):
        formats.decode_audio(data)


def test_pose_csv_round_trip_and_errors():
    rng = np.random.default_rng(3)
    ts = np.array([0, 10_000, 20_000])
    j = rng.normal(scale=100, size=(3, 21, 3))
    data = formats.encode_pose_csv(ts, j)
    t2, j2 = formats.decode_pose_csv(data)
    np.testing.assert_array_equal(t2, ts)
    np.testing.assert_array_equal(j2, j)
    assert data.splitlines()[0].startswith(b"timestamp_us,")
    with pytest.raises(FormatError):
        formats.decode_pose_csv(formats.encode_pose_csv(ts[::-1], j))
    with pytest.raises(FormatError):
        formats.decode_pose_csv(b"t,a,b\n1,2,3\n")
    bad = data.replace(data.splitlines()[1].split(b",")[1], b"abc", 1)
    with pytest.raises(FormatError):
        formats.decode_pose_csv(bad)


def test_manifest_round_trip(tmp_path):
    m = formats.SessionManifest("sess", "s1", "3-finger", ChirpSpec(bandwidth_hz=2_500.0),
                                {"audio": "a.bvau"}, 7, "lab", start_offset_samples=12, extra={"k": [1, 2]})
    p = tmp_path / "m.yaml"
    formats.write_manifest(p, m)
    back = formats.read_manifest(p)
    assert back == m and back.path == p
    assert formats.encode_manifest(back) == p.read_bytes()
    assert back.file("audio") == tmp_path / "a.bvau"
    with pytest.raises(FormatError):
        back.file("poses")
    with pytest.raises(FormatError):
        back.validate_files()  # a.bvau does not exist


def test_manifest_rejects_bad_content(tmp_path):
    p = tmp_path / "m.yaml"
    p.write_text("session_id: a\nsubject_id: b\nstage: 1-finger\nbogus: 1\n")
    with pytest.raises(FormatError):
        formats.read_manifest(p)
    p.write_text("session_id: a\nsubject_id: b\nstage: 7-finger\n")
    with pytest.raises(FormatError):
        formats.read_manifest(p)
    p.write_text("session_id: a\nsubject_id: b\nstage: mixed\njoint_order_version: 99\n")
    with pytest.raises(FormatError):
        formats.read_manifest(p)
    with pytest.raises(FormatError):
        formats.read_manifest(tmp_path / "missing.yaml")
