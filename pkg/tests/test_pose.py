import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from echosonar import pose as posemod
from echosonar.errors import AngleError, InputError, NormalizationError
from echosonar.skeleton import (
    BONES,
    CANONICAL_HAND,
    FINGERS,
    HandKinematicParams,
    HandPose,
    hand_pose_from_params,
)
from echosonar.acoustic_sim import LOVE_FLEXION, MIXED_POSES

flex5 = st.lists(st.floats(0, 1), min_size=5, max_size=5)


def _pose(flexion=(0.0,) * 5, orientation=(0.0, 0.0, 0.0), wrist=(0.0, 0.28, 0.12)):
    return hand_pose_from_params(HandKinematicParams(wrist, orientation, tuple(flexion)))


# ---------------------------------------------------------------------------
# flexion angles


@settings(max_examples=40, deadline=None)
@given(flex5)
def test_flexion_angles_match_kinematic_oracle(flexion):
    ang = posemod.flexion_angles(_pose(flexion)).as_dict()
    for fi, finger in enumerate(FINGERS):
        # a flat palm keeps every metacarpal horizontal: 90 deg from straight down
        assert ang[f"{finger}_metacarpal"] == pytest.approx(90.0, abs=1e-9)
        later = [b for b in BONES if b.finger == finger][1:]
        for b, limit in zip(later, CANONICAL_HAND.max_flex_deg[finger]):
            assert ang[b.label] == pytest.approx(flexion[fi] * limit, abs=1e-6)


def test_flexion_angles_labels_and_range():
    fa = posemod.flexion_angles(_pose((1, 0.5, 0.2, 0.9, 0.0), (20, -30, 15)))
    assert len(fa.degrees) == 19 and fa.labels[0] == "thumb_metacarpal" and fa.labels[-1] == "pinky_distal"
    assert np.all((fa.degrees >= 0) & (fa.degrees <= 180))


@settings(max_examples=40, deadline=None)
@given(flex5, st.tuples(*[st.integers(-2**20, 2**20)] * 3))
def test_flexion_angles_translation_invariant(flexion, shift):
    # power-of-two grid keeps the translation exact, so the angles match bit for bit
    j = np.round(_pose(flexion).joints * 1024) / 1024
    moved = j + np.array(shift) / 64.0
    np.testing.assert_array_equal(posemod.flexion_angles(HandPose(moved)).degrees,
                                  posemod.flexion_angles(HandPose(j)).degrees)


def test_flexion_angles_rejects_collapsed_bone():
    j = _pose().joints.copy()
    j[7] = j[6] + 0.5  # index intermediate bone ~0.87 mm
    with pytest.raises(AngleError) as err:
        posemod.flexion_angles(HandPose(j))
    assert "index_intermediate" in str(err.value)


# ---------------------------------------------------------------------------
# normalisation


@settings(max_examples=40, deadline=None)
@given(flex5, st.integers(0, 2**31 - 1), st.floats(0.3, 3.0),
       st.tuples(*[st.floats(-500, 500)] * 3))
def test_normalize_invariant_to_similarity_transform(flexion, seed, scale, shift):
    p = _pose(flexion)
    rot = Rotation.random(random_state=seed).as_matrix()
    q = HandPose(scale * p.joints @ rot.T + np.array(shift))
    np.testing.assert_allclose(posemod.normalize_pose(q).joints, posemod.normalize_pose(p).joints, atol=1e-9)


def test_normalized_pose_canonical_frame():
    n = posemod.normalize_pose(_pose((0.3, 0.1, 0.7, 0.2, 0.5), (10, 20, -5))).joints
    np.testing.assert_array_equal(n[0], 0.0)
    np.testing.assert_allclose(n[9], [0.0, 1.0, 0.0], atol=1e-12)  # middle root on +y at unit distance
    assert abs(n[5, 2]) < 1e-12 and n[5, 0] > 0  # index root in the xy plane on +x


def test_normalize_degenerate_palm():
    j = np.zeros((21, 3))
    j[:, 1] = np.arange(21)  # every joint on one line
    with pytest.raises(NormalizationError):
        posemod.normalize_pose(HandPose(j))


# ---------------------------------------------------------------------------
# activation detection


def test_similarity_zero_for_template_and_ranked():
    tmpl = posemod.ActivationTemplate.from_pose(_pose(LOVE_FLEXION))
    moved = _pose(LOVE_FLEXION, (25, -20, 10), (0.1, 0.35, 0.05))
    assert posemod.activation_similarity(moved, tmpl) == pytest.approx(0.0, abs=1e-12)
    others = posemod.similarities([_pose(f) for f in MIXED_POSES], tmpl)
    assert np.all(others < tmpl.threshold)


def test_detector_debounce_and_rearm():
    tmpl = posemod.ActivationTemplate(posemod.normalize_pose(_pose()), threshold=-0.1)
    det = posemod.ActivationDetector(tmpl, debounce=3)
    sims = [0, 0, -1, 0, 0, 0, 0, 0, -1, 0, 0, 0]
    fired = [k for k, s in enumerate(sims) if det.update_similarity(s, k * 10) is not None]
    assert fired == [5, 11]  # third consecutive frame; once per run; re-armed by a low frame
    det.reset()
    assert det.update_similarity(0) is None
    with pytest.raises(InputError):
        posemod.ActivationDetector(tmpl, debounce=0)


def test_detect_activation_on_pose_stream():
    tmpl = posemod.ActivationTemplate.from_pose(_pose(LOVE_FLEXION))
    stream = [_pose(MIXED_POSES[0])] * 4 + [_pose(LOVE_FLEXION)] * 5 + [_pose(MIXED_POSES[1])] * 2
    events = posemod.detect_activation(stream, tmpl, timestamps_us=np.arange(len(stream)) * 1000)
    assert [(e.frame, e.timestamp_us) for e in events] == [(6, 6000)]


def test_event_scores():
    ev = [posemod.ActivationEvent(0, t, 0.0) for t in (50, 150, 400)]
    p, r = posemod.event_scores(ev, [(0, 100), (120, 200), (500, 600)])
    assert p == pytest.approx(2 / 3) and r == pytest.approx(2 / 3)
    assert posemod.event_scores([], []) == (1.0, 1.0)


def test_calibrate_threshold():
    assert posemod.class_gap(np.array([-0.01, -0.02]), np.array([-0.2, -0.1])) == pytest.approx(0.08)
    assert posemod.calibrate_threshold(np.array([-0.01, -0.02]), np.array([-0.2, -0.1])) == pytest.approx(-0.06)
    with pytest.raises(InputError):
        posemod.calibrate_threshold(np.array([-0.1]), np.array([-0.05]))
    with pytest.raises(InputError):
        posemod.class_gap(np.array([]), np.array([-0.05]))


def test_similarity_symmetric():
    a, b = _pose((0.2, 0.9, 0.1, 0.5, 0.3), (10, 5, -20)), _pose((0.7, 0.0, 1.0, 0.4, 0.6), (-5, 30, 0))
    assert posemod.activation_similarity(a, b) == posemod.activation_similarity(b, a)


@pytest.mark.parametrize("pattern, expected", [
    ([1] * 10, [2]),  # constant match: one event once the debounce is met
    ([0] * 10, []),  # never matching
    ([1, 1, 0] * 4, []),  # runs shorter than the debounce
])
def test_detector_debounce_examples(pattern, expected):
    tmpl = posemod.ActivationTemplate.from_pose(_pose(LOVE_FLEXION))
    stream = [_pose(LOVE_FLEXION if m else MIXED_POSES[3]) for m in pattern]
    assert [e.frame for e in posemod.detect_activation(stream, tmpl)] == expected
