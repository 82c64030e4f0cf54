"""Pose analytics: flexion angles, palm-frame normalisation, activation-pose detection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import AngleError, InputError, NormalizationError
from .skeleton import BONES, FINGER_JOINTS, HandPose, N_JOINTS, WRIST

MIN_BONE_MM = 1.0
DEBOUNCE_FRAMES = 3
#: geometric midpoint of the 0.004 / 0.085 class bounds, as a similarity (negative MAE)
DEFAULT_THRESHOLD = -float(np.sqrt(0.004 * 0.085))

_INDEX_MCP = FINGER_JOINTS["index"][0]
_MIDDLE_MCP = FINGER_JOINTS["middle"][0]
_PINKY_MCP = FINGER_JOINTS["pinky"][0]
_DOWN = np.array([0.0, 0.0, -1.0])


@dataclass(frozen=True)
class FlexionAngles:
    """19 angles (deg), per finger from the root bone to the distal bone."""

    degrees: np.ndarray

    @property
    def labels(self) -> list:
        return [b.label for b in BONES]

    def as_dict(self) -> dict:
        return dict(zip(self.labels, map(float, self.degrees)))


def _angle_deg(a: np.ndarray, b: np.ndarray) -> float:
    """Angle between two vectors via atan2(|a x b|, a . b); accurate near 0 and 180."""
    return float(np.degrees(np.arctan2(np.linalg.norm(np.cross(a, b)), np.dot(a, b))))


def flexion_angles(pose: HandPose) -> FlexionAngles:
    """Angle of every bone against its ancestor toward the wrist.

    Root bones (those starting at the wrist) are measured against the
    downward table normal ``(0, 0, -1)``. Only joint differences enter, so
    translating the pose leaves the angles unchanged bit for bit whenever
    the translation is exact.
    """
    j = pose.joints
    out = np.empty(len(BONES))
    prev = {}
    for k, b in enumerate(BONES):
        v = j[b.child] - j[b.parent]
        length = float(np.linalg.norm(v))
        if not length > MIN_BONE_MM:
            raise AngleError(b.label, length)
        ref = _DOWN if b.parent == WRIST else prev[b.finger]
        out[k] = _angle_deg(v, ref)
        prev[b.finger] = v
    return FlexionAngles(out)


def palm_frame(pose: HandPose):
    """``(origin, rotation (3x3, rows = canonical axes), palm size)`` of a pose.

    y runs wrist -> middle root, x is wrist -> index root made orthogonal to
    y, z = x cross y; palm size is the wrist -> middle-root distance.
    """
    j = pose.joints
    origin = j[WRIST]
    ym = j[_MIDDLE_MCP] - origin
    size = float(np.linalg.norm(ym))
    xi = j[_INDEX_MCP] - origin
    tri = np.linalg.norm(np.cross(xi, j[_PINKY_MCP] - origin))
    if not size > 1e-9 or not tri > 1e-9 * max(size, 1.0) ** 2:
        raise NormalizationError("palm triangle (wrist, index root, pinky root) is degenerate")
    y = ym / size
    x = xi - np.dot(xi, y) * y
    nx = np.linalg.norm(x)
    if not nx > 1e-9 * size:
        raise NormalizationError("index root is collinear with the wrist -> middle-root axis")
    x = x / nx
    z = np.cross(x, y)
    return origin, np.stack([x, y, z]), size


def normalize_pose(pose: HandPose) -> HandPose:
    """Wrist at the origin, canonical palm axes, unit wrist -> middle-root distance."""
    origin, rot, size = palm_frame(pose)
    return HandPose((pose.joints - origin) @ rot.T / size)


@dataclass(frozen=True)
class ActivationTemplate:
    pose: HandPose  # normalised
    threshold: float = DEFAULT_THRESHOLD

    @classmethod
    def from_pose(cls, pose: HandPose, threshold: float = DEFAULT_THRESHOLD) -> "ActivationTemplate":
        return cls(normalize_pose(pose), float(threshold))


def activation_similarity(pose: HandPose, template) -> float:
    """Negative mean absolute difference of the normalised skeletons (palm-size units)."""
    ref = template.pose if isinstance(template, ActivationTemplate) else normalize_pose(template)
    return -float(np.mean(np.abs(normalize_pose(pose).joints - ref.joints)))


def similarities(poses, template) -> np.ndarray:
    """:func:`activation_similarity` over a ``(T, 21, 3)`` array or a sequence of poses."""
    return np.array([activation_similarity(p if isinstance(p, HandPose) else HandPose(p), template)
                     for p in poses])


@dataclass(frozen=True)
class ActivationEvent:
    frame: int
    timestamp_us: Optional[int]
    similarity: float


class ActivationDetector:
    """Fires once when ``debounce`` consecutive frames reach the threshold.

    After firing it stays quiet until a frame falls below the threshold.
    """

    def __init__(self, template: ActivationTemplate, threshold: Optional[float] = None,
                 debounce: int = DEBOUNCE_FRAMES):
        if debounce < 1:
            raise InputError("debounce must be at least one frame")
        self.template = template
        self.threshold = template.threshold if threshold is None else float(threshold)
        self.debounce = int(debounce)
        self.reset()

    def reset(self) -> None:
        self._run = 0
        self._fired = False
        self._frame = 0

    def update(self, pose: HandPose, timestamp_us: Optional[int] = None) -> Optional[ActivationEvent]:
        return self.update_similarity(activation_similarity(pose, self.template), timestamp_us)

    def update_similarity(self, sim: float, timestamp_us: Optional[int] = None) -> Optional[ActivationEvent]:
        frame = self._frame
        self._frame += 1
        if sim >= self.threshold:
            self._run += 1
            if self._run >= self.debounce and not self._fired:
                self._fired = True
                return ActivationEvent(frame, timestamp_us, sim)
        else:
            self._run = 0
            self._fired = False
        return None


def detect_activation(stream: Iterable, template: ActivationTemplate, timestamps_us: Optional[Sequence] = None,
                      threshold: Optional[float] = None, debounce: int = DEBOUNCE_FRAMES) -> list:
    det = ActivationDetector(template, threshold, debounce)
    events = []
    for k, p in enumerate(stream):
        ts = None if timestamps_us is None else int(timestamps_us[k])
        ev = det.update(p if isinstance(p, HandPose) else HandPose(p), ts)
        if ev is not None:
            events.append(ev)
    return events


def class_gap(positive: np.ndarray, negative: np.ndarray) -> float:
    """Smallest template similarity minus the largest non-template similarity."""
    if len(positive) == 0 or len(negative) == 0:
        raise InputError("both classes need at least one similarity")
    return float(np.min(positive) - np.max(negative))


def calibrate_threshold(positive: np.ndarray, negative: np.ndarray) -> float:
    """Threshold at the midpoint of the class gap; raises if the classes overlap."""
    gap = class_gap(positive, negative)
    if gap <= 0:
        raise InputError(f"template and non-template similarities overlap (gap {gap:.4g})")
    return float(np.max(negative) + gap / 2)


def event_scores(events: Sequence[ActivationEvent], intervals_us: Sequence) -> tuple:
    """``(precision, recall)`` of events against template intervals ``[(start_us, end_us), ...]``."""
    def inside(ev):
        return any(a <= ev.timestamp_us <= b for a, b in intervals_us)

    tp = sum(inside(e) for e in events)
    hit = sum(any(a <= e.timestamp_us <= b for e in events) for a, b in intervals_us)
    precision = tp / len(events) if events else 1.0
    recall = hit / len(intervals_us) if intervals_us else 1.0
    return precision, recall


__all__ = [
    "ActivationDetector", "ActivationEvent", "ActivationTemplate", "DEBOUNCE_FRAMES", "DEFAULT_THRESHOLD",
    "FlexionAngles", "N_JOINTS", "activation_similarity", "calibrate_threshold", "class_gap",
    "detect_activation", "event_scores", "flexion_angles", "normalize_pose", "palm_frame", "similarities",
]
