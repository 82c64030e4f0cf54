"""21-joint hand skeleton: joint order, canonical bone lengths, forward kinematics.

Joint order (version 1), device-frame millimetres::

     0 wrist
     1 palm          midpoint of the wrist and the mean of the four finger roots
     2 thumb_mcp     3 thumb_ip      4 thumb_tip
     5 index_mcp     6 index_pip     7 index_dip     8 index_tip
     9 middle_mcp   10 middle_pip   11 middle_dip   12 middle_tip
    13 ring_mcp     14 ring_pip     15 ring_dip     16 ring_tip
    17 pinky_mcp    18 pinky_pip    19 pinky_dip    20 pinky_tip

Every finger chain starts at the wrist. The thumb has three bones
(metacarpal, proximal, distal), the other fingers four (metacarpal,
proximal, intermediate, distal), giving 19 bones.

Device frame: x to the right of the device, y away from it (range), z up
from the table plane.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ShapeError

JOINT_ORDER_VERSION = 1
N_JOINTS = 21
FINGERS = ("thumb", "index", "middle", "ring", "pinky")

_FINGER_JOINT_SUFFIXES = {
    "thumb": ("mcp", "ip", "tip"),
    "index": ("mcp", "pip", "dip", "tip"),
    "middle": ("mcp", "pip", "dip", "tip"),
    "ring": ("mcp", "pip", "dip", "tip"),
    "pinky": ("mcp", "pip", "dip", "tip"),
}
_BONE_NAMES = {
    "thumb": ("metacarpal", "proximal", "distal"),
    **{f: ("metacarpal", "proximal", "intermediate", "distal") for f in FINGERS[1:]},
}

JOINT_NAMES: tuple = ("wrist", "palm") + tuple(
    f"{f}_{s}" for f in FINGERS for s in _FINGER_JOINT_SUFFIXES[f]
)
WRIST, PALM = 0, 1

FINGER_JOINTS: dict = {}
_i = 2
for _f in FINGERS:
    FINGER_JOINTS[_f] = tuple(range(_i, _i + len(_FINGER_JOINT_SUFFIXES[_f])))
    _i += len(_FINGER_JOINT_SUFFIXES[_f])
del _i, _f


@dataclass(frozen=True)
class Bone:
    finger: str
    name: str
    parent: int  # joint index the bone starts at
    child: int  # joint index the bone ends at

    @property
    def label(self) -> str:
        return f"{self.finger}_{self.name}"


BONES: tuple = tuple(
    Bone(f, _BONE_NAMES[f][k], (WRIST if k == 0 else FINGER_JOINTS[f][k - 1]), FINGER_JOINTS[f][k])
    for f in FINGERS
    for k in range(len(FINGER_JOINTS[f]))
)
assert len(BONES) == 19


def csv_columns() -> list:
    return ["timestamp_us"] + [f"j{j:02d}_{a}" for j in range(N_JOINTS) for a in "xyz"]


@dataclass
class HandPose:
    """21 joints in device-frame millimetres."""

    joints: np.ndarray

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        if self.joints.shape == (3 * N_JOINTS,):
            self.joints = self.joints.reshape(N_JOINTS, 3)
        if self.joints.shape != (N_JOINTS, 3):
            raise ShapeError(f"HandPose needs 21x3 joints, got {self.joints.shape}")
        if not np.all(np.isfinite(self.joints)):
            raise ConfigError("HandPose contains non-finite coordinates")

    def as_vector(self) -> np.ndarray:
        return self.joints.reshape(-1).copy()

    def __getitem__(self, name: str) -> np.ndarray:
        return self.joints[JOINT_NAMES.index(name)]


# ---------------------------------------------------------------------------
# canonical hand and forward kinematics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HandModel:
    """Bone lengths (mm) and joint limits of a hand.

    The defaults approximate published adult averages. ``fan_deg`` is the
    in-palm angle of each metacarpal from the middle-finger axis, positive
    toward the thumb. ``max_flex_deg`` holds the joint rotation at full
    flexion for each non-root joint of the finger, root to tip.
    """

    lengths_mm: dict = field(default_factory=lambda: {
        "thumb": (46.0, 32.0, 25.0),
        "index": (68.0, 40.0, 23.0, 18.0),
        "middle": (64.0, 45.0, 27.0, 19.0),
        "ring": (58.0, 42.0, 26.0, 19.0),
        "pinky": (53.0, 33.0, 18.0, 17.0),
    })
    fan_deg: dict = field(default_factory=lambda: {
        "thumb": 42.0, "index": 14.0, "middle": 2.0, "ring": -10.0, "pinky": -22.0,
    })
    max_flex_deg: dict = field(default_factory=lambda: {
        "thumb": (50.0, 70.0),
        "index": (85.0, 100.0, 70.0),
        "middle": (85.0, 100.0, 70.0),
        "ring": (85.0, 100.0, 70.0),
        "pinky": (85.0, 100.0, 70.0),
    })

    def scaled(self, factor: float) -> "HandModel":
        return replace(self, lengths_mm={f: tuple(factor * v for v in ls) for f, ls in self.lengths_mm.items()})

    def bone_length(self, bone: Bone) -> float:
        k = FINGER_JOINTS[bone.finger].index(bone.child)
        return self.lengths_mm[bone.finger][k]


CANONICAL_HAND = HandModel()


@dataclass(frozen=True)
class HandKinematicParams:
    """Wrist position (m), palm orientation (deg) and per-finger flexion in [0, 1].

    ``orientation_deg`` is (palm rotation, azimuth, elevation); the hand is
    rotated about the wrist by ``Rz(azimuth) @ Rx(elevation) @ Ry(rotation)``
    after the base pose (palm down, fingers pointing at the device).
    """

    wrist_pos: tuple = (0.0, 0.28, 0.12)
    orientation_deg: tuple = (0.0, 0.0, 0.0)
    flexion: tuple = (0.0, 0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        flex = np.asarray(self.flexion, dtype=float)
        ori = np.asarray(self.orientation_deg, dtype=float)
        if flex.shape != (5,) or np.any(flex < 0) or np.any(flex > 1):
            raise ConfigError(f"flexion must be 5 values in [0, 1], got {self.flexion}")
        if ori.shape != (3,) or np.any(np.abs(ori) > 60.0):
            raise ConfigError(f"orientation angles must lie in [-60, 60] deg, got {self.orientation_deg}")
        if len(self.wrist_pos) != 3 or not np.all(np.isfinite(self.wrist_pos)):
            raise ConfigError(f"wrist_pos must be 3 finite values, got {self.wrist_pos}")


def _rot_x(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([o, z, z], -1), np.stack([z, c, -s], -1), np.stack([z, s, c], -1)], -2)


def _rot_y(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, z, s], -1), np.stack([z, o, z], -1), np.stack([-s, z, c], -1)], -2)


def _rot_z(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, -s, z], -1), np.stack([s, c, z], -1), np.stack([z, z, o], -1)], -2)


# local hand frame: x toward the pinky side, y along the fingers, z out of the back of the hand
_BASE = _rot_z(np.array(np.pi))


def hand_rotation(orientation_deg) -> np.ndarray:
    """Rotation matrices ``(..., 3, 3)`` taking the local hand frame to the device frame."""
    o = np.deg2rad(np.asarray(orientation_deg, dtype=float))
    roll, az, el = o[..., 0], o[..., 1], o[..., 2]
    return _rot_z(az) @ _rot_x(el) @ _rot_y(roll) @ _BASE


def local_joints(flexion, model: HandModel = CANONICAL_HAND) -> np.ndarray:
    """Joint positions (mm) in the local hand frame, wrist at the origin.

    ``flexion`` has shape ``(..., 5)``; returns ``(..., 21, 3)``.
    """
    flex = np.asarray(flexion, dtype=float)
    out = np.zeros(flex.shape[:-1] + (N_JOINTS, 3))
    zl = np.array([0.0, 0.0, 1.0])
    for fi, finger in enumerate(FINGERS):
        fan = np.deg2rad(model.fan_deg[finger])
        u0 = np.array([-np.sin(fan), np.cos(fan), 0.0])
        axis = np.cross(zl, u0)
        curl = np.cross(axis, u0)  # unit, points to the palm side
        lengths = model.lengths_mm[finger]
        joints = FINGER_JOINTS[finger]
        pos = lengths[0] * u0 * np.ones(flex.shape[:-1] + (1,))
        out[..., joints[0], :] = pos
        theta = np.zeros(flex.shape[:-1])
        for k in range(1, len(joints)):
            theta = theta + flex[..., fi] * np.deg2rad(model.max_flex_deg[finger][k - 1])
            d = np.cos(theta)[..., None] * u0 + np.sin(theta)[..., None] * curl
            pos = pos + lengths[k] * d
            out[..., joints[k], :] = pos
    roots = [FINGER_JOINTS[f][0] for f in FINGERS[1:]]
    out[..., PALM, :] = 0.5 * out[..., roots, :].mean(axis=-2)
    return out


def forward_kinematics(wrist_pos_m, orientation_deg, flexion, model: HandModel = CANONICAL_HAND) -> np.ndarray:
    """Vectorised kinematics: arrays with leading time axis -> ``(..., 21, 3)`` mm."""
    local = local_joints(flexion, model)
    rot = hand_rotation(orientation_deg)
    wrist_mm = 1000.0 * np.asarray(wrist_pos_m, dtype=float)
    return np.einsum("...ij,...kj->...ki", rot, local) + wrist_mm[..., None, :]


def hand_pose_from_params(params: HandKinematicParams, hand_model: HandModel = CANONICAL_HAND) -> HandPose:
    return HandPose(forward_kinematics(params.wrist_pos, params.orientation_deg, params.flexion, hand_model))
