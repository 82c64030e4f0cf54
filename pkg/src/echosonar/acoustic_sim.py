"""Synthetic multichannel recordings of point scatterers in front of the device.

Echo model: every path contributes the transmit signal delayed by the path
length over the sound speed, rounded to the nearest sample, and scaled by
``reflectivity / (d_in * d_out)``. Moving scatterers hold their position for
one chirp window at a time (receive-time windows of the unshifted record),
so no velocity term ever enters a delay.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import signal

from . import kernels
from .chirp import ChirpSpec, SampleBuffer
from .errors import ConfigError
from .skeleton import (
    CANONICAL_HAND,
    HandKinematicParams,
    HandModel,
    HandPose,
    forward_kinematics,
)

MIN_PATH_M = 0.01  # distances are clamped here so co-located elements stay finite
SURFACE_REFLECTION = 0.5
AUDIBLE_BAND_HZ = 8_000.0
JOINT_REFLECTIVITY = 0.02


@dataclass(frozen=True)
class MicArrayGeometry:
    positions: np.ndarray  # (7, 3) metres

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.shape != (7, 3):
            raise ConfigError(f"mic array needs exactly 7 positions, got shape {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ConfigError("mic positions must be finite")
        d = np.linalg.norm(pos[:, None] - pos[None], axis=-1) + np.eye(7)
        if np.any(d == 0):
            raise ConfigError("mic positions must be distinct")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def uma8(cls, radius_m: float = 0.045, height_m: float = 0.03) -> "MicArrayGeometry":
        """Centre mic plus six on a circle, array plane parallel to the table."""
        ang = np.arange(6) * np.pi / 3
        ring = np.stack([radius_m * np.cos(ang), radius_m * np.sin(ang), np.full(6, height_m)], axis=1)
        return cls(np.vstack([[0.0, 0.0, height_m], ring]))


DEFAULT_SPEAKER = (0.0, 0.0, 0.07)


@dataclass(frozen=True)
class Scatterer:
    position: tuple
    reflectivity: float = JOINT_REFLECTIVITY

    def __post_init__(self):
        if len(self.position) != 3 or not np.all(np.isfinite(self.position)):
            raise ConfigError(f"scatterer position must be 3 finite values, got {self.position}")
        if not self.reflectivity >= 0:
            raise ConfigError(f"reflectivity must be >= 0, got {self.reflectivity}")


@dataclass
class ScattererTrack:
    """Moving scatterers sampled once per chirp window.

    positions: ``(n_windows, n_scatterers, 3)`` metres.
    reflectivity: ``(n_scatterers,)`` or ``(n_windows, n_scatterers)``.
    """

    positions: np.ndarray
    reflectivity: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 3 or self.positions.shape[-1] != 3:
            raise ConfigError(f"track positions must be (windows, scatterers, 3), got {self.positions.shape}")
        refl = np.asarray(self.reflectivity, dtype=float)
        self.reflectivity = np.broadcast_to(refl, self.positions.shape[:2]).copy()
        if not np.all(np.isfinite(self.positions)) or np.any(self.reflectivity < 0):
            raise ConfigError("track positions must be finite and reflectivities >= 0")

    @classmethod
    def from_sets(cls, sets: Sequence[Sequence[Scatterer]]) -> "ScattererTrack":
        pos = np.array([[s.position for s in frame] for frame in sets], dtype=float)
        refl = np.array([[s.reflectivity for s in frame] for frame in sets], dtype=float)
        return cls(pos, refl)

    @property
    def n_windows(self) -> int:
        return self.positions.shape[0]


@dataclass
class Scene:
    speaker_pos: tuple = DEFAULT_SPEAKER
    mics: MicArrayGeometry = field(default_factory=MicArrayGeometry.uma8)
    static_scatterers: list = field(default_factory=list)
    moving_scatterers: Optional[ScattererTrack] = None
    surface_plane_enabled: bool = True
    noise_snr_db: Optional[float] = None
    ultrasound_gain_db: float = 0.0
    start_offset_samples: int = 0
    audible_noise_snr_db: Optional[float] = None
    noise_seed: int = 0

    def validate(self, spec: ChirpSpec) -> None:
        if int(self.start_offset_samples) != self.start_offset_samples or self.start_offset_samples < 0:
            raise ConfigError("start_offset_samples must be a non-negative integer")
        if self.start_offset_samples >= 4 * spec.chirp_len_samples:
            raise ConfigError(
                f"start_offset_samples={self.start_offset_samples} must be < 4 chirps "
                f"({4 * spec.chirp_len_samples})"
            )
        if len(self.speaker_pos) != 3 or not np.all(np.isfinite(self.speaker_pos)):
            raise ConfigError("speaker_pos must be 3 finite values")


def hand_to_scatterers(pose: HandPose, reflectivity_per_joint: float = JOINT_REFLECTIVITY) -> list:
    return [Scatterer(tuple(j / 1000.0), reflectivity_per_joint) for j in pose.joints]


def hand_track(poses_mm: np.ndarray, reflectivity_per_joint: float = JOINT_REFLECTIVITY) -> ScattererTrack:
    """Vectorised :func:`hand_to_scatterers` for a ``(windows, 21, 3)`` pose sequence."""
    poses_mm = np.asarray(poses_mm, dtype=float)
    return ScattererTrack(poses_mm / 1000.0, np.full(poses_mm.shape[1], reflectivity_per_joint))


def _mirror(p: np.ndarray) -> np.ndarray:
    q = np.array(p, dtype=float, copy=True)
    q[..., 2] = -q[..., 2]
    return q


def _dist(a, b):
    return np.maximum(np.linalg.norm(np.asarray(a) - np.asarray(b), axis=-1), MIN_PATH_M)


def direct_delays(scene: Scene, spec: ChirpSpec) -> np.ndarray:
    """Nearest-sample speaker-to-mic delay per channel (before the start offset)."""
    d = _dist(np.asarray(scene.speaker_pos)[None], scene.mics.positions)
    return np.rint(d / spec.sound_speed_mps * spec.sample_rate_hz).astype(np.int64)


def echo_paths(points: np.ndarray, refl: np.ndarray, scene: Scene, spec: ChirpSpec):
    """Delays (samples) and amplitudes for scatterers at ``points`` (..., 3).

    Returns arrays of shape ``(..., n_paths, 7)`` with the direct reflection
    first, then (if enabled) the speaker-image and mic-image table bounces.
    """
    s = np.asarray(scene.speaker_pos, dtype=float)
    mics = scene.mics.positions
    gain = 10.0 ** (scene.ultrasound_gain_db / 20.0)
    p = points[..., None, :]
    d_in = _dist(s, points)[..., None]
    d_out = _dist(p, mics)
    legs = [(d_in, d_out, 1.0)]
    if scene.surface_plane_enabled:
        legs.append((_dist(_mirror(s), points)[..., None], d_out, SURFACE_REFLECTION))
        legs.append((d_in, _dist(p, _mirror(mics)), SURFACE_REFLECTION))
    rate = spec.sample_rate_hz / spec.sound_speed_mps
    delays = np.stack([np.rint((a + b) * rate) for a, b, _ in legs], axis=-2).astype(np.int64)
    amps = np.stack([k * gain * refl[..., None] / (a * b) for a, b, k in legs], axis=-2)
    return delays, amps


def _static_paths(scene: Scene, spec: ChirpSpec):
    s = np.asarray(scene.speaker_pos, dtype=float)
    mics = scene.mics.positions
    rate = spec.sample_rate_hz / spec.sound_speed_mps
    d = _dist(s, mics)
    delays = [np.rint(d * rate)]
    amps = [1.0 / d]
    if scene.surface_plane_enabled:
        di = _dist(_mirror(s), mics)
        delays.append(np.rint(di * rate))
        amps.append(SURFACE_REFLECTION / di)
    delays = np.stack(delays).astype(np.int64)
    amps = np.stack(amps)
    if scene.static_scatterers:
        pts = np.array([sc.position for sc in scene.static_scatterers], dtype=float)
        refl = np.array([sc.reflectivity for sc in scene.static_scatterers], dtype=float)
        ed, ea = echo_paths(pts, refl, scene, spec)
        delays = np.concatenate([delays, ed.reshape(-1, 7)])
        amps = np.concatenate([amps, ea.reshape(-1, 7)])
    return delays, amps


def _band_noise(rng, shape, fs, cutoff_hz):
    sos = signal.butter(8, cutoff_hz, btype="low", fs=fs, output="sos")
    x = signal.sosfilt(sos, rng.standard_normal(shape), axis=-1)
    return x / np.sqrt(np.mean(x**2, axis=-1, keepdims=True))


def propagate(scene: Scene, tx: SampleBuffer, spec: ChirpSpec) -> SampleBuffer:
    """Render the 7-channel recording of ``scene`` for the periodic transmit ``tx``.

    The direct path and its table reflection are not affected by
    ``ultrasound_gain_db``; every scatterer path is. White noise
    (``noise_snr_db``) and audible-band noise (``audible_noise_snr_db``) are
    scaled relative to the direct-path RMS of each channel. The result is
    prefixed with ``start_offset_samples`` zeros.
    """
    scene.validate(spec)
    N = spec.chirp_len_samples
    x = np.asarray(tx.samples, dtype=float)
    if x.ndim != 1 or len(x) % N:
        raise ConfigError(f"tx must be a whole number of {N}-sample chirps")
    n_win = len(x) // N
    period = x[:N]
    if not np.array_equal(x, np.tile(period, n_win)):
        raise ConfigError("tx must repeat one chirp period")

    sd, sa = _static_paths(scene, spec)
    delays = np.broadcast_to(sd, (n_win,) + sd.shape)
    amps = np.broadcast_to(sa, (n_win,) + sa.shape)
    track = scene.moving_scatterers
    if track is not None and track.positions.shape[1] > 0:
        if track.n_windows < n_win:
            raise ConfigError(
                f"moving-scatterer trajectory covers {track.n_windows} windows, tx needs {n_win}"
            )
        md, ma = echo_paths(track.positions[:n_win], track.reflectivity[:n_win], scene, spec)
        delays = np.concatenate([delays, md.reshape(n_win, -1, 7)], axis=1)
        amps = np.concatenate([amps, ma.reshape(n_win, -1, 7)], axis=1)
    out = kernels.render_echoes(period, delays, amps)

    if scene.noise_snr_db is not None or scene.audible_noise_snr_db is not None:
        rng = np.random.default_rng(scene.noise_seed)
        direct_rms = sa[0] * np.sqrt(np.mean(period**2))
        if scene.noise_snr_db is not None:
            level = direct_rms * 10.0 ** (-scene.noise_snr_db / 20.0)
            out = out + level[:, None] * rng.standard_normal(out.shape)
        if scene.audible_noise_snr_db is not None:
            level = direct_rms * 10.0 ** (-scene.audible_noise_snr_db / 20.0)
            out = out + level[:, None] * _band_noise(rng, out.shape, spec.sample_rate_hz, AUDIBLE_BAND_HZ)

    if scene.start_offset_samples:
        out = np.concatenate([np.zeros((7, int(scene.start_offset_samples))), out], axis=1)
    return SampleBuffer(out, spec.sample_rate_hz)


# ---------------------------------------------------------------------------
# gesture trajectories
# ---------------------------------------------------------------------------

STAGES = ("1-finger", "2-finger", "3-finger", "4-finger", "5-finger", "mixed")
TRAJECTORY_RATE_HZ = 100.0

#: flexion (thumb, index, middle, ring, pinky) of the 15 poses cycled by the mixed stage
MIXED_POSES = (
    (0.0, 0.0, 0.0, 0.0, 0.0),  # open palm
    (1.0, 1.0, 1.0, 1.0, 1.0),  # fist
    (1.0, 0.0, 1.0, 1.0, 1.0),  # point
    (1.0, 0.0, 0.0, 1.0, 1.0),  # two
    (1.0, 0.0, 0.0, 0.0, 1.0),  # three
    (1.0, 0.0, 0.0, 0.0, 0.0),  # four
    (0.0, 1.0, 1.0, 1.0, 1.0),  # thumb up
    (0.0, 1.0, 1.0, 1.0, 0.0),  # shaka
    (1.0, 0.0, 1.0, 1.0, 0.0),  # horns
    (0.5, 0.5, 0.5, 0.5, 0.5),  # claw
    (0.0, 0.0, 0.0, 0.0, 1.0),  # pinky down
    (0.7, 0.7, 0.0, 0.0, 0.0),  # pinch
    (0.0, 0.0, 1.0, 0.0, 0.0),  # middle down
    (0.3, 0.3, 0.6, 0.8, 1.0),  # cascade
    (1.0, 1.0, 0.0, 0.0, 0.0),  # thumb and index down
)
#: the "I love you" hand shape used as the activation pose
LOVE_FLEXION = (0.0, 0.0, 1.0, 1.0, 0.0)


def finger_groups(kind: str) -> list:
    """Finger subsets flexed together by a curriculum stage (consecutive fingers)."""
    if kind not in STAGES[:-1]:
        raise ConfigError(f"{kind!r} has no finger groups; expected one of {STAGES[:-1]}")
    k = int(kind[0])
    return [tuple(range(i, i + k)) for i in range(5 - k + 1)]


@dataclass
class Trajectory:
    times_s: np.ndarray
    wrist_m: np.ndarray  # (T, 3)
    orientation_deg: np.ndarray  # (T, 3)
    flexion: np.ndarray  # (T, 5)
    kind: str = "mixed"
    seed: int = 0
    template_intervals: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times_s)

    def params(self, i: int) -> HandKinematicParams:
        return HandKinematicParams(
            tuple(self.wrist_m[i]), tuple(self.orientation_deg[i]), tuple(np.clip(self.flexion[i], 0, 1))
        )

    def resample(self, times_s: np.ndarray) -> "Trajectory":
        t = np.asarray(times_s, dtype=float)

        def interp(a):
            return np.stack([np.interp(t, self.times_s, a[:, j]) for j in range(a.shape[1])], axis=1)

        return Trajectory(t, interp(self.wrist_m), interp(self.orientation_deg), interp(self.flexion),
                          self.kind, self.seed, list(self.template_intervals))

    def poses_mm(self, model: HandModel = CANONICAL_HAND) -> np.ndarray:
        return forward_kinematics(self.wrist_m, self.orientation_deg, self.flexion, model)


def _smooth_wander(rng, t, amplitude, n_terms=3, fmin=0.04, fmax=0.25):
    out = np.zeros_like(t)
    for _ in range(n_terms):
        f = rng.uniform(fmin, fmax)
        out += np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return amplitude * out / n_terms


def _ease(u):
    return 0.5 - 0.5 * np.cos(np.pi * np.clip(u, 0.0, 1.0))


def gesture_trajectory(kind: str, duration_s: float, seed: int, *,
                       rate_hz: float = TRAJECTORY_RATE_HZ,
                       wrist_center_m=(0.0, 0.28, 0.13),
                       template_every: int = 0) -> Trajectory:
    """Seeded hand motion for one curriculum stage or the mixed set.

    Stages ``k-finger`` flex one consecutive group of ``k`` fingers per
    segment (raise-and-release, zero velocity at both ends) while the other
    fingers stay at rest. ``mixed`` cycles through :data:`MIXED_POSES` with
    eased transitions; with ``template_every > 0`` it inserts the activation
    pose after every ``template_every`` poses and records the intervals.
    The wrist wanders slowly and carries a sub-millimetre tremor so the hand
    is never perfectly static.
    """
    if kind not in STAGES:
        raise ConfigError(f"unknown trajectory kind {kind!r}; expected one of {STAGES}")
    if not duration_s > 0:
        raise ConfigError("duration_s must be positive")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * rate_hz)) + 1
    t = np.arange(n) / rate_hz

    c = np.asarray(wrist_center_m, dtype=float)
    wrist = np.stack([
        c[0] + _smooth_wander(rng, t, 0.04),
        c[1] + _smooth_wander(rng, t, 0.05),
        c[2] + _smooth_wander(rng, t, 0.02),
    ], axis=1)
    tremor_hz = rng.uniform(6.0, 10.0, size=3)
    tremor_phase = rng.uniform(0, 2 * np.pi, size=3)
    wrist += 0.0008 * np.sin(2 * np.pi * tremor_hz * t[:, None] + tremor_phase)
    orient = np.stack([
        _smooth_wander(rng, t, 12.0), _smooth_wander(rng, t, 15.0), _smooth_wander(rng, t, 10.0),
    ], axis=1)

    flex = np.zeros((n, 5))
    intervals = []
    if kind != "mixed":
        groups = finger_groups(kind)
        g = int(rng.integers(len(groups)))
        start = 0.0
        while start < t[-1]:
            seg = rng.uniform(1.2, 2.0)
            peak = rng.uniform(0.6, 1.0)
            m = (t >= start) & (t < start + seg)
            u = (t[m] - start) / seg
            prof = peak * 0.5 * (1.0 - np.cos(2.0 * np.pi * u))
            for f in groups[g % len(groups)]:
                flex[m, f] = prof
            g += 1
            start += seg
    else:
        order = rng.permutation(len(MIXED_POSES))
        targets = []
        k = 0
        while len(targets) * 1.5 < duration_s + 3.0:
            targets.append((np.asarray(MIXED_POSES[order[k % len(order)]]), False))
            k += 1
            if template_every and k % template_every == 0:
                targets.append((np.asarray(LOVE_FLEXION), True))
        prev = np.asarray(MIXED_POSES[order[-1]], dtype=float)
        start = 0.0
        open_at = None
        for target, is_template in targets:
            trans = rng.uniform(0.4, 0.6)
            hold = rng.uniform(0.8, 1.2)
            m = (t >= start) & (t < start + trans + hold)
            u = _ease((t[m] - start) / trans)[:, None]
            flex[m] = prev + (target - prev) * u
            if open_at is not None:
                # the interval covers the moves into and out of the template
                intervals.append((open_at, start + trans))
                open_at = None
            if is_template:
                open_at = start
            prev = target.astype(float)
            start += trans + hold
            if start > t[-1]:
                break
        if open_at is not None:
            intervals.append((open_at, float(t[-1])))
    return Trajectory(t, wrist, orient, np.clip(flex, 0.0, 1.0), kind, seed, intervals)
