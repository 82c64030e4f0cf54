"""End-to-end glue: simulated sessions, preprocessing to labelled windows, corpora.

Clock convention: ground-truth timestamps count microseconds from the first
transmitted sample. The audio pipeline never sees the start offset; it
recovers the same clock from the direct-path anchor (off by the few samples
of speaker-to-mic flight time, well under one ground-truth frame).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import acoustic_sim as sim
from .chirp import ChirpSpec, SampleBuffer, generate_chirp, repeat_chirps
from .dataset.features import MAX_GAP_US, WINDOW_SLICES, align_labels, assemble_features, nearest_frames, quantize_mm, window_ends
from .errors import ConfigError
from .rangeprofile import ProcessedRecording, process_recording
from .regressor.data import WindowSet, concat
from .skeleton import CANONICAL_HAND, HandModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SubjectProfile:
    """Per-subject hand size and preferred hand position."""

    subject_id: str
    hand_scale: float = 1.0
    wrist_center_m: tuple = (0.0, 0.28, 0.13)

    @property
    def hand_model(self) -> HandModel:
        return CANONICAL_HAND.scaled(self.hand_scale)

    @classmethod
    def from_seed(cls, subject_id: str, seed: int) -> "SubjectProfile":
        rng = np.random.default_rng([seed, 7919])
        return cls(subject_id, float(rng.uniform(0.9, 1.1)),
                   (float(rng.uniform(-0.02, 0.02)), float(rng.uniform(0.26, 0.30)), float(rng.uniform(0.12, 0.14))))


def room_clutter(room_id: str, seed: int = 0, n_objects: int = 4) -> list:
    """Seeded static objects on and around the table for a named room."""
    rng = np.random.default_rng([seed, sum(room_id.encode())])
    out = []
    for _ in range(n_objects):
        r = rng.uniform(0.25, 1.2)
        az = rng.uniform(-np.pi / 2, np.pi / 2)
        out.append(sim.Scatterer((float(r * np.sin(az)), float(r * np.cos(az)), float(rng.uniform(0.0, 0.3))),
                                 float(rng.uniform(0.05, 0.3))))
    return out


@dataclass
class SimulatedSession:
    recording: SampleBuffer
    gt_times_us: np.ndarray  # (T,)
    gt_joints_mm: np.ndarray  # (T, 21, 3)
    trajectory: sim.Trajectory
    scene: sim.Scene
    window_poses_mm: np.ndarray = field(repr=False, default=None)  # pose held during each chirp window


def simulate_session(kind: str, duration_s: float, seed: int, *, spec: Optional[ChirpSpec] = None,
                     subject: Optional[SubjectProfile] = None, scene: Optional[sim.Scene] = None,
                     reflectivity_per_joint: float = sim.JOINT_REFLECTIVITY, template_every: int = 0,
                     gt_rate_hz: float = sim.TRAJECTORY_RATE_HZ) -> SimulatedSession:
    """Render a hand performing a curriculum stage (or mixed gestures) in a scene.

    The hand's pose is evaluated at each chirp window's centre and held for
    that window. ``scene`` supplies geometry, clutter, noise and offset; its
    ``moving_scatterers`` are replaced by the hand.
    """
    spec = spec or ChirpSpec()
    subject = subject or SubjectProfile("s0")
    scene = scene or sim.Scene()
    n = spec.chirp_len_samples
    n_win = int(np.ceil(duration_s * spec.sample_rate_hz / n))
    traj = sim.gesture_trajectory(kind, n_win * n / spec.sample_rate_hz + 0.05, seed,
                                  rate_hz=gt_rate_hz, wrist_center_m=subject.wrist_center_m,
                                  template_every=template_every)
    model = subject.hand_model
    centres = (np.arange(n_win) + 0.5) * n / spec.sample_rate_hz
    win_poses = traj.resample(centres).poses_mm(model)
    track = sim.hand_track(win_poses, reflectivity_per_joint)
    sc = replace(scene, moving_scatterers=track)
    tx = repeat_chirps(generate_chirp(spec), n_win)
    rec = sim.propagate(sc, tx, spec)
    gt_times = np.rint(traj.times_s * 1e6).astype(np.int64)
    return SimulatedSession(rec, gt_times, traj.poses_mm(model), traj, sc, win_poses)


@dataclass
class PreprocessedSession:
    """Subtracted stream plus the labelled window index built on top of it."""

    stream: np.ndarray  # (C, 256, T) float32
    slice_end_us: np.ndarray  # (T,) end time of each subtracted slice
    end_idx: np.ndarray  # (n,) last slice of each labelled window
    labels: np.ndarray  # (n, 63) mm
    n_dropped: int
    max_gap_us: int
    processed: ProcessedRecording = field(repr=False, default=None)

    def window_set(self, session: str = "") -> WindowSet:
        return WindowSet.from_stream(self.stream, self.end_idx, self.labels, session)


def slice_end_times_us(pr: ProcessedRecording) -> np.ndarray:
    """Per subtracted slice: end of its window, measured from the first transmitted sample."""
    t0 = int(np.min(pr.anchor.anchor_cell))
    return np.rint((pr.subtracted_end_samples - t0) * 1e6 / pr.sample_rate_hz).astype(np.int64)


def preprocess_session(recording: SampleBuffer, spec: ChirpSpec, gt_times_us=None, gt_joints_mm=None, *,
                       stride: int = WINDOW_SLICES, cutoff_hz: float = 17_000.0,
                       max_gap_us: int = MAX_GAP_US) -> PreprocessedSession:
    pr = process_recording(recording, spec, cutoff_hz=cutoff_hz)
    stream = pr.subtracted.astype(np.float32)
    ends_us = slice_end_times_us(pr)
    ends = window_ends(stream.shape[-1], stride)
    if gt_times_us is None or len(gt_times_us) == 0:
        return PreprocessedSession(stream, ends_us, ends[:0], np.zeros((0, 63)), len(ends), 0, pr)
    idx, gap = nearest_frames(ends_us[ends], gt_times_us)
    keep = gap <= max_gap_us
    labels = quantize_mm(np.asarray(gt_joints_mm, dtype=np.float64)[idx[keep]].reshape(-1, 63))
    n_drop = int((~keep).sum())
    if n_drop:
        log.warning("%d of %d windows dropped: no ground truth within %d us", n_drop, len(ends), max_gap_us)
    max_gap = int(gap[keep].max()) if keep.any() else 0
    return PreprocessedSession(stream, ends_us, ends[keep], labels, n_drop, max_gap, pr)


def feature_windows(pre: PreprocessedSession, gt_times_us, gt_joints_mm, stride: int = WINDOW_SLICES):
    """Materialised :class:`FeatureWindow` objects with labels (for small sessions)."""
    wins = assemble_features(pre.stream, stride, pre.slice_end_us)
    return align_labels(wins, gt_times_us, gt_joints_mm)


@dataclass(frozen=True)
class CorpusSpec:
    """A reproducible simulated corpus: subjects x stages, plus validation sessions.

    ``mixed_duration_s`` sets the length of the mixed-gesture training
    session (default: ``stage_duration_s``), so the mixed share of the corpus
    can be balanced against the single-group stages.
    """

    n_subjects: int = 2
    stage_duration_s: float = 50.0
    val_duration_s: float = 30.0
    mixed_duration_s: Optional[float] = None
    stages: tuple = sim.STAGES
    stride: int = 10
    seed: int = 0
    rooms: tuple = ("room0",)
    noise_snr_db: Optional[float] = None

    def __post_init__(self):
        bad = set(self.stages) - set(sim.STAGES)
        if bad:
            raise ConfigError(f"unknown stages {sorted(bad)}")


@dataclass
class Corpus:
    train: dict  # stage -> WindowSet
    val: WindowSet
    subjects: list
    audio_seconds: float


def build_corpus(cs: CorpusSpec, spec: Optional[ChirpSpec] = None) -> Corpus:
    """Simulate and preprocess every session of ``cs``; validation uses mixed gestures."""
    spec = spec or ChirpSpec()
    subjects = [SubjectProfile.from_seed(f"s{i}", cs.seed + i) for i in range(cs.n_subjects)]
    train = {st: [] for st in cs.stages}
    val = []
    seconds = 0.0
    for si, subj in enumerate(subjects):
        room = cs.rooms[si % len(cs.rooms)]
        scene = sim.Scene(static_scatterers=room_clutter(room, cs.seed), noise_snr_db=cs.noise_snr_db,
                          noise_seed=cs.seed * 1000 + si)
        mixed_s = cs.stage_duration_s if cs.mixed_duration_s is None else cs.mixed_duration_s
        plan = [(st, mixed_s if st == "mixed" else cs.stage_duration_s, False) for st in cs.stages]
        plan.append(("mixed", cs.val_duration_s, True))
        for k, (st, dur, is_val) in enumerate(plan):
            seed = cs.seed * 10_000 + si * 100 + k
            ses = simulate_session(st, dur, seed, spec=spec, subject=subj, scene=scene)
            pre = preprocess_session(ses.recording, spec, ses.gt_times_us, ses.gt_joints_mm, stride=cs.stride)
            ws = pre.window_set(f"{subj.subject_id}/{st}/{seed}")
            (val if is_val else train[st]).append(ws)
            seconds += dur
    return Corpus({st: concat(v) for st, v in train.items()}, concat(val), subjects, seconds)
