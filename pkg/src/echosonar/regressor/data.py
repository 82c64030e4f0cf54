"""Lazily materialised labelled windows for training and evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..dataset.features import WINDOW_SLICES, FeatureWindow, check_shifts, shift_mm, shift_tensor
from ..errors import InputError, ShapeError
from ..skeleton import HandPose


@dataclass
class WindowSet:
    """Windows described by (stream, end index, range shift) over shared subtracted streams.

    ``streams`` hold ``(C, cells, T)`` arrays; window ``i`` is
    ``streams[stream_idx[i]][:, :, end_idx[i] - length + 1: end_idx[i] + 1]``
    moved ``shifts[i]`` cells along range. ``labels`` are already shifted.
    """

    streams: list
    stream_idx: np.ndarray
    end_idx: np.ndarray
    shifts: np.ndarray
    labels: np.ndarray  # (n, 63) mm
    sessions: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=object))
    length: int = WINDOW_SLICES

    def __post_init__(self):
        n = len(self.end_idx)
        self.stream_idx = np.asarray(self.stream_idx, dtype=np.int64)
        self.end_idx = np.asarray(self.end_idx, dtype=np.int64)
        self.shifts = np.asarray(self.shifts, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.float64).reshape(n, -1)
        if len(self.sessions) != n:
            self.sessions = np.array([""] * n, dtype=object)
        if not (len(self.stream_idx) == len(self.shifts) == len(self.labels) == n):
            raise ShapeError("WindowSet fields disagree in length")
        if n and (self.end_idx.min() < self.length - 1):
            raise ShapeError("a window starts before its stream")

    def __len__(self) -> int:
        return len(self.end_idx)

    @property
    def window_shape(self) -> tuple:
        c, h, _ = self.streams[0].shape
        return c, h, self.length

    def batch(self, idx) -> tuple:
        idx = np.asarray(idx, dtype=np.int64)
        c, h, L = self.window_shape
        x = np.empty((len(idx), c, h, L), dtype=np.float32)
        for k, i in enumerate(idx):
            e = self.end_idx[i]
            w = self.streams[self.stream_idx[i]][:, :, e - L + 1: e + 1]
            x[k] = shift_tensor(w, self.shifts[i], axis=1) if self.shifts[i] else w
        return x, self.labels[idx]

    def windows(self) -> list:
        x, y = self.batch(np.arange(len(self)))
        return [FeatureWindow(x[i], 0, HandPose(y[i]), int(self.end_idx[i]), int(self.shifts[i]))
                for i in range(len(self))]

    def subset(self, idx) -> "WindowSet":
        idx = np.asarray(idx)
        return WindowSet(self.streams, self.stream_idx[idx], self.end_idx[idx], self.shifts[idx],
                         self.labels[idx], self.sessions[idx], self.length)

    def augmented(self, shifts: Sequence[int], cell_size_m: float) -> "WindowSet":
        """Originals followed by one shifted copy per shift, labels moved in y."""
        shifts = check_shifts(shifts)
        parts = [self]
        for s in shifts:
            lab = self.labels.reshape(len(self), -1, 3).copy()
            lab[:, :, 1] += shift_mm(s, cell_size_m)
            parts.append(WindowSet(self.streams, self.stream_idx, self.end_idx, self.shifts + s,
                                   lab.reshape(len(self), -1), self.sessions, self.length))
        return concat(parts)

    @classmethod
    def from_stream(cls, stream: np.ndarray, end_idx, labels, session: str = "",
                    length: int = WINDOW_SLICES) -> "WindowSet":
        n = len(end_idx)
        return cls([stream], np.zeros(n, dtype=np.int64), end_idx, np.zeros(n, dtype=np.int64),
                   labels, np.array([session] * n, dtype=object), length)

    @classmethod
    def from_windows(cls, windows: Sequence[FeatureWindow]) -> "WindowSet":
        """Materialised windows (each becomes its own one-window stream)."""
        if not windows:
            raise InputError("no windows given")
        if any(w.label is None for w in windows):
            raise InputError("every window needs a label")
        L = windows[0].tensor.shape[-1]
        return cls([w.tensor for w in windows], np.arange(len(windows)), np.full(len(windows), L - 1),
                   np.zeros(len(windows), dtype=np.int64), np.stack([w.label.as_vector() for w in windows]),
                   length=L)


def concat(sets: Sequence[WindowSet]) -> WindowSet:
    sets = [s for s in sets if len(s)]
    if not sets:
        raise InputError("nothing to concatenate")
    if len({s.length for s in sets}) != 1:
        raise ShapeError("window lengths differ")
    streams, sidx = [], []
    for s in sets:
        offset = {}
        for k, st in enumerate(s.streams):
            for j, known in enumerate(streams):
                if known is st:
                    offset[k] = j
                    break
            else:
                offset[k] = len(streams)
                streams.append(st)
        sidx.append(np.array([offset[k] for k in s.stream_idx], dtype=np.int64))
    return WindowSet(streams, np.concatenate(sidx), np.concatenate([s.end_idx for s in sets]),
                     np.concatenate([s.shifts for s in sets]), np.concatenate([s.labels for s in sets]),
                     np.concatenate([s.sessions for s in sets]), sets[0].length)


def split_holdout(data: WindowSet, fraction: float, rng: Optional[np.random.Generator] = None) -> tuple:
    """Random window-level split; used only inside one training set for monitoring."""
    rng = rng or np.random.default_rng(0)
    perm = rng.permutation(len(data))
    k = int(round(fraction * len(data)))
    return data.subset(np.sort(perm[k:])), data.subset(np.sort(perm[:k]))
