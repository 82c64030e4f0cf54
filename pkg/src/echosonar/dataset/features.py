"""Feature windows: assembly, ground-truth alignment, range-shift augmentation, staging."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ..acoustic_sim import STAGES
from ..errors import InputError, ShapeError
from ..skeleton import HandPose

log = logging.getLogger(__name__)

WINDOW_SLICES = 50
DEFAULT_SHIFTS = (-3, -2, -1, 1, 2, 3)
MAX_SHIFT = 3
MAX_GAP_US = 20_000

#: labels live on a 2**-32 mm grid so range shifts add exactly and angles survive bit for bit
LABEL_QUANTUM_MM = 2.0**-32


def quantize_mm(x) -> np.ndarray:
    """Round to the label grid; exact because the scale is a power of two."""
    return np.round(np.asarray(x, dtype=np.float64) / LABEL_QUANTUM_MM) * LABEL_QUANTUM_MM


def shift_mm(shift: int, cell_size_m: float) -> float:
    """Label y offset for a range shift of ``shift`` cells, on the label grid."""
    return float(quantize_mm(shift * cell_size_m * 1000.0))


@dataclass
class FeatureWindow:
    """``tensor``: ``(channels, cells, slices)``; the last slice is subtracted profile ``end_index``."""

    tensor: np.ndarray
    end_timestamp_us: int
    label: Optional[HandPose] = None
    end_index: int = 0
    shift: int = 0

    def __post_init__(self):
        if self.tensor.ndim != 3:
            raise ShapeError(f"feature tensor must be (channels, cells, slices), got {self.tensor.shape}")


@dataclass
class AlignmentReport:
    n_windows: int
    n_dropped: int
    max_gap_us: int  # over the windows that kept a label
    gaps_us: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0, dtype=np.int64))


def window_ends(n_profiles: int, stride: int, length: int = WINDOW_SLICES) -> np.ndarray:
    """Stream indices of the last slice of every window."""
    if int(stride) != stride or stride < 1:
        raise InputError(f"stride must be a positive integer, got {stride}")
    if n_profiles < length:
        raise InputError(f"need at least {length} subtracted profiles, got {n_profiles}")
    return np.arange(length - 1, n_profiles, int(stride))


def assemble_features(subtracted, stride: int, end_timestamps_us=None,
                      length: int = WINDOW_SLICES) -> list:
    """Slide a ``length``-slice block over the subtracted stream ``(C, cells, T)``.

    ``subtracted`` may also be a sequence of per-window ``(C, cells)`` arrays
    or :class:`~echosonar.rangeprofile.RangeProfile` objects in stream order.
    """
    if not isinstance(subtracted, np.ndarray):
        subtracted = np.stack([getattr(p, "magnitudes", p) for p in subtracted], axis=-1)
    if subtracted.ndim != 3:
        raise ShapeError(f"subtracted stream must be (channels, cells, T), got {subtracted.shape}")
    ends = window_ends(subtracted.shape[-1], stride, length)
    ts = np.zeros(subtracted.shape[-1], dtype=np.int64) if end_timestamps_us is None else np.asarray(end_timestamps_us)
    if len(ts) != subtracted.shape[-1]:
        raise ShapeError("one end timestamp per subtracted profile is required")
    return [FeatureWindow(subtracted[:, :, e - length + 1: e + 1], int(ts[e]), None, int(e)) for e in ends]


def nearest_frames(query_us, gt_times_us):
    """Index of the nearest ground-truth frame to each query time, and the gap (µs)."""
    q = np.asarray(query_us, dtype=np.int64)
    g = np.asarray(gt_times_us, dtype=np.int64)
    if g.size == 0:
        return np.full(q.shape, -1), np.full(q.shape, np.iinfo(np.int64).max)
    hi = np.clip(np.searchsorted(g, q), 1, len(g) - 1) if len(g) > 1 else np.zeros_like(q)
    lo = np.maximum(hi - 1, 0)
    d_lo, d_hi = np.abs(q - g[lo]), np.abs(g[hi] - q)
    idx = np.where(d_hi < d_lo, hi, lo)  # ties go to the earlier frame
    return idx, np.abs(q - g[idx])


def align_labels(windows: Sequence[FeatureWindow], gt_times_us, gt_joints_mm,
                 max_gap_us: int = MAX_GAP_US):
    """Label each window with the ground-truth frame nearest its end time.

    Windows farther than ``max_gap_us`` from every frame keep ``label=None``
    and are counted in the report. Labels are snapped to the label grid.
    """
    gt_joints_mm = np.asarray(gt_joints_mm, dtype=np.float64)
    idx, gap = nearest_frames([w.end_timestamp_us for w in windows], gt_times_us)
    out = []
    kept = []
    for w, i, g in zip(windows, idx, gap):
        if i < 0 or g > max_gap_us:
            out.append(replace(w, label=None))
        else:
            out.append(replace(w, label=HandPose(quantize_mm(gt_joints_mm[i]))))
            kept.append(g)
    dropped = len(windows) - len(kept)
    if dropped:
        log.warning("%d of %d windows dropped: no ground truth within %d us", dropped, len(windows), max_gap_us)
    report = AlignmentReport(len(windows), dropped, int(max(kept)) if kept else 0, np.asarray(kept, dtype=np.int64))
    return out, report


def shift_tensor(tensor: np.ndarray, shift: int, axis: int = -2) -> np.ndarray:
    """Translate along the range axis by ``shift`` cells (``new[k] = old[k - shift]``), zero fill."""
    out = np.zeros_like(tensor)
    n = tensor.shape[axis]
    s = int(shift)
    if abs(s) >= n:
        return out
    src = [slice(None)] * tensor.ndim
    dst = [slice(None)] * tensor.ndim
    if s >= 0:
        src[axis], dst[axis] = slice(0, n - s), slice(s, n)
    else:
        src[axis], dst[axis] = slice(-s, n), slice(0, n + s)
    out[tuple(dst)] = tensor[tuple(src)]
    return out


def check_shifts(shifts) -> tuple:
    shifts = tuple(int(s) for s in shifts)
    bad = [s for s in shifts if s == 0 or abs(s) > MAX_SHIFT]
    if bad:
        raise InputError(f"shifts must be nonzero with |s| <= {MAX_SHIFT}, got {bad}")
    return shifts


def shift_label(label: HandPose, shift: int, cell_size_m: float) -> HandPose:
    j = label.joints.copy()
    j[:, 1] = j[:, 1] + shift_mm(shift, cell_size_m)
    return HandPose(j)


def augment(window: FeatureWindow, shifts=DEFAULT_SHIFTS, cell_size_m: float = 343.0 / 96_000.0) -> list:
    """One shifted copy per shift: tensor moved along range, every joint's y moved with it."""
    if window.label is None:
        raise InputError("augment needs a labelled window")
    out = []
    for s in check_shifts(shifts):
        out.append(FeatureWindow(shift_tensor(window.tensor, s), window.end_timestamp_us,
                                 shift_label(window.label, s, cell_size_m), window.end_index, window.shift + s))
    return out


def curriculum_order(manifests) -> list:
    """``[(stage, [manifests sorted by session id]), ...]`` from 1-finger to mixed; absent stages skipped."""
    by_stage = defaultdict(list)
    for m in manifests:
        by_stage[m.stage].append(m)
    phases = []
    for stage in STAGES:
        if not by_stage.get(stage):
            log.warning("curriculum stage %s has no sessions; skipping it", stage)
            continue
        phases.append((stage, sorted(by_stage[stage], key=lambda m: m.session_id)))
    return phases


def leave_one_group_out(manifests, key: str = "subject_id") -> list:
    """``[(group, train, test), ...]``; whole sessions only, so no session is ever split."""
    groups = sorted({getattr(m, key) for m in manifests})
    if len(groups) < 2:
        raise InputError(f"leave-one-out over {key} needs at least two groups, got {groups}")
    return [
        (g, [m for m in manifests if getattr(m, key) != g], [m for m in manifests if getattr(m, key) == g])
        for g in groups
    ]
