"""Range profiles: correlation dechirping, direct-path anchoring, cutting and clutter removal.

Cell ``k`` of a profile holds the correlation at a round-trip delay of ``k``
samples, i.e. a one-way range of ``k * c / (2 * fs)``.

Starting-time cancellation works in the time domain: once the direct-path
arrival is known as an absolute sample index, the recording is re-windowed
on a grid that starts exactly one chirp after that arrival. Two recordings
that differ only by leading silence therefore produce identical windows and
bit-identical profiles.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import signal

from .chirp import ChirpSpec, SampleBuffer, generate_chirp, highpass
from .errors import AnchorError, InputError, ShapeError

N_CUT_CELLS = 256
N_ANCHOR_PEAKS = 10
ANCHOR_GATE = 0.5  # candidates must reach this fraction of the strongest peak
N_ANCHOR_WINDOWS = 5
ONSET_BLOCK = 32


@dataclass
class RangeProfile:
    """Correlation magnitude per delay cell for every channel of one window.

    ``start_sample`` is the recording index of the window's first sample;
    ``signed`` keeps the raw correlation when the caller asked for it.
    """

    magnitudes: np.ndarray
    window_index: int
    cell_size_m: float
    start_sample: int = 0
    signed: Optional[np.ndarray] = None
    padded: bool = False

    def __post_init__(self):
        self.magnitudes = np.asarray(self.magnitudes)
        if self.magnitudes.ndim != 2:
            raise ShapeError(f"magnitudes must be (channels, cells), got {self.magnitudes.shape}")
        if not np.all(np.isfinite(self.magnitudes)):
            raise InputError("range profile contains non-finite values")

    @property
    def n_cells(self) -> int:
        return self.magnitudes.shape[1]

    def ranges_m(self) -> np.ndarray:
        return np.arange(self.n_cells) * self.cell_size_m


@dataclass
class AnchorInfo:
    anchor_cell: np.ndarray  # absolute recording sample of the direct-path arrival, per channel
    established_at_window: int
    window_len: int
    onset_sample: Optional[int] = None

    @property
    def grid_origin(self) -> int:
        """First sample of the aligned window grid: one chirp after the earliest arrival."""
        return int(np.min(self.anchor_cell)) + self.window_len

    def cut_offsets(self, start_sample: int) -> np.ndarray:
        return (np.asarray(self.anchor_cell) - int(start_sample)) % self.window_len


def cell_size_m(spec: ChirpSpec) -> float:
    return spec.sound_speed_mps / (2.0 * spec.sample_rate_hz)


# ---------------------------------------------------------------------------
# correlation
# ---------------------------------------------------------------------------


def xcorr_fd(window, template) -> np.ndarray:
    """Circular cross-correlation ``r[k] = sum_n x[(n + k) % N] * t[n]`` via the FFT.

    Leading axes of ``window`` are batched. A window equal to the template
    circularly delayed by ``d`` samples peaks at ``k = d``.
    """
    x = np.asarray(window.samples if isinstance(window, SampleBuffer) else window, dtype=float)
    t = np.asarray(template.samples if isinstance(template, SampleBuffer) else template, dtype=float)
    if t.ndim != 1 or x.shape[-1] != t.shape[0]:
        raise ShapeError(f"window length {x.shape[-1]} and template length {t.shape} differ")
    n = t.shape[0]
    return np.fft.irfft(np.fft.rfft(x, axis=-1) * np.conj(np.fft.rfft(t)), n=n, axis=-1)


def _window_view(samples: np.ndarray, start: int, n: int) -> np.ndarray:
    n_win = (samples.shape[-1] - start) // n
    if n_win < 1:
        return np.zeros((0, samples.shape[0], n))
    block = samples[:, start: start + n_win * n]
    return block.reshape(samples.shape[0], n_win, n).transpose(1, 0, 2)


def correlate_recording(samples: np.ndarray, template: np.ndarray, start: int = 0) -> np.ndarray:
    """Signed correlations of every full non-overlapping window from ``start``: ``(W, C, N)``."""
    return xcorr_fd(_window_view(np.atleast_2d(samples), int(start), len(template)), template)


def dechirp(recording: SampleBuffer, spec: ChirpSpec, start: int = 0,
            keep_signed: bool = False) -> list:
    """One :class:`RangeProfile` per non-overlapping chirp-length window."""
    n = spec.chirp_len_samples
    samples = np.atleast_2d(recording.samples)
    if samples.shape[1] - start < 2 * n:
        raise InputError(f"recording must hold at least 2 chirps after sample {start}")
    template = generate_chirp(spec).samples
    corr = correlate_recording(samples, template, start)
    cs = cell_size_m(spec)
    return [
        RangeProfile(np.abs(c), w, cs, start + w * n, c if keep_signed else None)
        for w, c in enumerate(corr)
    ]


# ---------------------------------------------------------------------------
# starting-time cancellation
# ---------------------------------------------------------------------------


def detect_onset(recording: SampleBuffer, block: int = ONSET_BLOCK) -> int:
    """First sample of the first block whose RMS reaches half the steady-state level."""
    x = np.atleast_2d(recording.samples)
    n_blocks = x.shape[1] // block
    if n_blocks < 4:
        raise InputError("recording too short for onset detection")
    rms = np.sqrt(np.mean(x[:, : n_blocks * block].reshape(x.shape[0], n_blocks, block) ** 2, axis=-1))
    rms = rms.max(axis=0)
    level = np.median(rms[n_blocks // 2:])
    if not level > 0:
        raise AnchorError(0, "recording is silent")
    return int(np.argmax(rms >= 0.5 * level)) * block


def _local_peaks(env: np.ndarray) -> np.ndarray:
    """Indices of circular local maxima over a 3-cell neighbourhood."""
    left = np.roll(env, 1)
    right = np.roll(env, -1)
    return np.flatnonzero((env > left) & (env >= right))


def _leading_candidate(cands: np.ndarray, n: int) -> int:
    """The candidate every other candidate follows within half a period (smallest delay)."""
    spread = [np.max((cands - c) % n) for c in cands]
    return int(cands[int(np.argmin(spread))])


def find_anchor(profiles: Sequence[RangeProfile], onset_sample: Optional[int] = None,
                n_peaks: int = N_ANCHOR_PEAKS, gate: float = ANCHOR_GATE) -> AnchorInfo:
    """Locate the direct path on every channel from a few start-up windows.

    Peaks are picked on the correlation envelope so the carrier ripple of the
    real-valued correlation does not produce spurious neighbours. Among the
    ``n_peaks`` strongest peaks, those reaching ``gate`` times the strongest
    are kept and the one with the smallest delay wins; the cell is then
    refined to the magnitude maximum within two cells.

    With ``onset_sample`` the per-window cell is promoted to the absolute
    sample of the first arrival (the period nearest the onset); otherwise it
    is relative to the first profile's window.
    """
    if not profiles:
        raise InputError("find_anchor needs at least one profile")
    n = profiles[0].n_cells
    if any(p.n_cells != n for p in profiles):
        raise ShapeError("anchor profiles differ in length")
    starts = np.array([p.start_sample for p in profiles])
    if np.any((starts - starts[0]) % n):
        raise InputError("anchor profiles must share one window grid")
    mags = np.mean([p.magnitudes for p in profiles], axis=0)
    if profiles[0].signed is not None:
        env = np.mean([np.abs(signal.hilbert(p.signed, axis=-1)) for p in profiles], axis=0)
    else:
        env = mags

    cells = np.empty(mags.shape[0], dtype=np.int64)
    for ch in range(mags.shape[0]):
        e = env[ch]
        floor = 10.0 * np.median(e)
        peaks = _local_peaks(e)
        if peaks.size == 0 or e[peaks].max() <= max(floor, 1e-12):
            raise AnchorError(ch, "no correlation peak above the noise floor (dead channel?)")
        top = peaks[np.argsort(e[peaks])[::-1][:n_peaks]]
        cands = top[e[top] >= gate * e[top[0]]]
        c = _leading_candidate(cands, n)
        near = (c + np.arange(-2, 3)) % n
        cells[ch] = near[int(np.argmax(mags[ch][near]))]

    phase = (starts[0] + cells) % n
    if onset_sample is None:
        absolute = starts[0] + cells
    else:
        absolute = onset_sample + ((phase - onset_sample + n // 2) % n) - n // 2
    return AnchorInfo(absolute.astype(np.int64), int(profiles[0].window_index), n, onset_sample)


def cut_window(profile: RangeProfile, anchor: AnchorInfo, n_cells: int = N_CUT_CELLS) -> RangeProfile:
    """The ``n_cells`` delays from the direct path outward, per channel.

    Cells that would run past the end of the window are zero-filled and the
    result is flagged ``padded``.
    """
    offs = anchor.cut_offsets(profile.start_sample)
    if len(offs) != profile.magnitudes.shape[0]:
        raise ShapeError("anchor and profile channel counts differ")
    mags, signed, padded = _cut(profile.magnitudes, profile.signed, offs, n_cells)
    return RangeProfile(mags, profile.window_index, profile.cell_size_m,
                        profile.start_sample, signed, padded)


def _cut(mags, signed, offs, n_cells):
    n = mags.shape[-1]
    idx = offs[:, None] + np.arange(n_cells)
    valid = idx < n
    idx_c = np.minimum(idx, n - 1)
    take = lambda a: np.where(valid, np.take_along_axis(a, idx_c, axis=-1), 0.0)  # noqa: E731
    if mags.ndim == 3:
        idx_c = np.broadcast_to(idx_c, mags.shape[:1] + idx_c.shape)
    return take(mags), (None if signed is None else take(signed)), bool(not valid.all())


def successive_subtract(curr: RangeProfile, prev: RangeProfile) -> RangeProfile:
    """Rectified difference of consecutive windows: ``max(curr - prev, 0)``."""
    if curr.magnitudes.shape != prev.magnitudes.shape:
        raise ShapeError(f"profile shapes differ: {curr.magnitudes.shape} vs {prev.magnitudes.shape}")
    if curr.window_index != prev.window_index + 1:
        raise InputError(f"windows {prev.window_index} and {curr.window_index} are not consecutive")
    diff = np.maximum(curr.magnitudes - prev.magnitudes, 0.0)
    return RangeProfile(diff, curr.window_index, curr.cell_size_m, curr.start_sample, None, curr.padded)


def subtract_reference(profile: RangeProfile, reference: RangeProfile) -> np.ndarray:
    """Magnitude of the signed difference to an empty-scene profile (static-target ranging)."""
    if profile.signed is None or reference.signed is None:
        raise InputError("reference subtraction needs signed profiles (keep_signed=True)")
    if profile.signed.shape != reference.signed.shape:
        raise ShapeError("profile and reference shapes differ")
    return np.abs(profile.signed - reference.signed)


def locate_echo(profile: RangeProfile, reference: RangeProfile) -> np.ndarray:
    """Per-channel cell of the strongest echo not present in ``reference``."""
    return np.argmax(subtract_reference(profile, reference), axis=-1)


# ---------------------------------------------------------------------------
# whole-recording pipeline
# ---------------------------------------------------------------------------


@dataclass
class ProcessedRecording:
    """Aligned, cut and subtracted profiles of one recording.

    ``cut``: ``(W, C, n_cells)`` magnitudes of the aligned windows.
    ``subtracted``: ``(C, n_cells, W - 1)``; slice ``t`` is window ``t + 1``
    minus window ``t``, rectified.
    ``window_starts``: recording sample where each aligned window begins.
    """

    anchor: AnchorInfo
    cut: np.ndarray
    subtracted: np.ndarray
    window_starts: np.ndarray
    cell_size_m: float
    sample_rate_hz: int
    cut_signed: Optional[np.ndarray] = None
    padded: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def subtracted_end_samples(self) -> np.ndarray:
        """Recording sample just past the end of each subtracted slice's window."""
        n = self.anchor.window_len
        return self.window_starts[1:] + n

    def profiles(self) -> list:
        return [
            RangeProfile(self.cut[w], w, self.cell_size_m, int(self.window_starts[w]),
                         None if self.cut_signed is None else self.cut_signed[w], self.padded)
            for w in range(self.cut.shape[0])
        ]


def establish_anchor(filtered: SampleBuffer, spec: ChirpSpec, template: np.ndarray,
                     n_windows: int = N_ANCHOR_WINDOWS) -> AnchorInfo:
    n = spec.chirp_len_samples
    onset = detect_onset(filtered)
    first = -(-(onset + n + 2 * ONSET_BLOCK) // n)  # first grid window fully past the onset
    samples = np.atleast_2d(filtered.samples)
    seg = samples[:, first * n: (first + n_windows) * n]
    if seg.shape[1] < n:
        raise InputError("recording too short to establish the anchor")
    corr = correlate_recording(seg, template)
    cs = cell_size_m(spec)
    profs = [RangeProfile(np.abs(c), first + w, cs, (first + w) * n, c) for w, c in enumerate(corr)]
    return find_anchor(profs, onset)


def process_recording(recording: SampleBuffer, spec: ChirpSpec, *, cutoff_hz: float = 17_000.0,
                      n_cells: int = N_CUT_CELLS, keep_signed: bool = False,
                      chunk: int = 1024, dtype=np.float64) -> ProcessedRecording:
    """High-pass, anchor, re-window, dechirp, cut and subtract a whole recording."""
    n = spec.chirp_len_samples
    filtered = highpass(recording, cutoff_hz)
    template = generate_chirp(spec).samples
    anchor = establish_anchor(filtered, spec, template)
    origin = anchor.grid_origin
    samples = np.atleast_2d(filtered.samples)
    n_win = (samples.shape[1] - origin) // n
    if n_win < 2:
        raise InputError("recording holds fewer than 2 aligned windows")
    offs = anchor.cut_offsets(origin)
    cut = np.empty((n_win, samples.shape[0], n_cells), dtype=dtype)
    cut_signed = np.empty_like(cut, dtype=np.float64) if keep_signed else None
    padded = False
    for w0 in range(0, n_win, chunk):
        w1 = min(w0 + chunk, n_win)
        corr = correlate_recording(samples[:, origin + w0 * n: origin + w1 * n], template)
        mags, sgn, pad = _cut(np.abs(corr), corr if keep_signed else None, offs, n_cells)
        cut[w0:w1] = mags
        if keep_signed:
            cut_signed[w0:w1] = sgn
        padded |= pad
    sub = np.maximum(cut[1:] - cut[:-1], 0).transpose(1, 2, 0)
    starts = origin + n * np.arange(n_win)
    return ProcessedRecording(anchor, cut, np.ascontiguousarray(sub), starts, cell_size_m(spec),
                              spec.sample_rate_hz, cut_signed, padded)
