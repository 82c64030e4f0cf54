"""FMCW transmit waveform and the receive-side high-pass filter."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import signal

from . import kernels
from .errors import ConfigError

#: stop-band edge of the high-pass, as a fraction of the cutoff
STOPBAND_FRACTION = 0.9
#: design attenuation of the Kaiser-window FIR (the contract only needs 40 dB)
DESIGN_ATTENUATION_DB = 60.0


@dataclass(frozen=True)
class ChirpSpec:
    start_freq_hz: float = 17_000.0
    bandwidth_hz: float = 3_000.0
    chirp_len_samples: int = 512
    sample_rate_hz: int = 48_000
    amplitude: float = 1.0
    sound_speed_mps: float = 343.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if int(self.chirp_len_samples) != self.chirp_len_samples or self.chirp_len_samples < 2:
            raise ConfigError(f"chirp_len_samples must be an integer >= 2, got {self.chirp_len_samples}")
        if int(self.sample_rate_hz) != self.sample_rate_hz or self.sample_rate_hz <= 0:
            raise ConfigError(f"sample_rate_hz must be a positive integer, got {self.sample_rate_hz}")
        if not (0.0 < self.amplitude <= 1.0):
            raise ConfigError(f"amplitude must lie in (0, 1], got {self.amplitude}")
        if not self.sound_speed_mps > 0:
            raise ConfigError(f"sound_speed_mps must be > 0, got {self.sound_speed_mps}")
        if self.start_freq_hz < 0 or self.bandwidth_hz < 0:
            raise ConfigError("start_freq_hz and bandwidth_hz must be non-negative")
        if self.start_freq_hz + self.bandwidth_hz > self.sample_rate_hz / 2:
            raise ConfigError(
                f"Nyquist violated: start_freq_hz + bandwidth_hz = "
                f"{self.start_freq_hz + self.bandwidth_hz} > sample_rate_hz / 2 = {self.sample_rate_hz / 2}"
            )

    @property
    def duration_s(self) -> float:
        return self.chirp_len_samples / self.sample_rate_hz

    @property
    def cell_size_m(self) -> float:
        """One-way range spanned by one sample of round-trip delay."""
        return self.sound_speed_mps / (2.0 * self.sample_rate_hz)

    def to_dict(self) -> dict:
        return {
            "start_freq_hz": float(self.start_freq_hz),
            "bandwidth_hz": float(self.bandwidth_hz),
            "chirp_len_samples": int(self.chirp_len_samples),
            "sample_rate_hz": int(self.sample_rate_hz),
            "amplitude": float(self.amplitude),
            "sound_speed_mps": float(self.sound_speed_mps),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChirpSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown chirp keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class SampleBuffer:
    """Time-domain samples, shape ``(n,)`` or ``(channels, n)``."""

    samples: np.ndarray
    sample_rate_hz: int = field(default=48_000)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim not in (1, 2):
            raise ConfigError(f"samples must be 1-D or 2-D, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ConfigError("samples contain non-finite values")

    @property
    def n_channels(self) -> int:
        return 1 if self.samples.ndim == 1 else self.samples.shape[0]

    def __len__(self) -> int:
        return self.samples.shape[-1]


def instantaneous_frequency(spec: ChirpSpec, n) -> np.ndarray:
    """Frequency (Hz) of the chirp at sample index ``n`` (may be fractional)."""
    return spec.start_freq_hz + spec.bandwidth_hz * np.asarray(n, dtype=float) / spec.chirp_len_samples


def generate_chirp(spec: ChirpSpec) -> SampleBuffer:
    """One linear up-chirp of ``chirp_len_samples`` samples.

    Phase is ``2*pi*(f0*t + B*t**2 / (2*T))`` with ``T`` the chirp duration, so
    the instantaneous frequency runs from ``f0`` at sample 0 to ``f0 + B`` at
    sample ``chirp_len_samples``. No taper is applied.
    """
    spec.validate()
    t = np.arange(spec.chirp_len_samples) / spec.sample_rate_hz
    phase = 2.0 * np.pi * (spec.start_freq_hz * t + spec.bandwidth_hz * t**2 / (2.0 * spec.duration_s))
    return SampleBuffer(spec.amplitude * np.cos(phase), spec.sample_rate_hz)


def repeat_chirps(chirp: SampleBuffer, count: int) -> SampleBuffer:
    if int(count) != count or count < 1:
        raise ConfigError(f"count must be a positive integer, got {count}")
    return SampleBuffer(np.tile(chirp.samples, int(count)), chirp.sample_rate_hz)


@lru_cache(maxsize=32)
def highpass_taps(cutoff_hz: float, sample_rate_hz: int) -> np.ndarray:
    """Odd-length linear-phase Kaiser FIR: stop band below ``0.9*cutoff``, pass band above ``cutoff``."""
    nyq = sample_rate_hz / 2.0
    if not (0.0 < cutoff_hz < nyq):
        raise ConfigError(f"cutoff_hz must lie in (0, {nyq}), got {cutoff_hz}")
    width = (1.0 - STOPBAND_FRACTION) * cutoff_hz
    numtaps, beta = signal.kaiserord(DESIGN_ATTENUATION_DB, width / nyq)
    numtaps |= 1  # type I FIR: odd length, allowed to pass Nyquist
    centre = cutoff_hz - width / 2.0
    taps = signal.firwin(numtaps, centre, window=("kaiser", beta), pass_zero=False, fs=sample_rate_hz)
    taps.setflags(write=False)
    return taps


def highpass(buf: SampleBuffer, cutoff_hz: float = 17_000.0) -> SampleBuffer:
    """Zero-phase FIR high-pass applied along the last axis.

    The symmetric FIR is applied centred, so there is no group delay, and the
    output at a sample depends only on its neighbours: shifting the input by
    ``k`` samples shifts the output by exactly ``k`` samples, bit for bit.
    """
    taps = highpass_taps(float(cutoff_hz), int(buf.sample_rate_hz))
    return SampleBuffer(kernels.fir_zero_phase(buf.samples, taps), buf.sample_rate_hz)
