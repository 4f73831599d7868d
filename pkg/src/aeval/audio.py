"""Audio I/O, spectrograms, and anchor-signal generation.

All operations are pure functions over immutable inputs; nothing here keeps
shared state, so everything is safe to call from multiple threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import DataError

WINDOWS = ("hann", "rectangular")

# Anchor construction: 1 kHz low-pass followed by signed 8-bit requantization.
ANCHOR_CUTOFF_HZ = 1000.0
ANCHOR_FIR_TAPS = 511
QUANT_LEVELS = 127  # midtread grid k/127, k in [-127, 127]


@dataclass(frozen=True)
class AudioClip:
    """Mono sample buffer in [-1, 1] with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise DataError("AudioClip expects a 1-D sample buffer")
        if samples.size == 0:
            raise DataError("empty audio")
        if not np.all(np.isfinite(samples)):
            raise DataError("audio samples must be finite")
        if np.max(np.abs(samples), initial=0.0) > 1.0 + 1e-9:
            raise DataError("audio samples must lie in [-1, 1]")
        if self.sample_rate <= 0:
            raise DataError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class StftParams:
    fft_size: int = 1024
    hop_size: int = 256
    window: str = "hann"

    def __post_init__(self):
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise DataError("fft_size must be a power of two")
        if not 1 <= self.hop_size <= self.fft_size:
            raise DataError("hop_size must satisfy 1 <= hop <= fft_size")
        if self.window not in WINDOWS:
            raise DataError(f"unknown window {self.window!r}")


@dataclass(frozen=True)
class Spectrogram:
    """Magnitude matrix, frames x (fft_size/2 + 1)."""

    magnitudes: np.ndarray
    params: StftParams
    sample_rate: int = field(default=0)

    def __post_init__(self):
        mags = np.asarray(self.magnitudes, dtype=np.float64)
        if mags.ndim != 2 or mags.shape[1] != self.params.fft_size // 2 + 1:
            raise DataError("magnitude matrix must be frames x (fft_size/2 + 1)")
        if not np.all(np.isfinite(mags)) or np.any(mags < 0):
            raise DataError("magnitudes must be finite and non-negative")
        object.__setattr__(self, "magnitudes", mags)


def _window_values(window: str, size: int) -> np.ndarray:
    if window == "hann":
        # Periodic Hann, the analysis convention.
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(size) / size)
    return np.ones(size)


def stft(clip: AudioClip, params: StftParams) -> Spectrogram:
    """One-sided magnitude STFT.

    Frames start at multiples of the hop size. A trailing partial frame is
    zero-padded rather than dropped, so a clip always yields at least one
    frame and no samples are silently discarded.
    """
    x = clip.samples
    n, hop = params.fft_size, params.hop_size
    if len(x) <= n:
        n_frames = 1
    else:
        n_frames = int(np.ceil((len(x) - n) / hop)) + 1
    window = _window_values(params.window, n)
    frames = np.zeros((n_frames, n))
    for i in range(n_frames):
        chunk = x[i * hop: i * hop + n]
        frames[i, : len(chunk)] = chunk
    mags = np.abs(np.fft.rfft(frames * window, axis=1))
    return Spectrogram(mags, params, clip.sample_rate)


def _design_lowpass(cutoff_hz: float, sample_rate: int, taps: int) -> np.ndarray:
    """Linear-phase windowed-sinc FIR (Hamming), unity DC gain."""
    if not 0 < cutoff_hz < sample_rate / 2:
        raise DataError("cutoff must lie inside (0, Nyquist)")
    mid = (taps - 1) / 2
    t = np.arange(taps) - mid
    h = 2.0 * cutoff_hz / sample_rate * np.sinc(2.0 * cutoff_hz / sample_rate * t)
    h *= 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(taps) / (taps - 1))
    return h / h.sum()


def lowpass(clip: AudioClip, cutoff_hz: float, taps: int = ANCHOR_FIR_TAPS) -> AudioClip:
    """Zero-phase low-pass: FIR convolution with the group delay trimmed."""
    h = _design_lowpass(cutoff_hz, clip.sample_rate, taps)
    full = fftconvolve(clip.samples, h, mode="full")
    delay = (taps - 1) // 2
    out = full[delay: delay + len(clip)]
    # FIR ripple can push slightly past full scale.
    return AudioClip(np.clip(out, -1.0, 1.0), clip.sample_rate)


def quantize_8bit(clip: AudioClip) -> AudioClip:
    """Signed midtread 8-bit requantization: round(s*127)/127, clamped."""
    q = np.clip(np.round(clip.samples * QUANT_LEVELS), -QUANT_LEVELS, QUANT_LEVELS)
    return AudioClip(q / QUANT_LEVELS, clip.sample_rate)


def make_anchor(clip: AudioClip) -> AudioClip:
    """Degraded rating-scale anchor: 1 kHz low-pass, then 8-bit depth.

    Output has the same length and sample rate as the input and takes at
    most 255 distinct values.
    """
    if clip.sample_rate <= 2 * ANCHOR_CUTOFF_HZ:
        raise DataError("sample rate too low for a 1 kHz anchor cutoff")
    return quantize_8bit(lowpass(clip, ANCHOR_CUTOFF_HZ))


# ---------------------------------------------------------------------------
# WAV container (RIFF). Accepts 16-bit PCM and 32-bit IEEE float, mono or
# down-mixable multi-channel. Output is always 16-bit PCM LE mono.

_PCM = 1
_IEEE_FLOAT = 3


def read_wav(path) -> AudioClip:
    """Read a WAV file into a mono clip normalized to [-1, 1]."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise DataError(f"malformed WAV: {path}")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid, size = data[pos:pos + 4], struct.unpack_from("<I", data, pos + 4)[0]
        body = data[pos + 8: pos + 8 + size]
        if len(body) < size:
            raise DataError(f"malformed WAV: truncated chunk in {path}")
        if cid == b"fmt ":
            if size < 16:
                raise DataError(f"malformed WAV: short fmt chunk in {path}")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            payload = body
        pos += 8 + size + (size & 1)

    if fmt is None or payload is None:
        raise DataError(f"malformed WAV: missing fmt/data chunk in {path}")
    audio_format, channels, sample_rate, _, _, bits = fmt
    if channels < 1 or sample_rate <= 0:
        raise DataError(f"malformed WAV: bad format fields in {path}")

    if audio_format == _PCM and bits == 16:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % 2], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif audio_format == _IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % 4], dtype="<f4")
        samples = raw.astype(np.float64)
    else:
        raise DataError(
            f"unsupported codec in {path}: format={audio_format}, bits={bits} "
            "(need 16-bit PCM or 32-bit float)"
        )

    frames = samples.size // channels
    if frames == 0:
        raise DataError(f"empty audio: {path}")
    mono = samples[: frames * channels].reshape(frames, channels).mean(axis=1)
    return AudioClip(np.clip(mono, -1.0, 1.0), sample_rate)


def wav_bytes(clip: AudioClip) -> bytes:
    """Render a clip as a 16-bit PCM LE mono WAV, deterministically."""
    pcm = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype("<i2")
    body = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(body), b"WAVE",
        b"fmt ", 16, _PCM, 1, clip.sample_rate,
        clip.sample_rate * 2, 2, 16,
        b"data", len(body),
    )
    return header + body


def write_wav(path, clip: AudioClip) -> None:
    with open(path, "wb") as fh:
        fh.write(wav_bytes(clip))
