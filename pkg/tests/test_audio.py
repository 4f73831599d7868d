import struct

import numpy as np
import pytest

from aeval.audio import (AudioClip, StftParams, make_anchor, quantize_8bit,
                         read_wav, stft, wav_bytes, write_wav)
from aeval.errors import DataError

from conftest import sine_clip


def pcm16_wav(samples, sample_rate=16000, channels=1):
    body = np.asarray(samples, dtype="<i2").tobytes()
    return struct.pack(
        "<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(body), b"WAVE", b"fmt ", 16,
        1, channels, sample_rate, sample_rate * 2 * channels, 2 * channels,
        16, b"data", len(body)) + body


class TestReadWav:
    def test_int16_normalization(self, tmp_path):
        p = tmp_path / "a.wav"
        p.write_bytes(pcm16_wav([0, 32767, -32768]))
        clip = read_wav(p)
        assert clip.sample_rate == 16000
        assert clip.samples[0] == 0.0
        assert clip.samples[1] == pytest.approx(32767 / 32768)
        assert clip.samples[2] == -1.0

    def test_stereo_downmix(self, tmp_path):
        p = tmp_path / "st.wav"
        # one frame, channels [1.0, 0.0]
        p.write_bytes(pcm16_wav([32767, 0], channels=2))
        clip = read_wav(p)
        assert len(clip) == 1
        assert clip.samples[0] == pytest.approx(0.5, abs=1e-4)

    def test_truncated_header(self, tmp_path):
        p = tmp_path / "bad.wav"
        p.write_bytes(b"RIFF\x00\x00")
        with pytest.raises(DataError, match="malformed WAV"):
            read_wav(p)

    def test_truncated_data_chunk(self, tmp_path):
        good = pcm16_wav([1, 2, 3, 4])
        p = tmp_path / "trunc.wav"
        p.write_bytes(good[:-3])
        with pytest.raises(DataError, match="malformed WAV"):
            read_wav(p)

    def test_unsupported_codec(self, tmp_path):
        raw = bytearray(pcm16_wav([0, 0]))
        raw[20:22] = struct.pack("<H", 7)  # mu-law
        p = tmp_path / "ulaw.wav"
        p.write_bytes(bytes(raw))
        with pytest.raises(DataError, match="unsupported codec"):
            read_wav(p)

    def test_empty_audio(self, tmp_path):
        p = tmp_path / "empty.wav"
        p.write_bytes(pcm16_wav([]))
        with pytest.raises(DataError, match="empty audio"):
            read_wav(p)

    def test_float32_roundtrip_values(self, tmp_path):
        samples = np.array([0.25, -0.5, 1.0], dtype="<f4")
        body = samples.tobytes()
        hdr = struct.pack(
            "<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(body), b"WAVE", b"fmt ",
            16, 3, 1, 8000, 8000 * 4, 4, 32, b"data", len(body))
        p = tmp_path / "f32.wav"
        p.write_bytes(hdr + body)
        clip = read_wav(p)
        np.testing.assert_allclose(clip.samples, [0.25, -0.5, 1.0])

    def test_write_read_roundtrip(self, tmp_path):
        clip = sine_clip(440, duration=0.05)
        p = tmp_path / "rt.wav"
        write_wav(p, clip)
        back = read_wav(p)
        assert back.sample_rate == clip.sample_rate
        assert len(back) == len(clip)
        # 16-bit quantization error only
        assert np.max(np.abs(back.samples - clip.samples)) < 1.5 / 32768

    def test_wav_bytes_deterministic(self):
        clip = sine_clip(100, duration=0.01)
        assert wav_bytes(clip) == wav_bytes(clip)


class TestStft:
    def test_zero_signal(self):
        clip = AudioClip(np.zeros(2048), 16000)
        spec = stft(clip, StftParams(256, 64, "hann"))
        assert np.all(spec.magnitudes == 0)

    def test_four_point_dft(self):
        clip = AudioClip(np.ones(4), 16000)
        spec = stft(clip, StftParams(4, 4, "rectangular"))
        np.testing.assert_allclose(spec.magnitudes, [[4.0, 0.0, 0.0]],
                                   atol=1e-12)

    def test_sine_at_bin_concentrates(self):
        # full-scale sine exactly on bin k, rectangular window, one frame
        n, k, sr = 512, 20, 16000
        t = np.arange(n)
        x = np.sin(2 * np.pi * k * t / n)
        spec = stft(AudioClip(x, sr), StftParams(n, n, "rectangular"))
        mags = spec.magnitudes[0]
        # oracle: direct DFT of one frame
        oracle = np.abs(np.array(
            [np.sum(x * np.exp(-2j * np.pi * b * t / n))
             for b in range(n // 2 + 1)]))
        np.testing.assert_allclose(mags, oracle, atol=1e-8)
        peak = mags[k]
        others = np.delete(mags, k)
        assert np.all(others < 1e-6 * peak)

    def test_short_clip_zero_padded(self):
        clip = AudioClip(np.array([1.0, -1.0]), 16000)
        spec = stft(clip, StftParams(8, 4, "rectangular"))
        assert spec.magnitudes.shape == (1, 5)

    def test_frame_count_formula(self):
        clip = AudioClip(np.ones(100), 16000)
        spec = stft(clip, StftParams(32, 16, "hann"))
        # (100 - 32) / 16 is not integral: one extra zero-padded tail frame
        assert spec.magnitudes.shape[0] == int(np.ceil((100 - 32) / 16)) + 1

    def test_deterministic(self):
        clip = sine_clip(313, duration=0.07)
        p = StftParams(128, 32, "hann")
        a = stft(clip, p).magnitudes
        b = stft(clip, p).magnitudes
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("length", [256, 300, 1000])
    def test_parseval(self, length):
        rng = np.random.default_rng(7)
        x = rng.uniform(-1, 1, length)
        clip = AudioClip(x, 16000)
        n = 256
        spec = stft(clip, StftParams(n, n, "rectangular"))
        m2 = spec.magnitudes ** 2
        onesided = m2[:, 0] + m2[:, -1] + 2 * m2[:, 1:-1].sum(axis=1)
        assert onesided.sum() == pytest.approx(n * np.sum(x * x), rel=1e-6)

    def test_param_validation(self):
        with pytest.raises(DataError):
            StftParams(100, 10)  # not a power of two
        with pytest.raises(DataError):
            StftParams(64, 0)
        with pytest.raises(DataError):
            StftParams(64, 128)
        with pytest.raises(DataError):
            StftParams(64, 16, "blackman")


class TestAnchor:
    def test_silence_passthrough(self):
        clip = AudioClip(np.zeros(4000), 16000)
        out = make_anchor(clip)
        assert np.all(out.samples == 0)
        assert len(out) == len(clip)

    def test_low_tone_retained_and_quantized(self):
        clip = sine_clip(100, duration=1.0)
        out = make_anchor(clip)
        assert len(np.unique(out.samples)) <= 256
        rms_in = np.sqrt(np.mean(clip.samples ** 2))
        rms_out = np.sqrt(np.mean(out.samples ** 2))
        assert rms_out >= 0.9 * rms_in

    def test_high_tone_attenuated(self):
        clip = sine_clip(4000, duration=1.0)
        out = make_anchor(clip)
        rms_in = np.sqrt(np.mean(clip.samples ** 2))
        rms_out = np.sqrt(np.mean(out.samples ** 2))
        attenuation_db = 20 * np.log10(rms_in / max(rms_out, 1e-300))
        assert attenuation_db >= 45

    def test_idempotent_within_one_step(self):
        # Mixture clear of the filter's transition band around 1 kHz; energy
        # there is attenuated on both passes and breaks idempotence.
        sr = 16000
        t = np.arange(8000) / sr
        x = (0.5 * np.sin(2 * np.pi * 100 * t)
             + 0.25 * np.sin(2 * np.pi * 307 * t)
             + 0.15 * np.sin(2 * np.pi * 701 * t)
             + 0.3 * np.sin(2 * np.pi * 3000 * t)
             + 0.2 * np.sin(2 * np.pi * 5000 * t))
        clip = AudioClip(np.clip(x, -1, 1), sr)
        once = make_anchor(clip)
        twice = make_anchor(once)
        delta = np.abs(twice.samples - once.samples)
        step = 1 / 127  # one grid step of the 255-level quantizer
        # Interior: at most one step. Edges see the convolution ramp twice.
        assert np.max(delta[255:-255]) <= step + 1e-12
        assert np.max(delta) <= 2 * step + 1e-12

    def test_length_preserved(self):
        clip = sine_clip(440, duration=0.123)
        assert len(make_anchor(clip)) == len(clip)

    def test_low_rate_rejected(self):
        clip = AudioClip(np.zeros(100), 2000)
        with pytest.raises(DataError):
            make_anchor(clip)

    def test_quantizer_grid(self):
        clip = AudioClip(np.linspace(-1, 1, 1001), 16000)
        q = quantize_8bit(clip)
        scaled = q.samples * 127
        np.testing.assert_allclose(scaled, np.round(scaled), atol=1e-9)
        assert np.max(np.abs(q.samples)) <= 1.0


class TestClipValidation:
    def test_rejects_nan(self):
        with pytest.raises(DataError):
            AudioClip(np.array([0.0, np.nan]), 16000)

    def test_rejects_bad_rate(self):
        with pytest.raises(DataError):
            AudioClip(np.zeros(4), 0)

    def test_rejects_empty(self):
        with pytest.raises(DataError):
            AudioClip(np.zeros(0), 16000)
