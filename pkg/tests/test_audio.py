"""WAV I/O, STFT round trips, Parseval consistency, SNR mixing."""

import numpy as np
import pytest

from convmamba.audio import (AudioError, DegenerateSignalError, StftConfig,
                             Waveform, istft, load_wav, magnitude,
                             measured_snr_db, mix_at_snr, num_frames, phase,
                             save_wav, stft)


def rand_wave(rng, seconds=1.0, rate=16000):
    n = int(seconds * rate)
    return Waveform(rng.uniform(-0.9, 0.9, size=n), rate)


def test_pcm16_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    wav = rand_wave(rng)
    path = tmp_path / "a.wav"
    save_wav(path, wav, encoding="pcm16")
    back = load_wav(path)
    assert len(back) == len(wav)
    assert np.max(np.abs(back.samples - wav.samples)) <= 1.0 / 32768.0


def test_float32_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    wav = rand_wave(rng, seconds=0.25)
    path = tmp_path / "f.wav"
    save_wav(path, wav, encoding="float32")
    back = load_wav(path)
    np.testing.assert_array_equal(back.samples,
                                  wav.samples.astype(np.float32).astype(np.float64))


def test_stereo_rejected(tmp_path):
    import struct
    payload = np.zeros(64, dtype="<i2").tobytes()
    header = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(payload),
                         b"WAVE", b"fmt ", 16, 1, 2, 16000, 64000, 4, 16,
                         b"data", len(payload))
    path = tmp_path / "stereo.wav"
    path.write_bytes(header + payload)
    with pytest.raises(AudioError, match="unsupported channel count"):
        load_wav(path)


def test_wrong_rate_rejected(tmp_path):
    wav = Waveform(np.zeros(100) + 0.1, sample_rate=8000)
    path = tmp_path / "8k.wav"
    save_wav(path, wav)
    with pytest.raises(AudioError, match="unsupported sample rate"):
        load_wav(path)


def test_not_a_wav_rejected(tmp_path):
    path = tmp_path / "x.wav"
    path.write_bytes(b"garbage bytes here")
    with pytest.raises(AudioError, match="not a RIFF/WAVE"):
        load_wav(path)


def test_stft_zero_input():
    spec = stft(Waveform(np.zeros(4000)))
    assert np.max(np.abs(spec.re)) == 0.0 and np.max(np.abs(spec.im)) == 0.0
    assert spec.bins == 257


def test_frame_count_formula():
    cfg = StftConfig()
    assert num_frames(1024, cfg) == 3
    assert stft(Waveform(np.ones(1024) * 0.1), cfg).frames == 3
    assert num_frames(512, cfg) == 1
    assert num_frames(100, cfg) == 1
    assert num_frames(513, cfg) == 2


def test_sinusoid_hits_expected_bin():
    # 1000 Hz at 16 kHz with a 512-point DFT lands exactly on bin 32
    t = np.arange(16000) / 16000.0
    spec = stft(Waveform(0.5 * np.sin(2 * np.pi * 1000.0 * t)))
    mags = magnitude(spec).data
    assert (mags.argmax(axis=1) == 32).all()


def test_istft_round_trip_exact_on_covered_samples():
    rng = np.random.default_rng(5)
    for seconds in (0.5, 1.0):
        wav = rand_wave(rng, seconds=seconds)
        rec = istft(stft(wav), out_len=len(wav))
        # sample 0 carries zero sqrt-Hann weight and is unrecoverable
        err = np.abs(rec.samples[1:] - wav.samples[1:])
        assert err.max() < 1e-6
        rel = np.linalg.norm(rec.samples[1:] - wav.samples[1:]) / np.linalg.norm(wav.samples[1:])
        assert rel < 1e-10


def test_istft_zero_spectrogram():
    spec = stft(Waveform(np.zeros(2048)))
    out = istft(spec, out_len=2048)
    assert np.max(np.abs(out.samples)) == 0.0


def test_istft_out_len_limit():
    spec = stft(Waveform(np.ones(1000) * 0.1))
    with pytest.raises(AudioError, match="reconstructable"):
        istft(spec, out_len=10 ** 6)


def test_stft_istft_stft_idempotent():
    rng = np.random.default_rng(9)
    wav = rand_wave(rng, seconds=0.5)
    s1 = stft(wav)
    wav2 = istft(s1, out_len=len(wav))
    s2 = stft(wav2)
    scale = np.max(np.hypot(s1.re, s1.im))
    assert np.max(np.abs(s2.re - s1.re)) / scale < 1e-6
    assert np.max(np.abs(s2.im - s1.im)) / scale < 1e-6


def test_parseval_per_frame():
    rng = np.random.default_rng(11)
    cfg = StftConfig()
    wav = rand_wave(rng, seconds=0.3)
    spec = stft(wav, cfg)
    win = cfg.window_values()
    padded = np.zeros((spec.frames - 1) * cfg.hop + cfg.win_length)
    padded[:len(wav)] = wav.samples
    weights = np.full(cfg.bins, 2.0)
    weights[0] = weights[-1] = 1.0  # conjugate-symmetry weights for one-sided spectra
    for l in range(spec.frames):
        frame = padded[l * cfg.hop:l * cfg.hop + cfg.win_length] * win
        time_energy = np.sum(frame ** 2)
        spec_energy = np.sum(weights * (spec.re[l] ** 2 + spec.im[l] ** 2)) / cfg.fft_size
        assert abs(time_energy - spec_energy) <= 1e-8 * max(1.0, time_energy)


def test_magnitude_phase_conventions():
    spec = Spectrogram_from(np.array([[3.0, 0.0]]), np.array([[4.0, 0.0]]))
    mags = magnitude(spec).data
    phs = phase(spec).data
    assert mags[0, 0] == 5.0 and mags[0, 1] == 0.0
    assert phs[0, 1] == 0.0  # atan2(0, 0) convention
    rng = np.random.default_rng(3)
    re = rng.standard_normal((4, 257))
    im = rng.standard_normal((4, 257))
    sp = Spectrogram_from(re, im)
    np.testing.assert_allclose(magnitude(sp).data, np.sqrt(re ** 2 + im ** 2), atol=1e-15)
    np.testing.assert_allclose(phase(sp).data, np.arctan2(im, re), atol=1e-15)


def Spectrogram_from(re2, im2):
    from convmamba.audio import Spectrogram
    k = re2.shape[1]
    cfg = StftConfig(win_length=2 * (k - 1), hop=k - 1, fft_size=2 * (k - 1))
    return Spectrogram(re2, im2, cfg)


def test_mix_gain_closed_form():
    rng = np.random.default_rng(2)
    base = rng.standard_normal(8000)
    clean = Waveform(base)
    noise = Waveform(np.roll(base, 1234))  # equal power
    noisy, used = mix_at_snr(clean, noise, 0.0, np.random.default_rng(0))
    assert abs(used.power() - clean.power()) < 1e-12  # g = 1
    _, used20 = mix_at_snr(clean, noise, 20.0, np.random.default_rng(0))
    g = np.sqrt(used20.power() / noise.power())
    assert abs(g - 0.1) < 1e-12


def test_mix_measured_snr_exact_over_100_cases():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        clean = Waveform(rng.standard_normal(4000) * rng.uniform(0.1, 1.0))
        noise = Waveform(rng.standard_normal(9000) * rng.uniform(0.1, 1.0))
        snr = rng.uniform(-10, 20)
        _, used = mix_at_snr(clean, noise, snr, rng)
        worst = max(worst, abs(measured_snr_db(clean, used) - snr))
    assert worst < 0.01


def test_mix_rejects_silence():
    rng = np.random.default_rng(0)
    live = Waveform(np.ones(1000) * 0.5)
    with pytest.raises(DegenerateSignalError):
        mix_at_snr(live, Waveform(np.zeros(2000)), 0.0, rng)
    with pytest.raises(DegenerateSignalError):
        mix_at_snr(Waveform(np.zeros(1000)), live, 0.0, rng)


def test_mix_requires_noise_at_least_clean_length():
    rng = np.random.default_rng(0)
    with pytest.raises(AudioError):
        mix_at_snr(Waveform(np.ones(1000)), Waveform(np.ones(500)), 0.0, rng)
