"""SI-SDR and segmental SNR."""

import numpy as np
import pytest

from convmamba.audio import Waveform
from convmamba.metrics import seg_snr, si_sdr


def test_si_sdr_cap_and_scale_invariance():
    rng = np.random.default_rng(0)
    ref = Waveform(rng.standard_normal(4000))
    assert si_sdr(ref, ref) == 60.0
    assert si_sdr(Waveform(2.0 * ref.samples), ref) == 60.0
    noisy = Waveform(ref.samples + 0.1 * rng.standard_normal(4000))
    assert abs(si_sdr(Waveform(5.0 * noisy.samples), ref) - si_sdr(noisy, ref)) < 1e-9


def test_si_sdr_orthogonal_noise_closed_form():
    rng = np.random.default_rng(1)
    ref = rng.standard_normal(8000)
    noise = rng.standard_normal(8000)
    noise -= (np.dot(noise, ref) / np.dot(ref, ref)) * ref  # orthogonalize
    noise *= np.sqrt(np.dot(ref, ref) / 10.0 / np.dot(noise, noise))
    got = si_sdr(Waveform(ref + noise), Waveform(ref))
    assert abs(got - 10.0) < 1e-9


def test_si_sdr_errors():
    with pytest.raises(ValueError):
        si_sdr(Waveform(np.ones(10)), Waveform(np.ones(11)))
    with pytest.raises(ValueError):
        si_sdr(Waveform(np.ones(10)), Waveform(np.zeros(10)))


def test_seg_snr_ceiling_and_floor():
    rng = np.random.default_rng(2)
    ref = Waveform(rng.standard_normal(4096))
    assert seg_snr(ref, ref) == 35.0
    # silent estimate sits at exactly 0 dB by the ratio formula
    assert seg_snr(Waveform(np.zeros(4096)), ref) == 0.0
    # error power 16x the reference (-12 dB) clamps to the floor
    wild = Waveform(ref.samples + 4.0 * rng.standard_normal(4096))
    assert seg_snr(wild, ref) == -10.0


def test_seg_snr_hand_case():
    # two non-overlapping frames: 20 dB and 0 dB -> mean 10 dB
    ref = np.zeros(1024)
    est = np.zeros(1024)
    ref[:512] = 1.0
    est[:512] = 1.0 - 0.1
    ref[512:] = 1.0
    est[512:] = 0.0
    got = seg_snr(Waveform(est), Waveform(ref), frame=512, hop=512)
    assert abs(got - 10.0) < 1e-9


def test_seg_snr_skips_silent_frames():
    ref = np.zeros(1536)
    est = np.zeros(1536)
    ref[1024:] = 0.5
    est[1024:] = 0.5
    got = seg_snr(Waveform(est), Waveform(ref), frame=512, hop=512)
    assert got == 35.0
    with pytest.raises(ValueError):
        seg_snr(Waveform(np.ones(512)), Waveform(np.zeros(512)))
