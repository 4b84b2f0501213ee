"""Shared synthetic-audio fixtures."""

from contextlib import contextmanager

import numpy as np
import pytest

from convmamba.audio import Waveform, save_wav
from convmamba.tensor import set_default_dtype


@contextmanager
def f64_mode():
    set_default_dtype("f64")
    try:
        yield
    finally:
        set_default_dtype("f32")


def synth_speechlike(rng, seconds=0.5, rate=16000):
    """Tonal signal with a slow envelope; enough structure to separate from
    white noise in the magnitude domain."""
    t = np.arange(int(seconds * rate)) / rate
    f0 = rng.uniform(200.0, 500.0)
    env = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(1.0, 3.0) * t)
    x = env * (0.5 * np.sin(2 * np.pi * f0 * t)
               + 0.25 * np.sin(2 * np.pi * 2 * f0 * t))
    return Waveform(0.5 * x / np.max(np.abs(x)), rate)


def write_corpus(root, n_clean=3, n_noise=2, seconds=0.5, seed=0):
    rng = np.random.default_rng(seed)
    clean_dir = root / "clean"
    noise_dir = root / "noise"
    clean_dir.mkdir(parents=True)
    noise_dir.mkdir(parents=True)
    for i in range(n_clean):
        save_wav(clean_dir / f"clean_{i:02d}.wav", synth_speechlike(rng, seconds))
    for i in range(n_noise):
        noise = Waveform(0.3 * rng.standard_normal(int(2 * seconds * 16000)))
        save_wav(noise_dir / f"noise_{i:02d}.wav", noise)
    return clean_dir, noise_dir


@pytest.fixture
def corpus(tmp_path):
    return write_corpus(tmp_path)
