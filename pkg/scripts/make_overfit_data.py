#!/usr/bin/env python3
"""Generate the synthetic corpus for configs/overfit.cfg: one 1-second
440 Hz tone and one 1-second white-noise recording at 16 kHz."""

import argparse
from pathlib import Path

import numpy as np

from convmamba.audio import Waveform, save_wav


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", default="data/overfit")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    root = Path(args.root)
    (root / "clean").mkdir(parents=True, exist_ok=True)
    (root / "noise").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    t = np.arange(16000) / 16000.0
    tone = 0.5 * np.sin(2 * np.pi * 440.0 * t)
    save_wav(root / "clean" / "tone.wav", Waveform(tone), encoding="float32")
    noise = 0.25 * rng.standard_normal(16000)
    save_wav(root / "noise" / "white.wav", Waveform(noise), encoding="float32")
    print(f"wrote {root}/clean/tone.wav and {root}/noise/white.wav")


if __name__ == "__main__":
    main()
