"""Dynamic-mixing training: sampling, batching, Adam, schedule, loop.

Each step draws clean utterances (epoch-shuffled), mixes each with a random
noise segment at an integer SNR drawn uniformly from the configured range,
builds the mask target, and takes one clipped Adam step on the mask MSE.
The learning rate follows the inverse-sqrt warm-up schedule unless disabled,
in which case the fixed base rate applies. Validation pairs are premixed
once from a derived seed and scored after every epoch; the best checkpoint
is the one with the lowest validation loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as tz
from .audio import (DegenerateSignalError, StftConfig, Waveform, load_wav,
                    magnitude, mix_at_snr, stft)
from .checkpoint import save_checkpoint
from .masks import MaskKind, irm, mask_mse_loss, psm
from .network import ModelConfig, NetworkWeights, forward, init_params
from .tensor import Parameter, Tape, Tensor, backward


@dataclass
class TrainConfig:
    batch_size: int = 10
    snr_lo: int = -10
    snr_hi: int = 20
    target: MaskKind = MaskKind.IRM
    lr_base: float = 1e-3
    lr_scale: float = 1.0
    use_warmup: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    warmup_steps: int = 40_000
    epochs: int = 150
    clip_lo: float = -1.0
    clip_hi: float = 1.0
    seed: int = 0
    max_steps: int = 0        # 0 = run all epochs
    val_items: int = 4
    val_every: int = 1         # epochs between validation passes
    checkpoint_every: int = 1  # epochs; 0 = only best and final

    def __post_init__(self):
        if self.batch_size < 1 or self.warmup_steps < 1:
            raise ValueError("batch_size and warmup_steps must be >= 1")
        if self.clip_lo >= self.clip_hi:
            raise ValueError("clip range must be ordered")
        if self.snr_lo > self.snr_hi:
            raise ValueError("snr range must be ordered")


# ---------------------------------------------------------------------------
# schedule / optimizer
# ---------------------------------------------------------------------------

def warmup_lr(step: int, d_model: int, warmup_steps: int) -> float:
    """Inverse-sqrt warm-up: d_model^-0.5 * min(step^-0.5, step*warmup^-1.5).

    The linear branch is evaluated as (step/warmup) * warmup^-0.5 so the two
    branches agree exactly at the crossover step.
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    return d_model ** -0.5 * min(step ** -0.5,
                                 (step / warmup_steps) * warmup_steps ** -0.5)


def lr_for_step(step: int, d_model: int, cfg: TrainConfig) -> float:
    if cfg.use_warmup:
        return cfg.lr_scale * warmup_lr(step, d_model, cfg.warmup_steps)
    return cfg.lr_base


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params: list[Parameter], state: AdamState, lr: float,
              cfg: TrainConfig) -> None:
    """Bias-corrected Adam update in place; missing grads count as zero."""
    state.step += 1
    b1 = cfg.beta1
    b2 = cfg.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p in params:
        data = p.tensor.data
        g = p.tensor.grad
        if g is None:
            g = np.zeros_like(data)
        if g.shape != data.shape:
            raise ValueError(f"gradient shape mismatch for {p.name}")
        m = state.m.setdefault(p.name, np.zeros_like(data))
        v = state.v.setdefault(p.name, np.zeros_like(data))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        data -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)


def clip_gradients(params: list[Parameter], lo: float = -1.0,
                   hi: float = 1.0) -> list[Parameter]:
    if lo >= hi:
        raise ValueError("clip range must be ordered")
    for p in params:
        if p.tensor.grad is not None:
            np.clip(p.tensor.grad, lo, hi, out=p.tensor.grad)
    return params


# ---------------------------------------------------------------------------
# data sampling and batching
# ---------------------------------------------------------------------------

class WavPool:
    """A list of WAV paths with cached decoding."""

    def __init__(self, paths):
        self.paths = [Path(p) for p in paths]
        if not self.paths:
            raise ValueError("empty pool")
        self._cache: dict[Path, Waveform] = {}

    def __len__(self):
        return len(self.paths)

    def load(self, index: int) -> Waveform:
        path = self.paths[index]
        if path not in self._cache:
            self._cache[path] = load_wav(path)
        return self._cache[path]


def list_pool(root, manifest=None) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"data root not found: {root}")
    if manifest is not None:
        lines = Path(manifest).read_text(encoding="utf-8").splitlines()
        paths = [root / line.strip() for line in lines if line.strip()]
    else:
        paths = sorted(root.rglob("*.wav"))
    if not paths:
        raise FileNotFoundError(f"no wav files under {root}")
    return paths


@dataclass
class TrainItem:
    noisy_mag: np.ndarray   # (frames, bins)
    target: np.ndarray      # (frames, bins)
    meta: dict


@dataclass
class Batch:
    noisy_mag: np.ndarray    # (items, frames_max, bins), zero padded
    target_mask: np.ndarray
    frame_valid: np.ndarray  # (items, frames_max) bool
    metadata: list


def sample_mixture(clean_pool: WavPool, noise_pool: WavPool, cfg: TrainConfig,
                   rng: np.random.Generator, clean_index: int | None = None,
                   stft_cfg: StftConfig | None = None) -> TrainItem:
    """Mix one clean utterance with a random noise clip at a random integer
    SNR and build the mask target. Degenerate draws are retried 10 times."""
    stft_cfg = stft_cfg or StftConfig()
    for attempt in range(10):
        ci = int(rng.integers(0, len(clean_pool))) if clean_index is None else clean_index
        ni = int(rng.integers(0, len(noise_pool)))
        snr_db = int(rng.integers(cfg.snr_lo, cfg.snr_hi + 1))
        try:
            clean = clean_pool.load(ci)
            noisy, noise_used = mix_at_snr(clean, noise_pool.load(ni), snr_db, rng)
        except DegenerateSignalError:
            continue
        spec_y = stft(noisy, stft_cfg)
        spec_s = stft(clean, stft_cfg)
        if cfg.target is MaskKind.IRM:
            spec_d = stft(noise_used, stft_cfg)
            target = irm(magnitude(spec_s), magnitude(spec_d)).values.data
        else:
            target = psm(spec_s, spec_y).values.data
        meta = dict(clean=str(clean_pool.paths[ci]), noise=str(noise_pool.paths[ni]),
                    snr_db=snr_db, n_samples=len(clean), frames=spec_y.frames)
        return TrainItem(magnitude(spec_y).data, target, meta)
    raise DegenerateSignalError("10 consecutive degenerate mixture draws")


def make_batch(items: list[TrainItem]) -> Batch:
    """Zero-pad every item to the longest frame count and mark valid frames."""
    if not items:
        raise ValueError("empty batch")
    frames_max = max(item.noisy_mag.shape[0] for item in items)
    bins = items[0].noisy_mag.shape[1]
    noisy = np.zeros((len(items), frames_max, bins))
    target = np.zeros((len(items), frames_max, bins))
    valid = np.zeros((len(items), frames_max), dtype=bool)
    for i, item in enumerate(items):
        n = item.noisy_mag.shape[0]
        noisy[i, :n] = item.noisy_mag
        target[i, :n] = item.target
        valid[i, :n] = True
    return Batch(noisy, target, valid, [item.meta for item in items])


def batch_loss(batch: Batch, weights: NetworkWeights, cfg: ModelConfig) -> Tensor:
    """Mean of per-utterance mask MSE; each item runs at its true length so
    padding can never influence the loss."""
    total = None
    for i in range(batch.noisy_mag.shape[0]):
        n = int(batch.frame_valid[i].sum())
        pred = forward(Tensor(batch.noisy_mag[i, :n]), weights, cfg).values
        item = mask_mse_loss(pred, Tensor(batch.target_mask[i, :n]),
                             np.ones(n, dtype=bool))
        total = item if total is None else tz.add(total, item)
    return tz.scale(total, 1.0 / batch.noisy_mag.shape[0])


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    steps: int
    final_train_loss: float
    best_epoch: int
    best_val_loss: float
    final_checkpoint: Path
    best_checkpoint: Path
    metrics_csv: Path


def _validation_loss(items: list[TrainItem], weights: NetworkWeights,
                     cfg: ModelConfig) -> float:
    return batch_loss(make_batch(items), weights, cfg).item()


def train_loop(model_cfg: ModelConfig, train_cfg: TrainConfig,
               clean_pool: WavPool, noise_pool: WavPool, out_dir,
               stft_cfg: StftConfig | None = None) -> TrainResult:
    stft_cfg = stft_cfg or StftConfig()
    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    weights = init_params(model_cfg, train_cfg.seed)
    params = weights.named_parameters()
    adam = AdamState()
    rng = np.random.default_rng(train_cfg.seed)
    val_rng = np.random.default_rng(train_cfg.seed + 1)
    val_items = [sample_mixture(clean_pool, noise_pool, train_cfg, val_rng,
                                stft_cfg=stft_cfg)
                 for _ in range(train_cfg.val_items)]

    csv_path = out_dir / "metrics.csv"
    best_val = math.inf
    best_epoch = 0
    best_path = ckpt_dir / "best.ckpt"
    final_path = ckpt_dir / "final.ckpt"
    step = 0
    last_loss = math.nan
    stop = False
    with open(csv_path, "w", encoding="utf-8") as log:
        log.write("step,epoch,split,loss,lr\n")
        for epoch in range(1, train_cfg.epochs + 1):
            order = rng.permutation(len(clean_pool))
            for start in range(0, len(order), train_cfg.batch_size):
                chunk = order[start:start + train_cfg.batch_size]
                items = [sample_mixture(clean_pool, noise_pool, train_cfg, rng,
                                        clean_index=int(ci), stft_cfg=stft_cfg)
                         for ci in chunk]
                batch = make_batch(items)
                weights.zero_grads()
                with Tape() as tape:
                    loss = batch_loss(batch, weights, model_cfg)
                backward(loss, tape)
                clip_gradients(params, train_cfg.clip_lo, train_cfg.clip_hi)
                step += 1
                lr = lr_for_step(step, model_cfg.d_model, train_cfg)
                adam_step(params, adam, lr, train_cfg)
                last_loss = loss.item()
                log.write(f"{step},{epoch},train,{last_loss:.10e},{lr:.10e}\n")
                if train_cfg.max_steps and step >= train_cfg.max_steps:
                    stop = True
                    break
            if stop or epoch % train_cfg.val_every == 0 or epoch == train_cfg.epochs:
                val_loss = _validation_loss(val_items, weights, model_cfg)
                lr = lr_for_step(max(step, 1), model_cfg.d_model, train_cfg)
                log.write(f"{step},{epoch},val,{val_loss:.10e},{lr:.10e}\n")
                if val_loss < best_val:
                    best_val = val_loss
                    best_epoch = epoch
                    save_checkpoint(best_path, weights, model_cfg)
            if train_cfg.checkpoint_every and epoch % train_cfg.checkpoint_every == 0:
                save_checkpoint(ckpt_dir / f"epoch-{epoch:04d}.ckpt", weights, model_cfg)
            if stop:
                break
    save_checkpoint(final_path, weights, model_cfg)
    return TrainResult(step, last_loss, best_epoch, best_val, final_path,
                       best_path, csv_path)
