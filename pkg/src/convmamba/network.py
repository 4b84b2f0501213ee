"""The mask-estimation network: configuration, weights, init, forward pass.

Input is an (L, 257) magnitude spectrogram. A pointwise convolution (with a
frame-wise layer norm in front and ReLU behind) lifts it to d_model channels,
a stack of Mamba-plus-depthwise-conv layers follows, and a pointwise
convolution with sigmoid produces the estimated mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tz
from .layers import LayerWeights, MambaWeights, conv_mamba_layer
from .masks import Mask, MaskKind
from .scan import SsmParams, dt_rank_for
from .tensor import Parameter, Tensor

PRESETS = {
    "mamba-4": dict(n_layers=4, conv_refine=False),
    "mamba-7": dict(n_layers=7, conv_refine=False),
    "convmamba-4": dict(n_layers=4, conv_refine=True),
    "convmamba-7": dict(n_layers=7, conv_refine=True),
    "convmamba-13": dict(n_layers=13, conv_refine=True),
}


@dataclass
class ModelConfig:
    d_model: int = 256
    n_layers: int = 4
    n_state: int = 16
    inner_conv_width: int = 4
    expansion: int = 2
    outer_dw_kernel: int = 3
    bins: int = 257
    bidirectional: bool = False
    learnable_skip: bool = False
    conv_refine: bool = True
    outer_conv_causal: bool = False

    def __post_init__(self):
        for name in ("d_model", "n_layers", "n_state", "inner_conv_width",
                     "expansion", "outer_dw_kernel", "bins"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def d_inner(self) -> int:
        return self.expansion * self.d_model

    @property
    def dt_rank(self) -> int:
        return dt_rank_for(self.d_model)

    @classmethod
    def preset(cls, name: str, **overrides) -> "ModelConfig":
        if name not in PRESETS:
            raise ValueError(f"unknown preset {name!r} (have {sorted(PRESETS)})")
        kwargs = dict(PRESETS[name])
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass
class NetworkWeights:
    in_ln_gamma: Tensor
    in_ln_beta: Tensor
    in_weight: Tensor
    in_bias: Tensor
    layers: list[LayerWeights]
    out_weight: Tensor
    out_bias: Tensor
    _named: list[Parameter] = field(default_factory=list, repr=False)

    def named_parameters(self) -> list[Parameter]:
        return self._named

    def zero_grads(self) -> None:
        for p in self._named:
            p.tensor.zero_grad()


# ---------------------------------------------------------------------------
# structural walk shared by init, counting, and checkpoint validation
# ---------------------------------------------------------------------------

def _walk(cfg: ModelConfig, alloc) -> NetworkWeights:
    """Build the weight tree; alloc(name, shape, init) -> Tensor.

    init is one of ("uniform", fan_in), ("zeros",), ("ones",), ("a_log",),
    ("dt_bias",). Call order is the canonical parameter order.
    """

    def mamba_block(prefix: str) -> MambaWeights:
        d_in = cfg.d_inner
        ssm = SsmParams(
            a_log=alloc(f"{prefix}.ssm.a_log", (d_in, cfg.n_state), ("a_log",)),
            d_skip=alloc(f"{prefix}.ssm.d_skip", (d_in,),
                         ("ones",) if cfg.learnable_skip else ("zeros",),
                         trainable=cfg.learnable_skip),
            x_proj_weight=alloc(f"{prefix}.ssm.x_proj.weight",
                                (d_in, cfg.dt_rank + 2 * cfg.n_state),
                                ("uniform", d_in)),
            dt_proj_weight=alloc(f"{prefix}.ssm.dt_proj.weight",
                                 (cfg.dt_rank, d_in), ("uniform", cfg.dt_rank)),
            dt_proj_bias=alloc(f"{prefix}.ssm.dt_proj.bias", (d_in,), ("dt_bias",)))
        return MambaWeights(
            in_proj_x=alloc(f"{prefix}.in_proj_x.weight", (cfg.d_model, d_in),
                            ("uniform", cfg.d_model)),
            in_proj_gate=alloc(f"{prefix}.in_proj_gate.weight", (cfg.d_model, d_in),
                               ("uniform", cfg.d_model)),
            conv_kernel=alloc(f"{prefix}.conv.kernel", (d_in, cfg.inner_conv_width),
                              ("uniform", cfg.inner_conv_width)),
            conv_bias=alloc(f"{prefix}.conv.bias", (d_in,), ("zeros",)),
            ssm=ssm,
            ln_gamma=alloc(f"{prefix}.ln.gamma", (d_in,), ("ones",)),
            ln_beta=alloc(f"{prefix}.ln.beta", (d_in,), ("zeros",)),
            out_proj=alloc(f"{prefix}.out_proj.weight", (d_in, cfg.d_model),
                           ("uniform", d_in)))

    layers = []
    in_ln_gamma = alloc("input_ln.gamma", (cfg.bins,), ("ones",))
    in_ln_beta = alloc("input_ln.beta", (cfg.bins,), ("zeros",))
    in_weight = alloc("input_proj.weight", (cfg.bins, cfg.d_model),
                      ("uniform", cfg.bins))
    in_bias = alloc("input_proj.bias", (cfg.d_model,), ("zeros",))
    for i in range(cfg.n_layers):
        prefix = f"layers.{i}"
        layer = LayerWeights(
            mamba_ln_gamma=alloc(f"{prefix}.mamba_ln.gamma", (cfg.d_model,), ("ones",)),
            mamba_ln_beta=alloc(f"{prefix}.mamba_ln.beta", (cfg.d_model,), ("zeros",)),
            mamba=mamba_block(f"{prefix}.mamba"))
        if cfg.bidirectional:
            layer.mamba_rev = mamba_block(f"{prefix}.mamba_rev")
        if cfg.conv_refine:
            layer.conv_ln_gamma = alloc(f"{prefix}.conv_ln.gamma", (cfg.d_model,), ("ones",))
            layer.conv_ln_beta = alloc(f"{prefix}.conv_ln.beta", (cfg.d_model,), ("zeros",))
            layer.conv_kernel = alloc(f"{prefix}.conv.kernel",
                                      (cfg.d_model, cfg.outer_dw_kernel),
                                      ("uniform", cfg.outer_dw_kernel))
            layer.conv_bias = alloc(f"{prefix}.conv.bias", (cfg.d_model,), ("zeros",))
        layers.append(layer)
    out_weight = alloc("output_proj.weight", (cfg.d_model, cfg.bins),
                       ("uniform", cfg.d_model))
    out_bias = alloc("output_proj.bias", (cfg.bins,), ("zeros",))
    return NetworkWeights(in_ln_gamma, in_ln_beta, in_weight, in_bias,
                          layers, out_weight, out_bias)


def parameter_shapes(cfg: ModelConfig) -> list[tuple[str, tuple]]:
    """Canonical (name, shape) list of the trainable parameters."""
    shapes: list[tuple[str, tuple]] = []

    def alloc(name, shape, init, trainable=True):
        if trainable:
            shapes.append((name, tuple(shape)))
        return Tensor(np.zeros(1))  # structure is discarded

    _walk(cfg, alloc)
    return shapes


def count_params(cfg: ModelConfig) -> int:
    return sum(int(np.prod(s)) for _, s in parameter_shapes(cfg))


def init_params(cfg: ModelConfig, seed: int, dtype=None) -> NetworkWeights:
    """Deterministic initialization: fan-in uniform projections, unit layer
    norms, log-spaced state decays, log-uniform softplus step sizes."""
    dtype = dtype or tz.default_dtype()
    rng = np.random.default_rng(seed)
    named: list[Parameter] = []

    def alloc(name, shape, init, trainable=True):
        kind = init[0]
        if kind == "uniform":
            data = rng.uniform(-1.0, 1.0, shape) / np.sqrt(init[1])
        elif kind == "zeros":
            data = np.zeros(shape)
        elif kind == "ones":
            data = np.ones(shape)
        elif kind == "a_log":
            data = np.log(np.tile(np.arange(1, shape[1] + 1, dtype=np.float64),
                                  (shape[0], 1)))
        elif kind == "dt_bias":
            dt = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), shape))
            data = np.log(np.expm1(dt))
        else:
            raise AssertionError(kind)
        t = Tensor(data, requires_grad=trainable, dtype=dtype)
        if trainable:
            named.append(Parameter(name, t))
        return t

    weights = _walk(cfg, alloc)
    weights._named = named
    seen = set()
    for p in named:
        if p.name in seen:
            raise AssertionError(f"duplicate parameter name {p.name}")
        seen.add(p.name)
    return weights


def from_arrays(cfg: ModelConfig, arrays: dict[str, np.ndarray],
                dtype=None) -> NetworkWeights:
    """Rebuild a weight tree from named arrays (checkpoint restore)."""
    dtype = dtype or tz.default_dtype()
    named: list[Parameter] = []

    def alloc(name, shape, init, trainable=True):
        if trainable:
            if name not in arrays:
                raise ValueError(f"checkpoint missing parameter {name}")
            data = arrays[name]
            if tuple(data.shape) != tuple(shape):
                raise ValueError(
                    f"shape mismatch for {name}: checkpoint has {tuple(data.shape)},"
                    f" config implies {tuple(shape)}")
        else:
            data = np.ones(shape) if init[0] == "ones" else np.zeros(shape)
        t = Tensor(data, requires_grad=trainable, dtype=dtype)
        if trainable:
            named.append(Parameter(name, t))
        return t

    weights = _walk(cfg, alloc)
    weights._named = named
    return weights


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def forward(y_mag: Tensor, w: NetworkWeights, cfg: ModelConfig,
            kind: MaskKind = MaskKind.IRM) -> Mask:
    """Estimate a time-frequency mask from an (L, bins) magnitude input."""
    if y_mag.data.ndim != 2 or y_mag.data.shape[1] != cfg.bins:
        raise ValueError(f"expected (L, {cfg.bins}) input, got {y_mag.data.shape}")
    outer_padding = "causal" if cfg.outer_conv_causal else "centered"
    x = tz.layer_norm(y_mag, w.in_ln_gamma, w.in_ln_beta)
    x = tz.relu(tz.add(tz.matmul(x, w.in_weight), w.in_bias))
    for layer in w.layers:
        x = conv_mamba_layer(x, layer, outer_padding)
    logits = tz.add(tz.matmul(x, w.out_weight), w.out_bias)
    return Mask(tz.sigmoid(logits), kind)


def forward_bidirectional(y_mag: Tensor, w: NetworkWeights, cfg: ModelConfig,
                          kind: MaskKind = MaskKind.IRM) -> Mask:
    if not cfg.bidirectional:
        raise ValueError("config is not bidirectional")
    return forward(y_mag, w, cfg, kind)
