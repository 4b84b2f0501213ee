"""Selective state-space core: ZOH discretization and scan evaluators.

Per channel d the recurrence over an N-dimensional hidden state is

    h_t = a_bar_t * h_{t-1} + b_bar_t * u_t        (elementwise over N)
    z_t = <c_t, h_t> + d_skip * u_t

where (a_bar_t, b_bar_t) come from zero-order-hold discretization of a
continuous pair (A, B) at a per-timestep, per-channel step size delta_t > 0,
and delta, B, C are themselves projections of the input sequence. Three
evaluators are provided: a sequential recurrence, a Blelloch-style parallel
prefix scan over the associative operator

    (a1, b1) o (a2, b2) = (a2*a1, a2*b1 + b2),

and, for time-invariant parameters, the equivalent causal convolution with
the kernel (<c, b_bar>, <c, a_bar*b_bar>, <c, a_bar^2*b_bar>, ...).
Sequential and parallel forms agree to roundoff on every input.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from . import tensor as tz
from .tensor import Tensor, _accum

TAYLOR_THRESHOLD = 1e-4
PARALLEL_MIN_LEN = 32


@dataclass
class SsmParams:
    """Continuous-time parameters and the selective projection weights.

    a_log stores log(-A) so the state matrix A = -exp(a_log) is negative by
    construction; d_skip is the optional feedthrough (zero when disabled).
    """

    a_log: Tensor            # (d_inner, n_state)
    d_skip: Tensor           # (d_inner,)
    x_proj_weight: Tensor    # (d_inner, dt_rank + 2*n_state)
    dt_proj_weight: Tensor   # (dt_rank, d_inner)
    dt_proj_bias: Tensor     # (d_inner,)

    @property
    def d_inner(self) -> int:
        return self.a_log.data.shape[0]

    @property
    def n_state(self) -> int:
        return self.a_log.data.shape[1]

    @property
    def dt_rank(self) -> int:
        return self.x_proj_weight.data.shape[1] - 2 * self.n_state


@dataclass
class SelectiveInputs:
    """Per-timestep step sizes and input/output projections (shared over channels)."""

    delta: Tensor   # (L, d_inner), strictly positive
    b: Tensor       # (L, n_state)
    c: Tensor       # (L, n_state)

    def __post_init__(self):
        if (self.delta.data <= 0).any():
            raise ValueError("delta must be strictly positive")


def dt_rank_for(d_model: int) -> int:
    return max(1, -(-d_model // 16))


def softplus_inverse(y: float) -> float:
    return float(np.log(np.expm1(y)))


def init_ssm_params(d_inner: int, n_state: int, dt_rank: int,
                    rng: np.random.Generator, learnable_skip: bool = False,
                    dtype=None) -> SsmParams:
    """Standard initialization: A = -(1..N) per channel, fan-in uniform
    projections, and dt bias set so softplus(bias) is log-uniform in
    [1e-3, 1e-1]."""
    dtype = dtype or tz.default_dtype()
    a_log = np.log(np.tile(np.arange(1, n_state + 1, dtype=np.float64), (d_inner, 1)))
    x_proj = rng.uniform(-1, 1, (d_inner, dt_rank + 2 * n_state)) / np.sqrt(d_inner)
    dt_w = rng.uniform(-1, 1, (dt_rank, d_inner)) / np.sqrt(dt_rank)
    dt_init = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), d_inner))
    dt_bias = np.log(np.expm1(dt_init))
    d_skip = np.ones(d_inner) if learnable_skip else np.zeros(d_inner)
    return SsmParams(
        a_log=Tensor(a_log, requires_grad=True, dtype=dtype),
        d_skip=Tensor(d_skip, requires_grad=learnable_skip, dtype=dtype),
        x_proj_weight=Tensor(x_proj, requires_grad=True, dtype=dtype),
        dt_proj_weight=Tensor(dt_w, requires_grad=True, dtype=dtype),
        dt_proj_bias=Tensor(dt_bias, requires_grad=True, dtype=dtype))


# ---------------------------------------------------------------------------
# zero-order hold
# ---------------------------------------------------------------------------

def _phi_pair_into(x, ph, dph, scratch) -> None:
    """(exp(x) - 1)/x and its derivative written into ph/dph.

    Direct formulas are evaluated with out= kernels (expm1 keeps the ratio
    accurate down to the switchover), then entries with |x| below 1e-4 are
    patched from a three-term Taylor series, which agrees with the exact
    ratio to well below 1e-12 there.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        np.expm1(x, out=scratch)               # e^x - 1
        np.divide(scratch, x, out=ph)
        np.add(scratch, 1.0, out=scratch)      # e^x
        np.subtract(x, 1.0, out=dph)
        np.multiply(dph, scratch, out=dph)
        dph += 1.0
        dph /= x
        dph /= x
    np.abs(x, out=scratch)
    small = scratch < TAYLOR_THRESHOLD
    if small.any():
        xs = x[small]
        x2 = xs * xs
        x3 = x2 * xs
        ph[small] = 1.0 + 0.5 * xs + x2 * (1.0 / 6.0) + x3 * (1.0 / 24.0)
        dph[small] = 0.5 + xs * (1.0 / 3.0) + x2 * 0.125 + x3 * (1.0 / 30.0)


def _phi_pair(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.result_type(x, np.float32))
    ph = np.empty_like(x)
    dph = np.empty_like(x)
    _phi_pair_into(x, ph, dph, np.empty_like(x))
    return ph, dph


def _phi(x: np.ndarray) -> np.ndarray:
    return _phi_pair(x)[0]


def _phi_prime(x: np.ndarray) -> np.ndarray:
    return _phi_pair(x)[1]


def discretize_zoh(a, b, delta):
    """Zero-order-hold discretization of dh/dt = a*h + b*u over a step delta.

    a_bar = exp(delta*a); b_bar = (delta*a)^-1 (exp(delta*a) - 1) * delta*b,
    evaluated as phi(delta*a) * delta * b with the series branch near zero.
    Works elementwise on scalars or broadcastable arrays.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    x = delta * a
    return np.exp(x), _phi(x) * delta * b


# ---------------------------------------------------------------------------
# selective parameterization
# ---------------------------------------------------------------------------

def ssm_parameterize(x: Tensor, p: SsmParams) -> SelectiveInputs:
    """Project the input sequence to per-timestep (delta, B, C).

    x (L, d_inner) is projected by x_proj_weight and split into a low-rank
    delta precursor and the B/C rows; delta = softplus(dt_low @ dt_proj + bias)
    is positive by construction.
    """
    n = p.n_state
    r = p.dt_rank
    proj = tz.matmul(x, p.x_proj_weight)
    dt_low = tz.slice_cols(proj, 0, r)
    b = tz.slice_cols(proj, r, r + n)
    c = tz.slice_cols(proj, r + n, r + 2 * n)
    delta = tz.softplus(tz.add(tz.matmul(dt_low, p.dt_proj_weight), p.dt_proj_bias))
    return SelectiveInputs(delta=delta, b=b, c=c)


# ---------------------------------------------------------------------------
# scan evaluators
# ---------------------------------------------------------------------------

def _states_sequential(a_bar: np.ndarray, s: np.ndarray,
                       out: np.ndarray | None = None) -> np.ndarray:
    # h[t] = a_bar[t]*h[t-1] + s[t], written in place
    h = np.empty_like(s) if out is None else out
    h[0] = s[0]
    for t in range(1, s.shape[0]):
        np.multiply(a_bar[t], h[t - 1], out=h[t])
        h[t] += s[t]
    return h


def _states_parallel(a_bar: np.ndarray, s: np.ndarray,
                     out: np.ndarray | None = None) -> np.ndarray:
    """Blelloch up/down sweep over (a, b) pairs; identity element (1, 0)."""
    length = s.shape[0]
    if length < PARALLEL_MIN_LEN:
        return _states_sequential(a_bar, s, out)
    size = 1 << (length - 1).bit_length()
    a = np.ones((size,) + s.shape[1:], dtype=s.dtype)
    b = np.zeros((size,) + s.shape[1:], dtype=s.dtype)
    a[:length] = a_bar
    b[:length] = s
    step = 1
    while step < size:  # up-sweep: each right node absorbs its left sibling
        right = np.arange(2 * step - 1, size, 2 * step)
        left = right - step
        b[right] = a[right] * b[left] + b[right]
        a[right] = a[right] * a[left]
        step *= 2
    a[size - 1] = 1.0
    b[size - 1] = 0.0
    step = size // 2
    while step >= 1:  # down-sweep: distribute exclusive prefixes
        right = np.arange(2 * step - 1, size, 2 * step)
        left = right - step
        a_sub = a[left]
        b_sub = b[left]
        a[left] = a[right]
        b[left] = b[right]
        b[right] = a_sub * b[right] + b_sub
        a[right] = a_sub * a[right]
        step //= 2
    # (a, b) now hold the exclusive scan; fold in the element itself
    h = np.multiply(a_bar, b[:length], out=out)
    h += s
    return h


_WORKSPACE = threading.local()

_SLOT_X, _SLOT_ABAR, _SLOT_PH, _SLOT_DPH, _SLOT_BBAR, _SLOT_S, _SLOT_H = range(7)


def _scan_workspace(shape: tuple, dtype, recording: bool) -> np.ndarray:
    """Seven (L, D, N) slots in one contiguous block. Without an active tape
    nothing outlives the call, so a thread-local block is reused; with a tape
    the block must persist for the backward pass and is freshly allocated."""
    full = (7,) + shape
    if recording:
        return np.empty(full, dtype=dtype)
    cached = getattr(_WORKSPACE, "block", None)
    if cached is None or cached.shape != full or cached.dtype != dtype:
        cached = np.empty(full, dtype=dtype)
        _WORKSPACE.block = cached
    return cached


def _selective_scan(u: Tensor, si: SelectiveInputs, p: SsmParams,
                    states_fn) -> Tensor:
    udata = u.data
    delta = si.delta.data
    bdata = si.b.data
    cdata = si.c.data
    a = -np.exp(p.a_log.data)                       # (D, N)
    recording = tz._active_tape() is not None and any(
        t.requires_grad for t in (u, si.delta, si.b, si.c, p.a_log, p.d_skip))
    work = _scan_workspace(delta.shape + (a.shape[1],), delta.dtype, recording)
    x = np.multiply(delta[:, :, None], a[None, :, :], out=work[_SLOT_X])
    a_bar = np.exp(x, out=work[_SLOT_ABAR])
    ph = work[_SLOT_PH]
    dph = work[_SLOT_DPH]
    _phi_pair_into(x, ph, dph, scratch=work[_SLOT_S])
    b_bar = np.multiply(ph, delta[:, :, None], out=work[_SLOT_BBAR])
    b_bar *= bdata[:, None, :]
    s = np.multiply(b_bar, udata[:, :, None], out=work[_SLOT_S])
    h = states_fn(a_bar, s, out=work[_SLOT_H])
    z = np.einsum("ldn,ln->ld", h, cdata) + udata * p.d_skip.data

    inputs = (u, si.delta, si.b, si.c, p.a_log, p.d_skip)

    def bwd(g):
        gh = g[:, :, None] * cdata[:, None, :]
        lam = np.empty_like(gh)
        lam[-1] = gh[-1]
        for t in range(g.shape[0] - 2, -1, -1):
            np.multiply(a_bar[t + 1], lam[t + 1], out=lam[t])
            lam[t] += gh[t]
        h_prev = np.empty_like(h)
        h_prev[0] = 0.0
        h_prev[1:] = h[:-1]
        d_b_bar = lam * udata[:, :, None]
        d_x = lam * h_prev * a_bar + d_b_bar * delta[:, :, None] * bdata[:, None, :] * dph
        if si.c.requires_grad:
            _accum(si.c, np.einsum("ld,ldn->ln", g, h))
        if si.b.requires_grad:
            _accum(si.b, np.einsum("ldn,ld->ln", d_b_bar * ph, delta))
        if si.delta.requires_grad:
            dd = np.einsum("ldn,ldn->ld", d_b_bar, ph * bdata[:, None, :])
            dd += np.einsum("ldn,dn->ld", d_x, a)
            _accum(si.delta, dd)
        if u.requires_grad:
            _accum(u, g * p.d_skip.data + np.einsum("ldn,ldn->ld", lam, b_bar))
        if p.a_log.requires_grad:
            da = np.einsum("ldn,ld->dn", d_x, delta)
            _accum(p.a_log, da * a)
        if p.d_skip.requires_grad:
            _accum(p.d_skip, (g * udata).sum(axis=0))

    return tz._finish("selective_scan", z, inputs, bwd)


def selective_scan_seq(u: Tensor, si: SelectiveInputs, p: SsmParams) -> Tensor:
    """Evaluate the recurrence step by step from h_0 = 0."""
    return _selective_scan(u, si, p, _states_sequential)


def selective_scan_parallel(u: Tensor, si: SelectiveInputs, p: SsmParams) -> Tensor:
    """Same output as the sequential form via a work-efficient prefix scan."""
    return _selective_scan(u, si, p, _states_parallel)


# ---------------------------------------------------------------------------
# time-invariant convolution form
# ---------------------------------------------------------------------------

def lti_kernel(a_bar: np.ndarray, b_bar: np.ndarray, c: np.ndarray,
               length: int) -> np.ndarray:
    """Causal kernel K[t] = <c, a_bar^t * b_bar> per channel; shape (length, D)."""
    a_bar = np.atleast_2d(np.asarray(a_bar, dtype=np.float64))
    b_bar = np.atleast_2d(np.asarray(b_bar, dtype=np.float64))
    c = np.asarray(c, dtype=np.float64)
    kernel = np.empty((length, a_bar.shape[0]))
    power = np.ones_like(a_bar)
    for t in range(length):
        kernel[t] = (power * b_bar) @ c
        power = power * a_bar
    return kernel


def lti_apply(u: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Causal convolution z_t = sum_{tau<=t} K[tau] * u[t-tau] per channel."""
    u = np.asarray(u, dtype=np.float64)
    squeeze = u.ndim == 1
    if squeeze:
        u = u[:, None]
    length = u.shape[0]
    z = np.zeros_like(u)
    for tau in range(min(length, kernel.shape[0])):
        z[tau:] += kernel[tau] * u[:length - tau]
    return z[:, 0] if squeeze else z
