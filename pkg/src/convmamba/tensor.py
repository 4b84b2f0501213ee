"""Dense tensors with reverse-mode automatic differentiation on an explicit tape.

Just enough machinery for the mask-estimation network: 2-D matmul, the
activations the layers use, frame-wise layer norm, a couple of shape ops,
and a central-difference gradient checker. float32 by default, float64
selectable for tight-tolerance tests.
"""

from __future__ import annotations

import numpy as np

_DEFAULT_DTYPE = np.float32

_DTYPE_NAMES = {"f32": np.float32, "f64": np.float64,
                "float32": np.float32, "float64": np.float64}


def set_default_dtype(dtype) -> None:
    """Set the dtype used for newly constructed tensors ("f32" or "f64")."""
    global _DEFAULT_DTYPE
    if isinstance(dtype, str):
        if dtype not in _DTYPE_NAMES:
            raise ValueError(f"unknown precision {dtype!r}")
        dtype = _DTYPE_NAMES[dtype]
    if dtype not in (np.float32, np.float64):
        raise ValueError("precision must be float32 or float64")
    _DEFAULT_DTYPE = dtype


def default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    """N-dimensional float array, optionally participating in a gradient tape."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else _DEFAULT_DTYPE)
        if not np.isfinite(arr).all():
            raise ValueError("tensor construction from non-finite values")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"


class Parameter:
    """A uniquely named trainable tensor."""

    __slots__ = ("name", "tensor")

    def __init__(self, name: str, tensor: Tensor):
        tensor.requires_grad = True
        self.name = name
        self.tensor = tensor

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.shape})"


class Tape:
    """Ordered record of primitive ops; replayed in reverse by backward().

    Single use: one backward pass consumes the tape, a second raises.
    """

    def __init__(self):
        self._ops: list[tuple[Tensor, callable]] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self

    def record(self, out: Tensor, backward_fn) -> None:
        self._ops.append((out, backward_fn))

    def __len__(self) -> int:
        return len(self._ops)


_TAPE_STACK: list[Tape] = []


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _finish(op_name: str, out_data: np.ndarray, inputs, backward_fn) -> Tensor:
    """Wrap an op result; register the adjoint if a tape is live and needed."""
    if not np.isfinite(out_data).all():
        raise ValueError(f"non-finite values produced by {op_name}")
    tape = _active_tape()
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs and tape is not None,
                 dtype=out_data.dtype)
    if tape is not None and needs:
        tape.record(out, backward_fn)
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate .grad on every tensor that the scalar loss depends on."""
    if loss.data.size != 1:
        raise ValueError("backward requires a scalar loss")
    if tape.consumed:
        raise RuntimeError("tape already consumed by a previous backward pass")
    tape.consumed = True
    loss.grad = np.ones_like(loss.data)
    for out, backward_fn in reversed(tape._ops):
        if out.grad is None:
            continue
        backward_fn(out.grad)


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} x {b.data.shape}")
    out_data = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return _finish("matmul", out_data, (a, b), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; b may also be a rank-1 bias broadcast over rows of a."""
    _check_broadcast("add", a, b)
    out_data = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, g if b.data.shape == g.shape else g.sum(axis=0))

    return _finish("add", out_data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("sub", a, b)
    out_data = a.data - b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, -g if b.data.shape == g.shape else -g.sum(axis=0))

    return _finish("sub", out_data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("mul", a, b)
    out_data = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, g * b.data)
        if b.requires_grad:
            gb = g * a.data
            _accum(b, gb if b.data.shape == gb.shape else gb.sum(axis=0))

    return _finish("mul", out_data, (a, b), bwd)


def _check_broadcast(op, a: Tensor, b: Tensor) -> None:
    if a.data.shape == b.data.shape:
        return
    if b.data.ndim == 1 and a.data.ndim >= 1 and a.data.shape[-1] == b.data.shape[0]:
        return
    raise ValueError(f"{op} shape mismatch: {a.data.shape} vs {b.data.shape}")


def scale(x: Tensor, c: float) -> Tensor:
    out_data = x.data * x.data.dtype.type(c)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * x.data.dtype.type(c))

    return _finish("scale", out_data, (x,), bwd)


def sum_all(x: Tensor) -> Tensor:
    out_data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def bwd(g):
        if x.requires_grad:
            _accum(x, np.broadcast_to(g, x.data.shape))

    return _finish("sum_all", out_data, (x,), bwd)


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * (x.data > 0))

    return _finish("relu", out_data, (x,), bwd)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * s * (1.0 - s))

    return _finish("sigmoid", s, (x,), bwd)


def silu(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    out_data = x.data * s

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * (s * (1.0 + x.data * (1.0 - s))))

    return _finish("silu", out_data, (x,), bwd)


def _softplus(x: np.ndarray) -> np.ndarray:
    # softplus(x) = max(x, 0) + log1p(exp(-|x|)) stays finite for any x
    return np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))


def softplus(x: Tensor) -> Tensor:
    out_data = _softplus(x.data)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * _sigmoid(x.data))

    return _finish("softplus", out_data, (x,), bwd)


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        e = np.exp(x.data)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * e)

    return _finish("exp", e, (x,), bwd)


_ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "silu": silu,
                "softplus": softplus, "exp": exp}


def activation(kind: str, x: Tensor) -> Tensor:
    """Apply one of relu | sigmoid | silu | softplus | exp elementwise."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(x)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row of x over its last axis (biased variance), then affine."""
    if x.data.shape[-1] != gamma.data.shape[0] or gamma.data.shape != beta.data.shape:
        raise ValueError("layer_norm parameter shape mismatch")
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    out_data = xhat * gamma.data + beta.data

    def bwd(g):
        if gamma.requires_grad:
            _accum(gamma, (g * xhat).reshape(-1, g.shape[-1]).sum(axis=0))
        if beta.requires_grad:
            _accum(beta, g.reshape(-1, g.shape[-1]).sum(axis=0))
        if x.requires_grad:
            n = x.data.shape[-1]
            gx = g * gamma.data
            m1 = gx.mean(axis=-1, keepdims=True)
            m2 = (gx * xhat).mean(axis=-1, keepdims=True)
            _accum(x, inv * (gx - m1 - xhat * m2))

    return _finish("layer_norm", out_data, (x, gamma, beta), bwd)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    """Columns [start, stop) of a 2-D tensor."""
    if x.data.ndim != 2:
        raise ValueError("slice_cols expects a 2-D tensor")
    out_data = np.ascontiguousarray(x.data[:, start:stop])

    def bwd(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[:, start:stop] = g
            _accum(x, full)

    return _finish("slice_cols", out_data, (x,), bwd)


def flip_time(x: Tensor) -> Tensor:
    """Reverse the first (time) axis."""
    out_data = np.ascontiguousarray(x.data[::-1])

    def bwd(g):
        if x.requires_grad:
            _accum(x, g[::-1])

    return _finish("flip_time", out_data, (x,), bwd)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def finite_diff_check(f, x: Tensor, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    f maps a Tensor to a scalar Tensor. Requires float64 inputs; h should sit
    in [1e-6, 1e-4] so truncation and rounding errors both stay small.
    """
    if x.data.dtype != np.float64:
        raise ValueError("finite_diff_check requires a float64 tensor")
    x.requires_grad = True
    x.zero_grad()
    with Tape() as tape:
        loss = f(x)
    backward(loss, tape)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    flat = x.data.reshape(-1)
    fd = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = float(f(x).data)
        flat[i] = orig - h
        lo = float(f(x).data)
        flat[i] = orig
        fd[i] = (hi - lo) / (2.0 * h)
    fd = fd.reshape(x.data.shape)
    denom = np.maximum(1.0, np.abs(fd))
    return float(np.max(np.abs(analytic - fd) / denom))
