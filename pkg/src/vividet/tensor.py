"""Dense n-dimensional tensors with reverse-mode automatic differentiation.

Values are stored as contiguous row-major numpy arrays, float32 by default
with float64 selectable for verification runs (finite differences are not
trustworthy in float32). Operations are eager: each one computes its result
immediately and, when a :class:`GradTape` is active and an input is tracked,
appends a backward closure to the tape. :func:`backward` replays the tape in
reverse and accumulates one gradient per tracked tensor.

Tensors produced by operations are treated as immutable; leaf tensors (model
parameters) may be mutated in place between forward passes, which is how the
optimizer and the finite-difference checker work.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericsError, ShapeError, TapeError

__all__ = [
    "Tensor",
    "GradTape",
    "add",
    "sub",
    "neg",
    "mul",
    "matmul",
    "transpose",
    "reshape",
    "concat",
    "narrow",
    "sum_all",
    "mean_all",
    "softmax",
    "layer_norm",
    "gelu",
    "tanh_act",
    "cross_entropy_with_logits",
    "backward",
    "check_gradients",
    "set_default_dtype",
    "get_default_dtype",
    "set_debug_checks",
]

_default_dtype = np.dtype(np.float32)
_debug_checks = True
_tape_stack: list["GradTape"] = []

# Coefficients of the tanh-form GeLU approximation:
# 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def set_default_dtype(dtype) -> None:
    """Set the dtype used for tensors built from Python data (float32/float64)."""
    global _default_dtype
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported default dtype {dt}; use float32 or float64")
    _default_dtype = dt


def get_default_dtype() -> np.dtype:
    return _default_dtype


def set_debug_checks(enabled: bool) -> None:
    """Toggle the per-operation NaN/Inf output scan."""
    global _debug_checks
    _debug_checks = bool(enabled)


class Tensor:
    """Dense array plus a requires_grad mark. See the module docstring."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = _default_dtype
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # Small operator sugar; everything routes through the module functions.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def zeros(shape, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype or _default_dtype), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype or _default_dtype), requires_grad=requires_grad)


class GradTape:
    """Ordered record of executed operations.

    Entries are appended in execution order, so every operation's inputs
    precede it on the tape (topological order is by construction). A tape is
    single-owner: exactly one logical thread records to it and replays it.

    Use as a context manager::

        with GradTape() as tape:
            loss = ...            # ops record themselves
        grads = backward(tape, loss, params)
    """

    def __init__(self):
        # each record: (out, inputs, needs, backward_fn)
        self._records: list[tuple] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "GradTape":
        _tape_stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _tape_stack.pop()
        assert popped is self, "GradTape contexts must nest properly"

    def __len__(self) -> int:
        return len(self._records)


def _active_tape():
    return _tape_stack[-1] if _tape_stack else None


def _tracked(tape: GradTape, t: Tensor) -> bool:
    return t.requires_grad or id(t) in tape._produced


def _finish(op: str, out_data: np.ndarray, inputs: tuple, backward_fn) -> Tensor:
    """Wrap an op result, scan it if debug checks are on, record on the tape."""
    out_data = np.ascontiguousarray(out_data)
    if _debug_checks and not np.all(np.isfinite(out_data)):
        raise NumericsError(f"{op} produced non-finite values")
    out = Tensor(out_data)
    tape = _active_tape()
    if tape is not None:
        needs = tuple(_tracked(tape, t) for t in inputs)
        if any(needs):
            tape._records.append((out, inputs, needs, backward_fn))
            tape._produced.add(id(out))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data
    a_shape, b_shape = a.shape, b.shape

    def bwd(g, needs):
        da = _unbroadcast(g, a_shape) if needs[0] else None
        db = _unbroadcast(g, b_shape) if needs[1] else None
        return da, db

    return _finish("add", out, (a, b), bwd)


def sub(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data
    a_shape, b_shape = a.shape, b.shape

    def bwd(g, needs):
        da = _unbroadcast(g, a_shape) if needs[0] else None
        db = _unbroadcast(-g, b_shape) if needs[1] else None
        return da, db

    return _finish("sub", out, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    def bwd(g, needs):
        return (-g,)

    return _finish("neg", -a.data, (a,), bwd)


def mul(a: Tensor, b) -> Tensor:
    """Elementwise (broadcasting) product; `b` may be a Python scalar."""
    if isinstance(b, (int, float)):
        scalar = float(b)
        a = _as_tensor(a)

        def bwd_scalar(g, needs):
            return (g * scalar,)

        return _finish("mul", a.data * scalar, (a,), bwd_scalar)

    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data
    a_data, b_data = a.data, b.data

    def bwd(g, needs):
        da = _unbroadcast(g * b_data, a_data.shape) if needs[0] else None
        db = _unbroadcast(g * a_data, b_data.shape) if needs[1] else None
        return da, db

    return _finish("mul", out, (a, b), bwd)


# ---------------------------------------------------------------------------
# linear algebra and layout
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two rank-2 tensors; d/da = g.b^T, d/db = a^T.g."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    a_data, b_data = a.data, b.data

    def bwd(g, needs):
        da = g @ b_data.T if needs[0] else None
        db = a_data.T @ g if needs[1] else None
        return da, db

    return _finish("matmul", a.data @ b.data, (a, b), bwd)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose needs a rank-2 tensor, got {a.shape}")

    def bwd(g, needs):
        return (g.T,)

    return _finish("transpose", a.data.T, (a,), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    old_shape = a.shape

    def bwd(g, needs):
        return (g.reshape(old_shape),)

    return _finish("reshape", a.data.reshape(shape), (a,), bwd)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(_as_tensor(p) for p in parts)
    if not parts:
        raise ShapeError("concat of zero tensors")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g, needs):
        grads = []
        for i in range(len(parts)):
            if needs[i]:
                index = [slice(None)] * g.ndim
                index[axis] = slice(offsets[i], offsets[i + 1])
                grads.append(g[tuple(index)])
            else:
                grads.append(None)
        return tuple(grads)

    return _finish("concat", out, parts, bwd)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice `[start, start+length)` along one axis."""
    if not (0 <= start and start + length <= a.shape[axis]):
        raise ShapeError(f"narrow [{start}:{start + length}] out of range for axis {axis} of {a.shape}")
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    in_shape = a.shape

    def bwd(g, needs):
        full = np.zeros(in_shape, dtype=g.dtype)
        full[index] = g
        return (full,)

    return _finish("narrow", a.data[index], (a,), bwd)


def sum_all(a: Tensor) -> Tensor:
    in_shape, dt = a.shape, a.data.dtype

    def bwd(g, needs):
        return (np.full(in_shape, g, dtype=dt),)

    return _finish("sum_all", np.asarray(a.data.sum(), dtype=dt), (a,), bwd)


def mean_all(a: Tensor) -> Tensor:
    in_shape, dt, n = a.shape, a.data.dtype, a.size

    def bwd(g, needs):
        return (np.full(in_shape, g / n, dtype=dt),)

    return _finish("mean_all", np.asarray(a.data.mean(), dtype=dt), (a,), bwd)


# ---------------------------------------------------------------------------
# neural-net primitives
# ---------------------------------------------------------------------------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along `axis`, computed with max subtraction so huge inputs
    cannot overflow. Outputs are clamped to the smallest positive float of
    the dtype: exact softmax is strictly positive, and the clamp restores
    that property where exp() underflows to zero."""
    z = x.data
    m = z.max(axis=axis, keepdims=True)
    e = np.exp(z - m)
    y = e / e.sum(axis=axis, keepdims=True)
    y = np.maximum(y, np.finfo(z.dtype).tiny)

    def bwd(g, needs):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - inner),)

    return _finish("softmax", y, (x,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each last-axis row to zero mean / unit variance, then apply
    the elementwise affine `gain * xhat + bias`."""
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be positive, got {eps}")
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match last axis {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gain.data + bias.data
    gain_data = gain.data

    def bwd(g, needs):
        dxhat = g * gain_data
        dx = None
        if needs[0]:
            dx = inv * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
        dgain = (g * xhat).reshape(-1, d).sum(axis=0) if needs[1] else None
        dbias = g.reshape(-1, d).sum(axis=0) if needs[2] else None
        return dx, dgain, dbias

    return _finish("layer_norm", out, (x, gain, bias), bwd)


def gelu(x: Tensor) -> Tensor:
    """GeLU via the tanh approximation 0.5*x*(1+tanh(sqrt(2/pi)*(x+0.044715*x^3)))."""
    z = x.data
    u = _GELU_C * (z + _GELU_A * z**3)
    t = np.tanh(u)
    out = 0.5 * z * (1.0 + t)

    def bwd(g, needs):
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * z**2)
        local = 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t**2) * du
        return (g * local,)

    return _finish("gelu", out, (x,), bwd)


def tanh_act(x: Tensor) -> Tensor:
    t = np.tanh(x.data)

    def bwd(g, needs):
        return (g * (1.0 - t**2),)

    return _finish("tanh_act", t, (x,), bwd)


def cross_entropy_with_logits(logits: Tensor, labels) -> Tensor:
    """Mean of -log softmax(logits)[label], via log-sum-exp for stability.

    `labels` is a length-B sequence of class indices; gradients flow to
    `logits` only.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise ShapeError(f"cross entropy expects (batch, classes) logits, got {logits.shape}")
    b, k = logits.shape
    if labels.shape != (b,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {b}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"label out of range for {k} classes: {labels}")
    z = logits.data
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    se = e.sum(axis=1, keepdims=True)
    lse = (m + np.log(se)).reshape(-1)
    picked = z[np.arange(b), labels]
    loss = np.asarray((lse - picked).mean(), dtype=z.dtype)

    def bwd(g, needs):
        p = e / se
        p[np.arange(b), labels] -= 1.0
        return (p * (g / b),)

    return _finish("cross_entropy", loss, (logits,), bwd)


# ---------------------------------------------------------------------------
# reverse pass and verification
# ---------------------------------------------------------------------------

def backward(tape: GradTape, loss: Tensor, params: Iterable[Tensor] | None = None) -> dict:
    """Replay `tape` backward from scalar `loss`.

    Returns {tensor: gradient Tensor} for every requires_grad tensor that
    participated, plus a zero gradient for every tensor in `params` the loss
    never touched.
    """
    if loss.size != 1:
        raise TapeError(f"loss must be a scalar, got shape {loss.shape}")
    if id(loss) not in tape._produced:
        raise TapeError("loss was not produced under this tape")

    grad_by_id: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for out, inputs, needs, fn in reversed(tape._records):
        g = grad_by_id.get(id(out))
        if g is None:
            continue
        in_grads = fn(g, needs)
        for t, gi, need in zip(inputs, in_grads, needs):
            if not need or gi is None:
                continue
            acc = grad_by_id.get(id(t))
            grad_by_id[id(t)] = gi if acc is None else acc + gi
            if t.requires_grad:
                leaves[id(t)] = t

    result: dict[Tensor, Tensor] = {}
    if params is not None:
        for p in params:
            result[p] = Tensor(np.zeros_like(p.data))
    for tid, t in leaves.items():
        result[t] = Tensor(np.asarray(grad_by_id[tid], dtype=t.data.dtype))
    return result


def check_gradients(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-4,
    max_coords_per_tensor: int | None = None,
    seed: int = 0,
) -> float:
    """Compare tape gradients of `f()` against central finite differences.

    Every tensor in `params` is checked; coordinates within a tensor are
    subsampled (seeded) once the total parameter count exceeds 10^4, or when
    `max_coords_per_tensor` caps them explicitly. Returns the worst relative
    error `|a - b| / max(|a|, |b|, 1e-8)`.

    `f` must be deterministic: it is evaluated twice up front and a bitwise
    mismatch raises NumericsError.
    """
    with GradTape() as tape:
        loss = f()
    repeat = f()
    if loss.data.tobytes() != repeat.data.tobytes():
        raise NumericsError("function is not deterministic: two forward passes disagree")
    grads = backward(tape, loss, params=params)

    total = sum(p.size for p in params)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        analytic = grads[p].data.reshape(-1)
        n = flat.size
        budget = n
        if max_coords_per_tensor is not None:
            budget = min(budget, max_coords_per_tensor)
        elif total > 10_000:
            budget = min(budget, max(16, 10_000 * n // total))
        if budget < n:
            coords = rng.choice(n, size=budget, replace=False)
        else:
            coords = range(n)
        for idx in coords:
            saved = flat[idx]
            flat[idx] = saved + step
            hi = f().item()
            flat[idx] = saved - step
            lo = f().item()
            flat[idx] = saved
            numeric = (hi - lo) / (2.0 * step)
            a = float(analytic[idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > worst:
                worst = rel
    return worst
