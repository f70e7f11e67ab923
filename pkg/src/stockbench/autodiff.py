"""Dense float64 tensors with reverse-mode automatic differentiation.

Everything is stored as contiguous numpy float64 arrays. Operations executed
while a :class:`ComputationTape` is active are recorded in execution order
(a Wengert list), so one reverse sweep of the tape propagates gradients to
every ``requires_grad`` ancestor. Tensors that participate in a tape are
never mutated in place between the forward and backward pass; optimizers may
mutate ``data`` only after the tape has been consumed and dropped.

Tapes are confined to one thread. Independent tapes on separate threads are
safe; sharing one tape across threads is not.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import erf, expit

from .errors import ContractError, DegenerateMaskError, DimensionMismatchError

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

_state = threading.local()


def _tape_stack() -> list["ComputationTape"]:
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = []
        _state.tapes = stack
    return stack


def current_tape() -> Optional["ComputationTape"]:
    """The innermost active tape on this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A dense n-dimensional float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """A new leaf tensor sharing no history (data is copied)."""
        return Tensor(self.data.copy())

    # -- operator sugar ---------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes: Sequence[int]) -> "Tensor":
        return transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tmean(self, axis=axis, keepdims=keepdims)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


@dataclass
class TapeEntry:
    """One recorded operation: output, inputs, and the rule mapping the
    output gradient to per-input gradients (None for non-differentiable
    inputs such as constants)."""

    name: str
    output: Tensor
    inputs: tuple
    backward: Callable[[np.ndarray], tuple]


class ComputationTape:
    """Execution-ordered record of operations for one reverse pass.

    Entries are appended as operations run, so inputs always precede the
    operations that consume them; the reverse sweep is therefore a valid
    topological order. Use as a context manager::

        with ComputationTape() as tape:
            loss = ...
        tape.backward(loss)
    """

    def __init__(self):
        self._entries: list[TapeEntry] = []

    def __len__(self) -> int:
        return len(self._entries)

    def __enter__(self) -> "ComputationTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise RuntimeError("tape stack corrupted: exiting a tape that is not innermost")
        stack.pop()

    def record(self, entry: TapeEntry) -> None:
        self._entries.append(entry)

    def backward(self, loss: Tensor) -> None:
        """Propagate d(loss)/d(tensor) to every requires_grad ancestor.

        ``loss`` must be a single-element tensor reachable from this tape.
        Gradients accumulate into ``.grad`` across repeated calls; use
        ``zero_grad`` to reset between steps.
        """
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        # Pending output-gradients keyed by tensor identity. Each tensor is
        # the output of at most one entry, so its total gradient is final by
        # the time the reverse sweep reaches that entry.
        pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        holders: dict[int, Tensor] = {id(loss): loss}
        for entry in reversed(self._entries):
            grad_out = pending.pop(id(entry.output), None)
            if grad_out is None:
                continue
            holders.pop(id(entry.output), None)
            if entry.output.requires_grad:
                if entry.output.grad is None:
                    entry.output.grad = grad_out.copy()
                else:
                    entry.output.grad = entry.output.grad + grad_out
            grads_in = entry.backward(grad_out)
            for tensor, grad in zip(entry.inputs, grads_in):
                if grad is None or not isinstance(tensor, Tensor):
                    continue
                if not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in pending:
                    pending[key] = pending[key] + grad
                else:
                    pending[key] = grad
                    holders[key] = tensor
        # Anything left is a leaf (never produced by a recorded op).
        for key, grad in pending.items():
            leaf = holders[key]
            if leaf.grad is None:
                leaf.grad = grad.copy()
            else:
                leaf.grad = leaf.grad + grad


def backward(loss: Tensor, tape: Optional[ComputationTape] = None) -> None:
    """Run the reverse pass for ``loss`` on ``tape`` (default: active tape)."""
    tape = tape if tape is not None else current_tape()
    if tape is None:
        raise ContractError("backward called with no active ComputationTape")
    tape.backward(loss)


def _record(name: str, out_data: np.ndarray, inputs: tuple, backward_fn) -> Tensor:
    tape = current_tape()
    tracked = tape is not None and any(
        isinstance(t, Tensor) and t.requires_grad for t in inputs
    )
    out = Tensor(out_data, requires_grad=tracked)
    if tracked:
        tape.record(TapeEntry(name, out, inputs, backward_fn))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, inverting a numpy broadcast."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- arithmetic -------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record("add", out, (a, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def back(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _record("sub", out, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a_data, b_data = a.data, b.data
    out = a_data * b_data

    def back(g):
        return _unbroadcast(g * b_data, a_data.shape), _unbroadcast(g * a_data, b_data.shape)

    return _record("mul", out, (a, b), back)


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    out = a.data * factor

    def back(g):
        return (g * factor,)

    return _record("scale", out, (a,), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with broadcasting over leading dimensions."""
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionMismatchError(
            f"matmul needs >=2-d operands, got shapes {a.shape} x {b.shape}"
        )
    if a.shape[-1] != b.shape[-2]:
        raise DimensionMismatchError(
            f"matmul inner dimensions disagree: {a.shape} x {b.shape}"
        )
    a_data, b_data = a.data, b.data
    try:
        out = np.matmul(a_data, b_data)
    except ValueError as exc:  # non-broadcastable batch dims
        raise DimensionMismatchError(
            f"matmul batch dimensions incompatible: {a.shape} x {b.shape}"
        ) from exc

    def back(g):
        ga = np.matmul(g, np.swapaxes(b_data, -1, -2))
        gb = np.matmul(np.swapaxes(a_data, -1, -2), g)
        return _unbroadcast(ga, a_data.shape), _unbroadcast(gb, b_data.shape)

    return _record("matmul", out, (a, b), back)


# -- activations ------------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    out = np.where(mask, a.data, 0.0)

    def back(g):
        return (g * mask,)

    return _record("relu", out, (a,), back)


def gelu(a: Tensor) -> Tensor:
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = x * cdf

    def back(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        return (g * (cdf + x * pdf),)

    return _record("gelu", out, (a,), back)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def back(g):
        return (g * (1.0 - out * out),)

    return _record("tanh", out, (a,), back)


def sigmoid(a: Tensor) -> Tensor:
    out = expit(a.data)

    def back(g):
        return (g * out * (1.0 - out),)

    return _record("sigmoid", out, (a,), back)


_UNARY_KINDS = {"relu": relu, "gelu": gelu, "tanh": tanh, "sigmoid": sigmoid}
_BINARY_KINDS = {"add": add, "mul": mul}


def elementwise(t: Tensor, kind: str, other=None) -> Tensor:
    """Dispatch an elementwise op by name.

    ``relu/gelu/tanh/sigmoid`` are unary, ``add/mul`` need a second tensor,
    ``scale`` needs a scalar factor.
    """
    if kind in _UNARY_KINDS:
        return _UNARY_KINDS[kind](t)
    if kind in _BINARY_KINDS:
        if other is None:
            raise ContractError(f"elementwise '{kind}' needs a second operand")
        return _BINARY_KINDS[kind](t, _as_tensor(other))
    if kind == "scale":
        if other is None:
            raise ContractError("elementwise 'scale' needs a scalar factor")
        return scale(t, float(other))
    raise ContractError(f"unknown elementwise kind: {kind!r}")


# -- normalization / softmax --------------------------------------------------


def softmax_lastdim(t: Tensor) -> Tensor:
    """Softmax over the last dimension, stable under large magnitudes.

    Entries holding -inf (masked positions) map to exactly 0. A slice that
    is entirely -inf has no valid distribution and raises.
    """
    x = t.data
    if x.shape[-1] < 1:
        raise DimensionMismatchError(f"softmax needs a non-empty last dimension, got {t.shape}")
    m = np.max(x, axis=-1, keepdims=True)
    if np.any(np.isneginf(m)):
        raise DegenerateMaskError("softmax slice is entirely -inf (fully masked row)")
    shifted = x - m
    e = np.exp(shifted)
    denom = np.sum(e, axis=-1, keepdims=True)
    out = e / denom

    def back(g):
        dot = np.sum(g * out, axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _record("softmax_lastdim", out, (t,), back)


def layer_norm(t: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each last-dim slice to mean 0, variance 1, then apply gain/bias."""
    if eps <= 0.0:
        raise ContractError(f"layer_norm eps must be > 0, got {eps}")
    d = t.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionMismatchError(
            f"layer_norm gain/bias must have shape ({d},), got {gain.shape} and {bias.shape}"
        )
    x = t.data
    mu = np.mean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gain.data + bias.data

    def back(g):
        dxhat = g * gain.data
        mean_dxhat = np.mean(dxhat, axis=-1, keepdims=True)
        mean_dxhat_xhat = np.mean(dxhat * xhat, axis=-1, keepdims=True)
        dx = (dxhat - mean_dxhat - xhat * mean_dxhat_xhat) * inv_std
        axes = tuple(range(g.ndim - 1))
        dgain = np.sum(g * xhat, axis=axes) if axes else g * xhat
        dbias = np.sum(g, axis=axes) if axes else g.copy()
        return dx, dgain, dbias

    return _record("layer_norm", out, (t, gain, bias), back)


# -- reductions and structure -------------------------------------------------


def tsum(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(t.data, axis=axis, keepdims=keepdims)
    shape = t.data.shape

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        g_arr = g
        if not keepdims:
            g_arr = np.expand_dims(g_arr, axis=axis)
        return (np.broadcast_to(g_arr, shape).copy(),)

    return _record("sum", out, (t,), back)


def tmean(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.mean(t.data, axis=axis, keepdims=keepdims)
    shape = t.data.shape
    count = t.data.size if axis is None else shape[axis]

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, shape) / count,)
        g_arr = g
        if not keepdims:
            g_arr = np.expand_dims(g_arr, axis=axis)
        return (np.broadcast_to(g_arr, shape) / count,)

    return _record("mean", out, (t,), back)


def reshape(t: Tensor, shape: tuple) -> Tensor:
    out = t.data.reshape(shape)
    orig = t.data.shape

    def back(g):
        return (g.reshape(orig),)

    return _record("reshape", out, (t,), back)


def transpose(t: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    out = np.transpose(t.data, axes)
    inverse = tuple(np.argsort(axes))

    def back(g):
        return (np.transpose(g, inverse),)

    return _record("transpose", out, (t,), back)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        pieces = []
        for i in range(len(tensors)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            pieces.append(g[tuple(sl)])
        return tuple(pieces)

    return _record("concat", out, tensors, back)


def getitem(t: Tensor, index) -> Tensor:
    """Basic (slice/int) indexing; each output element maps to one input element."""
    out = t.data[index]
    shape = t.data.shape

    def back(g):
        full = np.zeros(shape, dtype=np.float64)
        full[index] = g
        return (full,)

    return _record("getitem", out, (t,), back)


# -- gradient checking --------------------------------------------------------


@dataclass
class GradCheckReport:
    """Outcome of comparing analytic gradients against central differences."""

    passed: bool
    max_rel_err: float
    max_abs_err: float
    tol: float
    failure: Optional[str] = None

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        msg = f"gradcheck {status}: max_rel={self.max_rel_err:.3e} max_abs={self.max_abs_err:.3e}"
        if self.failure:
            msg += f" ({self.failure})"
        return msg


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    tol: float = 1e-4,
    step: float = 1e-5,
    abs_tol: float = 1e-7,
    abs_floor: float = 1e-6,
) -> GradCheckReport:
    """Compare the analytic gradient of scalar-valued ``f`` at ``x`` against
    central finite differences.

    Elements where both gradients are below ``abs_floor`` in magnitude are
    judged by absolute error (``abs_tol``) instead of relative error; this
    keeps checks meaningful where the true gradient vanishes.
    """
    probe = Tensor(x.data.copy(), requires_grad=True)
    with ComputationTape() as tape:
        y = f(probe)
        if not isinstance(y, Tensor) or y.data.size != 1:
            raise ContractError("finite_diff_check needs a scalar-valued function")
        if not np.isfinite(y.data).all():
            return GradCheckReport(False, np.inf, np.inf, tol, "non-finite function value")
    tape.backward(y)
    analytic = probe.grad if probe.grad is not None else np.zeros_like(probe.data)

    numeric = np.zeros_like(x.data)
    flat_base = x.data.reshape(-1)
    flat_num = numeric.reshape(-1)
    for i in range(flat_base.size):
        saved = flat_base[i]
        work = x.data.copy()
        work_flat = work.reshape(-1)
        work_flat[i] = saved + step
        up = f(Tensor(work)).data
        work_flat[i] = saved - step
        down = f(Tensor(work)).data
        if not (np.isfinite(up).all() and np.isfinite(down).all()):
            return GradCheckReport(False, np.inf, np.inf, tol, "non-finite perturbed evaluation")
        flat_num[i] = float((up.reshape(-1)[0] - down.reshape(-1)[0]) / (2.0 * step))

    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    small = denom < abs_floor
    max_abs = float(diff[small].max()) if small.any() else 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(small, 0.0, diff / np.where(small, 1.0, denom))
    max_rel = float(rel.max()) if rel.size else 0.0
    passed = max_rel <= tol and max_abs <= abs_tol
    return GradCheckReport(passed, max_rel, max_abs, tol)
