"""Differentiable N-d array core.

A ``Tensor`` wraps a numpy array and, when gradients are requested,
records the producing operation so ``backward`` can replay the chain rule
in reverse topological order.  Every operator the restoration networks
need lives here: convolutions (via the packing-kernel backend + BLAS),
batch norm, the activation set, bilinear upsampling, dense layers and the
structural/reduction ops used by the losses.

Data convention: float32 for model data, float64 for gradient-check runs.
Mixing dtypes in one op is an error.  All computation is deterministic
for fixed inputs on a fixed thread configuration.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Optional, Sequence

import numpy as np

from . import backend


class ShapeError(ValueError):
    """Operand dimensions are incompatible; message names the axes."""


class GraphError(RuntimeError):
    """Autodiff graph misuse (double backward, backward without a graph)."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable operation recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class _OpNode:
    """One recorded operation: parents plus the gradient function."""

    __slots__ = ("parents", "grad_fn", "name")

    def __init__(self, parents, grad_fn, name):
        self.parents = parents
        self.grad_fn = grad_fn
        self.name = name


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_node")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._node: Optional[_OpNode] = None

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        grad = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{grad})"

    # -- gradient bookkeeping ----------------------------------------------

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        """Same data, cut from the recorded graph."""
        return Tensor(self.data)

    def backward(self):
        """Populate ``grad`` of every reachable requires_grad tensor.

        The receiver must be a scalar produced by a recorded forward pass.
        Each recorded operation is visited exactly once, in reverse
        topological order, and the graph is freed afterwards; a second
        call without a new forward pass raises ``GraphError``.
        """
        if self.size != 1:
            raise GraphError(f"backward needs a scalar loss, got shape {self.shape}")
        if self._node is None:
            raise GraphError(
                "no recorded graph on this tensor (backward already ran, or the "
                "tensor was not produced by a recorded forward pass)"
            )

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            if t._node is not None:
                for p in t._node.parents:
                    if p is not None and (p._node is not None or p.requires_grad):
                        stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for t in reversed(order):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            if t.requires_grad:
                t.grad = g if t.grad is None else t.grad + g
            node = t._node
            if node is None:
                continue
            parent_grads = node.grad_fn(g)
            for p, pg in zip(node.parents, parent_grads):
                if p is None or pg is None:
                    continue
                if pg.shape != p.data.shape:
                    raise GraphError(
                        f"{node.name}: gradient shape {pg.shape} does not match "
                        f"operand shape {p.data.shape}"
                    )
                acc = grads.get(id(p))
                grads[id(p)] = pg if acc is None else acc + pg
            t._node = None  # free; double backward then fails loudly


def _record(data: np.ndarray, parents: Sequence[Optional[Tensor]],
            grad_fn: Callable, name: str) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p is not None and p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = _OpNode(tuple(parents), grad_fn, name)
    return out


def _tracing(*tensors: Optional[Tensor]) -> bool:
    return _grad_enabled and any(t is not None and t.requires_grad for t in tensors)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _check_dtypes(name: str, *tensors: Optional[Tensor]):
    dtypes = {t.dtype for t in tensors if t is not None}
    if len(dtypes) > 1:
        raise ShapeError(f"{name}: mixed dtypes {sorted(d.name for d in dtypes)}")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic ------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_dtypes("add", a, b)
    data = a.data + b.data

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(data, (a, b), grad_fn, "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_dtypes("sub", a, b)
    data = a.data - b.data

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(data, (a, b), grad_fn, "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_dtypes("mul", a, b)
    data = a.data * b.data
    ad, bd = a.data, b.data

    def grad_fn(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return _record(data, (a, b), grad_fn, "mul")


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_dtypes("div", a, b)
    data = a.data / b.data
    ad, bd = a.data, b.data

    def grad_fn(g):
        return (_unbroadcast(g / bd, a.shape),
                _unbroadcast(-g * ad / (bd * bd), b.shape))

    return _record(data, (a, b), grad_fn, "div")


def neg(a: Tensor) -> Tensor:
    def grad_fn(g):
        return (-g,)

    return _record(-a.data, (a,), grad_fn, "neg")


def scale(a: Tensor, s: float) -> Tensor:
    """Multiply by a python scalar (kept exact for the dtype)."""
    s = a.dtype.type(s)

    def grad_fn(g):
        return (g * s,)

    return _record(a.data * s, (a,), grad_fn, "scale")


Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: (
    scale(self, other) if isinstance(other, (int, float)) else mul(self, other))
Tensor.__rmul__ = Tensor.__mul__
Tensor.__truediv__ = lambda self, other: (
    scale(self, 1.0 / other) if isinstance(other, (int, float)) else div(self, other))
Tensor.__neg__ = lambda self: neg(self)


# -- reductions ------------------------------------------------------------


def sum_all(a: Tensor) -> Tensor:
    shape, dtype = a.shape, a.dtype

    def grad_fn(g):
        return (np.full(shape, g, dtype=dtype),)

    return _record(a.data.sum(dtype=np.float64).astype(dtype), (a,), grad_fn, "sum")


def mean_all(a: Tensor) -> Tensor:
    shape, dtype, n = a.shape, a.dtype, a.size

    def grad_fn(g):
        return (np.full(shape, g / n, dtype=dtype),)

    return _record((a.data.sum(dtype=np.float64) / n).astype(dtype), (a,), grad_fn, "mean")


# -- activations and pointwise nonlinearities ------------------------------


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def grad_fn(g):
        return (g * mask,)

    # maximum (not where) so a NaN input stays NaN instead of becoming 0
    return _record(np.maximum(a.data, a.dtype.type(0)), (a,), grad_fn, "relu")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    slope = a.dtype.type(slope)
    mask = a.data > 0

    def grad_fn(g):
        return (np.where(mask, g, g * slope),)

    return _record(np.where(mask, a.data, a.data * slope), (a,), grad_fn, "leaky_relu")


def prelu(a: Tensor, slope: Tensor) -> Tensor:
    """Per-channel learnable slope on the negative side; input is (N,C,H,W)."""
    if a.ndim != 4 or slope.ndim != 1 or slope.shape[0] != a.shape[1]:
        raise ShapeError(
            f"prelu: need (N,C,H,W) input and (C,) slope, got {a.shape} and {slope.shape}"
        )
    _check_dtypes("prelu", a, slope)
    mask = a.data > 0
    s = slope.data.reshape(1, -1, 1, 1)
    ad = a.data

    def grad_fn(g):
        ga = np.where(mask, g, g * s)
        gs = np.where(mask, 0, g * ad).sum(axis=(0, 2, 3))
        return ga, gs

    return _record(np.where(mask, ad, ad * s), (a, slope), grad_fn, "prelu")


def sigmoid(a: Tensor) -> Tensor:
    # the |x|-based form avoids overflow on both tails
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    # keep the open range: deep saturation would otherwise round to 0 or 1
    fi = np.finfo(x.dtype)
    np.clip(out, fi.tiny, np.nextafter(x.dtype.type(1), x.dtype.type(0)), out=out)

    def grad_fn(g):
        return (g * out * (1.0 - out),)

    return _record(out, (a,), grad_fn, "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def grad_fn(g):
        return (g * (1.0 - out * out),)

    return _record(out, (a,), grad_fn, "tanh")


def log_clamped(a: Tensor, floor: float = 1e-8) -> Tensor:
    """log(max(x, floor)); the floor keeps adversarial losses finite."""
    clamped = np.maximum(a.data, floor)
    above = a.data > floor

    def grad_fn(g):
        return (np.where(above, g / clamped, 0),)

    return _record(np.log(clamped), (a,), grad_fn, "log")


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data > lo) & (a.data < hi)

    def grad_fn(g):
        return (g * inside,)

    return _record(np.clip(a.data, lo, hi), (a,), grad_fn, "clamp")


def square(a: Tensor) -> Tensor:
    ad = a.data

    def grad_fn(g):
        return (2.0 * g * ad,)

    return _record(ad * ad, (a,), grad_fn, "square")


# -- structural ops --------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape

    def grad_fn(g):
        return (g.reshape(old),)

    return _record(a.data.reshape(shape), (a,), grad_fn, "reshape")


def flatten(a: Tensor) -> Tensor:
    """Collapse all but the leading (batch) axis."""
    return reshape(a, (a.shape[0], -1))


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 4 or b.ndim != 4:
        raise ShapeError(f"concat_channels: need 4-d inputs, got {a.shape} and {b.shape}")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(
            f"concat_channels: batch/spatial axes differ: {a.shape} vs {b.shape}"
        )
    _check_dtypes("concat_channels", a, b)
    ca = a.shape[1]

    def grad_fn(g):
        return g[:, :ca], g[:, ca:]

    return _record(np.concatenate([a.data, b.data], axis=1), (a, b), grad_fn, "concat")


# -- dense and convolution layers ------------------------------------------


def dense(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """Affine map (N,D) @ (D,E) + (E,)."""
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError(f"dense: need 2-d input and weight, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(
            f"dense: input features {x.shape[1]} (axis 1) != weight rows {w.shape[0]} (axis 0)"
        )
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeError(f"dense: bias shape {b.shape} != ({w.shape[1]},)")
    _check_dtypes("dense", x, w, b)
    out = x.data @ w.data
    if b is not None:
        out = out + b.data
    xd, wd = x.data, w.data

    def grad_fn(g):
        gx = g @ wd.T
        gw = xd.T @ g
        gb = None if b is None else g.sum(axis=0)
        return gx, gw, gb

    return _record(out, (x, w, b), grad_fn, "dense")


def _conv_shape_checks(name, x, w, b, stride, padding):
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"{name}: need 4-d input and weight, got {x.shape} and {w.shape}")
    kh, kw = w.shape[2], w.shape[3]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"{name}: kernel extents must be odd, got {kh}x{kw}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"{name}: stride {stride} / padding {padding} out of range")
    _check_dtypes(name, x, w, b)


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of (N,C,H,W) with (F,C,kH,kW) plus bias (F,)."""
    _conv_shape_checks("conv2d", x, w, b, stride, padding)
    n, c, h, wd_ = x.shape
    f, cw, kh, kw = w.shape
    if c != cw:
        raise ShapeError(f"conv2d: input channels {c} (axis 1) != weight channels {cw} (axis 1)")
    if b is not None and b.shape != (f,):
        raise ShapeError(f"conv2d: bias shape {b.shape} != ({f},)")
    ho = backend.conv_out_size(h, kh, stride, padding)
    wo = backend.conv_out_size(wd_, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} does not fit input {h}x{wd_} "
                         f"with stride {stride}, padding {padding}")

    cols = backend.im2col(x.data, kh, kw, stride, padding)    # (N, C*kh*kw, L)
    w2 = w.data.reshape(f, -1)
    out = np.matmul(w2, cols).reshape(n, f, ho, wo)
    if b is not None:
        out += b.data.reshape(1, f, 1, 1)
    if not _tracing(x, w, b):
        return Tensor(out)

    def grad_fn(g):
        g2 = g.reshape(n, f, -1)
        gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
        gb = None if b is None else g.sum(axis=(0, 2, 3))
        gcols = np.matmul(w2.T, g2)
        gx = backend.col2im(gcols, n, c, h, wd_, kh, kw, stride, padding)
        return gx, gw, gb

    return _record(out, (x, w, b), grad_fn, "conv2d")


def conv2d_transpose(x: Tensor, w: Tensor, b: Optional[Tensor] = None,
                     stride: int = 1, padding: int = 0,
                     output_padding: int = 0) -> Tensor:
    """Adjoint of conv2d with the shared weight layout (F,C,kH,kW).

    Input has F channels and the output C channels, so
    ``<conv2d(x, w), y> == <x, conv2d_transpose(y, w)>`` holds exactly on
    matching configurations.  ``output_padding`` (0 or 1) picks the output
    extent among the sizes a strided conv would have collapsed together.
    """
    _conv_shape_checks("conv2d_transpose", x, w, b, stride, padding)
    if stride not in (1, 2):
        raise ShapeError(f"conv2d_transpose: stride must be 1 or 2, got {stride}")
    if output_padding not in (0, 1) or (stride == 1 and output_padding != 0):
        raise ShapeError(
            f"conv2d_transpose: output_padding {output_padding} invalid for stride {stride}")
    n, f_in, h, wd_ = x.shape
    f, c, kh, kw = w.shape
    if f_in != f:
        raise ShapeError(
            f"conv2d_transpose: input channels {f_in} (axis 1) != weight rows {f} (axis 0)")
    if b is not None and b.shape != (c,):
        raise ShapeError(f"conv2d_transpose: bias shape {b.shape} != ({c},)")
    ho = (h - 1) * stride - 2 * padding + kh + output_padding
    wo = (wd_ - 1) * stride - 2 * padding + kw + output_padding
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d_transpose: output would be {ho}x{wo}")

    w2 = w.data.reshape(f, -1)
    x2 = x.data.reshape(n, f, -1)
    zcols = np.matmul(w2.T, x2)                               # (N, C*kh*kw, h*w)
    out = backend.col2im(zcols, n, c, ho, wo, kh, kw, stride, padding)
    if b is not None:
        out += b.data.reshape(1, c, 1, 1)
    if not _tracing(x, w, b):
        return Tensor(out)

    def grad_fn(g):
        gcols = backend.im2col(g, kh, kw, stride, padding)    # (N, C*kh*kw, h*w)
        gx = np.matmul(w2, gcols).reshape(x.shape)
        gw = np.matmul(x2, gcols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
        gb = None if b is None else g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    return _record(out, (x, w, b), grad_fn, "conv2d_transpose")


# -- batch normalization ---------------------------------------------------


class BatchNormState:
    """Running moments for one batch-norm layer (eval-mode statistics)."""

    def __init__(self, channels: int, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
               train: bool, eps: float = 1e-5, momentum: float = 0.1) -> Tensor:
    """Per-channel normalization of (N,C,H,W) with affine rescale.

    Train mode normalizes with batch moments and folds them into the
    running state by exponential moving average; eval mode uses the
    running state.  Train mode needs at least two values per channel.
    """
    if x.ndim != 4:
        raise ShapeError(f"batch_norm: need (N,C,H,W), got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"batch_norm: gamma/beta shapes {gamma.shape}/{beta.shape} != ({c},)")
    _check_dtypes("batch_norm", x, gamma, beta)
    n = x.shape[0] * x.shape[2] * x.shape[3]
    dtype = x.dtype

    if train:
        if n < 2:
            raise ValueError(
                "batch_norm: variance is degenerate with a single value per "
                f"channel (N*H*W = {n}); need at least 2 in train mode")
        mean = x.data.mean(axis=(0, 2, 3), dtype=np.float64)
        var = x.data.var(axis=(0, 2, 3), dtype=np.float64)
        state.mean[:] = (1 - momentum) * state.mean + momentum * mean.astype(dtype)
        state.var[:] = (1 - momentum) * state.var + momentum * (var * n / (n - 1)).astype(dtype)
        mean = mean.astype(dtype)
        var = var.astype(dtype)
    else:
        mean = state.mean.astype(dtype)
        var = state.var.astype(dtype)

    inv_std = 1.0 / np.sqrt(var + dtype.type(eps))
    xhat = (x.data - mean.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    out = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)
    if not _tracing(x, gamma, beta):
        return Tensor(out)

    def grad_fn(g):
        ggamma = (g * xhat).sum(axis=(0, 2, 3))
        gbeta = g.sum(axis=(0, 2, 3))
        gxhat = g * gamma.data.reshape(1, c, 1, 1)
        if train:
            # moments depend on x: subtract the per-channel projections
            m1 = gxhat.sum(axis=(0, 2, 3)).reshape(1, c, 1, 1)
            m2 = (gxhat * xhat).sum(axis=(0, 2, 3)).reshape(1, c, 1, 1)
            gx = (gxhat - (m1 + xhat * m2) / n) * inv_std.reshape(1, c, 1, 1)
        else:
            gx = gxhat * inv_std.reshape(1, c, 1, 1)
        return gx, ggamma, gbeta

    return _record(out, (x, gamma, beta), grad_fn, "batch_norm")


# -- bilinear upsampling ---------------------------------------------------


_interp_cache: dict[tuple, np.ndarray] = {}


def _interp_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    """Corner-aligned interpolation matrix (n_out, n_in), rows sum to 1."""
    key = (n_in, n_out, np.dtype(dtype).name)
    cached = _interp_cache.get(key)
    if cached is not None:
        return cached
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    if n_out == 1:
        mat[0, 0] = 1.0
    else:
        for o in range(n_out):
            # product first so the last output index lands exactly on n_in-1
            src = (o * (n_in - 1)) / (n_out - 1)
            i0 = min(int(np.floor(src)), n_in - 2)
            frac = src - i0
            mat[o, i0] = 1.0 - frac
            mat[o, i0 + 1] = frac
    mat = mat.astype(dtype)
    _interp_cache[key] = mat
    return mat


def bilinear_upsample(x: Tensor, factor: int = 2) -> Tensor:
    """Corner-aligned bilinear upsampling of (N,C,H,W) by an integer factor."""
    if x.ndim != 4:
        raise ShapeError(f"bilinear_upsample: need (N,C,H,W), got {x.shape}")
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"bilinear_upsample: spatial extents must be >= 2, got {h}x{w}")
    ah = _interp_matrix(h, factor * h, x.dtype)
    aw = _interp_matrix(w, factor * w, x.dtype)
    # separable: rows then columns, each a small dense matmul
    out = np.einsum("oh,nchw->ncow", ah, x.data, optimize=True)
    out = np.einsum("pw,ncow->ncop", aw, out, optimize=True)
    if not _tracing(x):
        return Tensor(out)

    def grad_fn(g):
        gx = np.einsum("pw,ncop->ncow", aw, g, optimize=True)
        gx = np.einsum("oh,ncow->nchw", ah, gx, optimize=True)
        return (gx,)

    return _record(out, (x,), grad_fn, "bilinear_upsample")
