"""Dense N-dimensional tensors with reverse-mode automatic differentiation.

Everything downstream (blocks, heads, losses) is built from the operations
in this module.  A forward pass records a dynamic tape of closures; calling
``backward()`` on a scalar walks the tape in reverse topological order and
populates ``.grad`` on every tensor that requires it.  Graphs are single
use: a second ``backward()`` on the same scalar raises.

Default dtype is float64 so that finite-difference gradient checks have
headroom; float32 can be requested per tensor for cheaper training runs.
"""

from __future__ import annotations

import struct
from typing import Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float64

_DTYPE_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}

_MAGIC = b"TFNT"
_FORMAT_VERSION = 1


class Tensor:
    """A numpy-backed array plus gradient bookkeeping.

    data is immutable by convention after creation (only ``grad`` is
    written during backward), which keeps tensors safe to share between
    threads outside of a backward pass.
    """

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev", "_backward_done")

    def __init__(self, data, prev: Iterable["Tensor"] = (), requires_grad: bool = False,
                 dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._prev = tuple(prev)
        self._backward_done = False

    # ------------------------------------------------------------------
    # introspection
    # ------------------------------------------------------------------
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
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        """Same data, cut off from the tape."""
        return Tensor(self.data)

    # ------------------------------------------------------------------
    # autodiff plumbing
    # ------------------------------------------------------------------
    def _accumulate(self, g: np.ndarray) -> None:
        if not (self.requires_grad or self._prev):
            return
        if g.shape != self.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar loss.

        Populates ``.grad`` for every tensor on the tape with
        ``requires_grad=True``.  The tape is consumed: a second call on the
        same scalar is an error (re-run the forward pass instead).
        """
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar, got shape {self.shape}")
        if self._backward_done:
            raise RuntimeError("backward already ran on this graph; rebuild the forward pass")
        self._backward_done = True

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if node is not self and node._prev:
                # Interior activations are not kept; free tape memory early.
                node.grad = None
                node._backward = None


def _needs_grad(*tensors: Tensor) -> bool:
    return any(t.requires_grad or t._prev for t in tensors)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _make(data: np.ndarray, parents: tuple, backward) -> Tensor:
    out = Tensor(data, prev=parents if any(_needs_grad(p) for p in parents) else ())
    if out._prev:
        out._backward = backward
    return out


# ----------------------------------------------------------------------
# elementwise arithmetic
# ----------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def bw(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def bw(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(-g, b.data.shape))

    return _make(data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def bw(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def bw(g):
        a._accumulate(_unbroadcast(g / b.data, a.data.shape))
        b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(data, (a, b), bw)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        a._accumulate(-g)

    return _make(-a.data, (a,), bw)


def powc(a, exponent: float) -> Tensor:
    """Elementwise power with a constant exponent."""
    a = as_tensor(a)
    data = a.data ** exponent

    def bw(g):
        a._accumulate(g * exponent * a.data ** (exponent - 1))

    return _make(data, (a,), bw)


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def bw(g):
        a._accumulate(g * data)

    return _make(data, (a,), bw)


def log(a) -> Tensor:
    a = as_tensor(a)
    data = np.log(a.data)

    def bw(g):
        a._accumulate(g / a.data)

    return _make(data, (a,), bw)


def relu(a) -> Tensor:
    a = as_tensor(a)
    data = np.maximum(a.data, 0)

    def bw(g):
        a._accumulate(g * (a.data > 0))

    return _make(data, (a,), bw)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    z = a.data
    # Stable in both tails.
    with np.errstate(over="ignore"):
        data = np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))

    def bw(g):
        a._accumulate(g * data * (1.0 - data))

    return _make(data, (a,), bw)


# attach operator sugar
Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = lambda self, other: div(self, other)
Tensor.__rtruediv__ = lambda self, other: div(other, self)
Tensor.__neg__ = lambda self: neg(self)
Tensor.__pow__ = lambda self, e: powc(self, e)


# ----------------------------------------------------------------------
# reductions and structure
# ----------------------------------------------------------------------

def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            grad = np.broadcast_to(g.reshape((1,) * a.ndim), a.data.shape)
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            if not keepdims:
                kshape = list(a.data.shape)
                for ax in axes:
                    kshape[ax % a.ndim] = 1
                g = g.reshape(kshape)
            grad = np.broadcast_to(g, a.data.shape)
        a._accumulate(np.ascontiguousarray(grad))

    return _make(data, (a,), bw)


def tmax(a, axis=None, keepdims: bool = False) -> Tensor:
    """Max reduction; ties split the gradient evenly."""
    a = as_tensor(a)
    data = a.data.max(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            full = np.broadcast_to(data.reshape((1,) * a.ndim), a.data.shape)
            gg = np.broadcast_to(g.reshape((1,) * a.ndim), a.data.shape)
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            kshape = list(a.data.shape)
            for ax in axes:
                kshape[ax % a.ndim] = 1
            full = np.broadcast_to(data.reshape(kshape), a.data.shape)
            gg = np.broadcast_to(g.reshape(kshape), a.data.shape)
        mask = (a.data == full)
        if axis is None:
            counts = mask.sum()
        else:
            counts = np.broadcast_to(mask.sum(axis=axis, keepdims=True).reshape(kshape), a.data.shape)
        a._accumulate(mask * gg / counts)

    return _make(data, (a,), bw)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def bw(g):
        a._accumulate(g.reshape(a.data.shape))

    return _make(data, (a,), bw)


def getitem(a, idx) -> Tensor:
    """Basic slicing with scatter-back gradient."""
    a = as_tensor(a)
    data = a.data[idx]

    def bw(g):
        grad = np.zeros_like(a.data)
        grad[idx] += g
        a._accumulate(grad)

    return _make(data, (a,), bw)


Tensor.__getitem__ = lambda self, idx: getitem(self, idx)
Tensor.sum = lambda self, axis=None, keepdims=False: tsum(self, axis, keepdims)
Tensor.max = lambda self, axis=None, keepdims=False: tmax(self, axis, keepdims)
Tensor.reshape = lambda self, shape: reshape(self, shape)


def concat_channels(a, b) -> Tensor:
    """Concatenate along the channel axis (axis 1); all other dims must match."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != b.ndim:
        raise ValueError(f"rank mismatch in concat: {a.ndim} vs {b.ndim}")
    for ax in range(a.ndim):
        if ax != 1 and a.shape[ax] != b.shape[ax]:
            raise ValueError(f"concat operands differ on axis {ax}: {a.shape} vs {b.shape}")
    return concat([a, b], axis=1)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def bw(g):
        start = 0
        for t, sz in zip(tensors, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, start + sz)
            t._accumulate(np.ascontiguousarray(g[tuple(sl)]))
            start += sz

    return _make(data, tuple(tensors), bw)


def squeeze_time(a) -> Tensor:
    """[N,C,1,H,W] -> [N,C,H,W]; rejected when the time axis is not 1."""
    a = as_tensor(a)
    if a.ndim != 5:
        raise ValueError(f"squeeze_time expects a 5-axis tensor, got rank {a.ndim}")
    if a.shape[2] != 1:
        raise ValueError(f"squeeze_time requires T == 1, got T == {a.shape[2]}")
    return reshape(a, (a.shape[0], a.shape[1], a.shape[3], a.shape[4]))


def expand_time(a) -> Tensor:
    """[N,C,H,W] -> [N,C,1,H,W]."""
    a = as_tensor(a)
    if a.ndim != 4:
        raise ValueError(f"expand_time expects a 4-axis tensor, got rank {a.ndim}")
    return reshape(a, (a.shape[0], a.shape[1], 1, a.shape[2], a.shape[3]))


# ----------------------------------------------------------------------
# convolution
# ----------------------------------------------------------------------

_AXIS_NAMES = ("t", "h", "w")


def conv_output_size(size: int, pad: int, kernel: int, stride: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def _check_conv(x: Tensor, w: Tensor, b: Tensor, stride, padding):
    if x.ndim != 5:
        raise ValueError(f"conv3d expects [N,C,T,H,W] input, got rank {x.ndim}")
    if w.ndim != 5:
        raise ValueError(f"conv3d expects [O,C,kt,kh,kw] weights, got rank {w.ndim}")
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"channel axis mismatch: input has {x.shape[1]} channels, weights expect {w.shape[1]}")
    if b.data.shape != (w.shape[0],):
        raise ValueError(f"bias shape {b.data.shape} does not match {w.shape[0]} output channels")
    out_dims = []
    for i, name in enumerate(_AXIS_NAMES):
        o = conv_output_size(x.shape[2 + i], padding[i], w.shape[2 + i], stride[i])
        if o < 1:
            raise ValueError(f"non-positive output size on axis {name}: input {x.shape[2 + i]}, "
                             f"kernel {w.shape[2 + i]}, stride {stride[i]}, pad {padding[i]}")
        out_dims.append(o)
    return tuple(out_dims)


def _conv3d_fast(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride, padding, out_dims):
    """Offset-sum convolution: one BLAS contraction per kernel tap."""
    st, sh, sw = stride
    pt, ph, pw = padding
    to, ho, wo = out_dims
    n = x.shape[0]
    o, c, kt, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))
    acc = np.zeros((o, n, to, ho, wo), dtype=x.dtype)
    for dt in range(kt):
        for dh in range(kh):
            for dw in range(kw):
                xs = xp[:, :, dt:dt + st * to:st, dh:dh + sh * ho:sh, dw:dw + sw * wo:sw]
                acc += np.tensordot(w[:, :, dt, dh, dw], xs, axes=([1], [1]))
    out = acc.transpose(1, 0, 2, 3, 4) + b.reshape(1, o, 1, 1, 1)
    return np.ascontiguousarray(out), xp.shape


def _conv3d_direct(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride, padding, out_dims):
    """Plain windowed loops; slow, kept as the in-tree cross-check path."""
    st, sh, sw = stride
    pt, ph, pw = padding
    to, ho, wo = out_dims
    n = x.shape[0]
    o, c, kt, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))
    out = np.empty((n, o, to, ho, wo), dtype=x.dtype)
    for ni in range(n):
        for oi in range(o):
            for ti in range(to):
                for hi in range(ho):
                    for wi in range(wo):
                        patch = xp[ni, :, ti * st:ti * st + kt, hi * sh:hi * sh + kh, wi * sw:wi * sw + kw]
                        out[ni, oi, ti, hi, wi] = np.sum(patch * w[oi]) + b[oi]
    return out, xp.shape


def conv3d(x, weights, bias, stride=(1, 1, 1), padding=(0, 0, 0), method: str = "fast") -> Tensor:
    """3D convolution over [N,C,T,H,W].

    ``method`` selects the forward algorithm ("fast" offset-sum or "direct"
    nested loops); both produce the same values and share one backward.
    """
    x, w, b = as_tensor(x), as_tensor(weights), as_tensor(bias)
    stride = tuple(stride)
    padding = tuple(padding)
    out_dims = _check_conv(x, w, b, stride, padding)
    if method == "fast":
        data, pad_shape = _conv3d_fast(x.data, w.data, b.data, stride, padding, out_dims)
    elif method == "direct":
        data, pad_shape = _conv3d_direct(x.data, w.data, b.data, stride, padding, out_dims)
    else:
        raise ValueError(f"unknown conv method {method!r}")

    st, sh, sw = stride
    pt, ph, pw = padding
    to, ho, wo = out_dims
    kt, kh, kw = w.shape[2:]

    def bw(g):
        xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))
        gxp = np.zeros(pad_shape, dtype=x.data.dtype)
        gw = np.zeros_like(w.data)
        for dt in range(kt):
            for dh in range(kh):
                for dw in range(kw):
                    tsl = slice(dt, dt + st * to, st)
                    hsl = slice(dh, dh + sh * ho, sh)
                    wsl = slice(dw, dw + sw * wo, sw)
                    xs = xp[:, :, tsl, hsl, wsl]
                    gw[:, :, dt, dh, dw] = np.tensordot(g, xs, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
                    gx = np.tensordot(g, w.data[:, :, dt, dh, dw], axes=([1], [0]))
                    gxp[:, :, tsl, hsl, wsl] += gx.transpose(0, 4, 1, 2, 3)
        t_hi = pad_shape[2] - pt if pt else None
        h_hi = pad_shape[3] - ph if ph else None
        w_hi = pad_shape[4] - pw if pw else None
        x._accumulate(np.ascontiguousarray(gxp[:, :, pt:t_hi, ph:h_hi, pw:w_hi]))
        w._accumulate(gw)
        b._accumulate(g.sum(axis=(0, 2, 3, 4)))

    return _make(data, (x, w, b), bw)


def conv2d(x, weights, bias, stride=(1, 1), padding=(0, 0), method: str = "fast") -> Tensor:
    """2D convolution over [N,C,H,W]: the 3D kernel with time extent 1."""
    x = as_tensor(x)
    w = as_tensor(weights)
    if x.ndim != 4:
        raise ValueError(f"conv2d expects [N,C,H,W] input, got rank {x.ndim}")
    if w.ndim != 4:
        raise ValueError(f"conv2d expects [O,C,kh,kw] weights, got rank {w.ndim}")
    x5 = expand_time(x)
    w5 = reshape(w, (w.shape[0], w.shape[1], 1, w.shape[2], w.shape[3]))
    out = conv3d(x5, w5, bias, stride=(1,) + tuple(stride), padding=(0,) + tuple(padding), method=method)
    return squeeze_time(out)


# ----------------------------------------------------------------------
# pooling
# ----------------------------------------------------------------------

def pool3d(x, mode: str, extent, stride, padding=(0, 0, 0)) -> Tensor:
    """Windowed max/mean pooling over the (T,H,W) axes.

    Max pooling routes gradient to the maximal element (ties share it);
    mean pooling distributes uniformly over the in-bounds window, so padded
    positions neither contribute to the mean nor receive gradient.
    """
    x = as_tensor(x)
    if x.ndim != 5:
        raise ValueError(f"pool3d expects [N,C,T,H,W] input, got rank {x.ndim}")
    if mode not in ("max", "mean"):
        raise ValueError(f"unknown pooling mode {mode!r}")
    extent = tuple(extent)
    stride = tuple(stride)
    padding = tuple(padding)
    out_dims = []
    for i, name in enumerate(_AXIS_NAMES):
        if extent[i] > x.shape[2 + i] + 2 * padding[i]:
            raise ValueError(f"pooling extent {extent[i]} exceeds padded input on axis {name}")
        if padding[i] >= extent[i]:
            raise ValueError(f"pooling padding must be smaller than the extent on axis {name}")
        o = conv_output_size(x.shape[2 + i], padding[i], extent[i], stride[i])
        if o < 1:
            raise ValueError(f"non-positive pooled size on axis {name}")
        out_dims.append(o)
    to, ho, wo = out_dims
    et, eh, ew = extent
    st, sh, sw = stride
    pt, ph, pw = padding

    fill = -np.inf if mode == "max" else 0.0
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)), constant_values=fill)

    def window_slices():
        for dt in range(et):
            for dh in range(eh):
                for dw in range(ew):
                    yield (slice(dt, dt + st * to, st),
                           slice(dh, dh + sh * ho, sh),
                           slice(dw, dw + sw * wo, sw))

    if mode == "max":
        data = np.full((x.shape[0], x.shape[1], to, ho, wo), -np.inf, dtype=x.data.dtype)
        for tsl, hsl, wsl in window_slices():
            np.maximum(data, xp[:, :, tsl, hsl, wsl], out=data)
    else:
        data = np.zeros((x.shape[0], x.shape[1], to, ho, wo), dtype=x.data.dtype)
        ones = np.pad(np.ones(x.shape[2:], dtype=x.data.dtype), ((pt, pt), (ph, ph), (pw, pw)))
        count = np.zeros((to, ho, wo), dtype=x.data.dtype)
        for tsl, hsl, wsl in window_slices():
            data += xp[:, :, tsl, hsl, wsl]
            count += ones[tsl, hsl, wsl]
        data /= count

    def bw(g):
        gxp = np.zeros_like(xp)
        if mode == "max":
            ties = np.zeros_like(data)
            for tsl, hsl, wsl in window_slices():
                ties += (xp[:, :, tsl, hsl, wsl] == data)
            share = g / ties
            for tsl, hsl, wsl in window_slices():
                gxp[:, :, tsl, hsl, wsl] += share * (xp[:, :, tsl, hsl, wsl] == data)
        else:
            share = g / count
            for tsl, hsl, wsl in window_slices():
                gxp[:, :, tsl, hsl, wsl] += share
        t_hi = gxp.shape[2] - pt if pt else None
        h_hi = gxp.shape[3] - ph if ph else None
        w_hi = gxp.shape[4] - pw if pw else None
        x._accumulate(np.ascontiguousarray(gxp[:, :, pt:t_hi, ph:h_hi, pw:w_hi]))

    return _make(data, (x,), bw)


# ----------------------------------------------------------------------
# batch normalization
# ----------------------------------------------------------------------

def batchnorm(x, gamma, beta, running_mean=None, running_var=None,
              eps: float = 1e-5, mode: str = "train", momentum: float = 0.1) -> Tensor:
    """Per-channel normalization over all non-channel axes (axis 1 is C).

    Train mode normalizes with batch statistics and, when running buffers
    are supplied, updates them in place (outside the tape).  Infer mode
    normalizes with the stored running statistics.
    """
    x = as_tensor(x)
    gamma, beta = as_tensor(gamma), as_tensor(beta)
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"gamma/beta must have shape ({c},), got {gamma.shape} and {beta.shape}")
    bshape = (1, c) + (1,) * (x.ndim - 2)
    axes = (0,) + tuple(range(2, x.ndim))

    if mode == "train":
        count = x.size // c
        mean = tsum(x, axis=axes, keepdims=True) * (1.0 / count)
        centered = x - mean
        var = tsum(centered * centered, axis=axes, keepdims=True) * (1.0 / count)
        if running_mean is not None:
            running_mean *= (1.0 - momentum)
            running_mean += momentum * mean.data.reshape(c)
            running_var *= (1.0 - momentum)
            running_var += momentum * var.data.reshape(c)
        rstd = (var + eps) ** -0.5
        xhat = centered * rstd
    elif mode == "infer":
        if running_mean is None or running_var is None:
            raise ValueError("infer mode requires running statistics")
        rstd = 1.0 / np.sqrt(running_var + eps)
        xhat = (x - running_mean.reshape(bshape)) * rstd.reshape(bshape)
    else:
        raise ValueError(f"unknown batchnorm mode {mode!r}")

    return xhat * reshape(gamma, bshape) + reshape(beta, bshape)


# ----------------------------------------------------------------------
# fused losses (numerically stable logits -> loss)
# ----------------------------------------------------------------------

def bce_with_logits(z, target) -> Tensor:
    """Elementwise binary cross-entropy on raw logits; grad is sigmoid(z) - y."""
    z = as_tensor(z)
    t = as_tensor(target)
    zd = z.data
    data = np.maximum(zd, 0) - zd * t.data + np.log1p(np.exp(-np.abs(zd)))
    with np.errstate(over="ignore"):
        sig = np.where(zd >= 0, 1.0 / (1.0 + np.exp(-zd)), np.exp(zd) / (1.0 + np.exp(zd)))

    def bw(g):
        z._accumulate(g * (sig - t.data))

    return _make(data, (z,), bw)


def softmax_cross_entropy(logits, onehot, axis: int = 1) -> Tensor:
    """Per-position cross-entropy of softmax(logits) against a one-hot target.

    Output drops ``axis``; gradient is softmax - onehot.
    """
    z = as_tensor(logits)
    y = as_tensor(onehot)
    m = z.data.max(axis=axis, keepdims=True)
    shifted = z.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True)) + m
    logp = z.data - lse
    data = -(y.data * logp).sum(axis=axis)
    soft = np.exp(logp)

    def bw(g):
        z._accumulate(np.expand_dims(g, axis) * (soft - y.data))

    return _make(data, (z,), bw)


def softmax(logits: np.ndarray, axis: int = 1) -> np.ndarray:
    """Plain numpy softmax (no tape); used by decode."""
    m = logits.max(axis=axis, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=axis, keepdims=True)


# ----------------------------------------------------------------------
# initialization
# ----------------------------------------------------------------------

def he_init(rng: np.random.Generator, shape, dtype=DEFAULT_DTYPE) -> Tensor:
    """He fan-in normal init for conv/linear weights; fan-in = prod(shape[1:])."""
    fan_in = int(np.prod(shape[1:]))
    std = np.sqrt(2.0 / fan_in)
    return Tensor((rng.standard_normal(shape) * std).astype(dtype), requires_grad=True)


def zeros_param(shape, dtype=DEFAULT_DTYPE) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def ones_param(shape, dtype=DEFAULT_DTYPE) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)


# ----------------------------------------------------------------------
# serialization: flat little-endian binary with a small header
# ----------------------------------------------------------------------

def tensor_to_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype not in _DTYPE_TAGS:
        raise ValueError(f"unsupported dtype {arr.dtype} for serialization")
    header = _MAGIC + struct.pack("<II", _FORMAT_VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    header += struct.pack("<B", _DTYPE_TAGS[arr.dtype])
    return header + np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes()


def tensor_from_bytes(blob: bytes) -> np.ndarray:
    if blob[:4] != _MAGIC:
        raise ValueError("bad magic: not a tensor blob")
    version, rank = struct.unpack_from("<II", blob, 4)
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported tensor format version {version}")
    dims = struct.unpack_from(f"<{rank}I", blob, 12)
    off = 12 + 4 * rank
    (tag,) = struct.unpack_from("<B", blob, off)
    off += 1
    if tag not in _TAG_DTYPES:
        raise ValueError(f"unknown dtype tag {tag}")
    dtype = _TAG_DTYPES[tag]
    n = int(np.prod(dims)) if rank else 1
    arr = np.frombuffer(blob, dtype=dtype.newbyteorder("<"), count=n, offset=off)
    return arr.astype(dtype).reshape(dims)


def save_tensor(path, arr: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(tensor_to_bytes(arr))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        return tensor_from_bytes(f.read())
