"""Minimal reverse-mode autodiff over dense numpy arrays.

Covers exactly the operations the denoising/noise-extraction networks and
their losses need: elementwise arithmetic (no broadcasting), 2-D convolution,
leaky ReLU, 2x2 max pooling, nearest-neighbour upsampling, channel
concatenation, mean-absolute-error loss, and `detach` for stopping gradient
flow across an edge. Graphs are rebuilt on every forward pass (define-by-run).

Storage is float32 by default; pass float64 arrays for strict gradient
checking.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided


class ShapeError(ValueError):
    """Raised when tensor shapes do not satisfy an op's contract."""


class GraphError(RuntimeError):
    """Raised when backward() is called on an unsuitable tensor."""


class Tensor:
    """A dense array plus an optional record of the op that produced it."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False, _parents=(), _op="", _backward=None):
        self.data = np.asarray(data, dtype=np.float32) if not isinstance(data, np.ndarray) \
            else data
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._op = _op
        self._backward = _backward

    # -- introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return not self._parents

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op or 'leaf'}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    # -- graph plumbing ------------------------------------------------

    def detach(self) -> "Tensor":
        """Forward the values, sever the graph: no gradient crosses this edge."""
        return Tensor(self.data, requires_grad=False)

    def backward(self):
        """Reverse sweep from a scalar; accumulates grads additively."""
        if self.data.size != 1:
            raise GraphError(f"backward() needs a scalar loss, got shape {self.shape}")
        if self._backward is None:
            raise GraphError("backward() on a tensor outside any graph")

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # free saved buffers; the graph is single-use
                node._backward = None
                node._parents = ()

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g.copy() if g.base is not None or not g.flags.owndata else g
        else:
            self.grad = self.grad + g

    # -- operator sugar ------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return scalar_add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return scalar_add(self, -other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scalar_mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scalar_mul(self, -1.0)


def _check_same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _result(data, parents, op, backward):
    needs = any(p.requires_grad for p in parents)
    if needs:
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _op=op,
                      _backward=backward)
    return Tensor(data)


# -- elementwise -------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(g)
        if b.requires_grad or b._parents:
            b._accumulate(g)

    return _result(a.data + b.data, (a, b), "add", backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(g)
        if b.requires_grad or b._parents:
            b._accumulate(-g)

    return _result(a.data - b.data, (a, b), "sub", backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)
    a_data, b_data = a.data, b.data

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(g * b_data)
        if b.requires_grad or b._parents:
            b._accumulate(g * a_data)

    return _result(a_data * b_data, (a, b), "mul", backward)


def scalar_add(a: Tensor, s: float) -> Tensor:
    def backward(g):
        a._accumulate(g)

    return _result(a.data + a.dtype.type(s), (a,), "scalar_add", backward)


def scalar_mul(a: Tensor, s: float) -> Tensor:
    s = a.dtype.type(s)

    def backward(g):
        a._accumulate(g * s)

    return _result(a.data * s, (a,), "scalar_mul", backward)


# -- convolution -------------------------------------------------------

def _im2col(x: np.ndarray, k: int, stride: int, padding: int):
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    s0, s1, s2, s3 = x.strides
    view = as_strided(
        x,
        shape=(n, c, k, k, ho, wo),
        strides=(s0, s1, s2, s3, s2 * stride, s3 * stride),
    )
    # (n, c*k*k, ho*wo), contiguous copy for the GEMM
    return np.ascontiguousarray(view).reshape(n, c * k * k, ho * wo), ho, wo


def _col2im(col_grad, x_shape, k, stride, padding, ho, wo):
    n, c, h, w = x_shape
    gxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=col_grad.dtype)
    cg = col_grad.reshape(n, c, k, k, ho, wo)
    for i in range(k):
        for j in range(k):
            gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cg[:, :, i, j]
    if padding:
        return gxp[:, :, padding:padding + h, padding:padding + w]
    return gxp


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1,
           padding: int = 0) -> Tensor:
    """Cross-correlation of an NCHW input with an OIKK kernel, zero padding."""
    n, c, h, w = x.shape
    o, i, kh, kw = weight.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeError(f"conv2d: kernel must be square and odd, got {kh}x{kw}")
    if i != c:
        raise ShapeError(f"conv2d: input has {c} channels, weight expects {i}")
    if bias.shape != (o,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({o},)")
    k = kh
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(
            f"conv2d: non-positive output extent {ho}x{wo} for input {h}x{w}, "
            f"kernel {k}, stride {stride}, padding {padding}")

    col, ho, wo = _im2col(x.data, k, stride, padding)
    w2 = weight.data.reshape(o, c * k * k)
    out = np.matmul(w2, col)                      # (n, o, ho*wo)
    out += bias.data.reshape(1, o, 1)
    out = out.reshape(n, o, ho, wo)

    def backward(g):
        go = g.reshape(n, o, ho * wo)
        if bias.requires_grad or bias._parents:
            bias._accumulate(go.sum(axis=(0, 2)))
        if weight.requires_grad or weight._parents:
            gw = np.matmul(go, col.transpose(0, 2, 1)).sum(axis=0)
            weight._accumulate(gw.reshape(o, c, k, k))
        if x.requires_grad or x._parents:
            col_grad = np.matmul(w2.T, go)        # (n, c*k*k, ho*wo)
            x._accumulate(_col2im(col_grad, x.shape, k, stride, padding, ho, wo))

    return _result(out, (x, weight, bias), "conv2d", backward)


# -- pointwise and structural -----------------------------------------

def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    if not (0.0 <= slope < 1.0):
        raise ValueError(f"leaky_relu: slope must be in [0, 1), got {slope}")
    mask = x.data >= 0
    out = np.where(mask, x.data, x.dtype.type(slope) * x.data)

    def backward(g):
        x._accumulate(np.where(mask, g, x.dtype.type(slope) * g))

    return _result(out, (x,), "leaky_relu", backward)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 non-overlapping max; ties route gradient to the first element."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2: spatial dims must be even, got {h}x{w}")
    win = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = win.reshape(n, c, h // 2, w // 2, 4)
    idx = flat.argmax(axis=-1)                    # first max in row-major order
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gflat = np.zeros((n, c, h // 2, w // 2, 4), dtype=g.dtype)
        np.put_along_axis(gflat, idx[..., None], g[..., None], axis=-1)
        gx = gflat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        x._accumulate(gx.reshape(n, c, h, w))

    return _result(np.ascontiguousarray(out), (x,), "maxpool2", backward)


def upsample2_nearest(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def backward(g):
        gx = g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))
        x._accumulate(gx)

    return _result(out, (x,), "upsample2", backward)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    na, ca, ha, wa = a.shape
    nb, cb, hb, wb = b.shape
    if (na, ha, wa) != (nb, hb, wb):
        raise ShapeError(f"concat_channels: N/H/W mismatch {a.shape} vs {b.shape}")
    out = np.concatenate([a.data, b.data], axis=1)

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(g[:, :ca])
        if b.requires_grad or b._parents:
            b._accumulate(g[:, ca:])

    return _result(out, (a, b), "concat", backward)


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference over all elements, as a scalar tensor."""
    _check_same_shape("l1_loss", pred, target)
    diff = pred.data - target.data
    out = np.abs(diff).mean(dtype=pred.dtype)

    def backward(g):
        local = g * np.sign(diff) / diff.size
        if pred.requires_grad or pred._parents:
            pred._accumulate(local)
        if target.requires_grad or target._parents:
            target._accumulate(-local)

    return _result(np.asarray(out), (pred, target), "l1_loss", backward)


# -- optimizer ---------------------------------------------------------

class Adam:
    """Standard Adam with bias correction; clears grads after each step."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise GraphError(f"Adam.step: parameter {i} has no gradient")
            g = p.grad
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * (g * g)
            m_hat = self.m[i] / (1 - b1 ** self.t)
            v_hat = self.v[i] / (1 - b2 ** self.t)
            p.data = (p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)).astype(p.dtype)
            p.grad = None

    def zero_grad(self):
        for p in self.params:
            p.grad = None
