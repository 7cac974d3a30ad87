"""Minimal reverse-mode autodiff on numpy arrays.

Everything runs in float64. The graph is built implicitly: each Tensor
produced by an op keeps a closure that scatters its output gradient back
to its inputs. ``Tensor.backward()`` does a topological sort and runs the
closures in reverse order.
"""

import numpy as np

DTYPE = np.float64


class AutogradError(Exception):
    pass


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=DTYPE)
        if not np.all(np.isfinite(self.data)):
            raise AutogradError("non-finite values in tensor" + (f" {name!r}" if name else ""))
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._prev = ()
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad = self.grad + g

    def backward(self):
        if self.data.size != 1:
            raise AutogradError("backward() requires a scalar loss")
        topo, seen = [], set()

        def visit(t):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._prev:
                visit(p)
            topo.append(t)

        visit(self)
        self.grad = np.ones_like(self.data)
        for t in reversed(topo):
            if t._backward is not None:
                t._backward()

    # ---- arithmetic ----

    def __add__(self, other):
        other = _lift(other)
        out = _node(self.data + other.data, (self, other))
        if out.requires_grad:
            def back():
                if self.requires_grad:
                    self._accumulate(_unbroadcast(out.grad, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(out.grad, other.data.shape))
            out._backward = back
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _node(-self.data, (self,))
        if out.requires_grad:
            out._backward = lambda: self._accumulate(-out.grad)
        return out

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) + (-self)

    def __mul__(self, other):
        other = _lift(other)
        out = _node(self.data * other.data, (self, other))
        if out.requires_grad:
            def back():
                if self.requires_grad:
                    self._accumulate(_unbroadcast(out.grad * other.data, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(out.grad * self.data, other.data.shape))
            out._backward = back
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * _lift(other) ** -1.0

    def __rtruediv__(self, other):
        return _lift(other) * self ** -1.0

    def __pow__(self, exponent):
        if not np.isscalar(exponent):
            raise AutogradError("only scalar exponents are supported")
        out = _node(self.data ** exponent, (self,))
        if out.requires_grad:
            out._backward = lambda: self._accumulate(
                out.grad * exponent * self.data ** (exponent - 1))
        return out

    def __matmul__(self, other):
        other = _lift(other)
        out = _node(self.data @ other.data, (self, other))
        if out.requires_grad:
            def back():
                if self.requires_grad:
                    self._accumulate(out.grad @ other.data.T)
                if other.requires_grad:
                    other._accumulate(self.data.T @ out.grad)
            out._backward = back
        return out

    # ---- reductions ----

    def sum(self, axis=None, keepdims=False):
        out = _node(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out.requires_grad:
            def back():
                g = out.grad
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(g, self.data.shape).copy())
            out._backward = back
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def max(self):
        """Global max; gradient routes to the first argmax element."""
        idx = np.unravel_index(np.argmax(self.data), self.data.shape)
        out = _node(self.data[idx], (self,))
        if out.requires_grad:
            def back():
                g = np.zeros_like(self.data)
                g[idx] = out.grad
                self._accumulate(g)
            out._backward = back
        return out

    # ---- elementwise ----

    def exp(self):
        out = _node(np.exp(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accumulate(out.grad * out.data)
        return out

    def log(self):
        out = _node(np.log(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accumulate(out.grad / self.data)
        return out

    def tanh(self):
        out = _node(np.tanh(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accumulate(out.grad * (1.0 - out.data ** 2))
        return out

    def relu(self):
        out = _node(np.maximum(self.data, 0.0), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accumulate(out.grad * (self.data > 0.0))
        return out

    def abs(self):
        out = _node(np.abs(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accumulate(out.grad * np.sign(self.data))
        return out

    def clip_min(self, lo):
        """Floor at `lo`; gradient passes only where the input was above it."""
        out = _node(np.maximum(self.data, lo), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accumulate(out.grad * (self.data > lo))
        return out

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _node(self.data.reshape(shape), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accumulate(out.grad.reshape(self.data.shape))
        return out

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents):
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=DTYPE)
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    out._backward = None
    out._prev = tuple(parents) if out.requires_grad else ()
    out.name = None
    return out


def stack(tensors, axis=0):
    """Stack tensors along a new axis; gradient splits back per slice."""
    data = np.stack([t.data for t in tensors], axis=axis)
    out = _node(data, tuple(tensors))
    if out.requires_grad:
        def back():
            slices = np.moveaxis(out.grad, axis, 0)
            for t, g in zip(tensors, slices):
                if t.requires_grad:
                    t._accumulate(g)
        out._backward = back
    return out


# ---- convolution / pooling primitives (stride 1, 'same' padding) ----

def _im2col(x, kh, kw, pad):
    """x: (B,C,H,W) -> (B*H*W, C*kh*kw) patch matrix."""
    B, C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    # win: (B, C, H, W, kh, kw) for stride 1
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(B * H * W, C * kh * kw)


def _col2im(cols, x_shape, kh, kw, pad):
    B, C, H, W = x_shape
    dxp = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=DTYPE)
    c = cols.reshape(B, H, W, C, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + H, j:j + W] += c[:, :, :, :, i, j]
    if pad:
        return dxp[:, :, pad:-pad, pad:-pad]
    return dxp


def conv2d(x, w, b):
    """3x3-style conv, stride 1, same padding. x:(B,C,H,W) w:(Cout,Cin,kh,kw) b:(Cout,)."""
    B, C, H, W = x.data.shape
    Cout, Cin, kh, kw = w.data.shape
    if Cin != C:
        raise AutogradError(f"conv2d: input has {C} channels, weight expects {Cin}")
    pad = kh // 2
    cols = _im2col(x.data, kh, kw, pad)
    out2d = cols @ w.data.reshape(Cout, -1).T + b.data
    out = _node(out2d.reshape(B, H, W, Cout).transpose(0, 3, 1, 2), (x, w, b))
    if out.requires_grad:
        def back():
            g2d = out.grad.transpose(0, 2, 3, 1).reshape(B * H * W, Cout)
            if w.requires_grad:
                w._accumulate((g2d.T @ cols).reshape(w.data.shape))
            if b.requires_grad:
                b._accumulate(g2d.sum(axis=0))
            if x.requires_grad:
                dcols = g2d @ w.data.reshape(Cout, -1)
                x._accumulate(_col2im(dcols, x.data.shape, kh, kw, pad))
        out._backward = back
    return out


def maxpool2(x):
    """2x2 max pool, stride 2. H and W must be even."""
    B, C, H, W = x.data.shape
    if H % 2 or W % 2:
        raise AutogradError(f"maxpool2: odd spatial size {H}x{W}")
    win = x.data.reshape(B, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(B, C, H // 2, W // 2, 4)
    idx = win.argmax(axis=-1)
    out = _node(np.take_along_axis(win, idx[..., None], axis=-1)[..., 0], (x,))
    if out.requires_grad:
        def back():
            dwin = np.zeros_like(win)
            np.put_along_axis(dwin, idx[..., None], out.grad[..., None], axis=-1)
            dx = dwin.reshape(B, C, H // 2, W // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
            x._accumulate(dx.reshape(B, C, H, W))
        out._backward = back
    return out


# ---- numpy fast paths (no graph), shared shapes with the ops above ----

def conv2d_array(x, w, b):
    B, C, H, W = x.shape
    Cout = w.shape[0]
    kh = w.shape[2]
    cols = _im2col(x, kh, kh, kh // 2)
    out = cols @ w.reshape(Cout, -1).T + b
    return out.reshape(B, H, W, Cout).transpose(0, 3, 1, 2)


def maxpool2_array(x):
    B, C, H, W = x.shape
    return x.reshape(B, C, H // 2, 2, W // 2, 2).max(axis=(3, 5))
