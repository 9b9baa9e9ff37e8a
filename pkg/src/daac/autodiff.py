"""Reverse-mode automatic differentiation on dense float64 arrays.

Every forward op produces a new Tensor; when gradients are enabled and any
input requires them, the op records parent links plus a backward closure.
``backward()`` walks the recorded graph once in reverse topological order
and accumulates gradients into ``.grad`` buffers.

All values are float64. Any op that would produce a NaN or Inf from finite
inputs raises DomainError at the op itself, so numeric failures surface
where they happen instead of poisoning a training run.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError, DomainError

_grad_enabled = True


class no_grad:
    """Context manager disabling graph recording inside the block."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _check_finite(arr, op):
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"non-finite result from op '{op}'")


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """Dense float64 array participating in a differentiable graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_op")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, "leaf")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward_fn = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        if self.data.size != 1:
            raise ContractError("item() requires a scalar tensor")
        return float(self.data.reshape(()))

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(op={self._op}, shape={self.data.shape})"

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _result(data, parents, op, backward_fn):
        out = Tensor.__new__(Tensor)
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, op)
        out.data = arr
        out.grad = None
        out._op = op
        needs = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        if needs:
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
        else:
            out._parents = ()
            out._backward_fn = None
        return out

    def _accumulate(self, grad):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self):
        """Populate .grad on every requires_grad node reachable from this scalar."""
        if self.data.size != 1:
            raise ContractError("backward() requires a scalar loss tensor")
        if not self.requires_grad:
            raise ContractError("backward() on a tensor with no recorded graph")
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    # -- elementwise arithmetic ---------------------------------------------

    @staticmethod
    def _coerce(other):
        if isinstance(other, Tensor):
            return other
        return Tensor(other)

    def __add__(self, other):
        other = Tensor._coerce(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.data.shape))

        return Tensor._result(a.data + b.data, (a, b), "add", bw)

    __radd__ = __add__

    def __sub__(self, other):
        other = Tensor._coerce(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g, b.data.shape))

        return Tensor._result(a.data - b.data, (a, b), "sub", bw)

    def __rsub__(self, other):
        return Tensor._coerce(other) - self

    def __neg__(self):
        a = self

        def bw(g):
            a._accumulate(-g)

        return Tensor._result(-a.data, (a,), "neg", bw)

    def __mul__(self, other):
        other = Tensor._coerce(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.data.shape))

        return Tensor._result(a.data * b.data, (a, b), "mul", bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._coerce(other)
        a, b = self, other
        if np.any(b.data == 0.0):
            raise DomainError("division by zero")

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g / b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return Tensor._result(a.data / b.data, (a, b), "div", bw)

    def __rtruediv__(self, other):
        return Tensor._coerce(other) / self

    # -- matmul ---------------------------------------------------------------

    def __matmul__(self, other):
        other = Tensor._coerce(other)
        a, b = self, other
        if a.ndim < 1 or b.ndim < 2:
            raise DimensionError("matmul needs at least 1-d @ 2-d operands")
        if a.data.shape[-1] != b.data.shape[-2]:
            raise DimensionError(
                f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")
        data = np.matmul(a.data, b.data)

        def bw(g):
            if a.requires_grad:
                ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
                a._accumulate(_unbroadcast(ga, a.data.shape))
            if b.requires_grad:
                ad = a.data[None, :] if a.ndim == 1 else np.swapaxes(a.data, -1, -2)
                gg = g[..., None, :] if a.ndim == 1 else g
                gb = np.matmul(ad, gg)
                b._accumulate(_unbroadcast(gb, b.data.shape))

        return Tensor._result(data, (a, b), "matmul", bw)

    # -- shape ops ------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        try:
            data = a.data.reshape(shape)
        except ValueError as e:
            raise DimensionError(str(e)) from None

        def bw(g):
            a._accumulate(g.reshape(a.data.shape))

        return Tensor._result(data, (a,), "reshape", bw)

    def transpose(self, *axes):
        a = self
        if not axes:
            axes = tuple(reversed(range(a.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = np.argsort(axes)

        def bw(g):
            a._accumulate(g.transpose(inverse))

        return Tensor._result(a.data.transpose(axes), (a,), "transpose", bw)

    @property
    def T(self):
        return self.transpose()

    # -- reductions -------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        a = self
        data = a.data.sum(axis=axis, keepdims=keepdims)

        def bw(g):
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            a._accumulate(np.broadcast_to(gg, a.data.shape).copy())

        return Tensor._result(data, (a,), "sum", bw)

    def mean(self, axis=None, keepdims=False):
        a = self
        data = a.data.mean(axis=axis, keepdims=keepdims)
        count = a.data.size if axis is None else np.prod(
            [a.data.shape[i] for i in np.atleast_1d(axis)])

        def bw(g):
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            a._accumulate(np.broadcast_to(gg, a.data.shape) / count)

        return Tensor._result(data, (a,), "mean", bw)

    # -- nonlinearities ---------------------------------------------------------

    def exp(self):
        a = self
        with np.errstate(over="ignore"):
            data = np.exp(a.data)
        _check_finite(data, "exp")

        def bw(g):
            a._accumulate(g * data)

        return Tensor._result(data, (a,), "exp", bw)

    def log(self):
        a = self
        if np.any(a.data <= 0.0):
            raise DomainError("log of non-positive value")
        data = np.log(a.data)

        def bw(g):
            a._accumulate(g / a.data)

        return Tensor._result(data, (a,), "log", bw)

    def sqrt(self):
        a = self
        if np.any(a.data < 0.0):
            raise DomainError("sqrt of negative value")
        data = np.sqrt(a.data)

        def bw(g):
            a._accumulate(g * 0.5 / data)

        return Tensor._result(data, (a,), "sqrt", bw)

    def relu(self):
        a = self

        def bw(g):
            a._accumulate(g * (a.data > 0.0))

        return Tensor._result(np.maximum(a.data, 0.0), (a,), "relu", bw)

    def sigmoid(self):
        a = self
        x = a.data
        with np.errstate(over="ignore"):
            data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)),
                            np.exp(x) / (1.0 + np.exp(x)))

        def bw(g):
            a._accumulate(g * data * (1.0 - data))

        return Tensor._result(data, (a,), "sigmoid", bw)

    def softmax(self, axis=-1):
        a = self
        shifted = a.data - a.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        data = e / e.sum(axis=axis, keepdims=True)

        def bw(g):
            inner = (g * data).sum(axis=axis, keepdims=True)
            a._accumulate(data * (g - inner))

        return Tensor._result(data, (a,), "softmax", bw)

    def clip(self, lo, hi):
        a = self
        data = np.clip(a.data, lo, hi)

        def bw(g):
            a._accumulate(g * ((a.data >= lo) & (a.data <= hi)))

        return Tensor._result(data, (a,), "clip", bw)


# -- multi-input ops ---------------------------------------------------------


def concat(tensors, axis=0):
    """Concatenate tensors along `axis`; backward splits the gradient."""
    tensors = [Tensor._coerce(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat of empty sequence")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return Tensor._result(data, tuple(tensors), "concat", bw)


def conv1d(x, w, b=None, stride=1, dilation=1, padding=0):
    """1-D convolution over the last axis.

    x: [M, C_in, T], w: [C_out, C_in, K], b: [C_out, 1] or None.
    Output length is (T + 2*padding - dilation*(K-1) - 1) // stride + 1.
    """
    x = Tensor._coerce(x)
    w = Tensor._coerce(w)
    if x.ndim != 3 or w.ndim != 3:
        raise DimensionError("conv1d expects x [M,C,T] and w [O,C,K]")
    m, cin, t = x.data.shape
    cout, cin_w, k = w.data.shape
    if cin != cin_w:
        raise DimensionError(f"conv1d channel mismatch: {cin} vs {cin_w}")
    span = dilation * (k - 1) + 1
    out_len = (t + 2 * padding - span) // stride + 1
    if out_len <= 0:
        raise DimensionError(
            f"conv1d output length {out_len} <= 0 for T={t}, K={k}, "
            f"dilation={dilation}, padding={padding}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    idx = np.arange(out_len)[:, None] * stride + np.arange(k)[None, :] * dilation
    cols = xp[:, :, idx]                                   # [M, C_in, L, K]
    data = np.einsum("ock,mclk->mol", w.data, cols, optimize=True)
    parents = [x, w]
    if b is not None:
        b = Tensor._coerce(b)
        data = data + b.data
        parents.append(b)

    def bw(g):
        if b is not None and b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))
        if w.requires_grad:
            w._accumulate(np.einsum("mol,mclk->ock", g, cols, optimize=True))
        if x.requires_grad:
            dcols = np.einsum("mol,ock->mclk", g, w.data, optimize=True)
            dxp = np.zeros((m, cin, t + 2 * padding))
            np.add.at(dxp, (slice(None), slice(None), idx), dcols)
            x._accumulate(dxp[:, :, padding:padding + t] if padding else dxp)

    return Tensor._result(data, tuple(parents), "conv1d", bw)


def conv1d_transpose(x, w, b=None, stride=1, dilation=1, padding=0, output_length=None):
    """Transposed 1-D convolution (fractionally strided).

    x: [M, C_in, L], w: [C_in, C_out, K], b: [C_out, 1] or None.
    Natural output length is (L-1)*stride + dilation*(K-1) + 1 - 2*padding;
    pass `output_length` >= that to zero-extend on the right (mirrors an
    encoder layer whose input length was odd).
    """
    x = Tensor._coerce(x)
    w = Tensor._coerce(w)
    if x.ndim != 3 or w.ndim != 3:
        raise DimensionError("conv1d_transpose expects x [M,C,L] and w [C,O,K]")
    m, cin, length = x.data.shape
    cin_w, cout, k = w.data.shape
    if cin != cin_w:
        raise DimensionError(f"conv1d_transpose channel mismatch: {cin} vs {cin_w}")
    full_len = (length - 1) * stride + dilation * (k - 1) + 1
    natural = full_len - 2 * padding
    out_len = natural if output_length is None else int(output_length)
    if out_len < 1 or out_len < natural:
        raise DimensionError(
            f"conv1d_transpose output_length {out_len} below natural {natural}")
    if out_len > full_len - padding:
        raise DimensionError(
            f"conv1d_transpose output_length {out_len} exceeds support {full_len - padding}")
    idx = np.arange(length)[:, None] * stride + np.arange(k)[None, :] * dilation
    contr = np.einsum("mcl,cok->molk", x.data, w.data, optimize=True)
    full = np.zeros((m, cout, full_len))
    np.add.at(full, (slice(None), slice(None), idx), contr)
    data = full[:, :, padding:padding + out_len]
    parents = [x, w]
    if b is not None:
        b = Tensor._coerce(b)
        data = data + b.data
        parents.append(b)

    def bw(g):
        if b is not None and b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))
        dfull = np.zeros((m, cout, full_len))
        dfull[:, :, padding:padding + out_len] = g
        dcontr = dfull[:, :, idx]                           # [M, O, L, K]
        if w.requires_grad:
            w._accumulate(np.einsum("molk,mcl->cok", dcontr, x.data, optimize=True))
        if x.requires_grad:
            x._accumulate(np.einsum("molk,cok->mcl", dcontr, w.data, optimize=True))

    return Tensor._result(data, tuple(parents), "conv1d_transpose", bw)


# -- composed numeric helpers --------------------------------------------------


def cosine_similarity(a, b, axis=-1):
    """Cosine similarity along `axis`; raises DomainError on zero vectors."""
    a = Tensor._coerce(a)
    b = Tensor._coerce(b)
    dot = (a * b).sum(axis=axis)
    na = (a * a).sum(axis=axis).sqrt()
    nb = (b * b).sum(axis=axis).sqrt()
    return dot / (na * nb)


def normalize_rows(h):
    """Scale each row of [N, D] to unit L2 norm."""
    norms = (h * h).sum(axis=1, keepdims=True).sqrt()
    return h / norms


def mse(a, b):
    """Mean squared error over all elements."""
    a = Tensor._coerce(a)
    b = Tensor._coerce(b)
    if a.data.shape != b.data.shape:
        raise DimensionError(f"mse shape mismatch: {a.data.shape} vs {b.data.shape}")
    d = a - b
    return (d * d).mean()

def bce(p, y):
    """Binary cross-entropy on probabilities p in (0,1) against targets y."""
    p = Tensor._coerce(p)
    y = Tensor._coerce(y)
    if p.data.shape != y.data.shape:
        raise DimensionError(f"bce shape mismatch: {p.data.shape} vs {y.data.shape}")
    if np.any(p.data <= 0.0) or np.any(p.data >= 1.0):
        raise DomainError("bce probabilities must lie strictly in (0, 1)")
    one = Tensor(np.ones_like(p.data))
    return -(y * p.log() + (one - y) * (one - p).log()).mean()


def bce_with_logits(z, y):
    """Numerically stable binary cross-entropy on raw logits."""
    z = Tensor._coerce(z)
    y = Tensor._coerce(y)
    if z.data.shape != np.asarray(y.data).shape:
        raise DimensionError(f"bce shape mismatch: {z.data.shape} vs {y.data.shape}")
    target = y.data

    def bw(g):
        if z.requires_grad:
            x = z.data
            with np.errstate(over="ignore"):
                s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)),
                             np.exp(x) / (1.0 + np.exp(x)))
            z._accumulate(g * (s - target) / z.data.size)

    x = z.data
    val = np.maximum(x, 0.0) - x * target + np.log1p(np.exp(-np.abs(x)))
    return Tensor._result(val.mean(), (z,), "bce_with_logits", bw)


def masked_logsumexp(x, mask, axis):
    """log(sum(mask * exp(x))) along `axis` for a constant 0/1 mask.

    Rows whose mask is all zero are invalid; the caller must exclude them
    (their lse would be log 0). A constant shift keeps exp in range.
    """
    x = Tensor._coerce(x)
    mask = np.asarray(mask, dtype=np.float64)
    neg = np.where(mask > 0, 0.0, -np.inf)
    shift = (x.data + neg).max(axis=axis, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    e = (x - Tensor(shift)).exp() * Tensor(mask)
    s = e.sum(axis=axis)
    return s.log() + Tensor(np.squeeze(shift, axis=axis))


# -- gradient checking ----------------------------------------------------------


def gradcheck(f, point, step=1e-5):
    """Max relative error between analytic and central-difference gradients.

    `f` maps one Tensor to a scalar Tensor. Returns
    max |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
    """
    x = Tensor(point.data.copy(), requires_grad=True)
    out = f(x)
    if out.data.size != 1:
        raise ContractError("gradcheck requires a scalar-valued function")
    out.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    numeric = np.zeros_like(x.data)
    flat_num = numeric.reshape(-1)
    base = point.data.copy().reshape(-1)
    with no_grad():
        for i in range(base.size):
            xp = base.copy()
            xp[i] += step
            fp = f(Tensor(xp.reshape(point.data.shape))).item()
            xm = base.copy()
            xm[i] -= step
            fm = f(Tensor(xm.reshape(point.data.shape))).item()
            flat_num[i] = (fp - fm) / (2.0 * step)
    err = np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + 1e-12)
    return float(err.max()) if err.size else 0.0
