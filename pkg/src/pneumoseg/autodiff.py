"""Reverse-mode autodiff on numpy arrays, with the layer ops a U-Net needs.

Tensors form a tape: every op returns a new Tensor holding a closure that
routes the incoming gradient to its parents. Calling ``backward`` on a
scalar loss walks the tape in reverse topological order and accumulates
gradients on every reachable tensor with ``requires_grad`` set.

Float32 is the working precision. Ops accept float64 tensors too, which
the test suite uses for finite-difference checks.
"""

from __future__ import annotations

import contextlib

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference / evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """N-dimensional float array with an optional gradient of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=np.float32):
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)


def _node(data, parents, backward_fn):
    """Create an op-output tensor, recording the tape edge when grads are on."""
    out = Tensor(data, dtype=data.dtype)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad += g


def backward(loss: Tensor):
    """Populate gradients of everything reachable from a scalar loss.

    Repeated calls accumulate into existing ``grad`` arrays; call
    ``zero_grad`` on the parameters between steps. Gradients of
    intermediate (non-leaf) tensors are freed once consumed.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is None:
            continue
        node._backward(node.grad)
        node.grad = None  # leaves keep theirs; op outputs are done


def zero_grad(tensors):
    for t in tensors:
        t.zero_grad()


# ---------------------------------------------------------------------------
# elementwise / reduction ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")

    def back(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _node(a.data + b.data, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul shape mismatch: {a.data.shape} vs {b.data.shape}")

    def back(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _node(a.data * b.data, (a, b), back)


def tsum(x: Tensor) -> Tensor:
    """Full reduction to a shape-[1] scalar tensor."""

    def back(g):
        _accumulate(x, np.full_like(x.data, g[0]))

    return _node(x.data.sum(dtype=x.data.dtype).reshape(1), (x,), back)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def back(g):
        _accumulate(x, g * mask)

    return _node(np.where(mask, x.data, 0), (x,), back)


def sigmoid(x: Tensor) -> Tensor:
    """1/(1+e^-x), clipped into the open interval (0, 1) at float resolution."""
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out[~pos] = e / (1.0 + e)
    info = np.finfo(d.dtype)
    np.clip(out, info.tiny, 1.0 - info.epsneg, out=out)

    def back(g):
        _accumulate(x, g * out * (1.0 - out))

    return _node(out, (x,), back)


# ---------------------------------------------------------------------------
# spatial ops (layouts are N x C x H x W)


def _require_nchw(x: Tensor, name: str):
    if x.data.ndim != 4:
        raise ValueError(f"{name} expects an NxCxHxW tensor, got shape {x.data.shape}")


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Gather k*k sliding windows of a padded NCHW array into (N, C*k*k, ho*wo)."""
    n, c = xp.shape[:2]
    cols = np.empty((n, c, k, k, ho, wo), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(n, c * k * k, ho * wo)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2D cross-correlation of x (NxCinxHxW) with weight (CoutxCinxkxk).

    Output spatial size is floor((H + 2*padding - k)/stride) + 1.
    Differentiable w.r.t. x, weight and bias.
    """
    _require_nchw(x, "conv2d input")
    _require_nchw(weight, "conv2d weight")
    n, c, h, w = x.data.shape
    cout, cin, k, k2 = weight.data.shape
    if k != k2:
        raise ValueError(f"conv2d kernel must be square, got {weight.data.shape}")
    if k < 1 or stride < 1 or padding < 0:
        raise ValueError(f"conv2d invalid k={k}, stride={stride}, padding={padding}")
    if cin != c:
        raise ValueError(
            f"conv2d channel mismatch: input shape {x.data.shape} vs weight shape {weight.data.shape}")
    if bias is not None and bias.data.shape != (cout,):
        raise ValueError(f"conv2d bias shape {bias.data.shape} != ({cout},)")
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d output would be empty for input {x.data.shape}, k={k}")

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    cols = _im2col(xp, k, stride, ho, wo)            # (N, C*k*k, L)
    wmat = weight.data.reshape(cout, cin * k * k)
    out = np.matmul(wmat, cols).reshape(n, cout, ho, wo)
    if bias is not None:
        out += bias.data.reshape(1, cout, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        gm = g.reshape(n, cout, ho * wo)
        if weight.requires_grad:
            gw = np.einsum("ncl,nkl->ck", gm, cols).reshape(weight.data.shape)
            _accumulate(weight, gw)
        if bias is not None and bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gcols = np.matmul(wmat.T, gm).reshape(n, cin, k, k, ho, wo)
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[:, :, i, j]
            if padding:
                gxp = gxp[:, :, padding : padding + h, padding : padding + w]
            _accumulate(x, gxp)

    return _node(out, parents, back)


def max_pool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; H and W must be even.

    The backward pass routes the gradient to the first-encountered maximum
    within each window (row-major order inside the 2x2 block).
    """
    _require_nchw(x, "max_pool2")
    n, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ValueError(f"max_pool2 needs even spatial dims, got {h}x{w}")
    windows = (x.data.reshape(n, c, h // 2, 2, w // 2, 2)
               .transpose(0, 1, 2, 4, 3, 5)
               .reshape(n, c, h // 2, w // 2, 4))
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

    def back(g):
        gw = np.zeros((n, c, h // 2, w // 2, 4), dtype=g.dtype)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gx = (gw.reshape(n, c, h // 2, w // 2, 2, 2)
              .transpose(0, 1, 2, 4, 3, 5)
              .reshape(n, c, h, w))
        _accumulate(x, gx)

    return _node(out, (x,), back)


def upsample2_nearest(x: Tensor) -> Tensor:
    """Duplicate every cell into a 2x2 block; backward sums over each block."""
    _require_nchw(x, "upsample2_nearest")
    n, c, h, w = x.data.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def back(g):
        _accumulate(x, g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)))

    return _node(out, (x,), back)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the channel axis; batch and spatial dims must agree."""
    _require_nchw(a, "concat_channels")
    _require_nchw(b, "concat_channels")
    na, ca, ha, wa = a.data.shape
    nb, cb, hb, wb = b.data.shape
    if (na, ha, wa) != (nb, hb, wb):
        raise ValueError(f"concat_channels mismatch: {a.data.shape} vs {b.data.shape}")

    def back(g):
        _accumulate(a, g[:, :ca])
        _accumulate(b, g[:, ca:])

    return _node(np.concatenate([a.data, b.data], axis=1), (a, b), back)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over (N, H, W).

    Train mode normalizes with batch statistics (biased variance) and
    updates the running buffers in place by exponential moving average.
    Eval mode normalizes with the running buffers.
    """
    _require_nchw(x, "batch_norm")
    if eps <= 0:
        raise ValueError(f"batch_norm eps must be positive, got {eps}")
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ValueError(
            f"batch_norm gamma/beta shapes {gamma.data.shape}/{beta.data.shape} != ({c},)")

    if training:
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu = running_mean.astype(x.data.dtype)
        var = running_var.astype(x.data.dtype)

    inv_std = 1.0 / np.sqrt(var + eps)
    xc = x.data - mu.reshape(1, c, 1, 1)
    xhat = xc * inv_std.reshape(1, c, 1, 1)
    out = xhat * gamma.data.reshape(1, c, 1, 1) + beta.data.reshape(1, c, 1, 1)

    def back(g):
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            _accumulate(beta, g.sum(axis=(0, 2, 3)))
        if not x.requires_grad:
            return
        gxhat = g * gamma.data.reshape(1, c, 1, 1)
        if training:
            m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
            istd = inv_std.reshape(1, c, 1, 1)
            dvar = (gxhat * xc).sum(axis=(0, 2, 3)) * -0.5 * inv_std ** 3
            dmu = (-(gxhat.sum(axis=(0, 2, 3))) * inv_std
                   + dvar * -2.0 * xc.mean(axis=(0, 2, 3)))
            gx = (gxhat * istd
                  + (dvar.reshape(1, c, 1, 1) * 2.0 * xc
                     + dmu.reshape(1, c, 1, 1)) / m)
            _accumulate(x, gx)
        else:
            _accumulate(x, gxhat * inv_std.reshape(1, c, 1, 1))

    return _node(out, (x, gamma, beta), back)
