"""Dense float64 tensors with define-by-run reverse-mode automatic differentiation.

The graph is rebuilt on every forward pass: each op records its parent tensors
and a closure that routes the output gradient back to them.  ``backward`` on a
scalar walks the recorded graph once in reverse topological order.  Gradients
accumulate on every tracked tensor until ``zero_grad`` is called.

``rfft2``/``irfft2`` are plain spectral utilities over arrays (used for
gradient preconditioning); they do not participate in the graph.
"""

from __future__ import annotations

import itertools
from typing import Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .kernels import conv2d_backward_input, conv2d_backward_kernel, conv2d_forward

_node_ids = itertools.count(1)


class Tensor:
    """A dense float64 array, optionally tracked in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "node_id", "op", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _op=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self._parents = tuple(_parents)
        self._grad_fn = None
        self.op = _op
        self.node_id = next(_node_ids) if (self.requires_grad or _op is not None) else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() requires a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into .grad of every tracked tensor."""
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.shape}")
        # iterative DFS for the reverse topological order
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        flows: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = flows.pop(id(node), None)
            if g is None:
                continue
            node.grad = g.copy() if node.grad is None else node.grad + g
            if node._grad_fn is None:
                continue
            for parent, pg in node._grad_fn(g):
                if not parent.requires_grad:
                    continue
                held = flows.get(id(parent))
                if held is None:
                    # own the buffer: pg may alias g or another parent's flow
                    flows[id(parent)] = np.array(pg, dtype=np.float64)
                else:
                    held += pg

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad={'set' if self.grad is not None else 'none'})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self):
        return scale(self, -1.0)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_same_shape(a: Tensor, b: Tensor, opname: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{opname}: shape mismatch {a.shape} vs {b.shape}")


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "add")
    out = Tensor(a.data + b.data, _parents=(a, b), _op="add")
    if out.requires_grad:
        out._grad_fn = lambda g: ((a, g), (b, g))
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "sub")
    out = Tensor(a.data - b.data, _parents=(a, b), _op="sub")
    if out.requires_grad:
        out._grad_fn = lambda g: ((a, g), (b, -g))
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "mul")
    out = Tensor(a.data * b.data, _parents=(a, b), _op="mul")
    if out.requires_grad:
        out._grad_fn = lambda g: ((a, g * b.data), (b, g * a.data))
    return out


def scale(x, c: float) -> Tensor:
    x = _as_tensor(x)
    c = float(c)
    out = Tensor(x.data * c, _parents=(x,), _op="scale")
    if out.requires_grad:
        out._grad_fn = lambda g: ((x, g * c),)
    return out


def dot(a, b) -> Tensor:
    """Inner product of two same-shape tensors (flattened), as a scalar."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "dot")
    out = Tensor(np.dot(a.data.ravel(), b.data.ravel()), _parents=(a, b), _op="dot")
    if out.requires_grad:
        out._grad_fn = lambda g: ((a, g * b.data), (b, g * a.data))
    return out


def matvec(m, v) -> Tensor:
    """m[B,D] @ v[D] -> [B]."""
    m, v = _as_tensor(m), _as_tensor(v)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"matvec: incompatible shapes {m.shape} and {v.shape}")
    out = Tensor(m.data @ v.data, _parents=(m, v), _op="matvec")
    if out.requires_grad:
        out._grad_fn = lambda g: ((m, np.outer(g, v.data)), (v, m.data.T @ g))
    return out


def tsum(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.sum(), _parents=(x,), _op="sum")
    if out.requires_grad:
        out._grad_fn = lambda g: ((x, np.broadcast_to(g, x.data.shape)),)
    return out


def tmean(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.mean(), _parents=(x,), _op="mean")
    if out.requires_grad:
        n = x.data.size
        out._grad_fn = lambda g: ((x, np.broadcast_to(g / n, x.data.shape)),)
    return out


def square(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data * x.data, _parents=(x,), _op="square")
    if out.requires_grad:
        out._grad_fn = lambda g: ((x, 2.0 * x.data * g),)
    return out


def relu(x) -> Tensor:
    """Elementwise max(x, 0); the subgradient at 0 is 0."""
    x = _as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0), _parents=(x,), _op="relu")
    if out.requires_grad:
        mask = x.data > 0.0
        out._grad_fn = lambda g: ((x, g * mask),)
    return out


def l2norm(x) -> Tensor:
    """Euclidean norm of the flattened tensor; gradient at 0 is defined as 0."""
    x = _as_tensor(x)
    n = float(np.sqrt(np.sum(x.data * x.data)))
    out = Tensor(n, _parents=(x,), _op="l2norm")
    if out.requires_grad:
        if n == 0.0:
            out._grad_fn = lambda g: ((x, np.zeros_like(x.data)),)
        else:
            out._grad_fn = lambda g: ((x, g * (x.data / n)),)
    return out


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.reshape(shape), _parents=(x,), _op="reshape")
    if out.requires_grad:
        out._grad_fn = lambda g: ((x, g.reshape(x.data.shape)),)
    return out


def slice_tensor(x, key) -> Tensor:
    """Basic indexing (ints/slices/Ellipsis); gradients scatter back into place."""
    x = _as_tensor(x)
    out = Tensor(x.data[key], _parents=(x,), _op="slice")
    if out.requires_grad:

        def _grad(g):
            gx = np.zeros_like(x.data)
            gx[key] = g
            return ((x, gx),)

        out._grad_fn = _grad
    return out


def conv2d(x, kernel, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of x[B,C,H,W] with kernel[K,C,h,w] plus optional bias[K]."""
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    bias = _as_tensor(bias) if bias is not None else None
    if x.ndim != 4:
        raise ValueError(f"conv2d: input must be [B,C,H,W], got shape {x.shape}")
    if kernel.ndim != 4:
        raise ValueError(f"conv2d: kernel must be [K,C,h,w], got shape {kernel.shape}")
    if x.shape[1] != kernel.shape[1]:
        raise ValueError(
            f"conv2d: input has {x.shape[1]} channels but kernel expects {kernel.shape[1]}"
        )
    if stride < 1 or int(stride) != stride:
        raise ValueError(f"conv2d: stride must be a positive int, got {stride}")
    if padding < 0:
        raise ValueError(f"conv2d: padding must be non-negative, got {padding}")
    h, w = kernel.shape[2], kernel.shape[3]
    hp, wp = x.shape[2] + 2 * padding, x.shape[3] + 2 * padding
    if h > hp or w > wp:
        raise ValueError(
            f"conv2d: kernel {h}x{w} larger than padded input {hp}x{wp}"
        )
    if bias is not None and bias.shape != (kernel.shape[0],):
        raise ValueError(
            f"conv2d: bias shape {bias.shape} does not match {kernel.shape[0]} output channels"
        )
    xp = (
        np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        if padding
        else x.data
    )
    xp = np.ascontiguousarray(xp)
    kdata = np.ascontiguousarray(kernel.data)
    y = conv2d_forward(xp, kdata, stride)
    if bias is not None:
        y = y + bias.data[None, :, None, None]
    parents = (x, kernel) if bias is None else (x, kernel, bias)
    out = Tensor(y, _parents=parents, _op="conv2d")
    if out.requires_grad:

        def _grad(g):
            g = np.ascontiguousarray(g)
            grads = []
            if x.requires_grad:
                gxp = conv2d_backward_input(g, kdata, xp.shape, stride)
                if padding:
                    gxp = gxp[:, :, padding:-padding, padding:-padding]
                grads.append((x, gxp))
            if kernel.requires_grad:
                grads.append((kernel, conv2d_backward_kernel(g, xp, (h, w), stride)))
            if bias is not None and bias.requires_grad:
                grads.append((bias, g.sum(axis=(0, 2, 3))))
            return grads

        out._grad_fn = _grad
    return out


def _pool_windows(x: np.ndarray, size: int, stride: int) -> np.ndarray:
    return sliding_window_view(x, (size, size), axis=(2, 3))[:, :, ::stride, ::stride]


def avg_pool2d(x, size: int, stride: int | None = None) -> Tensor:
    x = _as_tensor(x)
    stride = size if stride is None else stride
    if x.ndim != 4:
        raise ValueError(f"avg_pool2d: input must be [B,C,H,W], got shape {x.shape}")
    windows = _pool_windows(x.data, size, stride)
    out = Tensor(windows.mean(axis=(-2, -1)), _parents=(x,), _op="avg_pool2d")
    if out.requires_grad:
        ho, wo = out.shape[2], out.shape[3]

        def _grad(g):
            gx = np.zeros_like(x.data)
            share = g / (size * size)
            for i in range(size):
                for j in range(size):
                    gx[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += share
            return ((x, gx),)

        out._grad_fn = _grad
    return out


def max_pool2d(x, size: int, stride: int | None = None) -> Tensor:
    x = _as_tensor(x)
    stride = size if stride is None else stride
    if x.ndim != 4:
        raise ValueError(f"max_pool2d: input must be [B,C,H,W], got shape {x.shape}")
    windows = _pool_windows(x.data, size, stride)
    b, c, ho, wo = windows.shape[:4]
    flat = windows.reshape(b, c, ho, wo, size * size)
    argmax = flat.argmax(axis=-1)
    out = Tensor(np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0],
                 _parents=(x,), _op="max_pool2d")
    if out.requires_grad:
        bi, ci, oi, oj = np.meshgrid(
            np.arange(b), np.arange(c), np.arange(ho), np.arange(wo), indexing="ij"
        )
        ri = oi * stride + argmax // size
        rj = oj * stride + argmax % size

        def _grad(g):
            gx = np.zeros_like(x.data)
            np.add.at(gx, (bi, ci, ri, rj), g)
            return ((x, gx),)

        out._grad_fn = _grad
    return out


def extract_patches(x, size: int, stride: int) -> Tensor:
    """All size x size crops of x[C,H,W] at the given stride, as [B,C,size,size]."""
    x = _as_tensor(x)
    if x.ndim != 3:
        raise ValueError(f"extract_patches: input must be [C,H,W], got shape {x.shape}")
    windows = sliding_window_view(x.data, (size, size), axis=(1, 2))[:, ::stride, ::stride]
    c, ni, nj = windows.shape[:3]
    patches = windows.transpose(1, 2, 0, 3, 4).reshape(ni * nj, c, size, size).copy()
    out = Tensor(patches, _parents=(x,), _op="extract_patches")
    if out.requires_grad:

        def _grad(g):
            gx = np.zeros_like(x.data)
            for p in range(ni * nj):
                oi, oj = (p // nj) * stride, (p % nj) * stride
                gx[:, oi : oi + size, oj : oj + size] += g[p]
            return ((x, gx),)

        out._grad_fn = _grad
    return out


def add_n(terms: Iterable[Tensor]) -> Tensor:
    """Sum a sequence of same-shape tensors."""
    terms = list(terms)
    if not terms:
        raise ValueError("add_n: empty sequence")
    out = terms[0]
    for t in terms[1:]:
        out = add(out, t)
    return out


def colstack(columns: Iterable[Tensor]) -> Tensor:
    """Stack 1-D tensors of equal length as the columns of a [B, K] tensor."""
    columns = [_as_tensor(c) for c in columns]
    if not columns:
        raise ValueError("colstack: empty sequence")
    for c in columns:
        if c.ndim != 1 or c.shape != columns[0].shape:
            raise ValueError("colstack: all columns must be 1-D with equal length")
    out = Tensor(np.stack([c.data for c in columns], axis=1),
                 _parents=tuple(columns), _op="colstack")
    if out.requires_grad:
        out._grad_fn = lambda g: tuple((c, g[:, k]) for k, c in enumerate(columns))
    return out


# ---------------------------------------------------------------------------
# Spectral utilities (not part of the autodiff graph)


def rfft2(x) -> np.ndarray:
    """Full complex spectrum of a real 2-D image; DC bin equals the pixel sum."""
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"rfft2: expected a 2-D image, got shape {arr.shape}")
    return np.fft.fft2(arr)


def irfft2(spectrum, h: int, w: int) -> np.ndarray:
    """Inverse of rfft2 back to a real h x w image."""
    spec = np.asarray(spectrum, dtype=np.complex128)
    if spec.shape != (h, w):
        raise ValueError(f"irfft2: spectrum shape {spec.shape} does not match ({h}, {w})")
    return np.real(np.fft.ifft2(spec))
