"""Minimal reverse-mode automatic differentiation over numpy arrays.

BLAS note: the message-passing workload consists of many skinny matrix
products (inner dimension 16-48); multithreaded BLAS pools lose badly to
single-threaded execution there, so hot entry points scope BLAS to one
thread via ``single_thread_blas``.

The op set is exactly what the surrogate models and their losses need:
matmul, elementwise add/mul, concatenation, row gather/scatter against
incidence lists, GELU, reductions, and a hook (``apply_op``) for custom
differentiable physics maps. No broadcasting beyond row-bias addition; no
views of tapes across threads (a tape belongs to one worker).

Finiteness is enforced by construction rather than by per-op scans:
``finite_guard`` turns every invalid/overflowing floating-point event
into an immediate ``FloatingPointError`` at the op that produced it, and
``backward`` refuses non-finite losses.
"""

from __future__ import annotations

import contextlib
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

try:
    from threadpoolctl import threadpool_limits as _threadpool_limits
except ImportError:                        # pragma: no cover
    _threadpool_limits = None

from ..errors import GraphCycle, ShapeMismatch
from . import kernels


@contextlib.contextmanager
def finite_guard():
    """Raise ``FloatingPointError`` the moment any op produces NaN/Inf."""
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        yield


@contextlib.contextmanager
def single_thread_blas():
    """Pin BLAS pools to one thread for skinny-matmul hot loops."""
    if _threadpool_limits is None:
        yield
        return
    with _threadpool_limits(limits=1, user_api="blas"):
        yield


class Tensor:
    """A node of the recorded computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 parents: Tuple["Tensor", ...] = (),
                 backward: Optional[Callable] = None,
                 grad_buffer: Optional[np.ndarray] = None,
                 trusted: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        if not trusted and not parents and \
                not np.all(np.isfinite(self.data)):
            raise FloatingPointError("tensor initialized with non-finite data")
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.grad = grad_buffer

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor)
                   else -np.asarray(other, dtype=np.float64))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def _as_const(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


def apply_op(data: np.ndarray, parents: Sequence[Tensor],
             backward: Callable[[np.ndarray], None]) -> Tensor:
    """Record a custom op. ``backward(g)`` must accumulate into the parents
    via their ``_accumulate``. Ops whose parents are all constant collapse
    to constants (no recording)."""
    parents = tuple(p for p in parents if isinstance(p, Tensor))
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents,
                      backward=backward)
    # Outputs of ops on finite inputs stay finite under finite_guard;
    # skip the redundant scan.
    return Tensor(data, trusted=True)


def add(a: Tensor, b) -> Tensor:
    """a + b for same-shape tensors, a row bias (k,) against (N, k), or a
    scalar/ndarray constant."""
    if not isinstance(b, Tensor):
        out = a.data + _as_const(b)

        def bw(g):
            a._accumulate(g)
        return apply_op(out, (a,), bw)
    if a.data.shape == b.data.shape:
        out = a.data + b.data

        def bw(g):
            if a.requires_grad:
                a._accumulate(g)
            if b.requires_grad:
                b._accumulate(g)
        return apply_op(out, (a, b), bw)
    if a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
        out = a.data + b.data

        def bw(g):
            if a.requires_grad:
                a._accumulate(g)
            if b.requires_grad:
                b._accumulate(g.sum(axis=0))
        return apply_op(out, (a, b), bw)
    raise ShapeMismatch(f"add: {a.data.shape} vs {b.data.shape}")


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product with a tensor (same shape) or a constant."""
    if not isinstance(b, Tensor):
        const = _as_const(b)
        out = a.data * const

        def bw(g):
            a._accumulate(g * const)
        return apply_op(out, (a,), bw)
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"mul: {a.data.shape} vs {b.data.shape}")
    out = a.data * b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)
    return apply_op(out, (a, b), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(f"matmul: {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)
    return apply_op(out, (a, b), bw)


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Column-wise concatenation of 2-D tensors with equal row counts."""
    rows = {p.data.shape[0] for p in parts}
    if len(rows) != 1 or any(p.data.ndim != 2 for p in parts):
        raise ShapeMismatch("concat requires 2-D tensors with equal rows")
    out = np.concatenate([p.data for p in parts], axis=1)
    widths = [p.data.shape[1] for p in parts]

    def bw(g):
        offset = 0
        for p, w in zip(parts, widths):
            if p.requires_grad:
                p._accumulate(g[:, offset:offset + w])
            offset += w
    return apply_op(out, tuple(parts), bw)


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """Row gather x[index]; backward scatter-adds into the source rows."""
    index = np.asarray(index, dtype=np.int64)
    out = x.data[index]
    n_rows = x.data.shape[0]

    def bw(g):
        x._accumulate(kernels.scatter_add(n_rows, index,
                                          np.ascontiguousarray(g)))
    return apply_op(out, (x,), bw)


def scatter_rows(x: Tensor, index: np.ndarray, n_rows: int) -> Tensor:
    """Sum rows of ``x`` into ``n_rows`` buckets (incidence-list pooling);
    rows with no contribution are zero. Backward gathers."""
    index = np.asarray(index, dtype=np.int64)
    out = kernels.scatter_add(n_rows, index, np.ascontiguousarray(x.data))

    def bw(g):
        x._accumulate(g[index])
    return apply_op(out, (x,), bw)


def gather_concat(e: Tensor, v: Tensor, src: np.ndarray,
                  tgt: np.ndarray) -> Tensor:
    """Fused [e | v[src] | v[tgt]] over directed edges."""
    if e.data.shape[0] != len(src) or len(src) != len(tgt):
        raise ShapeMismatch("gather_concat: edge count mismatch")
    out = kernels.gather_concat(np.ascontiguousarray(e.data),
                                np.ascontiguousarray(v.data), src, tgt)
    l_e = e.data.shape[1]
    l_v = v.data.shape[1]
    n = v.data.shape[0]

    def bw(g):
        g = np.ascontiguousarray(g)
        if e.requires_grad:
            e._accumulate(g[:, :l_e])
        if v.requires_grad:
            v._accumulate(kernels.scatter_add(
                n, src, np.ascontiguousarray(g[:, l_e:l_e + l_v])))
            v._accumulate(kernels.scatter_add(
                n, tgt, np.ascontiguousarray(g[:, l_e + l_v:])))
    return apply_op(out, (e, v), bw)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    out = x.data[start:stop]

    def bw(g):
        full = np.zeros_like(x.data)
        full[start:stop] = g
        x._accumulate(full)
    return apply_op(out, (x,), bw)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fused affine map x @ w + b (row bias)."""
    if x.data.ndim != 2 or x.data.shape[1] != w.data.shape[0] or \
            b.data.shape != (w.data.shape[1],):
        raise ShapeMismatch(
            f"linear: {x.data.shape} @ {w.data.shape} + {b.data.shape}")
    out = kernels.linear_bias(x.data, w.data, b.data)

    def bw(g):
        if x.requires_grad:
            x._accumulate(g @ w.data.T)
        if w.requires_grad:
            w._accumulate(x.data.T @ g)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0))
    return apply_op(out, (x, w, b), bw)


def fused_edge_input(e: Tensor, w_cat: Tensor, b: Tensor, p_src: Tensor,
                     p_tgt: Tensor, src: np.ndarray,
                     tgt: np.ndarray) -> Tensor:
    """First affine layer of the edge block without materializing the
    (edges, 3*latent) concatenation: e @ w + b + p_src[src] + p_tgt[tgt],
    with p_src/p_tgt the endpoint-state projections (node rows)."""
    n = p_src.data.shape[0]
    out = kernels.edge_update(e.data, w_cat.data, b.data, p_src.data,
                              p_tgt.data, src, tgt)

    def bw(g):
        g = np.ascontiguousarray(g)
        if e.requires_grad:
            e._accumulate(g @ w_cat.data.T)
        if w_cat.requires_grad:
            w_cat._accumulate(e.data.T @ g)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0))
        if p_src.requires_grad:
            p_src._accumulate(kernels.scatter_add(n, src, g))
        if p_tgt.requires_grad:
            p_tgt._accumulate(kernels.scatter_add(n, tgt, g))
    return apply_op(out, (e, w_cat, b, p_src, p_tgt), bw)


def spmm(matrix, x: Tensor) -> Tensor:
    """Product of a constant symmetric sparse matrix with a dense tensor
    (undirected-adjacency pooling); backward reuses the same matrix."""
    out = np.asarray(matrix @ x.data)

    def bw(g):
        x._accumulate(np.asarray(matrix @ g))
    return apply_op(out, (x,), bw)


def gelu(x: Tensor) -> Tensor:
    out = kernels.gelu(np.ascontiguousarray(x.data))

    def bw(g):
        x._accumulate(kernels.gelu_grad(np.ascontiguousarray(x.data),
                                        np.ascontiguousarray(g)))
    return apply_op(out, (x,), bw)


def total_sum(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum())

    def bw(g):
        x._accumulate(np.broadcast_to(g, x.data.shape).copy()
                      if np.ndim(g) == 0 else g * np.ones_like(x.data))
    return apply_op(out, (x,), bw)


def sum_squares(x: Tensor) -> Tensor:
    """Squared Euclidean norm of all entries (scalar)."""
    flat = x.data.ravel()
    out = np.asarray(flat @ flat)

    def bw(g):
        x._accumulate(2.0 * float(g) * x.data)
    return apply_op(out, (x,), bw)


def backward(loss: Tensor) -> None:
    """Reverse sweep populating gradients of every parameter reachable from
    a scalar loss."""
    if loss.data.shape != ():
        raise ShapeMismatch("backward expects a scalar loss")
    if not np.isfinite(loss.data):
        raise FloatingPointError("loss is not finite")
    order = _topological(loss)
    loss.grad = np.asarray(1.0)
    with finite_guard():
        for node in order:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            # interior activations are not needed after their sweep
            if node._parents and node is not loss:
                node.grad = None


def _topological(root: Tensor) -> List[Tensor]:
    """Reverse topological order (root first) via iterative DFS.

    The recorded graph is acyclic by construction; a back-edge check is
    kept as a defensive invariant.
    """
    order: List[Tensor] = []
    state = {}          # id -> 1 (in progress) | 2 (done)
    stack = [(root, iter(root._parents))]
    state[id(root)] = 1
    while stack:
        node, parents = stack[-1]
        advanced = False
        for parent in parents:
            if not parent.requires_grad:
                continue
            s = state.get(id(parent))
            if s == 1:
                raise GraphCycle("recorded graph contains a cycle")
            if s is None:
                state[id(parent)] = 1
                stack.append((parent, iter(parent._parents)))
                advanced = True
                break
        if not advanced:
            state[id(node)] = 2
            order.append(node)
            stack.pop()
    order.reverse()
    return order
