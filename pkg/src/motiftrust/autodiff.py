"""Minimal dense 2-D tensor engine with reverse-mode automatic differentiation.

Everything is a 64-bit float matrix.  Operations record parent links; calling
`backward` on a scalar result topologically sorts the recorded graph (the
tape) and sweeps it once in reverse, accumulating gradients into every
reachable leaf.  Sparse graph operators (adjacency, masked adjacency) enter
as constant scipy matrices and never receive gradients; the motif matrix is
the one graph-valued input that does, via the COO-valued ops at the bottom.
"""

import contextlib

import numpy as np

FINITE_CHECKS = True

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (evaluation passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class FiniteError(FloatingPointError):
    """A forward op produced NaN/Inf; message names the op."""


def _finite(arr, op):
    if FINITE_CHECKS and not np.all(np.isfinite(arr)):
        raise FiniteError(f"non-finite values out of {op}")
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() needs a single-element tensor")
        return float(self.data.reshape(-1)[0])

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _make(data, parents, backward_fn, op):
    out = Tensor(_finite(data, op))
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


# --- core ops -----------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(out):
        if a.requires_grad:
            a.accumulate(out.grad @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ out.grad)

    return _make(out_data, (a, b), backward, "matmul")


def spmm(s, d: Tensor) -> Tensor:
    """Constant sparse matrix times dense tensor; no gradient to `s`."""
    if s.shape[1] != d.shape[0]:
        raise ValueError(f"spmm shape mismatch {s.shape} @ {d.shape}")
    out_data = s @ d.data

    def backward(out):
        if d.requires_grad:
            d.accumulate(s.T @ out.grad)

    return _make(out_data, (d,), backward, "spmm")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; `b` may be a 1-row bias broadcast over rows of `a`."""
    broadcast = b.shape[0] == 1 and a.shape[0] != 1
    if a.shape[1] != b.shape[1] or (not broadcast and a.shape[0] != b.shape[0]):
        raise ValueError(f"add shape mismatch {a.shape} + {b.shape}")
    out_data = a.data + b.data

    def backward(out):
        if a.requires_grad:
            a.accumulate(out.grad)
        if b.requires_grad:
            b.accumulate(out.grad.sum(axis=0, keepdims=True) if broadcast else out.grad)

    return _make(out_data, (a, b), backward, "add")


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"hadamard shape mismatch {a.shape} * {b.shape}")
    out_data = a.data * b.data

    def backward(out):
        if a.requires_grad:
            a.accumulate(out.grad * b.data)
        if b.requires_grad:
            b.accumulate(out.grad * a.data)

    return _make(out_data, (a, b), backward, "hadamard")


def affine(x: Tensor, scale_const: float = 1.0, shift_const: float = 0.0) -> Tensor:
    out_data = scale_const * x.data + shift_const

    def backward(out):
        if x.requires_grad:
            x.accumulate(scale_const * out.grad)

    return _make(out_data, (x,), backward, "affine")


def scale_by(x: Tensor, s: Tensor) -> Tensor:
    """Multiply a matrix by a learnable 1x1 scalar."""
    if s.shape != (1, 1):
        raise ValueError("scale_by expects a 1x1 scalar tensor")
    out_data = x.data * s.data[0, 0]

    def backward(out):
        if x.requires_grad:
            x.accumulate(out.grad * s.data[0, 0])
        if s.requires_grad:
            s.accumulate(np.array([[float(np.sum(out.grad * x.data))]]))

    return _make(out_data, (x, s), backward, "scale_by")


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0.0)

    def backward(out):
        if x.requires_grad:
            x.accumulate(out.grad * (x.data > 0.0))

    return _make(out_data, (x,), backward, "relu")


def sigmoid(x: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-x.data))

    def backward(out):
        if x.requires_grad:
            x.accumulate(out.grad * out_data * (1.0 - out_data))

    return _make(out_data, (x,), backward, "sigmoid")


def power(x: Tensor, exponent: float, floor: float = 0.0) -> Tensor:
    """Elementwise x**exponent with an optional positivity floor.

    Entries at or below `floor` are clamped before the power and receive zero
    gradient (guards the normalization against nonpositive row sums while a
    learnable combination weight wanders negative).
    """
    clamped = np.maximum(x.data, floor) if floor > 0.0 else x.data
    out_data = clamped ** exponent

    def backward(out):
        if x.requires_grad:
            g = exponent * clamped ** (exponent - 1.0) * out.grad
            if floor > 0.0:
                g = g * (x.data > floor)
            x.accumulate(g)

    return _make(out_data, (x,), backward, "power")


def concat_cols(tensors) -> Tensor:
    tensors = list(tensors)
    rows = tensors[0].shape[0]
    if any(t.shape[0] != rows for t in tensors):
        raise ValueError("concat_cols: row counts differ")
    out_data = np.concatenate([t.data for t in tensors], axis=1)
    offsets = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward(out):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                t.accumulate(out.grad[:, lo:hi])

    return _make(out_data, tuple(tensors), backward, "concat_cols")


def dropout(x: Tensor, p: float, rng, training: bool) -> Tensor:
    """Inverted dropout; identity object in eval mode (bitwise, by contract)."""
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    out_data = x.data * mask

    def backward(out):
        if x.requires_grad:
            x.accumulate(out.grad * mask)

    return _make(out_data, (x,), backward, "dropout")


def row_softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out_data = e / e.sum(axis=1, keepdims=True)

    def backward(out):
        if x.requires_grad:
            g = out.grad
            s = out_data
            x.accumulate(s * (g - (g * s).sum(axis=1, keepdims=True)))

    return _make(out_data, (x,), backward, "row_softmax")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of the integer class labels."""
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(y) == 0:
        raise ValueError("cross_entropy: empty label set")
    if len(y) != logits.shape[0]:
        raise ValueError("cross_entropy: label count != logit rows")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logz
    out_data = np.array([[-logp[np.arange(len(y)), y].mean()]])

    def backward(out):
        if logits.requires_grad:
            soft = np.exp(logp)
            soft[np.arange(len(y)), y] -= 1.0
            logits.accumulate(out.grad[0, 0] * soft / len(y))

    return _make(out_data, (logits,), backward, "cross_entropy")


def sum_all(x: Tensor) -> Tensor:
    out_data = np.array([[float(x.data.sum())]])

    def backward(out):
        if x.requires_grad:
            x.accumulate(np.full(x.shape, out.grad[0, 0]))

    return _make(out_data, (x,), backward, "sum_all")


def gather_rows(x: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    out_data = x.data[idx]

    def backward(out):
        if x.requires_grad:
            g = np.zeros_like(x.data)
            np.add.at(g, idx, out.grad)
            x.accumulate(g)

    return _make(out_data, (x,), backward, "gather_rows")


def scatter_rows(x: Tensor, idx, num_rows: int) -> Tensor:
    """out[i] = sum of x rows whose index maps to i."""
    idx = np.asarray(idx, dtype=np.int64)
    out_data = np.zeros((num_rows, x.shape[1]))
    np.add.at(out_data, idx, x.data)

    def backward(out):
        if x.requires_grad:
            x.accumulate(out.grad[idx])

    return _make(out_data, (x,), backward, "scatter_rows")


def spmm_coo(rows, cols, offdiag: Tensor, diag: Tensor, x: Tensor) -> Tensor:
    """(sparse COO with learnable values, plus a diagonal) times dense.

    out[i] = sum_k [rows[k] == i] offdiag[k] * x[cols[k]]  +  diag[i] * x[i]

    Both value vectors are column tensors and receive gradients; the index
    structure is fixed.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if offdiag.shape != (len(rows), 1) or diag.shape != (x.shape[0], 1):
        raise ValueError("spmm_coo: value/index shape mismatch")
    out_data = diag.data * x.data
    np.add.at(out_data, rows, offdiag.data * x.data[cols])

    def backward(out):
        g = out.grad
        if offdiag.requires_grad:
            offdiag.accumulate((g[rows] * x.data[cols]).sum(axis=1, keepdims=True))
        if diag.requires_grad:
            diag.accumulate((g * x.data).sum(axis=1, keepdims=True))
        if x.requires_grad:
            gx = diag.data * g
            np.add.at(gx, cols, offdiag.data * g[rows])
            x.accumulate(gx)

    return _make(out_data, (offdiag, diag, x), backward, "spmm_coo")


# --- backward sweep -------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Reverse-sweep the tape rooted at a scalar loss.

    Visits each recorded node exactly once in reverse topological order and
    releases intermediate gradient buffers as soon as they are consumed.
    """
    if loss.shape != (1, 1):
        raise ValueError("backward requires a scalar (1x1) loss")
    tape = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            tape.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))

    loss.accumulate(np.ones((1, 1)))
    for node in reversed(tape):
        if node._backward is not None and node.grad is not None:
            node._backward(node)
        if node._parents:
            node.grad = None  # free intermediate buffers


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


# --- graph normalization helper --------------------------------------------------

def sym_normalize(adj, add_self_loops: bool = True):
    """D^-1/2 (A + I) D^-1/2 as a constant CSR matrix."""
    import scipy.sparse as sp

    n = adj.shape[0]
    a = adj.tocsr().astype(np.float64)
    if add_self_loops:
        a = a + sp.identity(n, format="csr")
    deg = np.asarray(a.sum(axis=1)).reshape(-1)
    with np.errstate(divide="ignore"):
        dinv = 1.0 / np.sqrt(deg)
    dinv[~np.isfinite(dinv)] = 0.0
    d = sp.diags(dinv)
    return (d @ a @ d).tocsr()
