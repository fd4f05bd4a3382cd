"""Flat float64 tensors with reverse-mode automatic differentiation.

Tensors are immutable once created (ops return fresh tensors; slices copy),
which is what makes the backward closures safe to capture forward values.
Gradients of intermediate tensors are transient buffers dropped at the end of
each backward pass; Param gradients persist and accumulate until zero_grads.
"""

import threading
from array import array
from contextlib import contextmanager
from math import isfinite

from ..kernels import (
    BACKEND,
    NEG_MASK,
)
from .. import kernels as K

__all__ = [
    "BACKEND",
    "Tensor",
    "Param",
    "no_grad",
    "is_grad_enabled",
    "zero_grads",
    "tensor",
    "zeros",
    "full",
    "scalar",
    "matmul",
    "bmm_nn",
    "bmm_nt",
    "add",
    "sub",
    "mul",
    "scale",
    "row_scale",
    "col_scale",
    "add_rowvec",
    "outer",
    "sigmoid",
    "tanh",
    "relu",
    "softmax",
    "layer_norm",
    "cross_entropy",
    "causal_mask",
    "take_rows",
    "index_select",
    "concat_cols",
    "concat_rows",
    "slice_rows",
    "slice_cols",
    "reshape",
    "sum_all",
    "mean_all",
]

_state = threading.local()


def is_grad_enabled():
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


def _zeros(n):
    return array("d", bytes(8 * n))


def _prod(shape):
    n = 1
    for d in shape:
        n *= d
    return n


class Tensor:
    """Row-major float64 tensor; shape () is a scalar."""

    __slots__ = ("shape", "data", "_parents", "_bwd", "_g", "_fin")

    def __init__(self, shape, data):
        shape = tuple(shape)
        if any(d < 1 for d in shape):
            raise ValueError(f"tensor: non-positive dimension in shape {shape}")
        if _prod(shape) != len(data):
            raise ValueError(
                f"tensor: shape {shape} wants {_prod(shape)} entries, data has {len(data)}"
            )
        self.shape = shape
        self.data = data
        self._parents = ()
        self._bwd = None
        self._g = None
        self._fin = False

    @property
    def size(self):
        return len(self.data)

    def item(self):
        if len(self.data) != 1:
            raise ValueError(f"item: tensor of shape {self.shape} is not a scalar")
        return self.data[0]

    def tolist(self):
        def build(dim, off, step):
            if dim == len(self.shape):
                return self.data[off]
            n = self.shape[dim]
            inner = step // n
            return [build(dim + 1, off + i * inner, inner) for i in range(n)]

        return build(0, 0, len(self.data))

    def copy(self):
        return Tensor(self.shape, array("d", self.data))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, backend={BACKEND})"

    # operator sugar; the heavy lifting lives in the module-level ops
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def softmax(self):
        return softmax(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)

    def backward(self):
        """Propagate d(self)/d(everything) through the tape.

        Param grads accumulate across calls; intermediate grad buffers are
        dropped when the pass finishes.
        """
        if self.shape != ():
            raise ValueError(
                f"backward: requires a scalar, got shape {self.shape}"
            )
        order = _topo(self)
        _gbuf(self)[0] += 1.0
        for node in reversed(order):
            if node._bwd is not None and node._g is not None:
                node._bwd(node._g)
        for node in order:
            if not isinstance(node, Param):
                node._g = None


class Param(Tensor):
    """Trainable tensor with a persistent, accumulating gradient buffer."""

    __slots__ = ("name", "grad")

    def __init__(self, name, shape, data):
        super().__init__(shape, data)
        self.name = name
        self.grad = _zeros(len(self.data))
        self._g = self.grad

    def zero_grad(self):
        K.fill(self.grad, 0.0, len(self.grad))

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.shape})"


def zero_grads(params):
    for p in params:
        p.zero_grad()


def _topo(root):
    """Post-order over the tape: every node appears after its parents."""
    order = []
    seen = {id(root)}
    stack = [(root, iter(root._parents))]
    while stack:
        node, it = stack[-1]
        pushed = False
        for p in it:
            if id(p) not in seen:
                seen.add(id(p))
                stack.append((p, iter(p._parents)))
                pushed = True
                break
        if not pushed:
            order.append(node)
            stack.pop()
    return order


def _gbuf(t):
    if t._g is None:
        t._g = _zeros(len(t.data))
    return t._g


def _require_finite(tag, *tensors):
    for t in tensors:
        if not t._fin:
            if not K.all_finite(t.data, len(t.data)):
                raise ValueError(f"{tag}: non-finite values in operand of shape {t.shape}")
            t._fin = True


# -- constructors -------------------------------------------------------------


def tensor(obj):
    """Build a tensor from a number or (nested) list of numbers."""
    if isinstance(obj, (int, float)):
        return Tensor((), array("d", [float(obj)]))
    shape = []
    cur = obj
    while isinstance(cur, (list, tuple)):
        shape.append(len(cur))
        cur = cur[0] if cur else None
    flat = array("d")

    def rec(x, depth):
        if depth == len(shape):
            flat.append(float(x))
            return
        if not isinstance(x, (list, tuple)) or len(x) != shape[depth]:
            raise ValueError("tensor: ragged nested list")
        for e in x:
            rec(e, depth + 1)

    rec(obj, 0)
    return Tensor(tuple(shape), flat)


def zeros(shape):
    return Tensor(shape, _zeros(_prod(tuple(shape))))


def full(shape, value):
    shape = tuple(shape)
    return Tensor(shape, array("d", [float(value)] * _prod(shape)))


def scalar(value):
    return Tensor((), array("d", [float(value)]))


# -- matmul family -------------------------------------------------------------


def matmul(a, b):
    if len(a.shape) != 2 or len(b.shape) != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    _require_finite("matmul", a, b)
    m, n = a.shape
    p = b.shape[1]
    data = _zeros(m * p)
    K.bmm_nn(a.data, b.data, data, 1, m, n, p)
    out = Tensor((m, p), data)
    if is_grad_enabled():
        def bwd(go):
            K.bmm_nt_acc(go, b.data, _gbuf(a), 1, m, p, n)
            K.bmm_tn_acc(a.data, go, _gbuf(b), 1, m, n, p)

        out._parents = (a, b)
        out._bwd = bwd
    return out


def bmm_nn(a, b):
    """Per-group A[q] @ B[q] with a: [g,m,n], b: [g,n,p]."""
    if (
        len(a.shape) != 3
        or len(b.shape) != 3
        or a.shape[0] != b.shape[0]
        or a.shape[2] != b.shape[1]
    ):
        raise ValueError(f"bmm_nn: shape mismatch {a.shape} @ {b.shape}")
    _require_finite("bmm_nn", a, b)
    g, m, n = a.shape
    p = b.shape[2]
    data = _zeros(g * m * p)
    K.bmm_nn(a.data, b.data, data, g, m, n, p)
    out = Tensor((g, m, p), data)
    if is_grad_enabled():
        def bwd(go):
            K.bmm_nt_acc(go, b.data, _gbuf(a), g, m, p, n)
            K.bmm_tn_acc(a.data, go, _gbuf(b), g, m, n, p)

        out._parents = (a, b)
        out._bwd = bwd
    return out


def bmm_nt(a, b):
    """Per-group A[q] @ B[q].T with a: [g,m,n], b: [g,p,n]."""
    if (
        len(a.shape) != 3
        or len(b.shape) != 3
        or a.shape[0] != b.shape[0]
        or a.shape[2] != b.shape[2]
    ):
        raise ValueError(f"bmm_nt: shape mismatch {a.shape} vs {b.shape}")
    _require_finite("bmm_nt", a, b)
    g, m, n = a.shape
    p = b.shape[1]
    data = _zeros(g * m * p)
    K.bmm_nt(a.data, b.data, data, g, m, n, p)
    out = Tensor((g, m, p), data)
    if is_grad_enabled():
        def bwd(go):
            K.bmm_nn_acc(go, b.data, _gbuf(a), g, m, p, n)
            K.bmm_tn_acc(go, a.data, _gbuf(b), g, m, p, n)

        out._parents = (a, b)
        out._bwd = bwd
    return out


# -- elementwise ---------------------------------------------------------------


def _ew(tag, a, b, kern):
    if a.shape != b.shape:
        raise ValueError(f"{tag}: shape mismatch {a.shape} vs {b.shape}")
    _require_finite(tag, a, b)
    data = _zeros(len(a.data))
    kern(a.data, b.data, data, len(a.data))
    return Tensor(a.shape, data)


def add(a, b):
    out = _ew("add", a, b, K.ew_add)
    if is_grad_enabled():
        n = len(a.data)

        def bwd(go):
            K.axpy(_gbuf(a), go, n)
            K.axpy(_gbuf(b), go, n)

        out._parents = (a, b)
        out._bwd = bwd
    return out


def sub(a, b):
    out = _ew("sub", a, b, K.ew_sub)
    if is_grad_enabled():
        n = len(a.data)

        def bwd(go):
            K.axpy(_gbuf(a), go, n)
            K.axpy_neg(_gbuf(b), go, n)

        out._parents = (a, b)
        out._bwd = bwd
    return out


def mul(a, b):
    out = _ew("mul", a, b, K.ew_mul)
    if is_grad_enabled():
        n = len(a.data)

        def bwd(go):
            K.fma_acc(_gbuf(a), go, b.data, n)
            K.fma_acc(_gbuf(b), go, a.data, n)

        out._parents = (a, b)
        out._bwd = bwd
    return out


def scale(a, alpha):
    alpha = float(alpha)
    if not isfinite(alpha):
        raise ValueError(f"scale: non-finite factor {alpha!r}")
    _require_finite("scale", a)
    n = len(a.data)
    data = _zeros(n)
    K.ew_scale(a.data, alpha, data, n)
    out = Tensor(a.shape, data)
    if is_grad_enabled():
        def bwd(go):
            K.axpy_scaled(_gbuf(a), go, alpha, n)

        out._parents = (a,)
        out._bwd = bwd
    return out


# -- broadcast scale / bias ------------------------------------------------------


def row_scale(a, v):
    """out[..., j] = a[..., j] * v[j]; v spans the last dim."""
    if len(a.shape) < 1 or len(v.shape) != 1 or v.shape[0] != a.shape[-1]:
        raise ValueError(f"row_scale: shape mismatch {a.shape} by {v.shape}")
    _require_finite("row_scale", a, v)
    n = a.shape[-1]
    m = len(a.data) // n
    data = _zeros(m * n)
    K.row_scale(a.data, v.data, data, m, n)
    out = Tensor(a.shape, data)
    if is_grad_enabled():
        def bwd(go):
            K.row_scale_acc(go, v.data, _gbuf(a), m, n)
            K.colreduce_mul_acc(go, a.data, _gbuf(v), m, n)

        out._parents = (a, v)
        out._bwd = bwd
    return out


def col_scale(a, v):
    """out[i, j] = a[i, j] * v[i]; v spans the first dim."""
    if len(a.shape) != 2 or len(v.shape) != 1 or v.shape[0] != a.shape[0]:
        raise ValueError(f"col_scale: shape mismatch {a.shape} by {v.shape}")
    _require_finite("col_scale", a, v)
    m, n = a.shape
    data = _zeros(m * n)
    K.col_scale(a.data, v.data, data, m, n)
    out = Tensor(a.shape, data)
    if is_grad_enabled():
        def bwd(go):
            K.col_scale_acc(go, v.data, _gbuf(a), m, n)
            K.rowreduce_mul_acc(go, a.data, _gbuf(v), m, n)

        out._parents = (a, v)
        out._bwd = bwd
    return out


def add_rowvec(a, v):
    """out[..., j] = a[..., j] + v[j]; the bias broadcast every affine map needs."""
    if len(a.shape) < 1 or len(v.shape) != 1 or v.shape[0] != a.shape[-1]:
        raise ValueError(f"add_rowvec: shape mismatch {a.shape} plus {v.shape}")
    _require_finite("add_rowvec", a, v)
    n = a.shape[-1]
    m = len(a.data) // n
    data = _zeros(m * n)
    K.add_rowvec(a.data, v.data, data, m, n)
    out = Tensor(a.shape, data)
    if is_grad_enabled():
        def bwd(go):
            K.axpy(_gbuf(a), go, m * n)
            K.colsum_acc(go, _gbuf(v), m, n)

        out._parents = (a, v)
        out._bwd = bwd
    return out


def outer(u, v):
    if len(u.shape) != 1 or len(v.shape) != 1:
        raise ValueError(f"outer: wants two vectors, got {u.shape} and {v.shape}")
    _require_finite("outer", u, v)
    m = u.shape[0]
    n = v.shape[0]
    data = _zeros(m * n)
    K.outer(u.data, v.data, data, m, n)
    out = Tensor((m, n), data)
    if is_grad_enabled():
        def bwd(go):
            K.bmm_nn_acc(go, v.data, _gbuf(u), 1, m, n, 1)
            K.bmm_tn_acc(go, u.data, _gbuf(v), 1, m, n, 1)

        out._parents = (u, v)
        out._bwd = bwd
    return out


# -- activations -----------------------------------------------------------------


def _act(tag, a, fwd_kern, bwd_kern):
    _require_finite(tag, a)
    n = len(a.data)
    data = _zeros(n)
    fwd_kern(a.data, data, n)
    out = Tensor(a.shape, data)
    if is_grad_enabled():
        ydata = data

        def bwd(go):
            bwd_kern(ydata, go, _gbuf(a), n)

        out._parents = (a,)
        out._bwd = bwd
    return out


def sigmoid(a):
    return _act("sigmoid", a, K.sigmoid_fwd, K.sigmoid_bwd_acc)


def tanh(a):
    return _act("tanh", a, K.tanh_fwd, K.tanh_bwd_acc)


def relu(a):
    return _act("relu", a, K.relu_fwd, K.relu_bwd_acc)


def softmax(a):
    """Softmax over the last dimension, max-subtracted per row."""
    if len(a.shape) < 1:
        raise ValueError(f"softmax: wants at least one dim, got shape {a.shape}")
    _require_finite("softmax", a)
    cols = a.shape[-1]
    rows = len(a.data) // cols
    data = _zeros(rows * cols)
    K.softmax_lastdim(a.data, data, rows, cols)
    out = Tensor(a.shape, data)
    if is_grad_enabled():
        ydata = data

        def bwd(go):
            K.softmax_bwd_acc(ydata, go, _gbuf(a), rows, cols)

        out._parents = (a,)
        out._bwd = bwd
    return out


# -- normalization -----------------------------------------------------------------


def layer_norm(x, gain, bias, eps=1e-5):
    """Per-row mean/variance normalization with learned gain and bias."""
    if len(x.shape) < 1 or len(gain.shape) != 1 or len(bias.shape) != 1:
        raise ValueError(
            f"layer_norm: shape mismatch {x.shape} with gain {gain.shape}, bias {bias.shape}"
        )
    cols = x.shape[-1]
    if gain.shape[0] != cols or bias.shape[0] != cols:
        raise ValueError(
            f"layer_norm: shape mismatch {x.shape} with gain {gain.shape}, bias {bias.shape}"
        )
    _require_finite("layer_norm", x, gain, bias)
    rows = len(x.data) // cols
    data = _zeros(rows * cols)
    xhat = _zeros(rows * cols)
    inv_std = _zeros(rows)
    K.layer_norm_fwd(x.data, gain.data, bias.data, data, xhat, inv_std, rows, cols, eps)
    out = Tensor(x.shape, data)
    if is_grad_enabled():
        def bwd(go):
            K.layer_norm_bwd_acc(
                xhat, inv_std, gain.data, go,
                _gbuf(x), _gbuf(gain), _gbuf(bias), rows, cols,
            )

        out._parents = (x, gain, bias)
        out._bwd = bwd
    return out


# -- loss ----------------------------------------------------------------------------


def cross_entropy(logits, targets, pad_id):
    """Mean negative log-likelihood over non-pad rows of [T, V] logits."""
    if len(logits.shape) != 2:
        raise ValueError(f"cross_entropy: wants [T, V] logits, got shape {logits.shape}")
    rows, cols = logits.shape
    if len(targets) != rows:
        raise ValueError(
            f"cross_entropy: {rows} logit rows but {len(targets)} targets"
        )
    tq = targets if isinstance(targets, array) else array("q", targets)
    for t in tq:
        if t != pad_id and not (0 <= t < cols):
            raise ValueError(f"cross_entropy: target {t} outside [0, {cols})")
    _require_finite("cross_entropy", logits)
    probs = _zeros(rows * cols)
    loss_sum, count = K.cross_entropy_fwd(logits.data, tq, pad_id, rows, cols, probs)
    if count == 0:
        raise ValueError("cross_entropy: every position is padding")
    out = Tensor((), array("d", [loss_sum / count]))
    if is_grad_enabled():
        def bwd(go):
            K.cross_entropy_bwd_acc(
                probs, tq, pad_id, rows, cols, go[0] / count, _gbuf(logits)
            )

        out._parents = (logits,)
        out._bwd = bwd
    return out


# -- masking -------------------------------------------------------------------------


def causal_mask(a):
    """Set entries above the diagonal of each [T, T] block to a large negative."""
    if len(a.shape) == 2:
        g, t0, t1 = 1, a.shape[0], a.shape[1]
    elif len(a.shape) == 3:
        g, t0, t1 = a.shape
    else:
        raise ValueError(f"causal_mask: wants [T,T] or [G,T,T], got shape {a.shape}")
    if t0 != t1:
        raise ValueError(f"causal_mask: wants square blocks, got shape {a.shape}")
    _require_finite("causal_mask", a)
    data = _zeros(g * t0 * t0)
    K.causal_mask(a.data, data, g, t0)
    out = Tensor(a.shape, data)
    if is_grad_enabled():
        def bwd(go):
            K.causal_mask_bwd_acc(go, _gbuf(a), g, t0)

        out._parents = (a,)
        out._bwd = bwd
    return out


# -- gather / layout ------------------------------------------------------------------


def take_rows(src, ids):
    """Gather rows of a [R, D] tensor; duplicate ids accumulate in the gradient."""
    if len(src.shape) != 2:
        raise ValueError(f"take_rows: wants a matrix, got shape {src.shape}")
    rows, d = src.shape
    idq = ids if isinstance(ids, array) else array("q", ids)
    for i in idq:
        if not (0 <= i < rows):
            raise ValueError(f"take_rows: row id {i} outside [0, {rows})")
    _require_finite("take_rows", src)
    nids = len(idq)
    data = _zeros(nids * d)
    K.take_rows(src.data, idq, data, nids, d)
    out = Tensor((nids, d), data)
    if is_grad_enabled():
        def bwd(go):
            K.take_rows_bwd_acc(go, idq, _gbuf(src), nids, d)

        out._parents = (src,)
        out._bwd = bwd
    return out


def index_select(src, perm, out_shape):
    """Flat-index permutation; the layout move behind head split/merge."""
    out_shape = tuple(out_shape)
    n = len(src.data)
    if len(perm) != n or _prod(out_shape) != n:
        raise ValueError(
            f"index_select: size mismatch perm {len(perm)} on shape {src.shape} to {out_shape}"
        )
    _require_finite("index_select", src)
    pq = perm if isinstance(perm, array) else array("q", perm)
    data = _zeros(n)
    K.index_select(src.data, pq, data, n)
    out = Tensor(out_shape, data)
    if is_grad_enabled():
        def bwd(go):
            K.index_select_bwd_acc(go, pq, _gbuf(src), n)

        out._parents = (src,)
        out._bwd = bwd
    return out


def concat_cols(a, b):
    if len(a.shape) != 2 or len(b.shape) != 2 or a.shape[0] != b.shape[0]:
        raise ValueError(f"concat_cols: shape mismatch {a.shape} with {b.shape}")
    _require_finite("concat_cols", a, b)
    m = a.shape[0]
    na = a.shape[1]
    nb = b.shape[1]
    data = _zeros(m * (na + nb))
    K.concat_cols(a.data, b.data, data, m, na, nb)
    out = Tensor((m, na + nb), data)
    if is_grad_enabled():
        def bwd(go):
            tmp_a = _zeros(m * na)
            K.slice_cols(go, tmp_a, m, na + nb, 0, na)
            K.axpy(_gbuf(a), tmp_a, m * na)
            tmp_b = _zeros(m * nb)
            K.slice_cols(go, tmp_b, m, na + nb, na, na + nb)
            K.axpy(_gbuf(b), tmp_b, m * nb)

        out._parents = (a, b)
        out._bwd = bwd
    return out


def concat_rows(parts):
    parts = list(parts)
    if not parts:
        raise ValueError("concat_rows: no tensors given")
    cols = parts[0].shape[-1]
    for p in parts:
        if len(p.shape) != 2 or p.shape[1] != cols:
            raise ValueError(
                f"concat_rows: shape mismatch {p.shape} vs {parts[0].shape}"
            )
    _require_finite("concat_rows", *parts)
    data = array("d")
    for p in parts:
        data.extend(p.data)
    rows = len(data) // cols
    out = Tensor((rows, cols), data)
    if is_grad_enabled():
        offsets = []
        off = 0
        for p in parts:
            offsets.append(off)
            off += len(p.data)

        def bwd(go):
            for p, o in zip(parts, offsets):
                K.axpy(_gbuf(p), go[o:o + len(p.data)], len(p.data))

        out._parents = tuple(parts)
        out._bwd = bwd
    return out


def slice_rows(a, r0, r1):
    """Copy of rows [r0, r1) of a matrix."""
    if len(a.shape) != 2:
        raise ValueError(f"slice_rows: wants a matrix, got shape {a.shape}")
    m, n = a.shape
    if not (0 <= r0 < r1 <= m):
        raise ValueError(f"slice_rows: range [{r0}, {r1}) outside matrix of shape {a.shape}")
    _require_finite("slice_rows", a)
    data = a.data[r0 * n:r1 * n]
    out = Tensor((r1 - r0, n), data)
    if is_grad_enabled():
        def bwd(go):
            K.axpy_at(_gbuf(a), r0 * n, go, (r1 - r0) * n)

        out._parents = (a,)
        out._bwd = bwd
    return out


def slice_cols(a, c0, c1):
    """Copy of columns [c0, c1) of a matrix."""
    if len(a.shape) != 2:
        raise ValueError(f"slice_cols: wants a matrix, got shape {a.shape}")
    m, n = a.shape
    if not (0 <= c0 < c1 <= n):
        raise ValueError(f"slice_cols: range [{c0}, {c1}) outside matrix of shape {a.shape}")
    _require_finite("slice_cols", a)
    w = c1 - c0
    data = _zeros(m * w)
    K.slice_cols(a.data, data, m, n, c0, c1)
    out = Tensor((m, w), data)
    if is_grad_enabled():
        def bwd(go):
            K.slice_cols_acc(go, _gbuf(a), m, n, c0, c1)

        out._parents = (a,)
        out._bwd = bwd
    return out


def reshape(a, shape):
    shape = tuple(shape)
    if _prod(shape) != len(a.data):
        raise ValueError(f"reshape: cannot view shape {a.shape} as {shape}")
    out = Tensor(shape, array("d", a.data))
    out._fin = a._fin
    if is_grad_enabled():
        n = len(a.data)

        def bwd(go):
            K.axpy(_gbuf(a), go, n)

        out._parents = (a,)
        out._bwd = bwd
    return out


# -- reductions -----------------------------------------------------------------------


def sum_all(a):
    _require_finite("sum", a)
    n = len(a.data)
    out = Tensor((), array("d", [K.sum_all(a.data, n)]))
    if is_grad_enabled():
        def bwd(go):
            K.add_scalar_acc(_gbuf(a), go[0], n)

        out._parents = (a,)
        out._bwd = bwd
    return out


def mean_all(a):
    _require_finite("mean", a)
    n = len(a.data)
    out = Tensor((), array("d", [K.sum_all(a.data, n) / n]))
    if is_grad_enabled():
        def bwd(go):
            K.add_scalar_acc(_gbuf(a), go[0] / n, n)

        out._parents = (a,)
        out._bwd = bwd
    return out
