"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Every operation returns a fresh :class:`Tensor` whose parents carry
vector-Jacobian product closures.  ``backward`` topologically sorts the
recorded graph and replays it in exact reverse order, accumulating
gradients into every tensor that has ``requires_grad`` set.  The op set
is deliberately small: exactly what an LSTM encoder, a bilinear fusion
layer, and a single graph attention layer need.

No general broadcasting: operands must have matching shapes, or one side
must be a scalar.  Row-wise broadcasts are explicit ops (``add_rowvec``,
``row_scale``) so every backward rule stays auditable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DegenerateSoftmaxError(ValueError):
    """Softmax requested over a fully masked-out set of entries."""


class ContractViolation(RuntimeError):
    """An operation precondition was broken by the caller."""


class Tensor:
    """n-dimensional float64 array with optional gradient-tape participation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        # tuple of (parent Tensor, vjp callable) pairs
        self._parents: tuple = ()

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _tracked(t: Tensor) -> bool:
    return t.requires_grad or bool(t._parents)


def _result(data: np.ndarray, parents) -> Tensor:
    out = Tensor(data)
    kept = tuple((p, vjp) for p, vjp in parents if _tracked(p))
    out._parents = kept
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(t: Tensor) -> None:
    if not np.all(np.isfinite(t.data)):
        raise ContractViolation("non-finite values in tensor input")


# ---------------------------------------------------------------------------
# core ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    out = a.data @ b.data
    return _result(out, [
        (a, lambda g: g @ b.data.T),
        (b, lambda g: a.data.T @ g),
    ])


def matvec(m: Tensor, v: Tensor) -> Tensor:
    if m.data.ndim != 2 or v.data.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: incompatible shapes {m.shape} x {v.shape}")
    out = m.data @ v.data
    return _result(out, [
        (m, lambda g: np.outer(g, v.data)),
        (v, lambda g: m.data.T @ g),
    ])


def _binary_shapes(a: Tensor, b: Tensor, name: str) -> None:
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError(f"{name}: incompatible shapes {a.shape} vs {b.shape}")


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    # scalar operand: sum the incoming gradient
    if shape == () and g.shape != ():
        return np.array(g.sum())
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "add")
    return _result(a.data + b.data, [
        (a, lambda g: _reduce_to(g, a.shape)),
        (b, lambda g: _reduce_to(g, b.shape)),
    ])


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "sub")
    return _result(a.data - b.data, [
        (a, lambda g: _reduce_to(g, a.shape)),
        (b, lambda g: _reduce_to(-g, b.shape)),
    ])


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "mul")
    return _result(a.data * b.data, [
        (a, lambda g: _reduce_to(g * b.data, a.shape)),
        (b, lambda g: _reduce_to(g * a.data, b.shape)),
    ])


def add_rowvec(m: Tensor, v: Tensor) -> Tensor:
    """Add a length-d vector to every row of an N x d matrix."""
    if m.data.ndim != 2 or v.data.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError(f"add_rowvec: incompatible shapes {m.shape} + {v.shape}")
    return _result(m.data + v.data[None, :], [
        (m, lambda g: g),
        (v, lambda g: g.sum(axis=0)),
    ])


def row_scale(m: Tensor, s: Tensor) -> Tensor:
    """Scale row i of an N x d matrix by s[i]."""
    if m.data.ndim != 2 or s.data.ndim != 1 or m.shape[0] != s.shape[0]:
        raise ShapeError(f"row_scale: incompatible shapes {m.shape} * {s.shape}")
    return _result(m.data * s.data[:, None], [
        (m, lambda g: g * s.data[:, None]),
        (s, lambda g: (g * m.data).sum(axis=1)),
    ])


def outer_sum(u: Tensor, v: Tensor) -> Tensor:
    """out[i, j] = u[i] + v[j]."""
    if u.data.ndim != 1 or v.data.ndim != 1:
        raise ShapeError(f"outer_sum: expected vectors, got {u.shape}, {v.shape}")
    return _result(u.data[:, None] + v.data[None, :], [
        (u, lambda g: g.sum(axis=1)),
        (v, lambda g: g.sum(axis=0)),
    ])


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _result(y, [(x, lambda g: g * (1.0 - y * y))])


def sigmoid(x: Tensor) -> Tensor:
    # stable in both tails
    y = np.where(x.data >= 0,
                 1.0 / (1.0 + np.exp(-np.clip(x.data, 0, None))),
                 np.exp(np.clip(x.data, None, 0)) / (1.0 + np.exp(np.clip(x.data, None, 0))))
    return _result(y, [(x, lambda g: g * y * (1.0 - y))])


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _result(y, [(x, lambda g: g * y)])


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    pos = x.data >= 0
    y = np.where(pos, x.data, slope * x.data)
    return _result(y, [(x, lambda g: g * np.where(pos, 1.0, slope))])


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    pos = x.data >= 0
    y = np.where(pos, x.data, alpha * (np.exp(np.clip(x.data, None, 0)) - 1.0))
    return _result(y, [(x, lambda g: g * np.where(pos, 1.0, y + alpha))])


def concat(tensors) -> Tensor:
    """Concatenate 1-D tensors."""
    tensors = [as_tensor(t) for t in tensors]
    for t in tensors:
        if t.data.ndim != 1:
            raise ShapeError(f"concat: expected 1-D tensors, got shape {t.shape}")
    out = np.concatenate([t.data for t in tensors])
    parents = []
    off = 0
    for t in tensors:
        n = t.shape[0]
        parents.append((t, lambda g, s=off, e=off + n: g[s:e]))
        off += n
    return _result(out, parents)


def hstack(tensors) -> Tensor:
    """Concatenate 2-D tensors along columns (same row count)."""
    rows = {t.shape[0] for t in tensors}
    if len(rows) != 1 or any(t.data.ndim != 2 for t in tensors):
        raise ShapeError(f"hstack: incompatible shapes {[t.shape for t in tensors]}")
    out = np.concatenate([t.data for t in tensors], axis=1)
    parents = []
    off = 0
    for t in tensors:
        n = t.shape[1]
        parents.append((t, lambda g, s=off, e=off + n: g[:, s:e]))
        off += n
    return _result(out, parents)


def stack_cols(cols) -> Tensor:
    """Stack length-N vectors as the columns of an N x T matrix."""
    lens = {c.shape[0] for c in cols}
    if len(lens) != 1 or any(c.data.ndim != 1 for c in cols):
        raise ShapeError(f"stack_cols: incompatible shapes {[c.shape for c in cols]}")
    out = np.stack([c.data for c in cols], axis=1)
    parents = [(c, lambda g, j=j: g[:, j]) for j, c in enumerate(cols)]
    return _result(out, parents)


def get_col(m: Tensor, j: int) -> Tensor:
    if m.data.ndim != 2:
        raise ShapeError(f"get_col: expected matrix, got shape {m.shape}")

    def vjp(g, j=j, shape=m.shape):
        out = np.zeros(shape)
        out[:, j] = g
        return out

    return _result(m.data[:, j].copy(), [(m, vjp)])


def tsum(x: Tensor) -> Tensor:
    return _result(np.array(x.data.sum()), [(x, lambda g: np.full(x.shape, float(g)))])


def softmax(logits: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Masked, max-stabilized softmax over the last axis.

    ``mask`` is boolean with True marking entries that participate;
    masked-out entries come back exactly 0.  Works on 1-D vectors and on
    2-D matrices (row-wise).
    """
    x = logits.data
    if x.ndim not in (1, 2):
        raise ShapeError(f"softmax: expected 1-D or 2-D input, got shape {logits.shape}")
    if mask is None:
        keep = np.ones_like(x, dtype=bool)
    else:
        keep = np.asarray(mask, dtype=bool)
        if keep.shape != x.shape:
            raise ShapeError(f"softmax: mask shape {keep.shape} != logits shape {x.shape}")
    if not keep.any(axis=-1).all():
        raise DegenerateSoftmaxError("softmax: a row has every entry masked out")

    shifted = np.where(keep, x, -np.inf)
    m = shifted.max(axis=-1, keepdims=True)
    e = np.where(keep, np.exp(shifted - m), 0.0)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return y * (g - dot)

    return _result(y, [(logits, vjp)])


def bilinear(q: Tensor, w: Tensor, c: Tensor) -> Tensor:
    """Batch of bilinear forms: out[n, k] = q[n] @ w[:, k, :] @ c[n].

    ``q`` is N x d_q, ``w`` is d_q x d_out x d_c, ``c`` is N x d_c.
    """
    if (q.data.ndim != 2 or c.data.ndim != 2 or w.data.ndim != 3
            or w.shape[0] != q.shape[1] or w.shape[2] != c.shape[1]
            or q.shape[0] != c.shape[0]):
        raise ShapeError(f"bilinear: incompatible shapes q{q.shape} w{w.shape} c{c.shape}")
    out = np.einsum("ni,ikj,nj->nk", q.data, w.data, c.data)
    return _result(out, [
        (q, lambda g: np.einsum("nk,ikj,nj->ni", g, w.data, c.data)),
        (w, lambda g: np.einsum("nk,ni,nj->ikj", g, q.data, c.data)),
        (c, lambda g: np.einsum("nk,ikj,ni->nj", g, w.data, q.data)),
    ])


def bce_loss(p: Tensor, labels: np.ndarray, clamp: float = 1e-12) -> Tensor:
    """Mean binary cross-entropy with probability clamping.

    ``labels`` is a plain 0/1 array; gradient is zero where the clamp fired.
    """
    y = np.asarray(labels, dtype=np.float64)
    if p.data.shape != y.shape:
        raise ShapeError(f"bce_loss: probabilities {p.shape} vs labels {y.shape}")
    pc = np.clip(p.data, clamp, 1.0 - clamp)
    inside = (p.data > clamp) & (p.data < 1.0 - clamp)
    n = max(y.size, 1)
    loss = -np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))

    def vjp(g):
        return float(g) * inside * (pc - y) / (pc * (1.0 - pc)) / n

    return _result(np.array(loss), [(p, vjp)])


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every requires_grad tensor.

    Repeated calls without ``zero_grad`` accumulate; the trainer zeroes
    parameter grads at the start of every step.
    """
    if loss.data.shape != ():
        raise ContractViolation(f"backward: loss must be scalar, got shape {loss.shape}")

    # iterative topological sort (recording order)
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in seen and _tracked(parent):
                stack.append((parent, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones(())}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g
        for parent, vjp in node._parents:
            if not _tracked(parent):
                continue
            pg = vjp(g)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = np.asarray(pg, dtype=np.float64)


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradCheckReport:
    """Per-parameter max relative error between tape and central differences."""

    tolerance: float
    per_param: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def max_rel_err(self) -> float:
        return max(self.per_param.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        lines = [f"grad check vs central differences (tol {self.tolerance:g})"]
        for name, err in sorted(self.per_param.items()):
            status = "ok" if err < self.tolerance else "FAIL"
            lines.append(f"  {name:40s} max rel err {err:.3e}  {status}")
        verdict = "PASS" if self.passed else f"FAIL ({len(self.failures)} parameters)"
        lines.append(f"overall: {verdict}, worst rel err {self.max_rel_err:.3e}")
        return "\n".join(lines)


def grad_check(f, params, tolerance: float = 1e-4, h: float = 1e-5) -> GradCheckReport:
    """Compare tape gradients of scalar ``f()`` against central differences.

    ``params`` maps names to requires_grad tensors that ``f`` closes over.
    ``f`` must be deterministic.  Relative error is |a - n| / (max(|a|, |n|) + 1e-6).
    """
    if isinstance(params, Tensor):
        params = {"param": params}
    for t in params.values():
        t.zero_grad()
    backward(f())
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros(t.shape))
                for name, t in params.items()}

    report = GradCheckReport(tolerance=tolerance)
    for name, t in params.items():
        numeric = np.zeros_like(t.data)
        it = np.nditer(t.data, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = t.data[idx]
            t.data[idx] = orig + h
            lp = float(f().data)
            t.data[idx] = orig - h
            lm = float(f().data)
            t.data[idx] = orig
            numeric[idx] = (lp - lm) / (2.0 * h)
        a, n = analytic[name], numeric
        rel = np.abs(a - n) / (np.maximum(np.abs(a), np.abs(n)) + 1e-6)
        report.per_param[name] = float(rel.max()) if rel.size else 0.0
        if report.per_param[name] >= tolerance:
            report.failures.append(name)
    return report
