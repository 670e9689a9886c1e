"""
Reverse-mode automatic differentiation over an append-only tape.

Nodes hold float64 numpy arrays. Every backward rule is itself written with tape operations, so a
backward pass run with ``create_graph=True`` is recorded like any forward computation and can be
differentiated again (Hessian-vector products, and the gradient of an HVP for trace regularisation).

Every operation also accepts plain arrays: when none of its arguments is a Node it falls through to
numpy, which lets loss functions serve both the differentiable and the evaluation path.
"""
import logging
from contextlib import contextmanager
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import NumericalError, ValidationError

logger = logging.getLogger(__name__)

# (upstream grad, output node, which parents need a grad) -> one grad (or None) per parent
VJP = Callable[["Node", "Node", Tuple[bool, ...]], Tuple[Optional["Node"], ...]]


class Tape:
    """Append-only list of recorded nodes; parents always precede their children."""

    def __init__(self):
        self.nodes: List[Node] = []
        self.recording = True

    def variable(self, value) -> "Node":
        node = Node(self, "variable", _as_array(value), (), None, requires_grad=True)
        self._append(node)
        return node

    def constant(self, value) -> "Node":
        node = Node(self, "constant", _as_array(value), (), None, requires_grad=False)
        if self.recording:
            self._append(node)
        return node

    def record(self, op: str, value: np.ndarray, parents: Sequence["Node"], vjp: VJP) -> "Node":
        requires_grad = self.recording and any(p.requires_grad for p in parents)
        if requires_grad:
            node = Node(self, op, value, tuple(parents), vjp, requires_grad=True)
        else:
            node = Node(self, op, value, (), None, requires_grad=False)
        if self.recording:
            self._append(node)
        if not np.all(np.isfinite(value)):
            raise NumericalError(f"non-finite value at tape node {node.index} (op '{op}')")
        return node

    def _append(self, node: "Node"):
        node.index = len(self.nodes)
        self.nodes.append(node)

    @contextmanager
    def paused(self):
        """Evaluate without recording (constants only)."""
        previous = self.recording
        self.recording = False
        try:
            yield self
        finally:
            self.recording = previous

    def __len__(self):
        return len(self.nodes)


class Node:
    """A value on a tape. Unrecorded nodes (paused tape) keep index -1 and never take part in backward."""

    __slots__ = ("tape", "op", "value", "parents", "vjp", "requires_grad", "index")
    __array_ufunc__ = None  # make numpy defer to the reflected operators below

    def __init__(self, tape: Tape, op: str, value: np.ndarray, parents, vjp, requires_grad: bool):
        self.tape = tape
        self.op = op
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.index = -1

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def T(self) -> "Node":
        return transpose(self)

    def item(self) -> float:
        return float(self.value)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def __repr__(self):
        return f"Node(op={self.op}, index={self.index}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def _as_array(value) -> np.ndarray:
    return np.array(value, dtype=np.float64)


def _tape_of(*args) -> Optional[Tape]:
    for a in args:
        if isinstance(a, Node):
            return a.tape
    return None


def _lift(tape: Tape, x) -> Node:
    return x if isinstance(x, Node) else tape.constant(x)


def _sum_to_value(value: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast result back to ``shape``."""
    if value.shape == tuple(shape):
        return value
    lead = value.ndim - len(shape)
    out = value.sum(axis=tuple(range(lead))) if lead > 0 else value
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and out.shape[i] != 1)
    if axes:
        out = out.sum(axis=axes, keepdims=True)
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# Shape plumbing
# ---------------------------------------------------------------------------

def sum_to(x, shape):
    shape = tuple(shape)
    if not isinstance(x, Node):
        return _sum_to_value(np.asarray(x, dtype=np.float64), shape)
    if x.shape == shape:
        return x
    return x.tape.record("sum_to", _sum_to_value(x.value, shape), (x,),
                         lambda g, out, needs: (broadcast_to(g, x.shape),))


def broadcast_to(x, shape):
    shape = tuple(shape)
    if not isinstance(x, Node):
        return np.broadcast_to(np.asarray(x, dtype=np.float64), shape).copy()
    if x.shape == shape:
        return x
    return x.tape.record("broadcast_to", np.broadcast_to(x.value, shape).copy(), (x,),
                         lambda g, out, needs: (sum_to(g, x.shape),))


def reshape(x, shape):
    shape = tuple(shape)
    if not isinstance(x, Node):
        return np.reshape(x, shape)
    if x.shape == shape:
        return x
    return x.tape.record("reshape", x.value.reshape(shape), (x,),
                         lambda g, out, needs: (reshape(g, x.shape),))


def transpose(x):
    if not isinstance(x, Node):
        return np.transpose(x)
    return x.tape.record("transpose", x.value.T.copy(), (x,),
                         lambda g, out, needs: (transpose(g),))


def take(x, start: int, stop: int):
    """Contiguous slice of a 1-D vector."""
    if not isinstance(x, Node):
        return np.asarray(x)[start:stop]
    n = x.shape[0]
    return x.tape.record("take", x.value[start:stop].copy(), (x,),
                         lambda g, out, needs: (embed(g, n, start),))


def embed(x, n: int, start: int):
    """Place a 1-D vector at ``start`` inside zeros of length n (adjoint of take)."""
    if not isinstance(x, Node):
        out = np.zeros(n)
        out[start:start + len(x)] = x
        return out
    value = np.zeros(n)
    stop = start + x.shape[0]
    value[start:stop] = x.value
    return x.tape.record("embed", value, (x,),
                         lambda g, out, needs: (take(g, start, stop),))


def sum_(x, axis=None, keepdims=False):
    if not isinstance(x, Node):
        return np.sum(x, axis=axis, keepdims=keepdims)
    value = np.sum(x.value, axis=axis, keepdims=True)
    kept_shape = value.shape
    if not keepdims:
        value = np.sum(x.value, axis=axis)

    def vjp(g, out, needs):
        return (broadcast_to(reshape(g, kept_shape), x.shape),)

    return x.tape.record("sum", np.asarray(value, dtype=np.float64), (x,), vjp)


def mean(x, axis=None, keepdims=False):
    shape = x.shape if isinstance(x, Node) else np.shape(x)
    count = int(np.prod(shape)) if axis is None else int(np.prod([shape[a] for a in np.atleast_1d(axis)]))
    return sum_(x, axis=axis, keepdims=keepdims) / float(count)


def dot(a, b):
    return sum_(mul(a, b))


# ---------------------------------------------------------------------------
# Arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return np.add(a, b)
    a, b = _lift(tape, a), _lift(tape, b)

    def vjp(g, out, needs):
        return (sum_to(g, a.shape) if needs[0] else None,
                sum_to(g, b.shape) if needs[1] else None)

    return tape.record("add", a.value + b.value, (a, b), vjp)


def sub(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return np.subtract(a, b)
    a, b = _lift(tape, a), _lift(tape, b)

    def vjp(g, out, needs):
        return (sum_to(g, a.shape) if needs[0] else None,
                sum_to(neg(g), b.shape) if needs[1] else None)

    return tape.record("sub", a.value - b.value, (a, b), vjp)


def mul(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return np.multiply(a, b)
    a, b = _lift(tape, a), _lift(tape, b)

    def vjp(g, out, needs):
        return (sum_to(g * b, a.shape) if needs[0] else None,
                sum_to(g * a, b.shape) if needs[1] else None)

    return tape.record("mul", a.value * b.value, (a, b), vjp)


def div(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return np.divide(a, b)
    a, b = _lift(tape, a), _lift(tape, b)

    def vjp(g, out, needs):
        return (sum_to(g / b, a.shape) if needs[0] else None,
                sum_to(neg(g * out / b), b.shape) if needs[1] else None)

    return tape.record("div", a.value / b.value, (a, b), vjp)


def neg(a):
    if not isinstance(a, Node):
        return np.negative(a)
    return a.tape.record("neg", -a.value, (a,), lambda g, out, needs: (neg(g),))


def matmul(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return np.matmul(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ValidationError(f"matmul supports 2-D operands only, got {a.shape} @ {b.shape}")

    def vjp(g, out, needs):
        return (matmul(g, transpose(b)) if needs[0] else None,
                matmul(transpose(a), g) if needs[1] else None)

    return tape.record("matmul", a.value @ b.value, (a, b), vjp)


def power(a, exponent: float):
    """a ** c for a constant exponent c."""
    if isinstance(exponent, Node):
        raise ValidationError("power only supports a constant exponent")
    c = float(exponent)
    if not isinstance(a, Node):
        return np.power(a, c)

    def vjp(g, out, needs):
        if c == 0.0:
            return (g * 0.0,)
        if c == 1.0:
            return (g,)
        return (g * (c * power(a, c - 1.0)),)

    return a.tape.record("pow", np.power(a.value, c), (a,), vjp)


def maximum(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return np.maximum(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    mask = (a.value >= b.value).astype(np.float64)

    def vjp(g, out, needs):
        return (sum_to(g * mask, a.shape) if needs[0] else None,
                sum_to(g * (1.0 - mask), b.shape) if needs[1] else None)

    return tape.record("max", np.maximum(a.value, b.value), (a, b), vjp)


def clip(a, lo: float, hi: float):
    """Clamp into [lo, hi]; the gradient is passed through only inside the interval."""
    if not isinstance(a, Node):
        return np.clip(a, lo, hi)
    mask = ((a.value >= lo) & (a.value <= hi)).astype(np.float64)
    return a.tape.record("clip", np.clip(a.value, lo, hi), (a,),
                         lambda g, out, needs: (g * mask,))


# ---------------------------------------------------------------------------
# Elementwise functions
# ---------------------------------------------------------------------------

def exp(a):
    if not isinstance(a, Node):
        return np.exp(a)
    return a.tape.record("exp", np.exp(a.value), (a,), lambda g, out, needs: (g * out,))


def log(a):
    if not isinstance(a, Node):
        return np.log(a)
    return a.tape.record("log", np.log(a.value), (a,), lambda g, out, needs: (g / a,))


def tanh(a):
    if not isinstance(a, Node):
        return np.tanh(a)
    return a.tape.record("tanh", np.tanh(a.value), (a,),
                         lambda g, out, needs: (g * (1.0 - out * out),))


def _sigmoid_value(x: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def sigmoid(a):
    if not isinstance(a, Node):
        return _sigmoid_value(np.asarray(a, dtype=np.float64))
    return a.tape.record("sigmoid", _sigmoid_value(a.value), (a,),
                         lambda g, out, needs: (g * (out * (1.0 - out)),))


# ---------------------------------------------------------------------------
# Reverse pass
# ---------------------------------------------------------------------------

def grad(y: Node, xs: Sequence[Node], create_graph: bool = False, seed=None) -> List[Node]:
    """
    Gradients of ``y`` with respect to each node in ``xs``.

    ``seed`` is the upstream cotangent (required when y is not a scalar); passing seed v for
    y = grad(f) gives H·v. With ``create_graph`` the pass is recorded and can be differentiated.
    """
    tape = y.tape
    if y.index < 0:
        raise ValidationError("cannot differentiate an unrecorded node")
    if seed is None:
        if y.value.size != 1:
            raise ValidationError(f"grad of a non-scalar output {y.shape} needs a seed")
        seed = np.ones_like(y.value)

    wanted = {x.index for x in xs}
    found: Dict[int, Node] = {}
    previous = tape.recording
    tape.recording = create_graph
    try:
        pending: Dict[int, Node] = {y.index: _lift(tape, broadcast_to(np.asarray(seed, dtype=np.float64), y.shape)
                                                   if not isinstance(seed, Node) else seed)}
        for idx in range(y.index, -1, -1):
            g = pending.pop(idx, None)
            if g is None:
                continue
            if idx in wanted:
                found[idx] = g
            node = tape.nodes[idx]
            if not node.parents:
                continue
            needs = tuple(p.requires_grad for p in node.parents)
            for parent, pg in zip(node.parents, node.vjp(g, node, needs)):
                if pg is None or not parent.requires_grad:
                    continue
                pending[parent.index] = pending[parent.index] + pg if parent.index in pending else pg
    finally:
        tape.recording = previous

    return [found[x.index] if x.index in found else tape.constant(np.zeros_like(x.value)) for x in xs]
