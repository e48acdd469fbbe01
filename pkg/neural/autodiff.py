"""
Reverse-mode automatic differentiation on a dynamically built tape.

A Tape is rebuilt for every forward pass. Each recorded node keeps its value,
its parent indices and a closure mapping the output gradient to the parents'
gradients; ``Tape.backward`` walks the nodes once in reverse order.

Shapes are explicit: binary ops accept equal shapes, or a scalar (shape ())
against any tensor.
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import digamma, expit, gammaln

from volatility import linalg
from volatility.errors import DomainError, NonScalarLoss, ShapeMismatch

ArrayLike = Union[float, int, np.ndarray]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Var:
    """Handle to one node of a tape."""

    __slots__ = ("tape", "index")
    __array_ufunc__ = None  # numpy defers to the reflected operators below

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.index]

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def T(self) -> "Var":
        return transpose(self)

    def __repr__(self) -> str:
        return f"Var(index={self.index}, shape={self.shape})"

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return slice_(self, index)


class Tape:
    def __init__(self, requires_grad: bool = True):
        self.requires_grad = requires_grad
        self.values: List[np.ndarray] = []
        self.parents: List[Tuple[int, ...]] = []
        self.backward_fns: List[Optional[BackwardFn]] = []
        self.leaves: Dict[int, str] = {}
        self._consumed = False

    def __len__(self) -> int:
        return len(self.values)

    def _record(
        self,
        value: np.ndarray,
        parents: Tuple[int, ...] = (),
        backward_fn: Optional[BackwardFn] = None,
    ) -> Var:
        self.values.append(np.asarray(value, dtype=float))
        if self.requires_grad:
            self.parents.append(parents)
            self.backward_fns.append(backward_fn)
        return Var(self, len(self.values) - 1)

    def constant(self, value: ArrayLike, copy: bool = True) -> Var:
        if copy:
            value = np.array(value, dtype=float)
        return self._record(value)

    def variable(self, value: ArrayLike, name: str) -> Var:
        """Leaf whose gradient is reported by backward() under ``name``."""
        if name in self.leaves.values():
            raise ValueError(f"Leaf '{name}' already on this tape")
        var = self._record(np.array(value, dtype=float))
        self.leaves[var.index] = name
        return var

    def backward(self, loss: Var) -> Dict[str, np.ndarray]:
        """Gradients of a scalar loss with respect to every leaf variable."""
        if loss.tape is not self:
            raise ValueError("Loss belongs to another tape")
        if loss.shape != ():
            raise NonScalarLoss(f"Loss must be a scalar, got shape {loss.shape}")
        if not self.requires_grad:
            raise RuntimeError("Tape was built without gradient recording")
        if self._consumed:
            raise RuntimeError("backward() already ran on this tape")
        self._consumed = True

        grads: List[Optional[np.ndarray]] = [None] * len(self.values)
        grads[loss.index] = np.ones(())
        for i in range(loss.index, -1, -1):
            g = grads[i]
            fn = self.backward_fns[i]
            if g is None or fn is None:
                continue
            for parent, pg in zip(self.parents[i], fn(g)):
                if pg is None:
                    continue
                if grads[parent] is None:
                    grads[parent] = pg
                else:
                    grads[parent] = grads[parent] + pg

        return {
            name: grads[i] if grads[i] is not None else np.zeros_like(self.values[i])
            for i, name in self.leaves.items()
        }


def _lift(tape: Tape, x) -> Var:
    if isinstance(x, Var):
        if x.tape is not tape:
            raise ValueError("Operands live on different tapes")
        return x
    return tape.constant(x)


def _pair(a, b) -> Tuple[Var, Var]:
    tape = a.tape if isinstance(a, Var) else b.tape
    return _lift(tape, a), _lift(tape, b)


def _check_broadcast(a: Var, b: Var, op: str):
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} are incompatible")


def _reduce_to(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Fold a gradient back onto a scalar operand."""
    if shape == () and g.shape != ():
        return np.sum(g)
    return g


# Binary arithmetic


def add(a, b) -> Var:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return a.tape._record(
        a.value + b.value,
        (a.index, b.index),
        lambda g: (_reduce_to(g, sa), _reduce_to(g, sb)),
    )


def sub(a, b) -> Var:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return a.tape._record(
        a.value - b.value,
        (a.index, b.index),
        lambda g: (_reduce_to(g, sa), _reduce_to(-g, sb)),
    )


def mul(a, b) -> Var:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "mul")
    av, bv = a.value, b.value
    return a.tape._record(
        av * bv,
        (a.index, b.index),
        lambda g: (_reduce_to(g * bv, av.shape), _reduce_to(g * av, bv.shape)),
    )


def div(a, b) -> Var:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "div")
    av, bv = a.value, b.value
    out = av / bv
    return a.tape._record(
        out,
        (a.index, b.index),
        lambda g: (_reduce_to(g / bv, av.shape), _reduce_to(-g * out / bv, bv.shape)),
    )


def neg(a: Var) -> Var:
    return a.tape._record(-a.value, (a.index,), lambda g: (-g,))


def maximum(a, b) -> Var:
    """Elementwise max; ties send the gradient to the first operand."""
    a, b = _pair(a, b)
    _check_broadcast(a, b, "maximum")
    av, bv = a.value, b.value
    take_a = av >= bv
    return a.tape._record(
        np.maximum(av, bv),
        (a.index, b.index),
        lambda g: (
            _reduce_to(np.where(take_a, g, 0.0), av.shape),
            _reduce_to(np.where(take_a, 0.0, g), bv.shape),
        ),
    )


# Linear algebra and structure


def matmul(a, b) -> Var:
    a, b = _pair(a, b)
    av, bv = a.value, b.value
    if av.ndim not in (1, 2) or bv.ndim not in (1, 2) or av.shape[-1] != bv.shape[0]:
        raise ShapeMismatch(f"matmul: shapes {av.shape} and {bv.shape} are incompatible")

    def backward(g):
        if av.ndim == 2 and bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        if av.ndim == 2:
            return g @ bv.T, av.T @ g
        if bv.ndim == 2:
            return bv @ g, np.outer(av, g)
        return g * bv, g * av

    return a.tape._record(av @ bv, (a.index, b.index), backward)


def transpose(a: Var) -> Var:
    return a.tape._record(a.value.T, (a.index,), lambda g: (g.T,))


def reshape(a: Var, shape: Tuple[int, ...]) -> Var:
    original = a.shape
    try:
        out = a.value.reshape(shape)
    except ValueError as e:
        raise ShapeMismatch(str(e)) from e
    return a.tape._record(out, (a.index,), lambda g: (g.reshape(original),))


def sum_(a: Var) -> Var:
    shape = a.shape
    return a.tape._record(
        np.sum(a.value), (a.index,), lambda g: (np.full(shape, g, dtype=float),)
    )


def concat(parts: Sequence[Var]) -> Var:
    """Join 1-D vectors (or scalars) end to end."""
    if not parts:
        raise ShapeMismatch("concat needs at least one operand")
    tape = next(p.tape for p in parts if isinstance(p, Var))
    vars_ = [_lift(tape, p) for p in parts]
    for v in vars_:
        if v.value.ndim > 1:
            raise ShapeMismatch(f"concat expects vectors, got shape {v.shape}")
    sizes = [v.value.size for v in vars_]
    bounds = np.cumsum([0] + sizes)
    shapes = [v.shape for v in vars_]

    def backward(g):
        return tuple(
            g[bounds[i] : bounds[i + 1]].reshape(shapes[i]) for i in range(len(vars_))
        )

    return tape._record(
        np.concatenate([np.atleast_1d(v.value) for v in vars_]),
        tuple(v.index for v in vars_),
        backward,
    )


def slice_(a: Var, index) -> Var:
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    try:
        out = np.array(a.value[index], dtype=float)
    except IndexError as e:
        raise ShapeMismatch(str(e)) from e
    return a.tape._record(out, (a.index,), backward)


def outer(a: Var, b: Var) -> Var:
    a, b = _pair(a, b)
    if a.value.ndim != 1 or b.value.ndim != 1:
        raise ShapeMismatch("outer expects two vectors")
    return matmul(reshape(a, (a.value.size, 1)), reshape(b, (1, b.value.size)))


# Elementwise functions


def _require_positive(x: np.ndarray, op: str):
    if np.any(~(x > 0)):
        raise DomainError(f"{op} of non-positive input (min {np.min(x)})")


def log(a: Var) -> Var:
    x = a.value
    _require_positive(x, "log")
    return a.tape._record(np.log(x), (a.index,), lambda g: (g / x,))


def exp(a: Var) -> Var:
    out = np.exp(a.value)
    return a.tape._record(out, (a.index,), lambda g: (g * out,))


def sqrt(a: Var) -> Var:
    _require_positive(a.value, "sqrt")
    out = np.sqrt(a.value)
    return a.tape._record(out, (a.index,), lambda g: (g / (2.0 * out),))


def square(a: Var) -> Var:
    x = a.value
    return a.tape._record(x * x, (a.index,), lambda g: (2.0 * g * x,))


def sigmoid(a: Var) -> Var:
    out = expit(a.value)
    return a.tape._record(out, (a.index,), lambda g: (g * out * (1.0 - out),))


def softplus(a: Var) -> Var:
    x = a.value
    return a.tape._record(np.logaddexp(0.0, x), (a.index,), lambda g: (g * expit(x),))


def tanh(a: Var) -> Var:
    out = np.tanh(a.value)
    return a.tape._record(out, (a.index,), lambda g: (g * (1.0 - out * out),))


def relu(a: Var) -> Var:
    x = a.value
    return a.tape._record(np.maximum(x, 0.0), (a.index,), lambda g: (g * (x > 0),))


def lgamma(a: Var) -> Var:
    x = a.value
    _require_positive(x, "lgamma")
    return a.tape._record(gammaln(x), (a.index,), lambda g: (g * digamma(x),))


# Likelihood helpers


def logdet(s: Var) -> Var:
    """log|S| of a symmetric positive-definite matrix node."""
    factor = linalg.cholesky(s.value)
    inv = cho_solve((factor, True), np.eye(factor.shape[0]))
    return s.tape._record(
        2.0 * np.sum(np.log(np.diag(factor))), (s.index,), lambda g: (g * inv,)
    )


def quadform(s: Var, v) -> Var:
    """v' S^-1 v for a symmetric positive-definite matrix node."""
    s, v = _pair(s, v)
    if v.shape != (s.shape[0],):
        raise ShapeMismatch(f"quadform: vector {v.shape} vs matrix {s.shape}")
    factor = linalg.cholesky(s.value)
    w = cho_solve((factor, True), v.value)
    return s.tape._record(
        float(v.value @ w),
        (s.index, v.index),
        lambda g: (-g * np.outer(w, w), 2.0 * g * w),
    )
