"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Every forward operation records a backward closure on the output node, so a
single `backward()` call on a scalar loss populates `grad` on every
parameter that contributed to it. Gradients accumulate additively across
multiple uses of the same tensor.

Randomness is counter-based: all streams are Philox generators derived from
a seed plus a tuple of string labels, so identical seeds give identical draw
sequences on every platform.
"""

from __future__ import annotations

import hashlib

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


class Tensor:
    """Dense float64 array with an optional gradient slot.

    Interior nodes carry a backward closure; leaves (parameters) are created
    with ``requires_grad=True`` and receive gradients during `backward()`.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        """Populate gradients of every contributing node, starting from a scalar."""
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar, got shape {self.data.shape}"
            )
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad = self.grad + np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def zero_grad(self):
        self.grad = None

    def __add__(self, other):
        return add(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _node(data, parents, backward):
    needs = any(p.requires_grad for p in parents)
    return Tensor(
        data,
        requires_grad=needs,
        _parents=tuple(p for p in parents if p.requires_grad),
        _backward=backward if needs else None,
    )


def _check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")

    def bw(g):
        _accum(a, g)
        _accum(b, g)

    return _node(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")

    def bw(g):
        _accum(a, g)
        _accum(b, -g)

    return _node(a.data - b.data, (a, b), bw)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "hadamard")

    def bw(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _node(a.data * b.data, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    def bw(g):
        _accum(a, g * c)

    return _node(a.data * c, (a,), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul: shapes {a.data.shape} and {b.data.shape} do not conform"
        )

    def bw(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), bw)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with b broadcast over rows."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(
            f"affine: input {x.data.shape} does not conform with weight {w.data.shape}"
        )
    if b.data.shape != (w.data.shape[1],):
        raise ShapeError(
            f"affine: bias {b.data.shape} does not match output dim {w.data.shape[1]}"
        )

    def bw(g):
        _accum(x, g @ w.data.T)
        _accum(w, x.data.T @ g)
        _accum(b, g.sum(axis=0))

    return _node(x.data @ w.data + b.data, (x, w, b), bw)


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)

    def bw(g):
        _accum(x, g * (1.0 - t * t))

    return _node(t, (x,), bw)


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)

    def bw(g):
        _accum(x, g * s * (1.0 - s))

    return _node(s, (x,), bw)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Split on sign to avoid overflow in exp.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def tsum(x: Tensor) -> Tensor:
    def bw(g):
        _accum(x, np.full_like(x.data, float(g)))

    return _node(np.asarray(x.data.sum()), (x,), bw)


def take_rows(x: Tensor, idx) -> Tensor:
    """Row gather; backward scatter-adds into the gathered rows."""
    idx = np.asarray(idx, dtype=np.intp)

    def bw(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            np.add.at(full, idx, g)
            _accum(x, full)

    return _node(x.data[idx], (x,), bw)


def concat_rows(parts) -> Tensor:
    parts = list(parts)
    widths = {p.data.shape[1:] for p in parts}
    if len(widths) != 1:
        raise ShapeError(f"concat_rows: trailing dims differ: {sorted(map(str, widths))}")
    offsets = np.cumsum([0] + [p.data.shape[0] for p in parts])

    def bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[lo:hi])

    return _node(np.concatenate([p.data for p in parts], axis=0), tuple(parts), bw)


def embedding_lookup(table: Tensor, token_ids) -> Tensor:
    """Rows of the embedding table; gradients flow only to looked-up rows."""
    ids = np.asarray(token_ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError(
            f"token id out of range [0, {table.data.shape[0]}): "
            f"{ids[(ids < 0) | (ids >= table.data.shape[0])][0]}"
        )
    return take_rows(table, ids)


def dropout(x: Tensor, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-p) at train time, identity at eval."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)

    def bw(g):
        _accum(x, g * mask)

    return _node(x.data * mask, (x,), bw)


def grl(x: Tensor, lam: float) -> Tensor:
    """Gradient reversal: exact identity forward, backward scaled by -lam."""
    if lam < 0:
        raise ValueError(f"reversal strength must be non-negative, got {lam}")

    def bw(g):
        _accum(x, -lam * g)

    return _node(x.data.copy(), (x,), bw)


def softmax_nll(logits: Tensor, labels) -> Tensor:
    """Mean negative log likelihood under a softmax, stable via max-subtraction."""
    labels = np.asarray(labels, dtype=np.intp)
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax_nll: logits must be 2-D, got {logits.data.shape}")
    n, c = logits.data.shape
    if c < 2:
        raise ShapeError(f"softmax_nll: need at least 2 classes, got {c}")
    if labels.shape != (n,):
        raise ShapeError(f"softmax_nll: labels shape {labels.shape}, expected ({n},)")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise IndexError(f"label out of range [0, {c})")
    m = logits.data.max(axis=1, keepdims=True)
    shifted = logits.data - m
    ex = np.exp(shifted)
    z = ex.sum(axis=1, keepdims=True)
    logp = shifted - np.log(z)
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def bw(g):
        sm = ex / z
        sm[rows, labels] -= 1.0
        _accum(logits, float(g) * sm / n)

    return _node(np.asarray(loss), (logits,), bw)


def derive_rng(seed: int, *labels: str) -> np.random.Generator:
    """Named Philox stream: seed plus labels fully determine the draw sequence."""
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for label in labels:
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        key.append(int.from_bytes(digest[:8], "little"))
    ss = np.random.SeedSequence(entropy=key[0], spawn_key=tuple(key[1:]))
    return np.random.Generator(np.random.Philox(ss))


def uniform_init(rng: np.random.Generator, shape, low=-0.08, high=0.08) -> Tensor:
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)


def zeros_param(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


class SgdMomentum:
    """SGD with classical momentum: v <- mu*v + g; p <- p - lr*v.

    Velocity buffers are zero-initialized on construction; gradients are
    cleared after every step.
    """

    def __init__(self, params, lr, momentum=0.9, grad_clip=None):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.grad_clip = grad_clip
        self.velocities = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p, v in zip(self.params, self.velocities):
            if p.grad is None:
                raise RuntimeError("step() called with unpopulated gradients")
            g = p.grad
            if self.grad_clip is not None:
                norm = float(np.sqrt((g * g).sum()))
                if norm > self.grad_clip:
                    g = g * (self.grad_clip / norm)
            v *= self.momentum
            v += g
            p.data -= self.lr * v
            p.grad = None

    def reset_velocity(self, param):
        """Zero the velocity buffer of one parameter (used on re-initialization)."""
        for i, p in enumerate(self.params):
            if p is param:
                self.velocities[i][...] = 0.0
