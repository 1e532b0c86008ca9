"""Truncated Taylor-jet arithmetic plus a reverse sweep over jet-valued records.

Two layers live here:

* :class:`Jet` is a plain value type holding the Taylor coefficients
  ``[c0, c1, ..., cK]`` (``ck = f^(k) / k!``) of a scalar function along a
  single probe direction.  Coefficients may carry trailing batch axes.
* :class:`Tape` / :class:`Var` record a forward evaluation whose values are
  ordinary arrays or *jet slabs* (see :class:`ProbeLayout`) and replay it in
  reverse to obtain the gradient of a scalar loss with respect to a flat
  parameter vector.  Because slabs carry every Taylor coefficient, the sweep
  differentiates through derivatives-of-the-output as well.

Only per-axis derivatives up to order 3 are supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._kernels import fused_tanh, fused_tanh_vjp

MAX_ORDER = 3


class ContractError(ValueError):
    """Raised when an operation's preconditions are violated."""


class EvaluationError(ArithmeticError):
    """Raised when inputs or parameters are not finite."""


# ---------------------------------------------------------------------------
# Single-probe jets
# ---------------------------------------------------------------------------


class Jet:
    """Truncated Taylor polynomial ``sum_k coeffs[k] * s**k``."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim == 0 or coeffs.shape[0] - 1 > MAX_ORDER:
            raise ContractError(f"jet needs 1..{MAX_ORDER + 1} coefficients, got shape {coeffs.shape}")
        self.coeffs = coeffs

    @classmethod
    def seeded(cls, x, order: int) -> "Jet":
        """Jet of the identity coordinate: ``[x, 1, 0, ...]``."""
        x = np.asarray(x, dtype=float)
        c = np.zeros((order + 1,) + x.shape)
        c[0] = x
        if order >= 1:
            c[1] = 1.0
        return cls(c)

    @classmethod
    def passive(cls, x, order: int) -> "Jet":
        x = np.asarray(x, dtype=float)
        c = np.zeros((order + 1,) + x.shape)
        c[0] = x
        return cls(c)

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    def derivatives(self) -> np.ndarray:
        """``d^k f / ds^k`` for k = 0..K."""
        fact = np.array([math.factorial(k) for k in range(self.order + 1)], dtype=float)
        return self.coeffs * fact.reshape((-1,) + (1,) * (self.coeffs.ndim - 1))

    def __add__(self, other):
        return jet_add(self, _as_jet(other, self.order))

    __radd__ = __add__

    def __sub__(self, other):
        return jet_sub(self, _as_jet(other, self.order))

    def __rsub__(self, other):
        return jet_sub(_as_jet(other, self.order), self)

    def __mul__(self, other):
        if isinstance(other, Jet):
            return jet_mul(self, other)
        return jet_scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return jet_scale(self, -1.0)

    def __repr__(self):
        return f"Jet({self.coeffs.tolist()!r})"


def _as_jet(x, order: int) -> Jet:
    return x if isinstance(x, Jet) else Jet.passive(x, order)


def _check_orders(a: Jet, b: Jet):
    if a.order != b.order:
        raise ContractError(f"jet orders differ: {a.order} vs {b.order}")


def jet_add(a: Jet, b: Jet) -> Jet:
    _check_orders(a, b)
    return Jet(a.coeffs + b.coeffs)


def jet_sub(a: Jet, b: Jet) -> Jet:
    _check_orders(a, b)
    return Jet(a.coeffs - b.coeffs)


def jet_scale(a: Jet, c) -> Jet:
    return Jet(a.coeffs * c)


def cauchy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Order-truncated Cauchy product along axis 0."""
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
    for k in range(out.shape[0]):
        for i in range(k + 1):
            out[k] += a[i] * b[k - i]
    return out


def jet_mul(a: Jet, b: Jet) -> Jet:
    _check_orders(a, b)
    return Jet(cauchy(a.coeffs, b.coeffs))


def jet_tanh(a: Jet) -> Jet:
    """Taylor coefficients of ``tanh(a)``.

    With ``y = tanh(a)`` and ``z = 1 - y*y`` we have ``y' = z a'``, so
    ``k y_k = sum_{j=1..k} j a_j z_{k-j}`` and ``z_k = delta_k0 - (y*y)_k``.
    """
    c = a.coeffs
    K = a.order
    y = np.zeros_like(c)
    z = np.zeros_like(c)
    y[0] = np.tanh(c[0])
    z[0] = 1.0 - y[0] * y[0]
    for k in range(1, K + 1):
        acc = np.zeros_like(c[0])
        for j in range(1, k + 1):
            acc += j * c[j] * z[k - j]
        y[k] = acc / k
        sq = np.zeros_like(c[0])
        for i in range(k + 1):
            sq += y[i] * y[k - i]
        z[k] = -sq
    return Jet(y)


# ---------------------------------------------------------------------------
# Multi-probe slabs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeLayout:
    """Row layout of a jet slab carrying several probe axes at once.

    A slab is an array of shape ``(rows, *batch)``.  Row 0 is the primal
    value, shared by all probes.  The remaining rows are grouped by Taylor
    level: level k holds coefficient k of every probe whose order is at least
    k.  Probes are stored in descending order, so each level is a prefix of the
    previous one.  A single probe of order K gives exactly the ``Jet`` rows.
    """

    axes: tuple[int, ...]
    orders: tuple[int, ...]

    def __post_init__(self):
        if len(self.axes) != len(self.orders):
            raise ContractError("axes and orders differ in length")
        if any(o < 1 or o > MAX_ORDER for o in self.orders):
            raise ContractError(f"probe orders must be in 1..{MAX_ORDER}")
        if list(self.orders) != sorted(self.orders, reverse=True):
            raise ContractError("probe orders must be non-increasing")

    @classmethod
    def from_needed(cls, needed: Sequence[tuple[int, int]]) -> "ProbeLayout":
        best: dict[int, int] = {}
        for axis, order in needed:
            if order > 0:
                best[axis] = max(best.get(axis, 0), order)
        items = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls(tuple(a for a, _ in items), tuple(o for _, o in items))

    @property
    def max_order(self) -> int:
        return self.orders[0] if self.orders else 0

    def level_size(self, k: int) -> int:
        return sum(1 for o in self.orders if o >= k)

    def level_slice(self, k: int) -> slice:
        start = 1 + sum(self.level_size(j) for j in range(1, k))
        return slice(start, start + self.level_size(k))

    @property
    def rows(self) -> int:
        return 1 + sum(self.orders)

    def row(self, axis: int, order: int) -> int:
        if order == 0:
            return 0
        p = self.axes.index(axis)
        if self.orders[p] < order:
            raise ContractError(f"axis {axis} carried to order {self.orders[p]} < {order}")
        return self.level_slice(order).start + p

    def seed(self, x: np.ndarray) -> np.ndarray:
        """Input slab for points ``x`` of shape ``(B, d)``."""
        x = np.asarray(x, dtype=float)
        slab = np.zeros((self.rows,) + x.shape)
        slab[0] = x
        for p, axis in enumerate(self.axes):
            slab[1 + p, :, axis] = 1.0
        return slab


def slab_tanh(a: np.ndarray, layout: ProbeLayout, cache: dict | None = None) -> np.ndarray:
    """Closed-form tanh jet for orders <= 3 (``t = 1 - tanh^2``):

    ``y1 = t a1``,  ``y2 = t a2 - y0 t a1^2``,
    ``y3 = t a3 - 2 y0 t a1 a2 + t (y0^2 - 1/3) a1^3``.
    """
    y0 = np.tanh(a[0])
    t = 1.0 - y0 * y0
    if cache is not None:
        cache["y0"], cache["t"] = y0, t
    out = np.empty_like(a)
    out[0] = y0
    K = layout.max_order
    if K >= 1:
        s1 = layout.level_slice(1)
        A1 = a[s1]
        np.multiply(t, A1, out=out[s1])
    if K >= 2:
        s2 = layout.level_slice(2)
        n2 = s2.stop - s2.start
        B1 = A1[:n2]
        out[s2] = t * (a[s2] - y0 * (B1 * B1))
    if K >= 3:
        s3 = layout.level_slice(3)
        n3 = s3.stop - s3.start
        C1 = A1[:n3]
        C2 = a[s2][:n3]
        out[s3] = t * (a[s3] - 2.0 * y0 * (C1 * C2) + (y0 * y0 - 1.0 / 3.0) * (C1 * C1 * C1))
    return out


def slab_tanh_vjp(a: np.ndarray, g: np.ndarray, layout: ProbeLayout, cache: dict | None = None) -> np.ndarray:
    if cache:
        y0, t = cache["y0"], cache["t"]
    else:
        y0 = np.tanh(a[0])
        t = 1.0 - y0 * y0
    y0sq = y0 * y0
    yt = y0 * t
    ga = np.empty_like(a)
    ga0 = g[0] * t
    K = layout.max_order
    if K >= 1:
        s1 = layout.level_slice(1)
        A1, G1 = a[s1], g[s1]
        # every level contributes (d t / d a0) * sum(G_k A_k) through its leading t a_k term
        lin = np.einsum("p...,p...->...", G1, A1)
        np.multiply(G1, t, out=ga[s1])
    if K >= 2:
        s2 = layout.level_slice(2)
        n2 = s2.stop - s2.start
        A2, G2 = a[s2], g[s2]
        B1 = A1[:n2]
        lin += np.einsum("p...,p...->...", G2, A2)
        quad = np.einsum("p...,p...,p...->...", G2, B1, B1)
        ga[s1][:n2] -= 2.0 * yt * (G2 * B1)
        np.multiply(G2, t, out=ga[s2])
    if K >= 3:
        s3 = layout.level_slice(3)
        n3 = s3.stop - s3.start
        A3, G3 = a[s3], g[s3]
        C1, C2 = A1[:n3], A2[:n3]
        lin += np.einsum("p...,p...->...", G3, A3)
        quad += 2.0 * np.einsum("p...,p...,p...->...", G3, C1, C2)
        cub = np.einsum("p...,p...,p...,p...->...", G3, C1, C1, C1)
        ga[s1][:n3] += G3 * (3.0 * t * (y0sq - 1.0 / 3.0) * (C1 * C1) - 2.0 * yt * C2)
        ga[s2][:n3] -= 2.0 * yt * (G3 * C1)
        np.multiply(G3, t, out=ga[s3])
        ga0 += yt * (8.0 / 3.0 - 4.0 * y0sq) * cub
    if K >= 1:
        ga0 += -2.0 * yt * lin
    if K >= 2:
        ga0 -= t * (1.0 - 3.0 * y0sq) * quad
    ga[0] = ga0
    return ga


def slab_affine(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``x @ W`` on every row, bias on the primal row only."""
    out = (x.reshape(-1, x.shape[-1]) @ W).reshape(x.shape[:-1] + (W.shape[1],))
    out[0] += b
    return out


# ---------------------------------------------------------------------------
# Reverse sweep
# ---------------------------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


class Tape:
    """Ordered record of elementary operations for one forward evaluation."""

    def __init__(self):
        self.nodes: list[Var] = []

    def leaf(self, value) -> "Var":
        return Var(self, np.asarray(value, dtype=float), (), None)

    def backward(self, out: "Var", wrt: "Var") -> np.ndarray:
        """Adjoint of scalar ``out`` with respect to leaf ``wrt``."""
        if out.tape is not self or wrt.tape is not self:
            raise ContractError("node was not recorded on this tape")
        if out.value.size != 1:
            raise ContractError("reverse sweep needs a scalar output node")
        adj: list[np.ndarray | None] = [None] * len(self.nodes)
        adj[out.index] = np.ones_like(out.value)
        for i in range(out.index, -1, -1):
            g = adj[i]
            if g is None:
                continue
            node = self.nodes[i]
            if node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None:
                    continue
                j = parent.index
                adj[j] = pg if adj[j] is None else adj[j] + pg
        g = adj[wrt.index]
        return np.zeros_like(wrt.value) if g is None else g


class Var:
    """A recorded array value.  Plain arrays act as constants in arithmetic."""

    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, tape: Tape, value: np.ndarray, parents: tuple, vjp: Callable | None):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def _new(self, value, parents, vjp) -> "Var":
        return Var(self.tape, value, parents, vjp)

    def __add__(self, other):
        if isinstance(other, Var):
            sa, sb = self.shape, other.shape
            return self._new(self.value + other.value, (self, other),
                             lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))
        sa = self.shape
        return self._new(self.value + other, (self,), lambda g: (_unbroadcast(g, sa),))

    __radd__ = __add__

    def __neg__(self):
        return self._new(-self.value, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Var):
            a, b = self.value, other.value
            return self._new(a * b, (self, other),
                             lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)))
        return scale(self, other)

    __rmul__ = __mul__

    def __getitem__(self, index):
        shape = self.shape

        def vjp(g):
            out = np.zeros(shape)
            np.add.at(out, index, g)
            return (out,)

        return self._new(self.value[index], (self,), vjp)

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 1:
            raise ContractError("only positive integer powers are recorded")
        a = self.value
        return self._new(a**n, (self,), lambda g: (g * n * a ** (n - 1),))


def scale(a: Var, c) -> Var:
    c = np.asarray(c, dtype=float)
    sa = a.shape
    return a._new(a.value * c, (a,), lambda g: (_unbroadcast(g * c, sa),))


def mean(a: Var) -> Var:
    n = a.value.size
    shape = a.shape
    return a._new(np.asarray(a.value.mean()), (a,), lambda g: (np.full(shape, g / n),))


def concat(parts: Sequence[Var]) -> Var:
    sizes = [p.shape[0] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return parts[0]._new(np.concatenate([p.value for p in parts]), tuple(parts), vjp)


def take_block(theta: Var, start: int, stop: int, shape: tuple[int, ...]) -> Var:
    """Reshaped view of ``theta[start:stop]``; adjoint scatters back."""
    n = theta.shape[0]

    def vjp(g):
        out = np.zeros(n)
        out[start:stop] = g.ravel()
        return (out,)

    return theta._new(theta.value[start:stop].reshape(shape), (theta,), vjp)


def affine(x, W, b):
    """Slab affine map; records when any argument is a :class:`Var`."""
    xs = [v for v in (x, W, b) if isinstance(v, Var)]
    xv = x.value if isinstance(x, Var) else x
    Wv = W.value if isinstance(W, Var) else W
    bv = b.value if isinstance(b, Var) else b
    out = slab_affine(xv, Wv, bv)
    if not xs:
        return out
    parents = tuple(v for v in (x, W, b) if isinstance(v, Var))

    def vjp(g):
        res = []
        if isinstance(x, Var):
            res.append((g.reshape(-1, g.shape[-1]) @ Wv.T).reshape(xv.shape))
        if isinstance(W, Var):
            din, dout = Wv.shape
            res.append(xv.reshape(-1, din).T @ g.reshape(-1, dout))
        if isinstance(b, Var):
            res.append(g[0].reshape(-1, g.shape[-1]).sum(axis=0))
        return tuple(res)

    return xs[0]._new(out, parents, vjp)


def tanh(x, layout: ProbeLayout):
    if not isinstance(x, Var):
        return fused_tanh(x, layout)
    a = x.value
    return x._new(fused_tanh(a, layout), (x,), lambda g: (fused_tanh_vjp(a, g, layout),))


def row(x, r: int, factor: float = 1.0):
    """Row ``r`` of a slab times ``factor`` (used to turn ck into k! ck)."""
    if not isinstance(x, Var):
        return x[r] * factor
    shape = x.shape

    def vjp(g):
        out = np.zeros(shape)
        out[r] = g * factor
        return (out,)

    return x._new(x.value[r] * factor, (x,), vjp)


def loss_gradient(tape: Tape, loss: Var, params: Var) -> np.ndarray:
    """Gradient of the recorded scalar ``loss`` with respect to leaf ``params``."""
    if loss.tape is not tape:
        raise ContractError("loss node was not recorded on this tape")
    g = tape.backward(loss, params)
    if not np.all(np.isfinite(g)):
        raise EvaluationError("non-finite gradient")
    return g


# ---------------------------------------------------------------------------
# Finite-difference oracles
# ---------------------------------------------------------------------------

_STENCILS = {
    1: ([-1, 1], [-0.5, 0.5]),
    2: ([-1, 0, 1], [1.0, -2.0, 1.0]),
    3: ([-2, -1, 1, 2], [-0.5, 1.0, -1.0, 0.5]),
}


def _central(f, x, axis, order, h):
    offs, wts = _STENCILS[order]
    acc = 0.0
    for o, w in zip(offs, wts):
        xp = np.array(x, dtype=float, copy=True)
        xp[..., axis] += o * h
        acc = acc + w * np.asarray(f(xp))
    return acc / h**order


def fd_derivative(f, x, axis: int, order: int, h: float = 1e-3, richardson: bool = True):
    """Central-difference ``d^order f / dx_axis^order`` at points ``x``.

    ``f`` maps an array of points ``(..., d)`` to values.  With
    ``richardson`` the O(h^2) estimates at ``h`` and ``h/2`` are combined into
    an O(h^4) one.
    """
    if order == 0:
        return np.asarray(f(np.asarray(x, dtype=float)))
    coarse = _central(f, x, axis, order, h)
    if not richardson:
        return coarse
    fine = _central(f, x, axis, order, h / 2)
    return (4.0 * fine - coarse) / 3.0


def fd_gradient(f, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Parameter-wise central differences of scalar ``f`` at ``theta``."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += h
        tm[i] -= h
        g[i] = (f(tp) - f(tm)) / (2.0 * h)
    return g
