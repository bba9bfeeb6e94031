"""Forward-mode second-order jets over numpy arrays.

A :class:`Jet` carries a value, its gradient and (optionally) its Hessian
with respect to a fixed set of independent variables, all vectorized over a
trailing sample axis.  It is used to differentiate closed-form spacetime
metrics exactly, without symbolic algebra at run time.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Jet", "variables", "sqrt", "const"]


class Jet:
    __slots__ = ("val", "grad", "hess")
    __array_priority__ = 100

    def __init__(self, val, grad, hess=None):
        self.val = val
        self.grad = grad
        self.hess = hess

    @property
    def order(self):
        return 1 if self.hess is None else 2

    def _lift(self, other):
        if isinstance(other, Jet):
            return other
        v = np.broadcast_to(np.asarray(other, dtype=float), self.val.shape)
        g = np.zeros_like(self.grad)
        h = None if self.hess is None else np.zeros_like(self.hess)
        return Jet(v, g, h)

    def __add__(self, other):
        o = self._lift(other)
        h = None if self.hess is None else self.hess + o.hess
        return Jet(self.val + o.val, self.grad + o.grad, h)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.val, -self.grad, None if self.hess is None else -self.hess)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            c = np.asarray(other, dtype=float)
            return Jet(self.val * c, self.grad * c, None if self.hess is None else self.hess * c)
        u, v = self, other
        g = u.val * v.grad + v.val * u.grad
        h = None
        if u.hess is not None:
            outer = u.grad[:, None] * v.grad[None, :]
            h = u.val * v.hess + v.val * u.hess + outer + np.swapaxes(outer, 0, 1)
        return Jet(u.val * v.val, g, h)

    __rmul__ = __mul__

    def chain(self, f0, f1, f2=None):
        """Apply a scalar function given its value and first two derivatives at ``val``."""
        g = f1 * self.grad
        h = None
        if self.hess is not None:
            h = f2 * (self.grad[:, None] * self.grad[None, :]) + f1 * self.hess
        return Jet(f0, g, h)

    def reciprocal(self):
        inv = 1.0 / self.val
        return self.chain(inv, -inv * inv, 2 * inv**3)

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and p >= 0:
            out = self._lift(1.0)
            for _ in range(p):
                out = out * self
            return out
        v = self.val
        return self.chain(v**p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))


def variables(values, order=2):
    """Independent jets for the rows of ``values`` (shape ``(d, N)``)."""
    values = np.asarray(values, dtype=float)
    d = values.shape[0]
    n = values.shape[1:]
    out = []
    for i in range(d):
        g = np.zeros((d,) + n)
        g[i] = 1.0
        h = np.zeros((d, d) + n) if order >= 2 else None
        out.append(Jet(values[i].copy(), g, h))
    return out


def const(value, like):
    """Constant jet shaped like ``like``."""
    return like._lift(value)


def sqrt(u):
    s = np.sqrt(u.val)
    return u.chain(s, 0.5 / s, -0.25 / (s * u.val))
