"""Second-order chain-rule arithmetic over batches of points.

A ``Jet`` carries a value together with its gradient and Hessian with
respect to a fixed set of ``m`` variables, for ``T`` points at once:
``val`` has shape (T,), ``grad`` (T, m) and ``hess`` (T, m, m).

The coordinate maps in :mod:`flgames.feedback_linearization` are written
against the dispatching helpers at the bottom of this module, so the same
closed-form expression yields plain values (numpy input) or values with
exact first and second derivatives (Jet input).
"""

from __future__ import annotations

import numpy as np


class Jet:
    __slots__ = ("val", "grad", "hess")
    __array_priority__ = 100

    def __init__(self, val, grad, hess):
        self.val = val
        self.grad = grad
        self.hess = hess

    @classmethod
    def variables(cls, values: np.ndarray) -> list["Jet"]:
        """Seed one jet per column of ``values`` (T, m) as independent variables."""
        values = np.asarray(values, dtype=float)
        T, m = values.shape
        eye = np.eye(m)
        zero_h = np.zeros((T, m, m))
        return [cls(values[:, j].copy(), np.broadcast_to(eye[j], (T, m)).copy(), zero_h)
                for j in range(m)]

    @classmethod
    def constant(cls, val, like: "Jet") -> "Jet":
        T, m = like.grad.shape
        val = np.broadcast_to(np.asarray(val, dtype=float), (T,)).copy()
        return cls(val, np.zeros((T, m)), np.zeros((T, m, m)))

    def _chain(self, f0, f1, f2) -> "Jet":
        # h = f(self): grad = f' g, hess = f' H + f'' g g^T
        g = self.grad
        hess = f1[:, None, None] * self.hess + f2[:, None, None] * (g[:, :, None] * g[:, None, :])
        return Jet(f0, f1[:, None] * g, hess)

    def __neg__(self):
        return Jet(-self.val, -self.grad, -self.hess)

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.val + other.val, self.grad + other.grad, self.hess + other.hess)
        return Jet(self.val + other, self.grad, self.hess)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            return Jet(self.val - other.val, self.grad - other.grad, self.hess - other.hess)
        return Jet(self.val - other, self.grad, self.hess)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self, other
            cross = a.grad[:, :, None] * b.grad[:, None, :]
            hess = (a.val[:, None, None] * b.hess + b.val[:, None, None] * a.hess
                    + cross + np.swapaxes(cross, 1, 2))
            return Jet(a.val * b.val, a.val[:, None] * b.grad + b.val[:, None] * a.grad, hess)
        other = np.asarray(other, dtype=float)
        if other.ndim == 0:
            return Jet(self.val * other, self.grad * other, self.hess * other)
        return Jet(self.val * other, self.grad * other[:, None], self.hess * other[:, None, None])

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        inv = 1.0 / self.val
        return self._chain(inv, -inv**2, 2.0 * inv**3)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        p = float(p)
        v = self.val
        if p == 2.0:
            return self * self
        return self._chain(v**p, p * v ** (p - 1.0), p * (p - 1.0) * v ** (p - 2.0))

    def sqrt(self):
        r = np.sqrt(self.val)
        return self._chain(r, 0.5 / r, -0.25 / (r * self.val))

    def sin(self):
        s, c = np.sin(self.val), np.cos(self.val)
        return self._chain(s, c, -s)

    def cos(self):
        s, c = np.sin(self.val), np.cos(self.val)
        return self._chain(c, -s, -c)

    def tan(self):
        t = np.tan(self.val)
        sec2 = 1.0 + t * t
        return self._chain(t, sec2, 2.0 * t * sec2)

    def arctan(self):
        d = 1.0 / (1.0 + self.val**2)
        return self._chain(np.arctan(self.val), d, -2.0 * self.val * d * d)


def _atan2_jet(y: Jet, x: Jet) -> Jet:
    # d atan2(y, x) = (x dy - y dx) / (x^2 + y^2)
    r2 = x.val**2 + y.val**2
    wy, wx = x.val / r2, -y.val / r2
    grad = wy[:, None] * y.grad + wx[:, None] * x.grad
    # second derivatives of atan2 w.r.t. (y, x)
    hyy = -2.0 * x.val * y.val / r2**2
    hxx = -hyy
    hxy = (y.val**2 - x.val**2) / r2**2
    gy, gx = y.grad, x.grad
    hess = (wy[:, None, None] * y.hess + wx[:, None, None] * x.hess
            + hyy[:, None, None] * gy[:, :, None] * gy[:, None, :]
            + hxx[:, None, None] * gx[:, :, None] * gx[:, None, :]
            + hxy[:, None, None] * (gx[:, :, None] * gy[:, None, :] + gy[:, :, None] * gx[:, None, :]))
    return Jet(np.arctan2(y.val, x.val), grad, hess)


def sqrt(a):
    return a.sqrt() if isinstance(a, Jet) else np.sqrt(a)


def sin(a):
    return a.sin() if isinstance(a, Jet) else np.sin(a)


def cos(a):
    return a.cos() if isinstance(a, Jet) else np.cos(a)


def tan(a):
    return a.tan() if isinstance(a, Jet) else np.tan(a)


def arctan(a):
    return a.arctan() if isinstance(a, Jet) else np.arctan(a)


def atan2(y, x):
    if isinstance(y, Jet) or isinstance(x, Jet):
        if not isinstance(y, Jet):
            y = Jet.constant(y, x)
        if not isinstance(x, Jet):
            x = Jet.constant(x, y)
        return _atan2_jet(y, x)
    return np.arctan2(y, x)


def value(a):
    return a.val if isinstance(a, Jet) else a
