"""Truncated multivariate Taylor polynomials ("jets") with batched coefficients.

A jet in variables e_1..e_m with degree caps c_1..c_m stores the coefficient
of e_1^k_1 ... e_m^k_m (k_i <= c_i) in ``coef[k_1, ..., k_m, *batch]``.
Products drop every monomial that exceeds a cap, which is exactly what is
needed when each variable is later read off at degree c_i.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np


@lru_cache(maxsize=None)
def _product_table(caps: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # index pairs (i, j) whose product stays under the caps, and the 0/1
    # matrix summing each pair into its output slot
    shape = tuple(c + 1 for c in caps)
    idx = list(itertools.product(*[range(s) for s in shape]))
    flat = {k: n for n, k in enumerate(idx)}
    left, right, out = [], [], []
    for i in idx:
        for j in idx:
            k = tuple(a + b for a, b in zip(i, j))
            if all(x <= c for x, c in zip(k, caps)):
                left.append(flat[i])
                right.append(flat[j])
                out.append(flat[k])
    gather = np.zeros((len(idx), len(out)))
    gather[out, np.arange(len(out))] = 1.0
    return np.array(left), np.array(right), gather


class Jet:
    """Batched truncated Taylor polynomial."""

    __slots__ = ("caps", "coef")

    def __init__(self, caps: Sequence[int], coef: np.ndarray):
        self.caps = tuple(caps)
        self.coef = coef

    # construction ---------------------------------------------------------
    @classmethod
    def constant(cls, value, caps: Sequence[int] = ()) -> "Jet":
        value = np.asarray(value, dtype=float)
        coef = np.zeros(tuple(c + 1 for c in caps) + value.shape)
        coef[(0,) * len(caps)] = value
        return cls(caps, coef)

    @property
    def nvars(self) -> int:
        return len(self.caps)

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coef.shape[self.nvars :]

    @property
    def value(self) -> np.ndarray:
        return self.coef[(0,) * self.nvars]

    def extend(self, cap: int) -> "Jet":
        """Add a fresh variable (all existing coefficients at degree 0)."""
        coef = np.zeros(self.coef.shape[: self.nvars] + (cap + 1,) + self.batch_shape)
        coef[(slice(None),) * self.nvars + (0,)] = self.coef
        return Jet(self.caps + (cap,), coef)

    def variable(self, direction: "Jet | np.ndarray") -> "Jet":
        """``direction * e_last`` for the last variable (cap >= 1)."""
        d = direction if isinstance(direction, Jet) else Jet.constant(direction, self.caps)
        if d.caps != self.caps:
            d = d.lift(self.caps)
        shift = np.zeros_like(d.coef)
        shift[(slice(None),) * (self.nvars - 1) + (slice(1, None),)] = d.coef[(slice(None),) * (self.nvars - 1) + (slice(None, -1),)]
        return Jet(self.caps, shift)

    def lift(self, caps: Sequence[int]) -> "Jet":
        """Embed into a jet with additional trailing variables."""
        caps = tuple(caps)
        out = self
        for c in caps[self.nvars :]:
            out = out.extend(c)
        return out

    def take(self, degree: int) -> "Jet":
        """Coefficient of e_last^degree, a jet in the remaining variables."""
        return Jet(self.caps[:-1], self.coef[(slice(None),) * (self.nvars - 1) + (degree,)])

    # arithmetic -----------------------------------------------------------
    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other if other.caps == self.caps else other.lift(self.caps)
        return Jet.constant(np.broadcast_to(np.asarray(other, dtype=float), self.batch_shape), self.caps)

    def __add__(self, other) -> "Jet":
        if isinstance(other, Jet) and other.nvars > self.nvars:
            return other + self
        o = self._coerce(other)
        return Jet(self.caps, self.coef + o.coef)

    __radd__ = __add__

    def __neg__(self) -> "Jet":
        return Jet(self.caps, -self.coef)

    def __sub__(self, other) -> "Jet":
        return self + (-other if isinstance(other, Jet) else -np.asarray(other, dtype=float))

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        if isinstance(other, Jet):
            if other.nvars > self.nvars:
                return other * self
            o = self._coerce(other)
            if not self.caps:
                return Jet((), self.coef * o.coef)
            left, right, gather = _product_table(self.caps)
            n = gather.shape[0]
            a = self.coef.reshape((n,) + self.batch_shape)
            b = o.coef.reshape((n,) + o.batch_shape)
            terms = a[left] * b[right]
            res = gather @ terms.reshape(len(left), -1)
            return Jet(self.caps, res.reshape(self.coef.shape[: self.nvars] + terms.shape[1:]))
        scal = np.asarray(other, dtype=float)
        return Jet(self.caps, self.coef * scal)

    __rmul__ = __mul__

    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.caps, self.coef[(slice(None),) * self.nvars + key])

    def matvec(self, matrix: np.ndarray) -> "Jet":
        """Apply ``matrix`` to the last batch axis of every coefficient."""
        return Jet(self.caps, self.coef @ np.asarray(matrix).T)

    @staticmethod
    def stack(parts: Sequence["Jet"], axis: int = -1) -> "Jet":
        caps = max((p.caps for p in parts), key=len)
        parts = [p.lift(caps) for p in parts]
        nv = len(caps)
        ax = axis if axis < 0 else nv + axis
        return Jet(caps, np.stack([p.coef for p in parts], axis=ax))

    @property
    def total_degree(self) -> int:
        return sum(self.caps)

    def compose(self, derivatives: Callable[[np.ndarray, int], list[np.ndarray]]) -> "Jet":
        """f(self) given ``derivatives(x0, n) = [f(x0), f'(x0), ..., f^(n)(x0)]``."""
        x0 = self.value
        n = self.total_degree
        ders = derivatives(x0, n)
        out = Jet.constant(ders[0], self.caps)
        if n == 0:
            return out
        delta = self - x0
        power = delta
        for k in range(1, n + 1):
            out = out + power * (ders[k] / math.factorial(k))
            if k < n:
                power = power * delta
        return out


def _sin_derivatives(x: np.ndarray, n: int) -> list[np.ndarray]:
    s, c = np.sin(x), np.cos(x)
    cycle = [s, c, -s, -c]
    return [cycle[k % 4] for k in range(n + 1)]


def _cos_derivatives(x: np.ndarray, n: int) -> list[np.ndarray]:
    s, c = np.sin(x), np.cos(x)
    cycle = [c, -s, -c, s]
    return [cycle[k % 4] for k in range(n + 1)]


def _exp_derivatives(x: np.ndarray, n: int) -> list[np.ndarray]:
    e = np.exp(x)
    return [e] * (n + 1)


class ArrayOps:
    """Elementwise maths on plain arrays."""

    sin = staticmethod(np.sin)
    cos = staticmethod(np.cos)
    exp = staticmethod(np.exp)

    @staticmethod
    def stack(parts, axis=-1):
        return np.stack(parts, axis=axis)


class JetOps:
    """The same maths on jets, so one field definition serves both."""

    @staticmethod
    def sin(x):
        return x.compose(_sin_derivatives) if isinstance(x, Jet) else np.sin(x)

    @staticmethod
    def cos(x):
        return x.compose(_cos_derivatives) if isinstance(x, Jet) else np.cos(x)

    @staticmethod
    def exp(x):
        return x.compose(_exp_derivatives) if isinstance(x, Jet) else np.exp(x)

    @staticmethod
    def stack(parts, axis=-1):
        if any(isinstance(p, Jet) for p in parts):
            caps = max((p.caps for p in parts if isinstance(p, Jet)), key=len)
            ref = next(p for p in parts if isinstance(p, Jet))
            parts = [p if isinstance(p, Jet) else Jet.constant(np.broadcast_to(p, ref.batch_shape), caps) for p in parts]
            return Jet.stack(parts, axis)
        return np.stack(parts, axis=axis)
