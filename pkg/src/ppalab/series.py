"""Truncated bivariate power series in ħ and the coupling λ.

S-matrices contain ħ⁻ⁿ next to λⁿ, so negative ħ powers down to -L_max are
stored. A monomial ħ^a λ^n is kept iff n <= L_max and a + n <= H_max + L_max.
The grade a + n never decreases under the products used here, so dropping a
monomial early never loses a kept coefficient of a final result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Orders:
    h_max: int = 2
    l_max: int = 2

    @property
    def grade_max(self) -> int:
        return self.h_max + self.l_max

    @property
    def shape(self) -> tuple:
        # ħ index runs from -l_max .. grade_max
        return (self.grade_max + self.l_max + 1, self.l_max + 1)

    def keeps(self, a: int, n: int) -> bool:
        return 0 <= n <= self.l_max and -self.l_max <= a and a + n <= self.grade_max

    def layers(self):
        """Physically reported layers (a >= 0, a <= h_max, n <= l_max)."""
        return [(a, n) for n in range(self.l_max + 1) for a in range(self.h_max + 1)]


class FormalSeries:
    __slots__ = ("orders", "coeffs")

    def __init__(self, orders: Orders, coeffs=None):
        self.orders = orders
        if coeffs is None:
            coeffs = np.zeros(orders.shape, dtype=complex)
        self.coeffs = np.asarray(coeffs, dtype=complex)
        if self.coeffs.shape != orders.shape:
            raise ValueError("coefficient array shape does not match orders")

    # construction
    @classmethod
    def monomial(cls, orders: Orders, a: int = 0, n: int = 0, value: complex = 1.0) -> "FormalSeries":
        s = cls(orders)
        if orders.keeps(a, n):
            s.coeffs[a + orders.l_max, n] = value
        return s

    @classmethod
    def one(cls, orders: Orders) -> "FormalSeries":
        return cls.monomial(orders, 0, 0, 1.0)

    # access
    def __getitem__(self, key) -> complex:
        a, n = key
        if not self.orders.keeps(a, n):
            return 0j
        return complex(self.coeffs[a + self.orders.l_max, n])

    def items(self):
        L = self.orders.l_max
        for i, n in zip(*np.nonzero(self.coeffs)):
            yield (int(i) - L, int(n)), complex(self.coeffs[i, n])

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def min_hbar_power(self, tol: float = 0.0):
        L = self.orders.l_max
        rows = np.nonzero(np.max(np.abs(self.coeffs), axis=1) > tol)[0]
        return None if rows.size == 0 else int(rows[0]) - L

    def classical(self) -> np.ndarray:
        """ħ⁰ layer as a λ-polynomial coefficient vector."""
        return self.coeffs[self.orders.l_max].copy()

    # arithmetic
    def _mask(self):
        L = self.orders.l_max
        a = np.arange(self.orders.shape[0])[:, None] - L
        n = np.arange(self.orders.shape[1])[None, :]
        return (a + n) <= self.orders.grade_max

    def __add__(self, other):
        if isinstance(other, FormalSeries):
            return FormalSeries(self.orders, self.coeffs + other.coeffs)
        return self + FormalSeries.monomial(self.orders, 0, 0, other)

    __radd__ = __add__

    def __neg__(self):
        return FormalSeries(self.orders, -self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, FormalSeries):
            return FormalSeries(self.orders, self.coeffs * other)
        L = self.orders.l_max
        out = np.zeros(self.orders.shape, dtype=complex)
        for i, n in zip(*np.nonzero(self.coeffs)):
            c = self.coeffs[i, n]
            a = int(i) - L
            for j, m in zip(*np.nonzero(other.coeffs)):
                b = int(j) - L
                if self.orders.keeps(a + b, n + m):
                    out[a + b + L, n + m] += c * other.coeffs[j, m]
        return FormalSeries(self.orders, out)

    __rmul__ = __mul__

    def shift(self, da: int = 0, dn: int = 0) -> "FormalSeries":
        """Multiply by ħ^da λ^dn with truncation."""
        L = self.orders.l_max
        out = np.zeros(self.orders.shape, dtype=complex)
        for i, n in zip(*np.nonzero(self.coeffs)):
            a = int(i) - L + da
            m = int(n) + dn
            if self.orders.keeps(a, m):
                out[a + L, m] = self.coeffs[i, n]
        return FormalSeries(self.orders, out)

    def conj(self) -> "FormalSeries":
        return FormalSeries(self.orders, np.conj(self.coeffs))

    def inverse(self) -> "FormalSeries":
        """Multiplicative inverse; requires a unit constant term and no negative ħ layers."""
        c0 = self[0, 0]
        if abs(c0) == 0:
            raise ZeroDivisionError("series has no constant term")
        x = self * (1.0 / c0) - 1.0
        out = FormalSeries.one(self.orders)
        term = FormalSeries.one(self.orders)
        for _ in range(self.orders.grade_max + self.orders.l_max + 1):
            term = term * (-x)
            if term.is_zero():
                break
            out = out + term
        return out * (1.0 / c0)

    def __truediv__(self, other):
        if isinstance(other, FormalSeries):
            return self * other.inverse()
        return FormalSeries(self.orders, self.coeffs / other)

    def max_abs_diff(self, other: "FormalSeries", layers=None) -> float:
        layers = self.orders.layers() if layers is None else layers
        return max((abs(self[k] - other[k]) for k in layers), default=0.0)

    def to_dict(self) -> dict:
        return {f"{a},{n}": [c.real, c.imag] for (a, n), c in self.items()}

    @classmethod
    def from_dict(cls, orders: Orders, data: dict) -> "FormalSeries":
        s = cls(orders)
        for key, (re, im) in data.items():
            a, n = (int(v) for v in key.split(","))
            s.coeffs[a + orders.l_max, n] = re + 1j * im
        return s

    def __repr__(self):
        body = ", ".join(f"ħ^{a}λ^{n}: {c:.6g}" for (a, n), c in self.items())
        return f"FormalSeries({body})"
