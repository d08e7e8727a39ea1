"""Half-integer quantum numbers and Wigner 6-j symbols.

All selection-rule and phase logic runs on integers holding twice the
quantum number. The Racah sum is evaluated with exact integer factorials,
so the square of a 6-j symbol comes out as an exact ``Fraction``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Union

__all__ = [
    "HalfInt",
    "as_halfint",
    "triangle_ok",
    "sixj",
    "sixj_exact",
    "sixj_exact_square",
]


@dataclass(frozen=True, order=True)
class HalfInt:
    """An integer or half-integer, stored as ``twice`` the value."""

    twice: int

    def __post_init__(self):
        if not isinstance(self.twice, int) or isinstance(self.twice, bool):
            raise TypeError(f"HalfInt.twice must be int, got {self.twice!r}")

    @classmethod
    def of(cls, value: "HalfIntLike") -> "HalfInt":
        """Coerce ``value`` (HalfInt, int, Fraction, float or "7/2") to HalfInt."""
        if isinstance(value, HalfInt):
            return value
        if isinstance(value, str):
            value = Fraction(value.strip())
        if isinstance(value, float):
            if not math.isfinite(value):
                raise ValueError(f"not a half-integer: {value!r}")
            value = Fraction(value)
        frac = Fraction(value) * 2
        if frac.denominator != 1:
            raise ValueError(f"not a half-integer: {value!r}")
        return cls(int(frac))

    @property
    def value(self) -> Fraction:
        return Fraction(self.twice, 2)

    @property
    def is_integer(self) -> bool:
        return self.twice % 2 == 0

    def __add__(self, other):
        return HalfInt(self.twice + as_halfint(other).twice)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        return HalfInt(self.twice - as_halfint(other).twice)

    def __rsub__(self, other):
        return as_halfint(other) - self

    def __neg__(self):
        return HalfInt(-self.twice)

    def __abs__(self):
        return HalfInt(abs(self.twice))

    def __float__(self):
        return self.twice / 2

    def __str__(self):
        if self.twice % 2 == 0:
            return str(self.twice // 2)
        return f"{self.twice}/2"

    def __repr__(self):
        return f"HalfInt({self})"


HalfIntLike = Union[HalfInt, int, Fraction, float, str]


def as_halfint(value: HalfIntLike) -> HalfInt:
    return HalfInt.of(value)


def _triangle2(a: int, b: int, c: int) -> bool:
    # doubled arguments
    return abs(a - b) <= c <= a + b and (a + b + c) % 2 == 0


def triangle_ok(a: HalfIntLike, b: HalfIntLike, c: HalfIntLike) -> bool:
    """True iff |a-b| <= c <= a+b and a+b+c is an integer."""
    return _triangle2(as_halfint(a).twice, as_halfint(b).twice, as_halfint(c).twice)


def _delta_sq(a: int, b: int, c: int) -> Fraction:
    # triangle coefficient squared, doubled arguments
    return Fraction(
        math.factorial((a + b - c) // 2)
        * math.factorial((a - b + c) // 2)
        * math.factorial((-a + b + c) // 2),
        math.factorial((a + b + c) // 2 + 1),
    )


@lru_cache(maxsize=65536)
def _racah(j1: int, j2: int, j3: int, j4: int, j5: int, j6: int) -> tuple[int, Fraction]:
    """Return (sign, square) of the 6-j symbol with doubled arguments."""
    if min(j1, j2, j3, j4, j5, j6) < 0:
        return 0, Fraction(0)
    triads = ((j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3))
    if not all(_triangle2(*t) for t in triads):
        return 0, Fraction(0)

    # every quantity below is an integer because all triads are integral
    t1 = (j1 + j2 + j3) // 2
    t2 = (j1 + j5 + j6) // 2
    t3 = (j4 + j2 + j6) // 2
    t4 = (j4 + j5 + j3) // 2
    p1 = (j1 + j2 + j4 + j5) // 2
    p2 = (j2 + j3 + j5 + j6) // 2
    p3 = (j3 + j1 + j6 + j4) // 2

    fac = math.factorial
    total = 0
    common = 1
    zmin = max(t1, t2, t3, t4)
    zmax = min(p1, p2, p3)
    terms = []
    for z in range(zmin, zmax + 1):
        den = (
            fac(z - t1) * fac(z - t2) * fac(z - t3) * fac(z - t4)
            * fac(p1 - z) * fac(p2 - z) * fac(p3 - z)
        )
        terms.append((z, den))
        common = math.lcm(common, den)
    for z, den in terms:
        term = fac(z + 1) * (common // den)
        total += -term if z % 2 else term
    if total == 0:
        return 0, Fraction(0)

    sum_val = Fraction(total, common)
    square = (
        sum_val * sum_val
        * _delta_sq(j1, j2, j3) * _delta_sq(j1, j5, j6)
        * _delta_sq(j4, j2, j6) * _delta_sq(j4, j5, j3)
    )
    return (1 if total > 0 else -1), square


def _doubled(args) -> tuple[int, ...]:
    if len(args) != 6:
        raise TypeError(f"a 6-j symbol takes six arguments, got {len(args)}")
    return tuple(as_halfint(a).twice for a in args)


def sixj_exact(j1, j2, j3, j4, j5, j6) -> tuple[int, Fraction]:
    """Sign and exact square of {j1 j2 j3; j4 j5 j6}.

    The value of the symbol is ``sign * sqrt(square)``; sign is 0 when the
    symbol vanishes.
    """
    return _racah(*_doubled((j1, j2, j3, j4, j5, j6)))


def sixj_exact_square(j1, j2, j3, j4, j5, j6) -> Fraction:
    """Exact rational square of the 6-j symbol {j1 j2 j3; j4 j5 j6}."""
    return sixj_exact(j1, j2, j3, j4, j5, j6)[1]


def sixj(j1, j2, j3, j4, j5, j6) -> float:
    """Wigner 6-j symbol {j1 j2 j3; j4 j5 j6} as a float.

    Arguments may be HalfInt, int, Fraction, half-integral float or strings
    like ``"7/2"``. Returns exactly 0.0 when any triad fails the triangle
    rule.

    >>> sixj(1, 1, 1, 0, 1, 1)
    -0.3333333333333333
    """
    sign, square = sixj_exact(j1, j2, j3, j4, j5, j6)
    if sign == 0:
        return 0.0
    return sign * math.sqrt(square)
