"""Number regimes: exact rationals and fixed-precision reals with enclosures.

Exact work uses :class:`fractions.Fraction` directly (always gcd-reduced,
never rounded).  Root finding and multiplier computation need numbers like
``y1 ** (2 ** (n - 1))`` whose exact representation is infeasible, so those
live in :class:`PrecReal` (a binary float of explicit precision, every
operation taking its rounding direction as an argument) and in
:class:`Enclosure`, a two-sided interval ``[lo, hi]`` maintained with
outward rounding.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational as _RationalABC
from typing import Union

from mpmath import libmp

from .errors import LimitExceeded

Rational = Fraction

#: Largest ``i`` accepted by :func:`pow2tower`; 2^(2^26) is an 8 MiB integer.
MAX_TOWER_INDEX = 26


class Round(str, enum.Enum):
    """Rounding directions, valued with the mpmath rounding codes."""

    FLOOR = "f"
    CEILING = "c"
    NEAREST = "n"


def parse_rational(value) -> Fraction:
    """Parse ``"p/q"``, a decimal string (``"1e-8"``, ``"0.25"``), an int or a Fraction.

    Decimal strings are read exactly, so ``"1e-8"`` is exactly 1/10^8.
    Binary floats are rejected because they rarely mean what was typed.
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, _RationalABC):
        return Fraction(value.numerator, value.denominator)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a rational number: {value!r}") from exc
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return Fraction(int(value[0]), int(value[1]))
    raise TypeError(f"cannot interpret {value!r} as an exact rational")


def format_rational(value: Fraction) -> str:
    """Render as ``"p/q"`` (or ``"p"`` for integers); inverse of :func:`parse_rational`."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def pow2tower(i: int, max_index: int = MAX_TOWER_INDEX) -> Fraction:
    """Return exactly ``2 ** -(2 ** i)``."""
    if i < 0:
        raise ValueError("tower index must be nonnegative")
    if i > max_index:
        raise LimitExceeded(f"pow2tower index {i} exceeds the cap {max_index}")
    return Fraction(1, 1 << (1 << i))


def default_precision(n: int) -> int:
    """Working precision (bits) for instance size ``n``.

    ``y1 ** (2 ** (n - 1))`` sits near ``2 ** -(2 ** (n - 1))``; the extra 64 bits
    keep it resolved relative to the root enclosure width.
    """
    return max(128, (1 << (n - 1)) + 64)


def _fraction_of(raw) -> Fraction:
    p, q = libmp.to_rational(raw)
    return Fraction(int(p), int(q))


def _raw_of(value: Fraction, precision: int, rounding: Round):
    value = Fraction(value)
    return libmp.from_rational(value.numerator, value.denominator, precision, rounding.value)


class PrecReal:
    """A binary floating-point number carrying its precision in bits.

    Arithmetic is correctly rounded at ``min`` of the operand precisions in
    the direction passed to each method; there is no ambient rounding mode.
    Comparisons are exact.
    """

    __slots__ = ("raw", "precision")

    def __init__(self, raw, precision: int):
        if precision < 2:
            raise ValueError("precision must be at least 2 bits")
        self.raw = raw
        self.precision = int(precision)

    @classmethod
    def from_rational(cls, value, precision: int, rounding: Round = Round.NEAREST) -> "PrecReal":
        return cls(_raw_of(Fraction(value), precision, Round(rounding)), precision)

    def to_fraction(self) -> Fraction:
        return _fraction_of(self.raw)

    def _prec(self, other: "PrecReal") -> int:
        return min(self.precision, other.precision)

    def _coerce(self, other) -> "PrecReal":
        if isinstance(other, PrecReal):
            return other
        value = Fraction(other)
        down = PrecReal.from_rational(value, self.precision, Round.FLOOR)
        if down.to_fraction() != value:
            raise TypeError(
                f"operand {other!r} is not representable in {self.precision} bits; "
                "lift it with enclose() or to_prec() first"
            )
        return down

    def add(self, other, rounding: Round) -> "PrecReal":
        other = self._coerce(other)
        p = self._prec(other)
        return PrecReal(libmp.mpf_add(self.raw, other.raw, p, Round(rounding).value), p)

    def sub(self, other, rounding: Round) -> "PrecReal":
        other = self._coerce(other)
        p = self._prec(other)
        return PrecReal(libmp.mpf_sub(self.raw, other.raw, p, Round(rounding).value), p)

    def mul(self, other, rounding: Round) -> "PrecReal":
        other = self._coerce(other)
        p = self._prec(other)
        return PrecReal(libmp.mpf_mul(self.raw, other.raw, p, Round(rounding).value), p)

    def div(self, other, rounding: Round) -> "PrecReal":
        other = self._coerce(other)
        if libmp.mpf_sign(other.raw) == 0:
            raise ZeroDivisionError("PrecReal division by zero")
        p = self._prec(other)
        return PrecReal(libmp.mpf_div(self.raw, other.raw, p, Round(rounding).value), p)

    def square(self, rounding: Round) -> "PrecReal":
        return self.mul(self, rounding)

    def __neg__(self) -> "PrecReal":
        return PrecReal(libmp.mpf_neg(self.raw), self.precision)

    def sign(self) -> int:
        return libmp.mpf_sign(self.raw)

    def _cmp(self, other) -> int:
        if isinstance(other, PrecReal):
            return libmp.mpf_cmp(self.raw, other.raw)
        a, b = self.to_fraction(), Fraction(other)
        return (a > b) - (a < b)

    def __eq__(self, other):
        if not isinstance(other, (PrecReal, int, Fraction)):
            return NotImplemented
        return self._cmp(other) == 0

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __hash__(self):
        return hash(self.to_fraction())

    def __float__(self):
        return libmp.to_float(self.raw)

    def to_decimal(self, digits: int = 20) -> str:
        return libmp.to_str(self.raw, digits)

    def __repr__(self):
        return f"PrecReal({self.to_decimal(20)}, precision={self.precision})"


def to_prec(value, precision: int, rounding: Round = Round.NEAREST) -> PrecReal:
    """Round an exact rational to ``precision`` bits in the given direction."""
    if precision < 2:
        raise ValueError("precision must be at least 2 bits")
    return PrecReal.from_rational(Fraction(value), precision, rounding)


def enclose(value, precision: int) -> "Enclosure":
    """Tightest ``precision``-bit enclosure of an exact rational (a point if dyadic)."""
    value = Fraction(value)
    return Enclosure(
        PrecReal.from_rational(value, precision, Round.FLOOR),
        PrecReal.from_rational(value, precision, Round.CEILING),
    )


@dataclass(frozen=True, eq=False)
class Enclosure:
    """Certified interval ``[lo, hi]`` containing an exact real number."""

    lo: PrecReal
    hi: PrecReal

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("enclosure with lo > hi")

    @property
    def precision(self) -> int:
        return min(self.lo.precision, self.hi.precision)

    @classmethod
    def point(cls, value: PrecReal) -> "Enclosure":
        return cls(value, value)

    def _lift(self, other) -> "Enclosure":
        if isinstance(other, Enclosure):
            return other
        if isinstance(other, PrecReal):
            return Enclosure(other, other)
        if isinstance(other, (int, Fraction)):
            return enclose(other, self.precision)
        return NotImplemented

    # interval arithmetic, outward rounded

    def __add__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return o
        return Enclosure(self.lo.add(o.lo, Round.FLOOR), self.hi.add(o.hi, Round.CEILING))

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return o
        return Enclosure(self.lo.sub(o.hi, Round.FLOOR), self.hi.sub(o.lo, Round.CEILING))

    def __rsub__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return o
        return o - self

    def __neg__(self):
        return Enclosure(-self.hi, -self.lo)

    def __mul__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return o
        pairs = [(self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi)]
        lo = min(a.mul(b, Round.FLOOR) for a, b in pairs)
        hi = max(a.mul(b, Round.CEILING) for a, b in pairs)
        return Enclosure(lo, hi)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return o
        if o.contains(0):
            raise ZeroDivisionError("divisor enclosure contains zero")
        pairs = [(self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi)]
        lo = min(a.div(b, Round.FLOOR) for a, b in pairs)
        hi = max(a.div(b, Round.CEILING) for a, b in pairs)
        return Enclosure(lo, hi)

    def __rtruediv__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return o
        return o / self

    def square(self) -> "Enclosure":
        if self.lo.sign() >= 0:
            return Enclosure(self.lo.square(Round.FLOOR), self.hi.square(Round.CEILING))
        if self.hi.sign() <= 0:
            return Enclosure(self.hi.square(Round.FLOOR), self.lo.square(Round.CEILING))
        top = max(self.lo.square(Round.CEILING), self.hi.square(Round.CEILING))
        return Enclosure(PrecReal(libmp.fzero, self.precision), top)

    def pow2k(self, k: int) -> "Enclosure":
        """Enclosure of ``x ** (2 ** k)`` by ``k`` outward-rounded squarings."""
        out = self
        for _ in range(k):
            out = out.square()
        return out

    def intersect(self, other: "Enclosure") -> "Enclosure":
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if lo > hi:
            raise ValueError("enclosures are disjoint")
        return Enclosure(lo, hi)

    def with_precision(self, precision: int) -> "Enclosure":
        """Re-round outward to ``precision`` bits."""
        return Enclosure(
            PrecReal(libmp.mpf_pos(self.lo.raw, precision, "f"), precision),
            PrecReal(libmp.mpf_pos(self.hi.raw, precision, "c"), precision),
        )

    # certified predicates

    def contains(self, value) -> bool:
        return self.lo <= value <= self.hi

    def certainly_positive(self) -> bool:
        return self.lo.sign() > 0

    def certainly_negative(self) -> bool:
        return self.hi.sign() < 0

    def certainly_nonnegative(self) -> bool:
        return self.lo.sign() >= 0

    def certainly_nonpositive(self) -> bool:
        return self.hi.sign() <= 0

    def is_exact(self) -> bool:
        return self.lo == self.hi

    def is_zero(self) -> bool:
        return self.lo.sign() == 0 and self.hi.sign() == 0

    @property
    def width(self) -> Fraction:
        return self.hi.to_fraction() - self.lo.to_fraction()

    @property
    def mid(self) -> Fraction:
        return (self.hi.to_fraction() + self.lo.to_fraction()) / 2

    def magnitude(self) -> Fraction:
        """Upper bound of ``|x|`` over the enclosure."""
        return max(abs(self.lo.to_fraction()), abs(self.hi.to_fraction()))

    def mignitude(self) -> Fraction:
        """Lower bound of ``|x|`` over the enclosure."""
        if self.contains(0):
            return Fraction(0)
        return min(abs(self.lo.to_fraction()), abs(self.hi.to_fraction()))

    def __repr__(self):
        return f"Enclosure([{self.lo.to_decimal(17)}, {self.hi.to_decimal(17)}], precision={self.precision})"


Scalar = Union[Fraction, Enclosure]


def lower_bound(value: Scalar) -> Fraction:
    if isinstance(value, Enclosure):
        return value.lo.to_fraction()
    return Fraction(value)


def upper_bound(value: Scalar) -> Fraction:
    if isinstance(value, Enclosure):
        return value.hi.to_fraction()
    return Fraction(value)


def scalar_max(values, floor=None) -> Scalar:
    """Maximum of exact or enclosed scalars; enclosures give ``[max lo, max hi]``.

    With ``floor`` given, the result is clamped below at it.
    """
    values = list(values)
    if floor is not None:
        values.append(Fraction(floor))
    if not values:
        raise ValueError("max of empty sequence")
    if all(not isinstance(v, Enclosure) for v in values):
        return max(Fraction(v) for v in values)
    prec = min(v.precision for v in values if isinstance(v, Enclosure))
    lifted = [v if isinstance(v, Enclosure) else enclose(v, prec) for v in values]
    return Enclosure(max(v.lo for v in lifted), max(v.hi for v in lifted))


def decimal_string(value, digits: int = 40, rounding: Round = Round.NEAREST) -> str:
    """Scientific-notation decimal of an exact rational, rounded in a chosen direction.

    Directed rounding keeps printed enclosure endpoints valid: print ``lo``
    with FLOOR and ``hi`` with CEILING.
    """
    q = Fraction(value)
    if q == 0:
        return "0"
    sign = "-" if q < 0 else ""
    a = abs(q)
    # exponent e with 10^e <= a < 10^(e+1)
    e = len(str(a.numerator)) - len(str(a.denominator))
    if Fraction(10) ** e > a:
        e -= 1
    elif Fraction(10) ** (e + 1) <= a:
        e += 1
    scaled = a * Fraction(10) ** (digits - 1 - e)
    rounding = Round(rounding)
    # rounding direction refers to the signed value
    if rounding is Round.NEAREST:
        mant = round(scaled)
    elif (rounding is Round.FLOOR) == (q > 0):
        mant = scaled.numerator // scaled.denominator
    else:
        mant = -(-scaled.numerator // scaled.denominator)
    if mant >= 10**digits:
        mant //= 10
        e += 1
    text = str(mant).rjust(digits, "0")
    body = text[0] + ("." + text[1:].rstrip("0") if text[1:].rstrip("0") else "")
    return f"{sign}{body}e{e:+d}"
