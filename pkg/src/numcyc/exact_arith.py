"""Certified arithmetic for unimodular powers at extreme exponents.

The objects here answer one recurring question: given an angle theta
(in units of pi, so the point on the circle is e^{i pi theta}) and an
exponent n that may be astronomically large, what are e^{i pi n theta}
and |1 + e^{i pi n theta}|, with a proven error bound?

Three angle representations are supported:

* rational   theta = a/b, reduced exactly with integer arithmetic;
* lacunary   theta = sum_s m_s p^{-e_s} with sparse, rapidly growing
  exponents e_s, reduced term by term with a certified tail bound;
* symbolic   theta named by a closed form (for example log 2) and
  evaluated to any requested precision.

Scalars whose magnitude cannot fit a float exponent are carried as
ScaledReal: sign * mantissa * base^pexp with a relative error bound,
where pexp is either an int or a TowerExponent, a tiny symbolic algebra
over exponents too large to write down.  Complex enclosures are disks
(ComplexInterval); real enclosures are intervals (RealInterval).  All
types are immutable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Union

import mpmath
from mpmath import mpf

from .config import DEFAULT, RunConfig, working_precision
from .errors import PrecisionUnreachable

__all__ = [
    "TowerAtom",
    "TowerExponent",
    "ExponentLike",
    "ScaledReal",
    "RealInterval",
    "ComplexInterval",
    "CancelInfo",
    "Angle",
    "RationalAngle",
    "LacunaryAngle",
    "SymbolicAngle",
    "log_angle",
    "reduce_mod2",
    "unimodular_pow",
    "one_plus_pow",
    "one_plus_pow_complex",
    "scaled_mul",
    "scaled_cmp",
    "pow_int",
]


# ---------------------------------------------------------------------------
# symbolic exponents


@dataclass(frozen=True)
class TowerAtom:
    """An opaque positive integer far too large to materialize.

    `family` identifies the recurrence that produced it; `level` orders
    atoms within one family.  Families must be stacked: log2 of each
    atom is at least the full value of the previous atom (so levels are
    separated by more than any 64-bit coefficient can bridge).  log2_lb
    is a certified lower bound on log2 of the value; log2_ub an upper
    bound when one is materializable, else None (deep atoms grow past
    every writable integer).
    """

    family: str
    level: int
    log2_lb: int
    log2_ub: Optional[int] = None

    def __post_init__(self):
        if self.log2_lb < 128:
            raise ValueError("atom too small to justify dominance")
        if self.log2_ub is not None and self.log2_ub < self.log2_lb:
            raise ValueError("inconsistent log2 bounds")


@dataclass(frozen=True)
class TowerExponent:
    """const + sum(coef * atom) with int coefficients, exact arithmetic."""

    const: int = 0
    parts: tuple[tuple[TowerAtom, int], ...] = ()

    @staticmethod
    def of(value: "ExponentLike") -> "TowerExponent":
        if isinstance(value, TowerExponent):
            return value
        return TowerExponent(const=int(value))

    @staticmethod
    def atom(a: TowerAtom) -> "TowerExponent":
        return TowerExponent(0, ((a, 1),))

    def _merged(self, other: "TowerExponent", sign: int) -> "TowerExponent":
        coefs: dict[TowerAtom, int] = dict(self.parts)
        for a, c in other.parts:
            coefs[a] = coefs.get(a, 0) + sign * c
        parts = tuple(
            sorted(
                ((a, c) for a, c in coefs.items() if c != 0),
                key=lambda ac: (ac[0].family, ac[0].level),
            )
        )
        return TowerExponent(self.const + sign * other.const, parts)

    def __add__(self, other):
        return self._merged(TowerExponent.of(other), +1)

    __radd__ = __add__

    def __sub__(self, other):
        return self._merged(TowerExponent.of(other), -1)

    def __rsub__(self, other):
        return TowerExponent.of(other)._merged(self, -1)

    def __neg__(self):
        return TowerExponent(-self.const, tuple((a, -c) for a, c in self.parts))

    @property
    def is_int(self) -> bool:
        return not self.parts

    def as_int(self) -> int:
        if self.parts:
            raise ValueError("exponent contains unmaterializable atoms")
        return self.const

    def sign(self) -> int:
        """Certified sign.  Requires all atoms in one family.

        The top-level atom must dominate everything else.  When all
        lower atoms carry materializable upper bounds this is checked
        numerically; otherwise the stacked-family invariant applies:
        the top atom's log2 is at least the previous atom's full value,
        so it exceeds any 64-bit-coefficient combination of lower atoms
        once its log2 lower bound clears the constant's size.
        """
        if not self.parts:
            return (self.const > 0) - (self.const < 0)
        families = {a.family for a, _ in self.parts}
        if len(families) > 1:
            raise ValueError("cannot order exponents across atom families")
        top, c_top = max(self.parts, key=lambda ac: ac[0].level)
        if any(abs(c).bit_length() > 64 for _, c in self.parts):
            raise ValueError("coefficient too large for dominance argument")
        lower = [(a, c) for a, c in self.parts if a is not top]
        if any(a.level == top.level for a, _ in lower):
            raise ValueError("equal-level atoms cannot be ordered")
        slack = len(self.parts).bit_length() + 2
        if all(a.log2_ub is not None for a, _ in lower):
            rest_bits = abs(self.const).bit_length()
            for a, c in lower:
                rest_bits = max(rest_bits, a.log2_ub + abs(c).bit_length() + 1)
            if top.log2_lb > rest_bits + slack + 64:
                return 1 if c_top > 0 else -1
        if abs(self.const).bit_length() + slack + 80 <= top.log2_lb:
            return 1 if c_top > 0 else -1
        raise ValueError("atom does not dominate the remaining terms")

    def __lt__(self, other):
        return (self - TowerExponent.of(other)).sign() < 0

    def __le__(self, other):
        return (self - TowerExponent.of(other)).sign() <= 0

    def __gt__(self, other):
        return (self - TowerExponent.of(other)).sign() > 0

    def __ge__(self, other):
        return (self - TowerExponent.of(other)).sign() >= 0


ExponentLike = Union[int, TowerExponent]


def pow_int(base, exponent: int) -> mpf:
    """base**exponent at current precision; exponent any Python int."""
    return mpmath.power(mpf(base), exponent)


def _bump() -> mpf:
    """One inflation quantum at the current precision."""
    return mpf(2) ** (6 - mpmath.mp.prec)


# ---------------------------------------------------------------------------
# real and complex enclosures


def _as_mpf(x) -> mpf:
    if isinstance(x, Fraction):
        return mpf(x.numerator) / x.denominator
    return mpf(x)


@dataclass(frozen=True)
class RealInterval:
    """mid +- rad enclosure over mpf."""

    mid: mpf
    rad: mpf

    def __post_init__(self):
        if self.rad < 0:
            raise ValueError("negative radius")

    @staticmethod
    def exact(x) -> "RealInterval":
        return RealInterval(_as_mpf(x), mpf(0))

    @staticmethod
    def from_bounds(lo, hi) -> "RealInterval":
        lo, hi = _as_mpf(lo), _as_mpf(hi)
        mid = (lo + hi) / 2
        rad = (hi - lo) / 2 + abs(mid) * _bump() + _bump()
        return RealInterval(mid, rad)

    @property
    def lo(self) -> mpf:
        return self.mid - self.rad

    @property
    def hi(self) -> mpf:
        return self.mid + self.rad

    def _infl(self, mid, rad) -> "RealInterval":
        return RealInterval(mid, rad + (abs(mid) + rad) * _bump() + _bump())

    def __add__(self, other):
        other = other if isinstance(other, RealInterval) else RealInterval.exact(other)
        return self._infl(self.mid + other.mid, self.rad + other.rad)

    __radd__ = __add__

    def __neg__(self):
        return RealInterval(-self.mid, self.rad)

    def __sub__(self, other):
        other = other if isinstance(other, RealInterval) else RealInterval.exact(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = other if isinstance(other, RealInterval) else RealInterval.exact(other)
        mid = self.mid * other.mid
        rad = (
            abs(self.mid) * other.rad
            + abs(other.mid) * self.rad
            + self.rad * other.rad
        )
        return self._infl(mid, rad)

    __rmul__ = __mul__

    def __abs__(self):
        if self.mid >= self.rad:
            return self
        if -self.mid >= self.rad:
            return RealInterval(-self.mid, self.rad)
        hi = max(self.hi, -self.lo)
        return RealInterval.from_bounds(mpf(0), hi)

    def contains(self, x) -> bool:
        v = _as_mpf(x)
        return self.lo <= v <= self.hi

    def strictly_less(self, other) -> Optional[bool]:
        """True/False when certified, None when the enclosures overlap."""
        other = other if isinstance(other, RealInterval) else RealInterval.exact(other)
        if self.hi < other.lo:
            return True
        if self.lo >= other.hi:
            return False
        return None

    def sign(self) -> Optional[int]:
        if self.lo > 0:
            return 1
        if self.hi < 0:
            return -1
        if self.rad == 0 and self.mid == 0:
            return 0
        return None


def _ri_cos(x: RealInterval) -> RealInterval:
    # |cos'| <= 1, so the radius transfers directly
    return RealInterval(mpmath.cos(x.mid), x.rad + (1 + abs(x.mid)) * _bump())


def _ri_sin(x: RealInterval) -> RealInterval:
    return RealInterval(mpmath.sin(x.mid), x.rad + (1 + abs(x.mid)) * _bump())


@dataclass(frozen=True)
class ComplexInterval:
    """Disk enclosure: center re + i*im, radius rad."""

    re: mpf
    im: mpf
    rad: mpf

    def __post_init__(self):
        if self.rad < 0:
            raise ValueError("negative radius")

    @staticmethod
    def exact(z) -> "ComplexInterval":
        z = mpmath.mpc(z)
        return ComplexInterval(z.real, z.imag, mpf(0))

    @staticmethod
    def from_parts(re: RealInterval, im: RealInterval) -> "ComplexInterval":
        return ComplexInterval(re.mid, im.mid, mpmath.hypot(re.rad, im.rad) + _bump())

    def _infl(self, re, im, rad) -> "ComplexInterval":
        scale = abs(re) + abs(im) + rad
        return ComplexInterval(re, im, rad + scale * _bump() + _bump())

    def __add__(self, other):
        other = other if isinstance(other, ComplexInterval) else ComplexInterval.exact(other)
        return self._infl(self.re + other.re, self.im + other.im, self.rad + other.rad)

    __radd__ = __add__

    def __neg__(self):
        return ComplexInterval(-self.re, -self.im, self.rad)

    def __sub__(self, other):
        other = other if isinstance(other, ComplexInterval) else ComplexInterval.exact(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = other if isinstance(other, ComplexInterval) else ComplexInterval.exact(other)
        a = mpmath.mpc(self.re, self.im)
        b = mpmath.mpc(other.re, other.im)
        c = a * b
        rad = abs(a) * other.rad + abs(b) * self.rad + self.rad * other.rad
        return self._infl(c.real, c.imag, rad)

    __rmul__ = __mul__

    def conj(self) -> "ComplexInterval":
        return ComplexInterval(self.re, -self.im, self.rad)

    def __abs__(self) -> RealInterval:
        m = mpmath.hypot(self.re, self.im)
        return RealInterval(m, self.rad + (m + self.rad) * _bump() + _bump())

    def contains(self, z) -> bool:
        z = mpmath.mpc(z)
        return mpmath.hypot(z.real - self.re, z.imag - self.im) <= self.rad

    def distance(self, other: "ComplexInterval") -> RealInterval:
        d = mpmath.hypot(self.re - other.re, self.im - other.im)
        rad = self.rad + other.rad + (d + self.rad + other.rad) * _bump() + _bump()
        return RealInterval(d, rad)

    def scaled(self, c) -> "ComplexInterval":
        return self * ComplexInterval.exact(c)


def circle_point(r, err=0) -> ComplexInterval:
    """Enclosure of e^{i pi r} given |angle error| <= err (units of pi)."""
    r = _as_mpf(r)
    err = _as_mpf(err)
    c = mpmath.cos(mpmath.pi * r)
    s = mpmath.sin(mpmath.pi * r)
    rad = mpmath.pi * err + (abs(c) + abs(s) + 2) * _bump()
    return ComplexInterval(c, s, rad)


# ---------------------------------------------------------------------------
# scaled reals


@dataclass(frozen=True)
class ScaledReal:
    """sign * man * base^pexp, relative error <= rel_err (< 1).

    `man` is an mpf kept in [1, base) when the value is nonzero; `pexp`
    may be a TowerExponent whose atoms never materialize.  Multiplying
    by an exact power of `base` only shifts `pexp` and is error free.
    """

    sign: int
    man: mpf
    base: int
    pexp: ExponentLike
    rel_err: mpf

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError("sign must be -1, 0 or 1")
        if self.rel_err < 0 or self.rel_err >= 1:
            raise ValueError("relative error must lie in [0, 1)")
        if self.sign != 0 and not (self.man > 0):
            raise ValueError("mantissa must be positive for nonzero values")

    @staticmethod
    def zero(base: int = 2) -> "ScaledReal":
        return ScaledReal(0, mpf(1), base, 0, mpf(0))

    @staticmethod
    def from_mpf(x, base: int, rel_err=0) -> "ScaledReal":
        x = _as_mpf(x)
        if x == 0:
            return ScaledReal.zero(base)
        sign = 1 if x > 0 else -1
        man, pexp = _normalize_mantissa(abs(x), base)
        return ScaledReal(sign, man, base, pexp, _as_mpf(rel_err) + 4 * _bump())

    @staticmethod
    def from_components(sign: int, man, base: int, pexp: ExponentLike, rel_err) -> "ScaledReal":
        man = _as_mpf(man)
        rel_err = _as_mpf(rel_err)
        if sign == 0:
            return ScaledReal.zero(base)
        if isinstance(pexp, TowerExponent) and pexp.is_int:
            pexp = pexp.as_int()
        if isinstance(pexp, int):
            m2, shift = _normalize_mantissa(man, base)
            return ScaledReal(sign, m2, base, pexp + shift, rel_err + 4 * _bump())
        # symbolic exponent: shift by small ints only
        shift = 0
        while man >= base:
            man = man / base
            shift += 1
        while man < 1:
            man = man * base
            shift -= 1
        return ScaledReal(sign, man, base, pexp + shift, rel_err + 4 * _bump())

    @property
    def is_zero(self) -> bool:
        return self.sign == 0

    def mul_base_pow(self, e: ExponentLike) -> "ScaledReal":
        """Exact multiplication by base**e."""
        if self.sign == 0:
            return self
        pexp = self.pexp + e
        if isinstance(pexp, TowerExponent) and pexp.is_int:
            pexp = pexp.as_int()
        return ScaledReal(self.sign, self.man, self.base, pexp, self.rel_err)

    def to_mpf(self) -> mpf:
        """Midpoint value; requires an integer exponent."""
        if self.sign == 0:
            return mpf(0)
        pexp = self.pexp
        if isinstance(pexp, TowerExponent):
            pexp = pexp.as_int()
        return self.sign * self.man * pow_int(self.base, pexp)

    def to_interval(self) -> RealInterval:
        # the midpoint's rounding error is relative, so the radius must
        # scale with the value (which may be astronomically small)
        v = self.to_mpf()
        return RealInterval(v, abs(v) * (self.rel_err + 8 * _bump()))


def _normalize_mantissa(x: mpf, base: int) -> tuple[mpf, int]:
    """Return (m, j) with x = m * base^j and m in [1, base)."""
    if x <= 0:
        raise ValueError("positive value required")
    _s, man2, exp2, bc = mpmath.mpf(x)._mpf_  # x = man2 * 2^exp2
    log2x = exp2 + bc - 1  # floor(log2 x) exactly
    # first guess via float log ratio, then correct
    import math

    j = int(log2x / math.log2(base))
    m = x / pow_int(base, j)
    while m >= base:
        m = m / base
        j += 1
    while m < 1:
        m = m * base
        j -= 1
    return m, j


def scaled_mul(a: ScaledReal, b: ScaledReal) -> ScaledReal:
    if a.base != b.base:
        raise ValueError("mixed bases")
    if a.sign == 0 or b.sign == 0:
        return ScaledReal.zero(a.base)
    err = a.rel_err + b.rel_err + a.rel_err * b.rel_err
    return ScaledReal.from_components(
        a.sign * b.sign, a.man * b.man, a.base, a.pexp + b.pexp, err
    )


def scaled_cmp(a: ScaledReal, b: ScaledReal) -> Optional[int]:
    """-1, 0, +1 when certified; None when enclosures overlap."""
    if a.base != b.base:
        raise ValueError("mixed bases")
    if a.sign == 0 and b.sign == 0:
        return 0
    if a.sign != b.sign:
        if a.sign == 0:
            return -b.sign
        if b.sign == 0:
            return a.sign
        return 1 if a.sign > b.sign else -1
    # same nonzero sign: compare magnitudes
    d = TowerExponent.of(a.pexp) - TowerExponent.of(b.pexp)
    if not d.is_int:
        mag = d.sign()  # atoms dwarf any mantissa/error ratio
        return a.sign * mag
    shift = d.as_int()
    # magnitudes: a.man * base^shift vs b.man, with relative errors
    if abs(shift) > (1 << 20):
        return a.sign * (1 if shift > 0 else -1)
    va = a.man * pow_int(a.base, shift)
    ia = RealInterval(va, va * a.rel_err + _bump())
    ib = RealInterval(b.man, b.man * b.rel_err + _bump())
    less = ia.strictly_less(ib)
    if less is True:
        return -a.sign
    if less is False and ib.strictly_less(ia) is True:
        return a.sign
    if ia.mid == ib.mid and ia.rad == 0 and ib.rad == 0:
        return 0
    return None


# ---------------------------------------------------------------------------
# angles


@dataclass(frozen=True)
class CancelInfo:
    """Certified polar form of 1 + e^{i pi n theta} near a cancellation.

    modulus carries the (possibly symbolically scaled) absolute value;
    phase_pi/phase_err enclose the argument in units of pi.
    """

    modulus: ScaledReal
    phase_pi: Union[Fraction, mpf]
    phase_err: mpf


class Angle:
    """Base class; subclasses implement _reduce(n, tol)."""

    def reduce_mod2(self, n: int, tol, cfg: RunConfig = DEFAULT):
        raise NotImplementedError

    def value_mpf(self, bits: int) -> mpf:
        """Approximate value in units of pi at the given precision."""
        with working_precision(bits):
            r, err = self.reduce_mod2(1, mpf(2) ** (16 - bits))
            return _as_mpf(r)


@dataclass(frozen=True)
class RationalAngle(Angle):
    """theta = value exactly (units of pi)."""

    value: Fraction

    def reduce_mod2(self, n: int, tol, cfg: RunConfig = DEFAULT):
        q = self.value
        num = (n * q.numerator) % (2 * q.denominator)
        return Fraction(num, q.denominator), mpf(0)

    def order(self) -> int:
        """Smallest m >= 1 with m*theta an even integer."""
        q = self.value
        if q == 0:
            return 1
        from math import gcd

        return 2 * q.denominator // gcd(q.numerator, 2 * q.denominator)


@dataclass(frozen=True)
class LacunaryAngle(Angle):
    """theta = sum_s coefs[s] * p^{-exps[s]} + tail, 0 <= tail <= tail_hi.

    Exponents are strictly increasing Python ints (possibly hundreds of
    digits); tail_hi is a certified mpf upper bound on the dropped
    continuation (0 when the sum is exact).  `cancellation_hook`, when
    set, maps an exponent n to a ScaledReal for |1 + e^{i pi n theta}|
    exploiting structure invisible to the generic reduction; it is
    attached by the code that built the angle.  `family` carries
    serialization metadata.
    """

    p: int
    coefs: tuple[int, ...]
    exps: tuple[int, ...]
    tail_hi_bits: int = 0  # tail_hi = 2^{-tail_hi_bits}; 0 means exact
    family: tuple = ()
    # derived acceleration metadata, not part of the angle's identity
    cancellation_hook: Optional[Callable[[int], Optional["CancelInfo"]]] = field(
        default=None, compare=False
    )

    def __post_init__(self):
        if len(self.coefs) != len(self.exps):
            raise ValueError("coefs and exps must align")
        if any(e2 <= e1 for e1, e2 in zip(self.exps, self.exps[1:])):
            raise ValueError("exponents must be strictly increasing")
        if any(c < 0 for c in self.coefs):
            raise ValueError("coefficients must be nonnegative")

    def tail_hi(self) -> mpf:
        if self.tail_hi_bits == 0:
            return mpf(0)
        return mpf(2) ** (-self.tail_hi_bits)

    def _term_hi(self, c: int, e: int) -> mpf:
        """Sound upper bound on c * p^-e, cheap for astronomical e.

        Powering is linear in e.bit_length(), so exponents beyond 64
        bits take the shift route: p^-e <= 2^(-e*(bitlen-1)), loose by
        (p/2^(bitlen-1))^e but the term is below 2^(-2^63) there and
        any slack is equally invisible."""
        if e.bit_length() <= 64:
            return c * pow_int(self.p, -e)
        return mpmath.ldexp(c, -(e * (self.p.bit_length() - 1)))

    def _suffix_bound(self, start: int) -> mpf:
        """Upper bound on sum of terms from index `start` on, plus tail."""
        total = self.tail_hi()
        for c, e in zip(self.coefs[start:], self.exps[start:]):
            total = total + self._term_hi(c, e)
        return total * (1 + 8 * _bump())

    def reduce_mod2(self, n: int, tol, cfg: RunConfig = DEFAULT):
        """Exact Fraction over a prefix + certified error for the rest.

        The prefix keeps denominators below a bit cap; dropped terms are
        charged to the error, which must fit within tol/2 (the dropped
        terms are astronomically small whenever the cap binds).
        """
        tol = _as_mpf(tol)
        n = int(n)
        frac_bits_cap = 1 << 22
        log2p = self.p.bit_length()
        cut = len(self.exps)
        for i, e in enumerate(self.exps):
            if e * log2p > frac_bits_cap:
                cut = i
                break
        # shrink the prefix further if later terms are already below tol
        best = cut
        while best > 0:
            if abs(n) * self._suffix_bound(best - 1) <= tol / 2:
                best -= 1
            else:
                break
        err = abs(n) * self._suffix_bound(best)
        if err > tol / 2:
            raise PrecisionUnreachable(
                f"lacunary tail {mpmath.nstr(err, 5)} exceeds tol/2 at n={n}"
            )
        if best == 0:
            return Fraction(0), err
        e_last = self.exps[best - 1]
        den = self.p ** e_last
        num = 0
        for c, e in zip(self.coefs[:best], self.exps[:best]):
            num += n * c * self.p ** (e_last - e)
        return Fraction(num % (2 * den), den), err

    def exact_prefix_value(self, bits: int) -> mpf:
        with working_precision(bits):
            total = mpf(0)
            for c, e in zip(self.coefs, self.exps):
                # terms past 64-bit exponents sit below 2^(-2^63) and
                # cannot move any reachable precision
                if e.bit_length() <= 64:
                    total += c * pow_int(self.p, -e)
            return total

    def merge(self, other: "LacunaryAngle") -> "LacunaryAngle":
        """Sum of two lacunary angles over the same p, disjoint exponents."""
        if self.p != other.p:
            raise ValueError("mixed bases")
        terms = sorted(
            list(zip(self.exps, self.coefs)) + list(zip(other.exps, other.coefs))
        )
        exps = tuple(e for e, _ in terms)
        if len(set(exps)) != len(exps):
            raise ValueError("overlapping exponents; fold coefficients first")
        if self.tail_hi_bits == 0:
            bits = other.tail_hi_bits
        elif other.tail_hi_bits == 0:
            bits = self.tail_hi_bits
        else:
            bits = min(self.tail_hi_bits, other.tail_hi_bits) - 1
        return LacunaryAngle(
            self.p,
            tuple(c for _, c in terms),
            exps,
            bits,
            family=("sum", self.family, other.family),
        )


@dataclass(frozen=True)
class SymbolicAngle(Angle):
    """theta named by a closed form, evaluated on demand.

    `label` is a human-readable name, `indep_class` an optional declared
    rational-independence class, `log_arg` the argument when the angle
    is log(a) for rational a (used for exact relation checking).
    """

    label: str
    value_fn: Callable[[int], mpf]
    indep_class: Optional[str] = None
    log_arg: Optional[Fraction] = None

    def __eq__(self, other):
        return (
            isinstance(other, SymbolicAngle)
            and self.label == other.label
            and self.indep_class == other.indep_class
            and self.log_arg == other.log_arg
        )

    def __hash__(self):
        return hash((self.label, self.indep_class, self.log_arg))

    def reduce_mod2(self, n: int, tol, cfg: RunConfig = DEFAULT):
        tol = _as_mpf(tol)
        n = int(n)
        for bits in cfg.ladder():
            need = bits + max(abs(n).bit_length(), 1) + 16
            with working_precision(need):
                v = self.value_fn(need)
                err = (abs(n) * abs(v) + 1) * mpf(2) ** (8 - need)
                if err > tol:
                    continue
                r = mpmath.fmod(n * v, 2)
                if r < 0:
                    r += 2
            return r, err
        raise PrecisionUnreachable(
            f"cannot reduce {self.label} * {n} mod 2 to tolerance {mpmath.nstr(tol, 5)}"
        )

    def value_mpf(self, bits: int) -> mpf:
        with working_precision(bits):
            return self.value_fn(bits)


def log_angle(arg: int | Fraction, indep_class: Optional[str] = None) -> SymbolicAngle:
    """Angle theta = log(arg), the classic irrational rotation family."""
    arg = Fraction(arg)
    if arg <= 0:
        raise ValueError("log angle needs a positive argument")

    def value_fn(bits: int, _a=arg) -> mpf:
        return mpmath.log(mpf(_a.numerator) / _a.denominator)

    name = f"log({arg})" if arg.denominator != 1 else f"log{arg.numerator}"
    return SymbolicAngle(name, value_fn, indep_class=indep_class, log_arg=arg)


# ---------------------------------------------------------------------------
# top-level operations


def reduce_mod2(angle: Angle, n: int, tol, cfg: RunConfig = DEFAULT):
    """Return (r, err): n*theta = r + xi (mod 2) with |xi| <= err <= tol.

    r is an exact Fraction for rational angles (err = 0) and for the
    stored prefix of lacunary angles; symbolic angles return an mpf.
    """
    r, err = angle.reduce_mod2(n, tol, cfg)
    if err > _as_mpf(tol):
        raise PrecisionUnreachable("reduction error exceeds tolerance")
    return r, err


def unimodular_pow(angle: Angle, n: int, tol, cfg: RunConfig = DEFAULT) -> ComplexInterval:
    """Certified disk around e^{i pi n theta} with radius <= tol."""
    tol_m = _as_mpf(tol)
    for bits in cfg.ladder():
        with working_precision(bits):
            r, err = angle.reduce_mod2(n, tol_m / (2 * mpmath.pi), cfg)
            z = circle_point(_as_mpf(r), err)
            if z.rad <= tol_m:
                return z
    raise PrecisionUnreachable(f"unimodular_pow at n={n} cannot reach tol={tol}")


def one_plus_pow(angle: Angle, n, tol, cfg: RunConfig = DEFAULT) -> ScaledReal:
    """Certified |1 + e^{i pi n theta}| as a ScaledReal.

    For angles with an attached cancellation hook (deep lacunary
    structure) the hook result is authoritative; it may carry a
    symbolic exponent.  The generic route reduces mod 2 and evaluates
    2|cos(pi r / 2)|, escalating precision until the enclosure's
    relative width fits, or certifying an exact zero.
    """
    tol_m = _as_mpf(tol)
    if isinstance(angle, LacunaryAngle) and angle.cancellation_hook is not None:
        handled = False
        for bits in cfg.ladder():
            with working_precision(bits):
                special = angle.cancellation_hook(int(n))
                if special is None:
                    break
                handled = True
                if special.modulus.is_zero or special.modulus.rel_err <= tol_m:
                    return special.modulus
        if handled:
            raise PrecisionUnreachable(
                f"cancellation hook at n={n} cannot reach tol={tol}"
            )
    n = int(n)
    base = angle.p if isinstance(angle, LacunaryAngle) else 2
    for bits in cfg.ladder():
        with working_precision(bits):
            reduce_tol = min(tol_m / 8, mpf(2) ** (32 - bits))
            try:
                r, err = angle.reduce_mod2(n, reduce_tol, cfg)
            except PrecisionUnreachable:
                continue
            if isinstance(r, Fraction) and err == 0 and r == 1:
                return ScaledReal.zero(base)
            half = _as_mpf(r) / 2
            c = _ri_cos(RealInterval(mpmath.pi * half, mpmath.pi * (err / 2 + abs(half) * _bump() + _bump())))
            mag = abs(c) * 2
            if mag.lo > 0:
                rel = mag.rad / mag.lo
                if rel <= tol_m and rel < mpf("0.5"):
                    return ScaledReal.from_mpf(mag.mid, base, rel)
    raise PrecisionUnreachable(
        f"one_plus_pow at n={n} cannot separate from zero at tol={tol}"
    )


def one_plus_pow_complex(angle: Angle, n, tol, cfg: RunConfig = DEFAULT) -> CancelInfo:
    """Certified polar form of 1 + e^{i pi n theta}.

    Uses the exact factorization 1 + e^{i pi r} = e^{i pi r/2} *
    2 cos(pi r / 2): the argument is r/2 exactly (shifted by 1 when the
    cosine is negative), so the phase inherits half the reduction error
    and no series remainder.
    """
    tol_m = _as_mpf(tol)
    if isinstance(angle, LacunaryAngle) and angle.cancellation_hook is not None:
        handled = False
        for bits in cfg.ladder():
            with working_precision(bits):
                special = angle.cancellation_hook(int(n))
                if special is None:
                    break
                handled = True
                if special.modulus.is_zero or special.modulus.rel_err <= tol_m:
                    return special
        if handled:
            raise PrecisionUnreachable(
                f"cancellation hook at n={n} cannot reach tol={tol}"
            )
    n = int(n)
    base = angle.p if isinstance(angle, LacunaryAngle) else 2
    for bits in cfg.ladder():
        with working_precision(bits):
            reduce_tol = min(tol_m / 8, mpf(2) ** (32 - bits))
            try:
                r, err = angle.reduce_mod2(n, reduce_tol, cfg)
            except PrecisionUnreachable:
                continue
            if isinstance(r, Fraction) and err == 0 and r == 1:
                return CancelInfo(ScaledReal.zero(base), Fraction(0), mpf(0))
            half = _as_mpf(r) / 2
            c = _ri_cos(
                RealInterval(
                    mpmath.pi * half,
                    mpmath.pi * (err / 2 + abs(half) * _bump() + _bump()),
                )
            )
            sgn = c.sign()
            if sgn is None:
                continue
            mag = abs(c) * 2
            if mag.lo <= 0:
                continue
            rel = mag.rad / mag.lo
            if rel > tol_m or rel >= mpf("0.5"):
                continue
            if isinstance(r, Fraction):
                phase = r / 2 if sgn > 0 else (r / 2 + 1) % 2
            else:
                phase = r / 2 if sgn > 0 else mpmath.fmod(r / 2 + 1, 2)
            return CancelInfo(
                ScaledReal.from_mpf(mag.mid, base, rel), phase, err / 2 + _bump()
            )
    raise PrecisionUnreachable(
        f"one_plus_pow_complex at n={n} cannot reach tol={tol}"
    )
