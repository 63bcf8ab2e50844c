"""Operators, normalized vector/functional pairs, and certified orbits.

A numerical orbit is the scalar sequence f(T^n x) for a norming pair
(x, f): both normalized and f(x) = 1.  Three operator representations
are supported:

* ExactDiagonal — diagonal entries in exact polar form (positive
  rational modulus, Angle argument).  Orbit values come from the closed
  form sum_j c_j R_j^n e^{i pi n theta_j}; optional pair hints mark
  index pairs (i, j) whose angles differ by a known offset, so the
  near-cancellation c R^n u^n (1 + e^{i pi n offset}) is evaluated in
  factored form with certified relative error even when the two terms
  agree to astronomically many digits.

* DenseMatrix — small concrete matrices, entries exact complex
  rationals or exact polar declarations; orbits run by iterated
  multiplication with a running rounding bound and a precision ladder.

* ShiftOp — weighted shift given by an exact positive weight sequence;
  only norm growth is computed here (window products of consecutive
  weights).

All orbit values are ComplexInterval enclosures with radius at most the
requested tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import mpmath
from mpmath import mpf

from .config import DEFAULT, RunConfig, working_precision
from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    PrecisionUnreachable,
    ZeroVector,
)
from .exact_arith import (
    Angle,
    CancelInfo,
    ComplexInterval,
    circle_point,
    one_plus_pow_complex,
    pow_int,
    reduce_mod2,
)

__all__ = [
    "QC",
    "qc",
    "PolarEntry",
    "DiagEntry",
    "PairHint",
    "ExactDiagonal",
    "DenseMatrix",
    "ShiftOp",
    "NormalizedPair",
    "hilbert_pair",
    "pair_from_weights",
    "certify_pair",
    "orbit",
    "OrbitSeries",
    "shift_norm",
    "materialize_diagonal",
    "PNorm",
]


# ---------------------------------------------------------------------------
# exact complex rationals

QC = tuple[Fraction, Fraction]


def qc(re=0, im=0) -> QC:
    """Exact complex rational from ints, Fractions, floats or complex."""
    if isinstance(re, tuple):
        if im:
            raise ValueError("imaginary part given twice")
        re, im = re
    elif isinstance(re, complex):
        if im:
            raise ValueError("imaginary part given twice")
        re, im = re.real, re.imag
    return (Fraction(re), Fraction(im))


def qc_mul(a: QC, b: QC) -> QC:
    return (a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0])


def qc_abs2(a: QC) -> Fraction:
    return a[0] * a[0] + a[1] * a[1]


def qc_conj(a: QC) -> QC:
    return (a[0], -a[1])


def qc_is_zero(a: QC) -> bool:
    return a[0] == 0 and a[1] == 0


def qc_to_mpc(a: QC):
    return mpmath.mpc(mpf(a[0].numerator) / a[0].denominator,
                      mpf(a[1].numerator) / a[1].denominator)


def _frac_to_mpf(x: Fraction) -> mpf:
    return mpf(x.numerator) / x.denominator


# ---------------------------------------------------------------------------
# operator specifications


@dataclass(frozen=True)
class PolarEntry:
    """Exact polar declaration: radius * e^{i pi angle}."""

    radius: Fraction
    angle: Angle

    def to_mpc(self):
        z = mpmath.expjpi(self.angle.value_mpf(mpmath.mp.prec))
        return _frac_to_mpf(self.radius) * z


Entry = Union[QC, PolarEntry]


def entry_to_mpc(e: Entry):
    if isinstance(e, PolarEntry):
        return e.to_mpc()
    return qc_to_mpc(e)


@dataclass(frozen=True)
class DiagEntry:
    radius: Fraction
    angle: Angle

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("diagonal modulus must be positive")


@dataclass(frozen=True)
class PairHint:
    """Entries i and j share their radius and angle_j = angle_i + offset.

    When the orbit coefficients at i and j coincide, the two terms are
    summed in the factored form c R^n e^{i pi n theta_i} (1 + e^{i pi n
    offset}) so the cancellation is certified instead of subtractive.
    """

    i: int
    j: int
    offset: Angle


@dataclass(frozen=True)
class ExactDiagonal:
    entries: tuple[DiagEntry, ...]
    pairs: tuple[PairHint, ...] = ()
    label: str = ""

    @property
    def dim(self) -> int:
        return len(self.entries)

    def __post_init__(self):
        seen: set[int] = set()
        for h in self.pairs:
            if not (0 <= h.i < self.dim and 0 <= h.j < self.dim and h.i != h.j):
                raise DimensionMismatch("pair hint out of range")
            if self.entries[h.i].radius != self.entries[h.j].radius:
                raise ValueError("pair hint requires equal moduli")
            if h.i in seen or h.j in seen:
                raise ValueError("pair hints must be disjoint")
            seen.update((h.i, h.j))


@dataclass(frozen=True)
class DenseMatrix:
    rows: tuple[tuple[Entry, ...], ...]
    label: str = ""

    @property
    def dim(self) -> int:
        return len(self.rows)

    def __post_init__(self):
        for row in self.rows:
            if len(row) != self.dim:
                raise DimensionMismatch("matrix must be square")

    def to_mp(self):
        m = mpmath.matrix(self.dim)
        for i, row in enumerate(self.rows):
            for j, e in enumerate(row):
                m[i, j] = entry_to_mpc(e)
        return m

    def is_upper_triangular(self) -> bool:
        return all(
            (not isinstance(e, PolarEntry)) and qc_is_zero(e)
            for i, row in enumerate(self.rows)
            for j, e in enumerate(row)
            if j < i
        )


def materialize_diagonal(op: ExactDiagonal, label: str = "") -> DenseMatrix:
    """The same operator as a concrete matrix (for cross-checking paths)."""
    rows = []
    for i, e in enumerate(op.entries):
        row: list[Entry] = [qc(0)] * op.dim
        row[i] = PolarEntry(e.radius, e.angle)
        rows.append(tuple(row))
    return DenseMatrix(tuple(rows), label=label or (op.label + ":dense"))


@dataclass(frozen=True)
class ShiftOp:
    """Weighted shift with exact positive weight moduli.

    weight_fn is 1-indexed (negative indices allowed for bilateral) and
    returns the modulus |w_i| as a Fraction; unimodular weight phases
    change neither norms nor any classification below, so they are not
    stored.  sup_bound, when given, bounds sup_i |w_i|; norm_formula,
    when given, is a declared exact closed form for ||T^n||.
    """

    weight_fn: Callable[[int], Fraction]
    kind: str = "backward"
    name: str = "shift"
    sup_bound: Optional[Fraction] = None
    norm_formula: Optional[Callable[[int], Fraction]] = None
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in ("forward", "backward", "bilateral"):
            raise ValueError("kind must be forward, backward or bilateral")


OperatorSpec = Union[ExactDiagonal, DenseMatrix, ShiftOp]


# ---------------------------------------------------------------------------
# normalized pairs


@dataclass(frozen=True)
class NormalizedPair:
    """(x, f) with ||x|| = ||f|| = f(x) = 1 and orbit coefficients c_j.

    For a diagonal operator f(T^n x) = sum_j c_j lambda_j^n where
    c_j = e*_j(x) f(e_j); only these products enter orbit values, so
    they are the stored representation.  For the euclidean pairing
    f = <., x/||x||> the c_j are |x_j|^2 / ||x||^2, exact rationals.
    """

    coeffs: tuple[QC, ...]
    kind: str
    x_raw: tuple[QC, ...]
    pi_certified: bool = True
    approximate: bool = False

    @property
    def dim(self) -> int:
        return len(self.coeffs)

    def scaled_functional(self, alpha: QC) -> "NormalizedPair":
        """Pair with f replaced by alpha*f (drops the Pi certificate)."""
        return NormalizedPair(
            tuple(qc_mul(alpha, c) for c in self.coeffs),
            kind="explicit",
            x_raw=self.x_raw,
            pi_certified=False,
            approximate=self.approximate,
        )

    def x_mp(self):
        if self.kind == "weights":
            # x_raw holds the coefficients themselves; x_j = sqrt(c_j)
            return [
                mpmath.mpc(mpmath.sqrt(_frac_to_mpf(c[0]))) for c in self.x_raw
            ]
        norm2 = sum(qc_abs2(v) for v in self.x_raw)
        scale = 1 / mpmath.sqrt(_frac_to_mpf(norm2))
        return [qc_to_mpc(v) * scale for v in self.x_raw]

    def f_mp(self):
        """Functional coordinates for the dense path; f(v) = sum f_j v_j.

        Valid for the euclidean pairing kinds; explicit pairs carry the
        functional only through the products c_j, so the dense path
        divides them back out by the vector coordinates.
        """
        xs = self.x_mp()
        if self.kind in ("hilbert", "weights"):
            return [mpmath.conj(v) for v in xs]
        out = []
        for c, v in zip(self.coeffs, xs):
            if abs(v) == 0:
                if not qc_is_zero(c):
                    raise ZeroVector("functional weight on a zero coordinate")
                out.append(mpmath.mpc(0))
            else:
                out.append(qc_to_mpc(c) / v)
        return out


def hilbert_pair(x: Sequence) -> NormalizedPair:
    """Norming pair for the euclidean norm: f = <., x/||x||>.

    Coefficients come out as exact rationals |x_j|^2 / ||x||^2 (floats
    convert exactly).  Raises ZeroVector on the zero vector.
    """
    raw = tuple(qc(v) for v in x)
    norm2 = sum(qc_abs2(v) for v in raw)
    if norm2 == 0:
        raise ZeroVector("cannot normalize the zero vector")
    coeffs = tuple((qc_abs2(v) / norm2, Fraction(0)) for v in raw)
    return NormalizedPair(coeffs, kind="hilbert", x_raw=raw)


@dataclass(frozen=True)
class PNorm:
    """The p-norm on coordinates, exact exponent."""

    p: Fraction

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")


def pair_from_weights(
    c: Sequence[Fraction],
    norm: Union[str, PNorm, Callable] = "hilbert",
    cfg: RunConfig = DEFAULT,
) -> NormalizedPair:
    """Pair whose orbit coefficients are the given weights.

    Weights must be nonnegative and sum to 1.  For the euclidean norm
    x_j = sqrt(c_j) and everything is exact.  For a p-norm the norming
    vector is x_j = c_j^{1/p} with dual f_j = c_j^{1/q}: all three
    normalization identities hold but the coordinates are irrational,
    so the pair is flagged approximate.  Arbitrary norm callables have
    no certified construction here and raise ConvergenceFailure.
    """
    weights = tuple(Fraction(v) for v in c)
    if any(v < 0 for v in weights):
        raise ValueError("weights must be nonnegative")
    if sum(weights) != 1:
        raise ValueError("weights must sum to 1")
    coeffs = tuple((v, Fraction(0)) for v in weights)
    if norm == "hilbert" or (isinstance(norm, PNorm) and norm.p == 2):
        return NormalizedPair(coeffs, kind="weights", x_raw=coeffs)
    if isinstance(norm, PNorm):
        return NormalizedPair(
            coeffs, kind="weights", x_raw=coeffs, approximate=True
        )
    raise ConvergenceFailure(
        "no certified norming construction for an arbitrary norm object"
    )


def certify_pair(pair: NormalizedPair, tol=1e-12) -> dict:
    """Check the norming identities; exact kinds certify at error 0."""
    if pair.kind in ("hilbert", "weights"):
        total = sum(c[0] for c in pair.coeffs)
        ok = total == 1 and all(c[1] == 0 for c in pair.coeffs)
        return {"ok": bool(ok), "fx_err": 0.0, "norm_err": 0.0, "exact": True}
    with working_precision(max(96, DEFAULT.precision_bits)):
        xs = pair.x_mp()
        fs = pair.f_mp()
        fx = sum(a * b for a, b in zip(fs, xs))
        nerr = abs(mpmath.sqrt(sum(abs(v) ** 2 for v in xs)) - 1)
        ferr = abs(fx - 1)
        return {
            "ok": bool(nerr <= tol and ferr <= tol),
            "fx_err": float(ferr),
            "norm_err": float(nerr),
            "exact": False,
        }


# ---------------------------------------------------------------------------
# orbits


@dataclass(frozen=True)
class OrbitSeries:
    """Certified orbit values; indices strictly increasing."""

    indices: tuple[int, ...]
    values: tuple[ComplexInterval, ...]
    tol: float
    mode: str = "exact"
    label: str = ""

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly increasing")
        if len(self.indices) != len(self.values):
            raise ValueError("index/value length mismatch")

    def value_at(self, n: int) -> ComplexInterval:
        return self.values[self.indices.index(n)]


def _radius_pow_mpf(radius: Fraction, n: int) -> mpf:
    return pow_int(radius.numerator, n) / pow_int(radius.denominator, n)


def _to_mpf_angle(r) -> mpf:
    if isinstance(r, Fraction):
        return _frac_to_mpf(r)
    return mpf(r)


def _diag_value(
    op: ExactDiagonal, pair: NormalizedPair, n: int, tol: mpf, cfg: RunConfig
) -> ComplexInterval:
    """One orbit value of an exact diagonal at the current precision.

    Per-term angle tolerances are scaled by the term's amplitude so the
    final enclosure radius is absolute.  Paired terms are first probed
    at a loose relative tolerance to learn the cancellation magnitude,
    then refined only as far as the amplitude actually requires.
    """
    share = tol / (2 * max(1, op.dim))
    paired: set[int] = set()
    parts: list[ComplexInterval] = []
    for hint in op.pairs:
        ci, cj = pair.coeffs[hint.i], pair.coeffs[hint.j]
        if qc_is_zero(ci) and qc_is_zero(cj):
            paired.update((hint.i, hint.j))
            continue
        if ci != cj:
            continue  # factored form needs a common coefficient
        paired.update((hint.i, hint.j))
        entry = op.entries[hint.i]
        info: CancelInfo = one_plus_pow_complex(hint.offset, n, mpf("1e-8"), cfg)
        if info.modulus.is_zero:
            continue
        mag = info.modulus
        if mag.base == entry.radius:
            mag_val = mag.mul_base_pow(n).to_mpf()
        else:
            mag_val = mag.to_mpf() * _radius_pow_mpf(entry.radius, n)
        amp = abs(mag_val) * mpmath.sqrt(_frac_to_mpf(qc_abs2(ci)))
        if amp * (mag.rel_err + 4 * (mpf(info.phase_err) + mpf("1e-8"))) > share:
            rel = share / (16 * amp)
            info = one_plus_pow_complex(hint.offset, n, rel, cfg)
            mag = info.modulus
            if mag.base == entry.radius:
                mag_val = mag.mul_base_pow(n).to_mpf()
            else:
                mag_val = mag.to_mpf() * _radius_pow_mpf(entry.radius, n)
        ang_tol = share / (16 * amp) if amp > 0 else mpf(1)
        r_u, err_u = reduce_mod2(entry.angle, n, ang_tol, cfg)
        phase = _to_mpf_angle(r_u) + _to_mpf_angle(info.phase_pi)
        direction = circle_point(phase, err_u + info.phase_err)
        val = direction * ComplexInterval(mag_val, mpf(0), abs(mag_val) * mag.rel_err)
        parts.append(val * ComplexInterval.exact(qc_to_mpc(ci)))
    for j, entry in enumerate(op.entries):
        if j in paired or qc_is_zero(pair.coeffs[j]):
            continue
        scale = _radius_pow_mpf(entry.radius, n)
        amp = scale * mpmath.sqrt(_frac_to_mpf(qc_abs2(pair.coeffs[j])))
        ang_tol = share / (16 * max(amp, mpf("1e-30")))
        r, err = reduce_mod2(entry.angle, n, ang_tol, cfg)
        point = circle_point(_to_mpf_angle(r), err)
        parts.append(
            point
            * ComplexInterval.exact(qc_to_mpc(pair.coeffs[j]))
            * ComplexInterval(scale, mpf(0), mpf(0))
        )
    total = ComplexInterval.exact(0)
    for pt in parts:
        total = total + pt
    return total


def _dense_values(
    op: DenseMatrix, pair: NormalizedPair, idx: list[int], tol: mpf
) -> Optional[list[ComplexInterval]]:
    """One ladder pass of iterated multiplication at current precision.

    Returns None when the running rounding bound exceeds tol; the
    caller then restarts from scratch at higher precision.
    """
    T = op.to_mp()
    tnorm = mpmath.mnorm(T, 1)
    u = mpf(2) ** (8 - mpmath.mp.prec) * op.dim
    v = mpmath.matrix(pair.x_mp())
    fvec = pair.f_mp()
    fnorm = mpmath.sqrt(sum(abs(c) ** 2 for c in fvec))
    verr = mpmath.norm(v, 2) * u
    out: list[ComplexInterval] = []
    n = 0
    for target in idx:
        while n < target:
            v = T * v
            verr = tnorm * verr + u * tnorm * mpmath.norm(v, 2)
            n += 1
        fv = sum(c * v[k] for k, c in enumerate(fvec))
        rad = fnorm * verr + u * (abs(fv) + 1)
        if rad > tol:
            return None
        out.append(ComplexInterval(fv.real, fv.imag, rad))
    return out


def orbit(
    op: OperatorSpec,
    pair: NormalizedPair,
    indices: Sequence[int],
    tol: float = 1e-9,
    cfg: RunConfig = DEFAULT,
) -> OrbitSeries:
    """Certified orbit values f(T^n x) at the given indices.

    Indices are deduplicated and sorted.  Exact diagonals accept
    arbitrarily large integers (pair hints keep near-cancellations
    certified); dense matrices iterate from n = 0, so their indices
    should stay moderate.  Raises PrecisionUnreachable when no rung of
    the precision ladder meets the tolerance.
    """
    if isinstance(op, ShiftOp):
        raise DimensionMismatch("shift operators have no finite orbit pairing here")
    if op.dim != pair.dim:
        raise DimensionMismatch(f"operator dim {op.dim} != pair dim {pair.dim}")
    idx = sorted({int(i) for i in indices})
    if idx and idx[0] < 0:
        raise ValueError("orbit indices must be nonnegative")
    tol_m = mpf(tol)
    if isinstance(op, ExactDiagonal):
        values = []
        for n in idx:
            for bits in cfg.ladder():
                with working_precision(bits):
                    val = _diag_value(op, pair, n, tol_m, cfg)
                if val.rad <= tol_m:
                    values.append(val)
                    break
            else:
                raise PrecisionUnreachable(f"orbit value at n={n} exceeds tol")
        return OrbitSeries(tuple(idx), tuple(values), float(tol), "exact", op.label)
    for bits in cfg.ladder():
        with working_precision(bits):
            got = _dense_values(op, pair, idx, tol_m)
        if got is not None:
            return OrbitSeries(tuple(idx), tuple(got), float(tol), "float", op.label)
    raise PrecisionUnreachable("dense orbit cannot reach tolerance at precision cap")


# ---------------------------------------------------------------------------
# shift norms


def shift_norm(
    op: ShiftOp, n: int, window: int = 1000
) -> tuple[Fraction, Optional[Fraction], bool]:
    """(lower, upper, truncated) bounds for ||T^n|| of a weighted shift.

    The norm is the supremum over starting positions k of the window
    product |w_k ... w_{k+n-1}|.  The lower bound is the exact maximum
    over k = 1..window (bilateral: k = -window..window); the upper
    bound is the declared closed form or sup_bound^n when available,
    otherwise None with truncated = True.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if window < 1:
        raise ValueError("window must be positive")
    if n == 0:
        return Fraction(1), Fraction(1), False
    start = -window if op.kind == "bilateral" else 1
    prod = Fraction(1)
    for i in range(start, start + n):
        prod *= Fraction(op.weight_fn(i))
    best = prod
    for k in range(start + 1, window + 1):
        prod = prod / Fraction(op.weight_fn(k - 1)) * Fraction(op.weight_fn(k + n - 1))
        if prod > best:
            best = prod
    if op.norm_formula is not None:
        exact = Fraction(op.norm_formula(n))
        if best > exact:
            raise ValueError("declared norm formula contradicts a window product")
        return best, exact, False
    if op.sup_bound is not None:
        return best, Fraction(op.sup_bound) ** n, False
    return best, None, True
