"""Three-valued classification of operator specs.

Verdicts are YES, NO or UNKNOWN and always carry the identifier of the
rule that produced them.  YES and NO are only ever emitted from
certified hypotheses: exact modulus comparisons, declared or exactly
verified phase independence, certified Jordan defects.  Anything that
rests on a numeric tie or an unverifiable candidate relation stays
UNKNOWN.

Modulus comparisons run through a tie band: values that differ but by
less than the configured threshold are treated as undecided, so a
sub-threshold perturbation can move a verdict to UNKNOWN but never flip
YES to NO.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import mpmath
import numpy as np
from mpmath import mpf

from .config import DEFAULT, RunConfig, working_precision
from .errors import DimensionMismatch, EigensolveFailure, Unreachable
from .exact_arith import (
    Angle,
    ComplexInterval,
    LacunaryAngle,
    RationalAngle,
    SymbolicAngle,
    circle_point,
)
from .operators import (
    DenseMatrix,
    DiagEntry,
    Entry,
    ExactDiagonal,
    PolarEntry,
    ShiftOp,
    qc_abs2,
    qc_conj,
    qc_is_zero,
    qc_mul,
)
from .witness import RadiusSchedule, SteeringResult, SteerPattern, TargetList, torus_steer

__all__ = [
    "YES",
    "NO",
    "UNKNOWN",
    "Verdict",
    "Eigenvalue",
    "SpectralData",
    "SequenceData",
    "IndependenceVerdict",
    "RuleReport",
    "MembershipVerdicts",
    "Perturbation",
    "spectral_data",
    "independence",
    "verify_relation",
    "power_bounded",
    "classify_c2",
    "classify_c3_wnh",
    "sufficient_conditions",
    "shift_classify",
    "closure_membership",
    "approx_snh_perturbation",
]

YES = "YES"
NO = "NO"
UNKNOWN = "UNKNOWN"

DEPENDENT = "DEPENDENT"
INDEPENDENT = "INDEPENDENT"
LIKELY_INDEPENDENT = "LIKELY_INDEPENDENT"

# Rule identifiers are part of the output format (they key reports and
# serialized verdicts); treat them as opaque labels.
RULE_PLANE = "2dim"
RULE_SPACE = "3dim"
RULE_POWER_BOUNDED = "ele00"
RULE_SHIFT = "KPS2"
RULE_CLOSURE = "clos.4"
RULE_PERTURB = "fdapp"
SUFFICIENT_RULES = (
    "suffwnh.1",
    "suffwnh.2",
    "suffwnh.3",
    "suffwnh.4",
    "suffsnh.1",
    "suffsnh.2",
    "suffnh",
    "suffnh1",
    "suffsnhid.1",
    "suffsnhid.2",
    "normaLLL.1",
    "normaLLL.2",
    "sanh",
)

# certified rational bracket of pi, for exact norm budgets
_PI_HI = Fraction(355, 113)


@dataclass(frozen=True)
class Verdict:
    value: str
    provenance: str
    details: str = ""


@dataclass(frozen=True)
class MembershipVerdicts:
    wnh: Verdict
    nh: Verdict
    snh: Verdict

    def as_dict(self) -> dict:
        return {"wnh": self.wnh, "nh": self.nh, "snh": self.snh}


@dataclass(frozen=True)
class IndependenceVerdict:
    """Outcome of the torus-independence oracle.

    DEPENDENT always carries an integer relation that re-verifies to an
    exact identity; INDEPENDENT only ever comes from a declared class;
    LIKELY_INDEPENDENT records the height the search was exhausted at.
    """

    status: str
    relation: Optional[tuple[int, ...]] = None
    reasoning: str = ""
    height: Optional[int] = None


@dataclass(frozen=True)
class Eigenvalue:
    """One spectral point with whatever certification the source allows.

    modulus_sq is the exact square of the modulus when the source is
    exact (polar or complex-rational entries); otherwise modulus/
    modulus_err bound the true value.  angle is the exact phase in
    half-turn units when known.  defective is None when the Jordan
    structure could not be certified either way.
    """

    modulus_sq: Optional[Fraction]
    modulus: float
    angle: Optional[Angle]
    angle_float: float
    multiplicity: int = 1
    defective: Optional[bool] = False
    modulus_err: float = 0.0


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: tuple[Eigenvalue, ...]
    normal: Optional[bool]
    gram_coupling: Optional[bool]
    hilbert: bool = True
    source: str = ""

    @property
    def dim(self) -> int:
        return sum(e.multiplicity for e in self.eigenvalues)


@dataclass(frozen=True)
class SequenceData:
    """Declared properties of an infinite diagonal sequence spec.

    Every field is a declaration supplied by the caller: the rules that
    consume this fire from declarations, never from sampling a prefix.
    increasing_moduli means strictly increasing and starting above one;
    power_normal means some positive power of the operator is normal.
    """

    increasing_moduli: bool = False
    nondecreasing_moduli: bool = False
    first_modulus_above_one: bool = False
    distinct_phases: bool = False
    reflexive: bool = True
    basic: bool = True
    self_adjoint: bool = False
    power_normal: bool = False
    neg_moduli_not_well_ordered: bool = False


@dataclass(frozen=True)
class RuleReport:
    rule: str
    status: str  # fired | not-fired | unknown | fired-with-finite-certificate
    conclusion: str = ""
    details: str = ""


@dataclass(frozen=True)
class Perturbation:
    original: object
    perturbed: object
    certificate: SteeringResult
    norm_bound: Fraction


# ---------------------------------------------------------------------------
# three-valued logic


def _or3(values) -> Optional[bool]:
    out: Optional[bool] = False
    for v in values:
        if v is True:
            return True
        if v is None:
            out = None
    return out


def _and3(values) -> Optional[bool]:
    out: Optional[bool] = True
    for v in values:
        if v is False:
            return False
        if v is None:
            out = None
    return out


# ---------------------------------------------------------------------------
# spectral extraction


def _frac_ci(q: Fraction) -> ComplexInterval:
    mid = mpf(q.numerator) / q.denominator
    rad = abs(mid) * mpf(2) ** (6 - mpmath.mp.prec)
    return ComplexInterval(mid, mpf(0), rad)


def _entry_zero(e: Entry) -> bool:
    if isinstance(e, PolarEntry):
        return e.radius == 0
    return qc_is_zero(e)


def _entry_interval(e: Entry) -> ComplexInterval:
    if isinstance(e, PolarEntry):
        r, err = e.angle.reduce_mod2(1, mpf(2) ** (8 - mpmath.mp.prec))
        return circle_point(r, err) * _frac_ci(e.radius)
    re, im = e
    a = _frac_ci(re)
    b = _frac_ci(im)
    return ComplexInterval(a.re, b.re, a.rad + b.rad)


def _entry_polar(e: Entry) -> Optional[tuple[Fraction, Angle]]:
    """Exact (modulus squared, phase) of an entry, when representable."""
    if isinstance(e, PolarEntry):
        return e.radius * e.radius, e.angle
    re, im = e
    s = qc_abs2(e)
    if s == 0:
        return Fraction(0), RationalAngle(Fraction(0))
    if im == 0:
        return s, RationalAngle(Fraction(0 if re > 0 else 1))
    if re == 0:
        return s, RationalAngle(Fraction(1, 2) if im > 0 else Fraction(3, 2))
    if abs(re) == abs(im):
        eighth = {(1, 1): 1, (-1, 1): 3, (-1, -1): 5, (1, -1): 7}[
            (1 if re > 0 else -1, 1 if im > 0 else -1)
        ]
        return s, RationalAngle(Fraction(eighth, 4))
    ref, imf = float(re), float(im)

    def value_fn(bits: int, _re=re, _im=im) -> mpf:
        num = mpf(_re.numerator) / _re.denominator
        den = mpf(_im.numerator) / _im.denominator
        return mpmath.atan2(den, num) / mpmath.pi

    return s, SymbolicAngle(f"arg({ref}{imf:+}i)", value_fn)


def _angle_float(angle: Angle) -> float:
    return float(angle.value_mpf(80)) % 2.0


def _entries_equal(a: Entry, b: Entry) -> bool:
    pa, pb = _entry_polar(a), _entry_polar(b)
    return pa is not None and pa == pb


def _group_exact(polar: Sequence[tuple[Fraction, Angle]]) -> list[Eigenvalue]:
    groups: dict[tuple[Fraction, Angle], int] = {}
    for key in polar:
        groups[key] = groups.get(key, 0) + 1
    out = []
    for (s, angle), mult in groups.items():
        m = math.sqrt(float(s))
        out.append(
            Eigenvalue(
                modulus_sq=s,
                modulus=m,
                angle=angle,
                angle_float=_angle_float(angle),
                multiplicity=mult,
                defective=False if mult == 1 else None,
            )
        )
    return out


def _interval_rank(rows: list[list[ComplexInterval]]) -> Optional[int]:
    """Rank by division-free elimination; None when a pivot is ambiguous."""

    def is_exact_zero(c: ComplexInterval) -> bool:
        return c.re == 0 and c.im == 0 and c.rad == 0

    n = len(rows)
    rank = 0
    r = 0
    for col in range(n):
        best_i, best_lo = -1, mpf(0)
        ambiguous = False
        for i in range(r, n):
            entry = rows[i][col]
            if is_exact_zero(entry):
                continue
            lo = abs(entry).lo
            if lo > best_lo:
                best_i, best_lo = i, lo
            if lo <= 0:
                ambiguous = True
        if best_i < 0:
            if ambiguous:
                return None
            continue
        if ambiguous:
            return None
        rows[r], rows[best_i] = rows[best_i], rows[r]
        pivot = rows[r][col]
        for i in range(r + 1, n):
            e = rows[i][col]
            if is_exact_zero(e):
                continue
            rows[i] = [
                rows[i][k] * pivot - rows[r][k] * e if not (
                    is_exact_zero(rows[i][k]) and is_exact_zero(rows[r][k])
                ) else rows[i][k]
                for k in range(n)
            ]
        rank += 1
        r += 1
    return rank


def _triangular_defect(
    dense: DenseMatrix, key: tuple[Fraction, Angle], mult: int, cfg: RunConfig
) -> Optional[bool]:
    """Whether the eigenspace at `key` is smaller than its multiplicity."""
    n = dense.dim
    lam_entry = next(
        dense.rows[i][i] for i in range(n) if _entry_polar(dense.rows[i][i]) == key
    )
    for bits in cfg.ladder():
        with working_precision(max(bits, 128)):
            lam = _entry_interval(lam_entry)
            rows = []
            for i in range(n):
                row = []
                for j in range(n):
                    e = dense.rows[i][j]
                    if i == j and _entry_polar(e) == key:
                        row.append(ComplexInterval(mpf(0), mpf(0), mpf(0)))
                    elif i != j and _entry_zero(e):
                        row.append(ComplexInterval(mpf(0), mpf(0), mpf(0)))
                    elif i == j:
                        row.append(_entry_interval(e) - lam)
                    else:
                        row.append(_entry_interval(e))
                rows.append(row)
            rank = _interval_rank(rows)
        if rank is not None:
            return (n - rank) < mult
    return None


def _normal_probe(dense: DenseMatrix, cfg: RunConfig) -> Optional[bool]:
    """Certified normality of a concrete matrix, three-valued.

    Complex-rational matrices are decided exactly; triangular matrices
    reduce to their off-diagonal part being zero; anything else gets an
    interval commutator, which can certify non-normality but not
    normality.
    """
    n = dense.dim
    if dense.is_upper_triangular():
        return all(
            _entry_zero(dense.rows[i][j])
            for i in range(n)
            for j in range(n)
            if i != j
        )
    if all(not isinstance(e, PolarEntry) for row in dense.rows for e in row):
        for i in range(n):
            for j in range(n):
                left = (Fraction(0), Fraction(0))
                right = (Fraction(0), Fraction(0))
                for k in range(n):
                    a = qc_mul(qc_conj(dense.rows[k][i]), dense.rows[k][j])
                    b = qc_mul(dense.rows[i][k], qc_conj(dense.rows[j][k]))
                    left = (left[0] + a[0], left[1] + a[1])
                    right = (right[0] + b[0], right[1] + b[1])
                if left != right:
                    return False
        return True
    for bits in cfg.ladder():
        with working_precision(max(bits, 192)):
            cells = [[_entry_interval(e) for e in row] for row in dense.rows]
            for i in range(n):
                for j in range(n):
                    acc = ComplexInterval(mpf(0), mpf(0), mpf(0))
                    for k in range(n):
                        acc = acc + cells[k][i].conj() * cells[k][j]
                        acc = acc - cells[i][k] * cells[j][k].conj()
                    if abs(acc).lo > 0:
                        return False
    return None


def _eig_spectral(dense: DenseMatrix, cfg: RunConfig) -> tuple[Eigenvalue, ...]:
    """Residual-certified dense eigensolve, clustered by the tie band."""
    n = dense.dim
    target = cfg.tolerance
    for bits in cfg.ladder():
        with working_precision(max(bits, 128)):
            a = dense.to_mp()
            scale = max(float(mpmath.mnorm(a, "f")), 1.0)
            try:
                evals, vecs = mpmath.eig(a, left=False, right=True)
                inv = mpmath.inverse(vecs)
            except ZeroDivisionError:
                continue
            worst = 0.0
            for i in range(n):
                v = a * vecs[:, i] - evals[i] * vecs[:, i]
                res = float(mpmath.norm(v)) / max(float(mpmath.norm(vecs[:, i])), 1e-300)
                worst = max(worst, res)
            cond = float(mpmath.mnorm(vecs, "f")) * float(mpmath.mnorm(inv, "f"))
            err = worst * cond * n
        if err <= target * scale:
            pts = sorted(
                (complex(evals[i]) for i in range(n)), key=lambda z: (z.real, z.imag)
            )
            clusters: list[list[complex]] = []
            for z in pts:
                if clusters and abs(z - clusters[-1][-1]) <= 4 * err:
                    clusters[-1].append(z)
                else:
                    clusters.append([z])
            out = []
            for c in clusters:
                mid = sum(c) / len(c)
                spread = max(abs(z - mid) for z in c)
                out.append(
                    Eigenvalue(
                        modulus_sq=None,
                        modulus=abs(mid),
                        angle=None,
                        angle_float=math.atan2(mid.imag, mid.real) / math.pi % 2.0,
                        multiplicity=len(c),
                        defective=False if len(c) == 1 else None,
                        modulus_err=err + spread,
                    )
                )
            return tuple(out)
    raise EigensolveFailure(
        f"could not certify the spectrum of {dense.label or 'matrix'} "
        f"to {target} times its norm"
    )


def spectral_data(spec, cfg: RunConfig = DEFAULT) -> SpectralData:
    """Certified eigenvalue data for a diagonal or concrete matrix spec."""
    if isinstance(spec, SpectralData):
        return spec
    if isinstance(spec, ExactDiagonal):
        polar = [(e.radius * e.radius, e.angle) for e in spec.entries]
        eigs = tuple(_group_exact(polar))
        eigs = tuple(
            ev if ev.multiplicity == 1 else Eigenvalue(
                ev.modulus_sq, ev.modulus, ev.angle, ev.angle_float,
                ev.multiplicity, False, ev.modulus_err,
            )
            for ev in eigs
        )
        return SpectralData(
            eigs, normal=True, gram_coupling=False, source=spec.label or "diagonal"
        )
    if not isinstance(spec, DenseMatrix):
        raise TypeError("spectral data needs a diagonal or concrete matrix spec")
    normal = _normal_probe(spec, cfg)
    if spec.is_upper_triangular():
        polar = [_entry_polar(spec.rows[i][i]) for i in range(spec.dim)]
        eigs = []
        for ev in _group_exact(polar):
            if ev.multiplicity > 1:
                key = (ev.modulus_sq, ev.angle)
                defect = _triangular_defect(spec, key, ev.multiplicity, cfg)
                ev = Eigenvalue(
                    ev.modulus_sq, ev.modulus, ev.angle, ev.angle_float,
                    ev.multiplicity, defect, ev.modulus_err,
                )
            eigs.append(ev)
        eig_tuple = tuple(eigs)
    else:
        eig_tuple = _eig_spectral(spec, cfg)
    gram: Optional[bool]
    if normal is True:
        gram = False
    elif normal is False and spec.dim == 2 and len(eig_tuple) == 2:
        gram = True
    else:
        gram = None
    return SpectralData(
        eig_tuple, normal=normal, gram_coupling=gram, source=spec.label or "matrix"
    )


# ---------------------------------------------------------------------------
# independence oracle


def _rational_value(angle: Angle) -> Optional[Fraction]:
    if isinstance(angle, RationalAngle):
        return angle.value
    if isinstance(angle, LacunaryAngle) and angle.tail_hi_bits == 0:
        if max(angle.exps) * angle.p.bit_length() <= 1 << 14:
            total = Fraction(0)
            for c, e in zip(angle.coefs, angle.exps):
                total += Fraction(c, angle.p**e)
            return total
    return None


def _torsion_order(q: Fraction) -> int:
    if q == 0:
        return 1
    return 2 * q.denominator // math.gcd(q.numerator, 2 * q.denominator)


def _factor(n: int) -> Optional[dict[int, int]]:
    """Prime factorization by trial division; None past the small cap."""
    out: dict[int, int] = {}
    d = 2
    while d * d <= n:
        while n % d == 0:
            out[d] = out.get(d, 0) + 1
            n //= d
        d += 1 if d == 2 else 2
        if d > 10**6:
            return None
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    f = _factor(n)
    return f == {n: 1}


def _log_vectors(args: Sequence[Fraction]) -> Optional[list[dict[int, int]]]:
    vecs = []
    for q in args:
        up = _factor(q.numerator) if q.numerator > 1 else {}
        down = _factor(q.denominator) if q.denominator > 1 else {}
        if up is None or down is None:
            return None
        vec = dict(up)
        for p, e in down.items():
            vec[p] = vec.get(p, 0) - e
        vecs.append(vec)
    return vecs


def _integer_kernel(vecs: list[dict[int, int]]) -> Optional[tuple[int, ...]]:
    """A nonzero integer vector m with sum_j m_j vec_j = 0, if one exists."""
    primes = sorted({p for v in vecs for p in v})
    k = len(vecs)
    rows = [[Fraction(v.get(p, 0)) for p in primes] + [Fraction(0)] * k for v in vecs]
    for j in range(k):
        rows[j][len(primes) + j] = Fraction(1)
    r = 0
    for c in range(len(primes)):
        piv = next((i for i in range(r, k) if rows[i][c] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        for i in range(k):
            if i != r and rows[i][c] != 0:
                f = rows[i][c] / rows[r][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        r += 1
    for i in range(r, k):
        tail = rows[i][len(primes):]
        if any(x != 0 for x in tail):
            den = math.lcm(*(x.denominator for x in tail))
            ints = [int(x * den) for x in tail]
            g = math.gcd(*(abs(x) for x in ints if x != 0))
            ints = [x // g for x in ints]
            lead = next(x for x in ints if x != 0)
            if lead < 0:
                ints = [-x for x in ints]
            return tuple(ints)
    return None


def verify_relation(angles: Sequence[Angle], m: Sequence[int]) -> Optional[bool]:
    """Exact check of prod_j z_j^{m_j} = 1; None when not exactly checkable."""
    total = Fraction(0)
    prod = Fraction(1)
    for a, c in zip(angles, m):
        if c == 0:
            continue
        q = _rational_value(a)
        if q is not None:
            total += c * q
            continue
        if isinstance(a, SymbolicAngle) and a.log_arg is not None:
            prod *= a.log_arg**c
            continue
        return None
    return prod == 1 and total % 2 == 0


def _normalize_relation(m: Sequence[int]) -> tuple[int, ...]:
    g = math.gcd(*(abs(x) for x in m if x != 0))
    out = [x // g for x in m]
    lead = next(x for x in out if x != 0)
    if lead < 0:
        out = [-x for x in out]
    return tuple(out)


def independence(
    angles: Sequence[Angle], height: Optional[int] = None, cfg: RunConfig = DEFAULT
) -> IndependenceVerdict:
    """Torus independence of the points e^{i pi theta_j}, three-plus-valued.

    Exact routes first: any torsion phase, any repeated phase, and any
    multiplicative relation among logarithmic phases each produce a
    verified relation.  A single declared class covering every phase is
    the only source of INDEPENDENT; everything else ends in an integer
    relation search that either verifies its candidate exactly or
    reports LIKELY_INDEPENDENT at the search height.
    """
    angles = list(angles)
    k = len(angles)
    if k < 1:
        raise ValueError("independence needs at least one phase")
    H = height if height is not None else cfg.relation_height
    for j, a in enumerate(angles):
        q = _rational_value(a)
        if q is not None:
            rel = [0] * k
            rel[j] = _torsion_order(q)
            return IndependenceVerdict(
                DEPENDENT, tuple(rel), f"phase {j} is torsion of order {rel[j]}"
            )
    for i in range(k):
        for j in range(i + 1, k):
            if angles[i] == angles[j]:
                rel = [0] * k
                rel[i], rel[j] = 1, -1
                return IndependenceVerdict(
                    DEPENDENT, tuple(rel), f"phases {i} and {j} coincide"
                )
    log_args = [
        a.log_arg if isinstance(a, SymbolicAngle) else None for a in angles
    ]
    if all(q is not None for q in log_args):
        vecs = _log_vectors([q for q in log_args if q is not None])
        if vecs is not None:
            rel = _integer_kernel(vecs)
            if rel is not None and verify_relation(angles, rel) is True:
                return IndependenceVerdict(
                    DEPENDENT, rel, "multiplicative relation among log arguments"
                )
    classes = {
        a.indep_class if isinstance(a, SymbolicAngle) else None for a in angles
    }
    if len(classes) == 1 and None not in classes:
        label = classes.pop()
        sound = True
        if label == "logs_of_primes":
            args = [a.log_arg for a in angles]
            sound = (
                all(q is not None and q.denominator == 1 for q in args)
                and len(set(args)) == len(args)
                and all(_is_prime(q.numerator) for q in args)
            )
        if sound:
            return IndependenceVerdict(
                INDEPENDENT, None, f"declared class {label}", None
            )
    prec = 4 * max(cfg.precision_bits, 64)
    for attempt in range(2):
        with working_precision(prec << attempt):
            try:
                vals = [a.value_mpf(prec << attempt) for a in angles]
                found = mpmath.pslq(
                    [mpf(2)] + vals, maxcoeff=H, maxsteps=3000 + 300 * k
                )
            except (ValueError, ZeroDivisionError):
                found = None
        if found is None:
            return IndependenceVerdict(
                LIKELY_INDEPENDENT, None, "no relation at this height", H
            )
        m = tuple(found[1:])
        if any(m):
            ok = verify_relation(angles, m)
            if ok is True:
                return IndependenceVerdict(
                    DEPENDENT, _normalize_relation(m), "relation search, verified", H
                )
            if ok is None:
                return IndependenceVerdict(
                    UNKNOWN,
                    None,
                    f"candidate relation {m} is not exactly checkable",
                    H,
                )
    return IndependenceVerdict(
        UNKNOWN, None, "relation search produced only spurious candidates", H
    )


# ---------------------------------------------------------------------------
# tie-banded modulus comparisons


def _sq_gap_decided(s1: Fraction, s2: Fraction, t: float) -> Optional[int]:
    """Sign of m1 - m2 with a tie band of width t; None inside the band."""
    if s1 == s2:
        return 0
    tt = Fraction(t) * Fraction(t)
    a = s1 + s2 - tt
    if a > 0 and a * a >= 4 * s1 * s2:
        return 1 if s1 > s2 else -1
    return None


def _equal_moduli(e1: Eigenvalue, e2: Eigenvalue, t: float) -> Optional[bool]:
    if e1.modulus_sq is not None and e2.modulus_sq is not None:
        d = _sq_gap_decided(e1.modulus_sq, e2.modulus_sq, t)
        return True if d == 0 else (False if d is not None else None)
    gap = abs(e1.modulus - e2.modulus)
    if gap > e1.modulus_err + e2.modulus_err + t:
        return False
    return None


def _modulus_vs_one(ev: Eigenvalue, t: float) -> Optional[int]:
    if ev.modulus_sq is not None:
        if ev.modulus_sq == 1:
            return 0
        hi = (1 + Fraction(t)) ** 2
        lo = (1 - Fraction(t)) ** 2
        if ev.modulus_sq > hi:
            return 1
        if ev.modulus_sq < lo:
            return -1
        return None
    gap = ev.modulus - 1.0
    if abs(gap) > ev.modulus_err + t:
        return 1 if gap > 0 else -1
    return None


def _modulus_gt(e1: Eigenvalue, e2: Eigenvalue, t: float) -> Optional[bool]:
    if e1.modulus_sq is not None and e2.modulus_sq is not None:
        d = _sq_gap_decided(e1.modulus_sq, e2.modulus_sq, t)
        return None if d is None else d > 0
    gap = e1.modulus - e2.modulus
    if abs(gap) > e1.modulus_err + e2.modulus_err + t:
        return gap > 0
    return None


def power_bounded(data: SpectralData, t: Optional[float] = None) -> Optional[bool]:
    """Certified power boundedness from spectral data, three-valued."""
    t = DEFAULT.tie_threshold if t is None else t
    out: Optional[bool] = True
    for ev in data.eigenvalues:
        c = _modulus_vs_one(ev, t)
        if c == 1:
            return False
        if c is None:
            out = None
        elif c == 0:
            if ev.defective is True:
                return False
            if ev.defective is None:
                out = None
    return out


# ---------------------------------------------------------------------------
# phase plumbing


def _phase(ev: Eigenvalue) -> Angle:
    if ev.angle is not None:
        return ev.angle
    x = ev.angle_float

    def value_fn(bits: int, _x=x) -> mpf:
        return mpf(_x)

    return SymbolicAngle(f"measured({x!r})", value_fn)


def _pair_independent(
    e1: Eigenvalue, e2: Eigenvalue, cfg: RunConfig
) -> tuple[Optional[bool], IndependenceVerdict]:
    iv = independence([_phase(e1), _phase(e2)], cfg=cfg)
    if iv.status == INDEPENDENT:
        return True, iv
    if iv.status == DEPENDENT:
        return False, iv
    return None, iv


def _quotient_infinite_order(
    e1: Eigenvalue, e2: Eigenvalue, cfg: RunConfig
) -> Optional[bool]:
    a1, a2 = e1.angle, e2.angle
    if isinstance(a1, RationalAngle) and isinstance(a2, RationalAngle):
        return False
    if (
        isinstance(a1, SymbolicAngle)
        and isinstance(a2, SymbolicAngle)
        and a1.log_arg is not None
        and a2.log_arg is not None
    ):
        return a1.log_arg != a2.log_arg
    indep, _ = _pair_independent(e1, e2, cfg)
    if indep is True:
        return True
    return None


# ---------------------------------------------------------------------------
# the plane (dim 2) trichotomy


def classify_c2(spec, cfg: RunConfig = DEFAULT) -> MembershipVerdicts:
    """Weak / plain / strong verdicts for a two-dimensional spec.

    YES for the weak class needs certified equal moduli above one and a
    certified independent phase pair; the plain class additionally needs
    certified non-normality; the strong class would need a density
    certificate for the power sums, which no finite computation issues,
    so it is NO exactly when the weak class is NO and UNKNOWN otherwise.
    """
    data = spectral_data(spec, cfg)
    if data.dim != 2:
        raise DimensionMismatch("plane classification needs a 2-dimensional spec")
    t = cfg.tie_threshold
    wnh = _wnh_c2(data, t, cfg)
    if wnh.value == NO:
        nh = Verdict(NO, RULE_PLANE, "contained in the weak class: " + wnh.details)
        snh = Verdict(NO, RULE_PLANE, "contained in the plain class: " + wnh.details)
        return MembershipVerdicts(wnh, nh, snh)
    snh = Verdict(
        UNKNOWN, RULE_PLANE, "density of the power sums is not finitely certifiable"
    )
    if wnh.value == UNKNOWN:
        nh = Verdict(UNKNOWN, RULE_PLANE, wnh.details)
        return MembershipVerdicts(wnh, nh, snh)
    if data.normal is False:
        nh = Verdict(YES, RULE_PLANE, "weak class member, certified non-normal")
    elif data.normal is True:
        nh = Verdict(
            UNKNOWN,
            RULE_PLANE,
            "normal operator: membership reduces to power sum density",
        )
    else:
        nh = Verdict(UNKNOWN, RULE_PLANE, "normality undecided")
    return MembershipVerdicts(wnh, nh, snh)


def _wnh_c2(data: SpectralData, t: float, cfg: RunConfig) -> Verdict:
    pb = power_bounded(data, t)
    if pb is True:
        return Verdict(NO, RULE_POWER_BOUNDED, "power bounded")
    evs = data.eigenvalues
    if len(evs) == 1:
        return Verdict(NO, RULE_PLANE, "repeated eigenvalue: phases coincide")
    e1, e2 = evs
    eq = _equal_moduli(e1, e2, t)
    above = [
        None if c is None else c > 0
        for c in (_modulus_vs_one(e1, t), _modulus_vs_one(e2, t))
    ]
    indep, iv = _pair_independent(e1, e2, cfg)
    verdict = _and3([eq, above[0], above[1], indep])
    if verdict is True:
        return Verdict(YES, RULE_PLANE, f"independent phases ({iv.reasoning})")
    if verdict is False:
        if eq is False:
            return Verdict(NO, RULE_PLANE, "distinct absolute values")
        if False in above:
            return Verdict(NO, RULE_PLANE, "common modulus not above one")
        return Verdict(NO, RULE_PLANE, f"dependent phases, relation {iv.relation}")
    if eq is None:
        return Verdict(UNKNOWN, RULE_PLANE, "modulus comparison inside the tie band")
    if None in above:
        return Verdict(UNKNOWN, RULE_PLANE, "modulus against one inside the tie band")
    return Verdict(UNKNOWN, RULE_PLANE, f"independence unresolved ({iv.reasoning})")


# ---------------------------------------------------------------------------
# dim 3, weak class


def classify_c3_wnh(spec, cfg: RunConfig = DEFAULT) -> Verdict:
    """Weak-class verdict for a three-dimensional spec.

    YES from either certified route: an equal-modulus independent pair
    above one, or a strictly dominated third eigenvalue above one under
    an infinite-order top quotient with an independent top/bottom pair.
    """
    data = spectral_data(spec, cfg)
    if data.dim != 3:
        raise DimensionMismatch("this classification needs a 3-dimensional spec")
    t = cfg.tie_threshold
    pb = power_bounded(data, t)
    if pb is True:
        return Verdict(NO, RULE_POWER_BOUNDED, "power bounded")
    evs = data.eigenvalues
    pair_checks = []
    for i in range(len(evs)):
        if evs[i].multiplicity > 1:
            pair_checks.append(False)
        for j in range(i + 1, len(evs)):
            eq = _equal_moduli(evs[i], evs[j], t)
            above = _modulus_vs_one(evs[i], t)
            indep, _ = _pair_independent(evs[i], evs[j], cfg)
            pair_checks.append(
                _and3([eq, None if above is None else above > 0, indep])
            )
    first = _or3(pair_checks)
    if first is True:
        return Verdict(YES, RULE_SPACE, "equal-modulus independent pair above one")
    second_checks = []
    if len(evs) == 3:
        for k in range(3):
            i, j = [x for x in range(3) if x != k]
            eq = _equal_moduli(evs[i], evs[j], t)
            dominated = _and3(
                [
                    _modulus_gt(evs[i], evs[k], t),
                    None
                    if (c := _modulus_vs_one(evs[k], t)) is None
                    else c > 0,
                ]
            )
            inf_order = _quotient_infinite_order(evs[i], evs[j], cfg)
            for top in (i, j):
                indep, _ = _pair_independent(evs[top], evs[k], cfg)
                second_checks.append(_and3([eq, dominated, inf_order, indep]))
    else:
        second_checks.append(False)
    verdict = _or3([first, _or3(second_checks)])
    if verdict is True:
        return Verdict(YES, RULE_SPACE, "dominated third eigenvalue route")
    if verdict is False:
        return Verdict(NO, RULE_SPACE, "both certified routes fail")
    return Verdict(UNKNOWN, RULE_SPACE, "a hypothesis stayed inside the tie band")


# ---------------------------------------------------------------------------
# sufficient-condition rule battery


def _report(rule: str, fired: Optional[bool], conclusion: str, details: str = "") -> RuleReport:
    if fired is True:
        return RuleReport(rule, "fired", conclusion, details)
    if fired is False:
        return RuleReport(rule, "not-fired", "", details)
    return RuleReport(rule, "unknown", "", details)


def sufficient_conditions(
    data,
    sequence: Optional[SequenceData] = None,
    witness: Optional[SteeringResult] = None,
    cfg: RunConfig = DEFAULT,
) -> list[RuleReport]:
    """Evaluate every sufficient rule against certified spectral data.

    Rules over infinite diagonal sequences consume declared flags only.
    The finite-witness rules report fired-with-finite-certificate when a
    steering result is supplied: the certificate is evidence for a dense
    orbit, not a proof, so the membership verdict itself stays UNKNOWN.
    """
    data = spectral_data(data, cfg) if not isinstance(data, SpectralData) else data
    t = cfg.tie_threshold
    evs = data.eigenvalues
    reports: list[RuleReport] = []

    pb = power_bounded(data, t)
    if pb is True:
        reports.append(
            RuleReport(
                RULE_POWER_BOUNDED,
                "fired",
                "WNH=NO",
                "power bounded: nothing below can fire",
            )
        )

    def pairs():
        for i in range(len(evs)):
            for j in range(i + 1, len(evs)):
                yield evs[i], evs[j]

    # equal moduli above one with independent phases
    checks = [
        _and3(
            [
                _equal_moduli(a, b, t),
                None if (c := _modulus_vs_one(a, t)) is None else c > 0,
                _pair_independent(a, b, cfg)[0],
            ]
        )
        for a, b in pairs()
    ]
    reports.append(_report("suffwnh.1", _or3(checks), "WNH=YES"))

    # two independent defective unimodular eigenvalues
    checks = [
        _and3(
            [
                (lambda c: None if c is None else c == 0)(_modulus_vs_one(a, t)),
                (lambda c: None if c is None else c == 0)(_modulus_vs_one(b, t)),
                a.defective,
                b.defective,
                _pair_independent(a, b, cfg)[0],
            ]
        )
        for a, b in pairs()
    ]
    reports.append(_report("suffwnh.2", _or3(checks), "WNH=YES"))

    # dominated third eigenvalue
    checks = []
    for i in range(len(evs)):
        for j in range(len(evs)):
            if j <= i:
                continue
            for k in range(len(evs)):
                if k in (i, j):
                    continue
                base = _and3(
                    [
                        _equal_moduli(evs[i], evs[j], t),
                        _modulus_gt(evs[i], evs[k], t),
                        None
                        if (c := _modulus_vs_one(evs[k], t)) is None
                        else c > 0,
                        _quotient_infinite_order(evs[i], evs[j], cfg),
                    ]
                )
                for top in (i, j):
                    checks.append(
                        _and3([base, _pair_independent(evs[top], evs[k], cfg)[0]])
                    )
    reports.append(_report("suffwnh.3", _or3(checks) if checks else False, "WNH=YES"))

    # equal-modulus infinite-order pair plus a defective unimodular phase
    checks = []
    for i in range(len(evs)):
        for j in range(len(evs)):
            if j <= i:
                continue
            base = _and3(
                [
                    _equal_moduli(evs[i], evs[j], t),
                    None if (c := _modulus_vs_one(evs[i], t)) is None else c > 0,
                    _quotient_infinite_order(evs[i], evs[j], cfg),
                ]
            )
            for k in range(len(evs)):
                if k in (i, j):
                    continue
                third = _and3(
                    [
                        (lambda c: None if c is None else c == 0)(
                            _modulus_vs_one(evs[k], t)
                        ),
                        evs[k].defective,
                    ]
                )
                for top in (i, j):
                    checks.append(
                        _and3(
                            [base, third, _pair_independent(evs[top], evs[k], cfg)[0]]
                        )
                    )
    reports.append(_report("suffwnh.4", _or3(checks) if checks else False, "WNH=YES"))

    # positive-combination power sums: witness only
    if witness is not None and witness.hits:
        ok = all(h.residual <= h.tolerance for h in witness.hits)
        reports.append(
            RuleReport(
                "suffsnh.1",
                "fired-with-finite-certificate" if ok else "unknown",
                "SNH evidence only; verdict stays UNKNOWN",
                f"{len(witness.hits)} steered targets",
            )
        )
    else:
        reports.append(_report("suffsnh.1", False, "", "no witness supplied"))

    # three equal-modulus jointly independent phases above one
    checks = []
    for i in range(len(evs)):
        for j in range(i + 1, len(evs)):
            for k in range(j + 1, len(evs)):
                trip = [evs[i], evs[j], evs[k]]
                iv = independence([_phase(e) for e in trip], cfg=cfg)
                joint = (
                    True
                    if iv.status == INDEPENDENT
                    else (False if iv.status == DEPENDENT else None)
                )
                checks.append(
                    _and3(
                        [
                            _equal_moduli(trip[0], trip[1], t),
                            _equal_moduli(trip[1], trip[2], t),
                            None
                            if (c := _modulus_vs_one(trip[0], t)) is None
                            else c > 0,
                            joint,
                        ]
                    )
                )
    reports.append(_report("suffsnh.2", _or3(checks) if checks else False, "SNH=YES"))

    # non-orthogonal eigenspaces at an independent equal-modulus pair
    checks = [
        _and3(
            [
                data.hilbert,
                data.gram_coupling,
                _equal_moduli(a, b, t),
                None if (c := _modulus_vs_one(a, t)) is None else c > 0,
                _pair_independent(a, b, cfg)[0],
            ]
        )
        for a, b in pairs()
    ]
    reports.append(_report("suffnh", _or3(checks), "NH=YES"))

    # independent defective pair with equal moduli at least one
    checks = []
    for a, b in pairs():
        c1, c2 = _modulus_vs_one(a, t), _modulus_vs_one(b, t)
        checks.append(
            _and3(
                [
                    data.hilbert,
                    a.defective,
                    b.defective,
                    _equal_moduli(a, b, t),
                    None if c1 is None else c1 >= 0,
                    _pair_independent(a, b, cfg)[0],
                ]
            )
        )
    reports.append(_report("suffnh1", _or3(checks), "NH=YES"))

    # declared-sequence rules
    if sequence is None:
        for rule in ("suffsnhid.1", "suffsnhid.2", "normaLLL.1", "normaLLL.2", "sanh"):
            reports.append(_report(rule, False, "", "no sequence declaration"))
        return reports
    if witness is not None and witness.hits and sequence.reflexive and sequence.basic:
        reports.append(
            RuleReport(
                "suffsnhid.1",
                "fired-with-finite-certificate",
                "SNH evidence only; verdict stays UNKNOWN",
                "summable weights witness",
            )
        )
    else:
        reports.append(
            _report("suffsnhid.1", False, "", "needs a witness on a reflexive basic sequence")
        )
    reports.append(
        _report(
            "suffsnhid.2",
            sequence.reflexive
            and sequence.basic
            and sequence.first_modulus_above_one
            and sequence.nondecreasing_moduli
            and sequence.distinct_phases,
            "SNH=YES",
        )
    )
    reports.append(
        _report(
            "normaLLL.1",
            sequence.power_normal and sequence.increasing_moduli,
            "WNH=YES",
        )
    )
    reports.append(
        _report(
            "normaLLL.2",
            sequence.power_normal
            and sequence.increasing_moduli
            and sequence.distinct_phases,
            "NH=YES",
        )
    )
    if sequence.self_adjoint:
        fired = sequence.neg_moduli_not_well_ordered
        reports.append(
            RuleReport(
                "sanh",
                "fired" if fired else "not-fired",
                "WNH=YES" if fired else "WNH=NO",
                "characterization: the rule decides both ways for self-adjoint data",
            )
        )
    else:
        reports.append(_report("sanh", False, "", "not self-adjoint"))
    return reports


# ---------------------------------------------------------------------------
# weighted shifts


def shift_classify(
    shift: ShiftOp,
    horizon: int,
    escape_bound: Fraction = Fraction(10**6),
    cfg: RunConfig = DEFAULT,
) -> Verdict:
    """Membership dichotomy for weighted shifts: not power bounded = YES.

    The norm of the n-th power is the supremum of window products of n
    consecutive weight moduli.  A float scan locates candidate windows;
    any verdict-bearing product is then re-multiplied exactly, and a YES
    needs an exact product above the escape bound.  A NO needs the
    declared weight bound at most one.  Everything else is UNKNOWN at
    the scanned horizon.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if escape_bound <= 1:
        raise ValueError("escape bound must exceed 1")
    if shift.sup_bound is not None and shift.sup_bound <= 1:
        return Verdict(
            NO, RULE_SHIFT, "weights bounded by one: every power is a contraction"
        )
    lo = -horizon if shift.kind == "bilateral" else 1
    hi = 2 * horizon
    idx = [j for j in range(lo, hi + 1) if j != 0 or shift.kind != "bilateral"]
    logs = np.array([math.log(float(shift.weight_fn(j))) for j in idx])
    prefix = np.concatenate([[0.0], np.cumsum(logs)])
    log_bound = math.log(float(escape_bound))
    n = 1
    while n <= horizon:
        window = prefix[n:] - prefix[:-n]
        starts = np.nonzero(window > log_bound * 0.9)[0]
        for s in starts[:4]:
            prod = Fraction(1)
            for step in range(n):
                prod *= shift.weight_fn(idx[s + step])
                if prod >= escape_bound:
                    return Verdict(
                        YES,
                        RULE_SHIFT,
                        f"window of length {step + 1} starting at index "
                        f"{idx[s]} has product at least {escape_bound}",
                    )
        n *= 2
    return Verdict(
        UNKNOWN,
        RULE_SHIFT,
        f"no certified product above {escape_bound} within horizon {horizon}",
    )


# ---------------------------------------------------------------------------
# closure membership


def closure_membership(spec, cfg: RunConfig = DEFAULT) -> Verdict:
    """Whether the spec lies in the norm closure of the membered class.

    YES means inside the closure.  Outside needs every eigenvalue of
    modulus at least one to be simple with pairwise distinct moduli;
    the check is vacuous (outside) when no modulus reaches one.
    """
    data = spectral_data(spec, cfg)
    t = cfg.tie_threshold
    family = []
    for ev in data.eigenvalues:
        c = _modulus_vs_one(ev, t)
        if c is None:
            return Verdict(
                UNKNOWN, RULE_CLOSURE, "modulus against one inside the tie band"
            )
        if c >= 0:
            family.append(ev)
    for ev in family:
        if ev.multiplicity > 1:
            return Verdict(
                YES, RULE_CLOSURE, "a modulus-one-or-larger eigenvalue repeats"
            )
    for i in range(len(family)):
        for j in range(i + 1, len(family)):
            eq = _equal_moduli(family[i], family[j], t)
            if eq is True:
                return Verdict(
                    YES, RULE_CLOSURE, "two large eigenvalues share a modulus"
                )
            if eq is None:
                return Verdict(
                    UNKNOWN, RULE_CLOSURE, "modulus comparison inside the tie band"
                )
    return Verdict(
        NO,
        RULE_CLOSURE,
        "all large eigenvalues simple with pairwise distinct moduli",
    )


# ---------------------------------------------------------------------------
# equal-modulus perturbation with a steering certificate


def _exact_radius_angle(e: Entry) -> tuple[Fraction, Angle]:
    if isinstance(e, PolarEntry):
        return e.radius, e.angle
    polar = _entry_polar(e)
    s = polar[0]
    root = Fraction(math.isqrt(s.numerator), math.isqrt(max(s.denominator, 1)))
    if root * root != s:
        raise ValueError("entry modulus is not an exact rational")
    return root, polar[1]


def _diag_polar_pair(spec) -> tuple[Fraction, Angle, Angle]:
    if isinstance(spec, ExactDiagonal) and spec.dim == 2:
        r1, r2 = spec.entries[0].radius, spec.entries[1].radius
        if r1 != r2:
            raise ValueError("perturbation needs certified equal moduli")
        return r1, spec.entries[0].angle, spec.entries[1].angle
    if isinstance(spec, DenseMatrix) and spec.dim == 2 and spec.is_upper_triangular():
        (r1, a1), (r2, a2) = (
            _exact_radius_angle(spec.rows[i][i]) for i in range(2)
        )
        if r1 != r2:
            raise ValueError("perturbation needs certified equal moduli")
        return r1, a1, a2
    raise ValueError("perturbation needs a 2-dimensional exact spec")


def approx_snh_perturbation(
    spec,
    targets: TargetList,
    delta,
    certificate: Optional[SteeringResult] = None,
    cfg: RunConfig = DEFAULT,
) -> Perturbation:
    """Move an equal-modulus pair within delta onto a steered phase pair.

    The perturbed spec keeps the modulus (bumped by at most delta/2 when
    it started at one) and replaces the two phases by exact rationals
    carrying a steering certificate through every target.  The returned
    norm bound is an exact rational upper estimate of the operator-norm
    distance.
    """
    delta = Fraction(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    radius, a1, a2 = _diag_polar_pair(spec)
    if radius < 1:
        raise ValueError("perturbation needs modulus at least one")
    if certificate is not None:
        if (
            certificate.schedule.base == radius
            and isinstance(a1, RationalAngle)
            and isinstance(a2, RationalAngle)
            and certificate.z_angle % 2 == a1.value % 2
            and certificate.w_angle % 2 == a2.value % 2
            and _covers(certificate, targets)
        ):
            return Perturbation(spec, spec, certificate, Fraction(0))
        raise ValueError("supplied certificate does not match the spec and targets")
    budget = delta
    r_eff = radius
    if radius == 1:
        r_eff = radius + delta / 2
        budget = delta - delta / 2
    floor = max(1, math.ceil(16 * float(r_eff) / float(budget)))
    if floor > cfg.exponent_cap:
        raise Unreachable("angle budget needs an exponent above the cap")
    snap_tol = float(budget) / (64 * float(r_eff))
    with working_precision(192):
        s1, err1 = a1.reduce_mod2(1, mpf(snap_tol))
        s2, err2 = a2.reduce_mod2(1, mpf(snap_tol))

    def seed(r) -> tuple[Fraction, Fraction]:
        # a float seed only shifts where steering starts; the extra
        # rounding is charged to the snap error below
        if isinstance(r, Fraction):
            return r % 2, Fraction(0)
        return Fraction(float(r)) % 2, Fraction(1, 2**48)

    z0, round1 = seed(s1)
    w0, round2 = seed(s2)
    snap = (
        Fraction(float(err1)) + Fraction(float(err2)) + round1 + round2
    ) * Fraction(33, 32) + Fraction(1, 2**200)
    result = torus_steer(
        RadiusSchedule(r_eff),
        SteerPattern(),
        targets,
        cfg,
        start=(z0, w0),
        min_exponent=floor,
    )
    move_z = sum((s.drift_z for s in result.schedule_log), Fraction(0))
    move_w = sum((s.drift_w for s in result.schedule_log), Fraction(0))
    bound = (r_eff - radius) + r_eff * _PI_HI * (max(move_z, move_w) + snap)
    if bound > delta:
        raise Unreachable(
            f"certified movement {float(bound):.3g} exceeds the budget {float(delta):.3g}"
        )
    za = result.z_angle % 2
    wa = result.w_angle % 2
    if isinstance(spec, ExactDiagonal):
        perturbed: object = ExactDiagonal(
            (
                DiagEntry(r_eff, RationalAngle(za)),
                DiagEntry(r_eff, RationalAngle(wa)),
            ),
            label=(spec.label + "+steered") if spec.label else "steered",
        )
    else:
        rows = [list(r) for r in spec.rows]
        rows[0][0] = PolarEntry(r_eff, RationalAngle(za))
        rows[1][1] = PolarEntry(r_eff, RationalAngle(wa))
        perturbed = DenseMatrix(
            tuple(tuple(r) for r in rows),
            label=(spec.label + "+steered") if spec.label else "steered",
        )
    return Perturbation(spec, perturbed, result, bound)


def _covers(certificate: SteeringResult, targets: TargetList) -> bool:
    hit_map = {(h.target.real, h.target.imag): h for h in certificate.hits}
    for y, eps in zip(targets.targets, targets.tolerances):
        h = hit_map.get((complex(y).real, complex(y).imag))
        if h is None or h.residual > eps:
            return False
    return True
