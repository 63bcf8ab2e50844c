"""Stacked p-power ladders that steer a diagonal orbit onto targets.

The construction keeps three interlocking sequences over an odd prime p
and a target sequence w_1, w_2, ... (moduli in [1/k, k]):

* ladder exponents: exp_1 = 1, exp_{k+1} = exp_k + k + rung_k with
  rung_k = p^{exp_k}.  Rungs grow so fast that level k+1 cannot
  interfere with anything assembled from levels <= k.

* series coefficients: c_1 = 1; c_k (k >= 2) is the least even integer
  coprime to p with c_k * pi > |w_{k-1}| p^{k-1}.  The returning angle
  is the lacunary series sum_s c_s p^{-exp_s} (pi units).

* grid picks: at each level the grid {2q/p^k} is scanned for the point
  closest to the target's phase corrected by the series continuation;
  the steering angle sums the picked grid offsets at shifted exponents.

Writing z and u for the unimodular numbers of the returning and
steering angles, rung_k times the series splits as an odd integer plus
a continuation t_k, giving the exact polar form

    1 + z^{rung_k} = 2 sin(pi t_k / 2) e^{i pi (t_k - 1)/2},

so p^{rung_k} |1 + z^{rung_k}| lands near |w_k| (the coefficient rule)
and u^{rung_k} turns the product's phase near arg w_k (the grid rule).
The verify_* functions certify those two statements level by level with
explicit error budgets; deep levels never materialize p^{rung_k} and
are handled through symbolic exponent cancellation.  The make_*
helpers wrap the data into diagonal operators and norming pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import mpmath
from mpmath import mpf

from .config import DEFAULT, RunConfig, working_precision
from .errors import CapExceeded, InvalidPrimes, PrecisionUnreachable
from .exact_arith import (
    CancelInfo,
    ComplexInterval,
    ExponentLike,
    LacunaryAngle,
    RealInterval,
    ScaledReal,
    TowerAtom,
    TowerExponent,
    _bump,
    _ri_sin,
    circle_point,
    one_plus_pow,
    pow_int,
)
from .operators import (
    DiagEntry,
    ExactDiagonal,
    NormalizedPair,
    PairHint,
    hilbert_pair,
)

__all__ = [
    "WeightFamily",
    "weight_family",
    "TowerParams",
    "TailInfo",
    "TowerData",
    "build",
    "verify_return_modulus",
    "verify_return_value",
    "return_value_bound",
    "in_sparse_set",
    "scan_floor",
    "scan_even_escape",
    "FloorScanReport",
    "EscapeScanReport",
    "make_diag2",
    "make_diag4",
    "make_disk_orbit",
    "is_prime",
]

# quantities this module declines to materialize (integers above the
# cap, rungs over such exponents) all exceed 2^_DEEP_BITS: a rung p^e
# is left symbolic only when e*bitlen(p) > _INT_BITS_CAP, and then
# log2(p^e) >= e*(bitlen-1) >= _INT_BITS_CAP*(1 - 1/bitlen) >= 2^21
_INT_BITS_CAP = 1 << 22
_DEEP_BITS = 1 << 21


# ---------------------------------------------------------------------------
# weight families


@dataclass(frozen=True)
class WeightFamily:
    """Deterministic target sequence with exact polar coordinates.

    modulus_fn/phase_fn map k >= 1 to Fractions (phase in pi units);
    moduli are clamped into the band [1/k, k].  meta is the
    serializable identity (name plus any explicit target list).
    """

    name: str
    # callables are rebuilt from meta on parse; identity lives in (name, meta)
    modulus_fn: Callable[[int], Fraction] = field(compare=False)
    phase_fn: Callable[[int], Fraction] = field(compare=False)
    meta: tuple = ()

    def weight(self, k: int) -> tuple[Fraction, Fraction]:
        mod = Fraction(self.modulus_fn(k))
        mod = min(max(mod, Fraction(1, k)), Fraction(k))
        return mod, Fraction(self.phase_fn(k)) % 2


def _unpair(n: int) -> tuple[int, int]:
    w = (math.isqrt(8 * n + 1) - 1) // 2
    j = n - w * (w + 1) // 2
    return w - j, j


def _double_unpair(k: int) -> tuple[int, int, int, int]:
    a, b = _unpair(k - 1)
    i1, j1 = _unpair(a)
    i2, j2 = _unpair(b)
    return i1, j1, i2, j2


def _spiral_modulus(k: int) -> Fraction:
    i1, j1, _, _ = _double_unpair(k)
    return Fraction(i1 + 1, j1 + 1)


def _spiral_phase(k: int) -> Fraction:
    _, _, i2, j2 = _double_unpair(k)
    return Fraction(2 * i2, i2 + j2 + 1)


def _half_phase(k: int) -> Fraction:
    # dense rationals in (-1/2, 1/2): strictly right half-plane phases
    _, _, i2, j2 = _double_unpair(k)
    return Fraction(i2 - j2, 2 * (i2 + j2 + 2))


def _disk_modulus(k: int) -> Fraction:
    i1, j1, _, _ = _double_unpair(k)
    return Fraction(2 * (i1 + 1), i1 + j1 + 2)


def weight_family(name: str, targets: Sequence[tuple] = ()) -> WeightFamily:
    """Named target families.

    ones/i_ones: constant 1 and i (calibration, frozen regressions);
    spiral: rationals dense in the punctured plane; half_right and
    half_left: dense in the open right/left half-plane; disk: dense in
    the disk of radius 2; listed: explicit (modulus, phase-in-pi-units)
    rational pairs, cycled.
    """
    if name == "ones":
        return WeightFamily("ones", lambda k: Fraction(1), lambda k: Fraction(0), ("ones",))
    if name == "i_ones":
        return WeightFamily("i_ones", lambda k: Fraction(1), lambda k: Fraction(1, 2), ("i_ones",))
    if name == "spiral":
        return WeightFamily("spiral", _spiral_modulus, _spiral_phase, ("spiral",))
    if name == "half_right":
        return WeightFamily("half_right", _spiral_modulus, _half_phase, ("half_right",))
    if name == "half_left":
        return WeightFamily(
            "half_left", _spiral_modulus, lambda k: (_half_phase(k) + 1) % 2, ("half_left",)
        )
    if name == "disk":
        return WeightFamily("disk", _disk_modulus, _spiral_phase, ("disk",))
    if name == "listed":
        if not targets:
            raise ValueError("listed family needs at least one target")
        pairs = tuple((Fraction(m), Fraction(ph) % 2) for m, ph in targets)
        return WeightFamily(
            "listed",
            lambda k: pairs[(k - 1) % len(pairs)][0],
            lambda k: pairs[(k - 1) % len(pairs)][1],
            ("listed", pairs),
        )
    raise ValueError(f"unknown weight family {name!r}")


# ---------------------------------------------------------------------------
# parameters and artifacts


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin (the witness set is exact to 3.3e24)."""
    if n < 2:
        return False
    for q in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % q == 0:
            return n == q
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class TowerParams:
    p: int
    family: WeightFamily
    depth: int

    def __post_init__(self):
        if self.p < 3 or self.p % 2 == 0 or not is_prime(self.p):
            raise InvalidPrimes(f"p must be an odd prime, got {self.p}")
        if self.depth < 1:
            raise ValueError("depth must be at least 1")


@dataclass(frozen=True)
class TailInfo:
    """Certified continuation: value = prefix + r with 0 <= r < 2^-rem_bits."""

    prefix: Fraction
    rem_bits: int

    def hi_mpf(self) -> mpf:
        return mpf(2) ** (-self.rem_bits)


@dataclass(frozen=True)
class TowerData:
    """Built ladder artifacts; indices are 1-based through the accessors.

    exps[j] holds the ladder exponent at level j+1, an int while the
    previous rung is materializable and a symbolic combination beyond;
    two spare levels past `depth` feed remainder bounds.  tails[j] is
    the continuation t_{j+1} of rung * series past its odd integer
    part, u_tails[j] the continuation of the steering power at level
    j+1 past its own grid term.
    """

    params: TowerParams
    exps: tuple[ExponentLike, ...]
    coeffs: tuple[int, ...]
    whole_parts: tuple[Optional[int], ...]
    phase_picks: tuple[int, ...]
    weights: tuple[tuple[Fraction, Fraction], ...]
    tau: LacunaryAngle
    u_angle: LacunaryAngle
    tails: tuple[TailInfo, ...]
    u_tails: tuple[TailInfo, ...]

    @property
    def p(self) -> int:
        return self.params.p

    @property
    def depth(self) -> int:
        return self.params.depth

    def exp_at(self, k: int) -> ExponentLike:
        return self.exps[k - 1]

    def coeff_at(self, k: int) -> int:
        return self.coeffs[k - 1]

    def rung_exp(self, k: int) -> ExponentLike:
        """rung_k = p^{exp_k}, materialized or symbolic."""
        e = self.exps[k - 1]
        if _materializable(e, self.p):
            return self.p**e
        return _rung_symbol(self.p, self.params.family.name, k, e)

    def rung_int(self, k: int) -> Optional[int]:
        r = self.rung_exp(k)
        return r if isinstance(r, int) else None

    def weight_at(self, k: int) -> tuple[Fraction, Fraction]:
        return self.weights[k - 1]

    def weight_interval(self, k: int) -> ComplexInterval:
        mod, phase = self.weights[k - 1]
        point = circle_point(mpf(phase.numerator) / phase.denominator, 4 * _bump())
        return point * ComplexInterval.exact(mpf(mod.numerator) / mod.denominator)

    def tail_at(self, k: int) -> TailInfo:
        return self.tails[k - 1]

    def u_phase_at(self, k: int) -> tuple[Fraction, mpf]:
        """Phase of u^{rung_k} in pi units: exact part plus error bound."""
        info = self.u_tails[k - 1]
        base = (Fraction(2 * self.phase_picks[k - 1], self.p**k) + info.prefix) % 2
        return base, info.hi_mpf()


_RUNG_ATOMS: dict[tuple, TowerAtom] = {}


def _rung_symbol(p: int, fam: str, level: int, e: ExponentLike) -> TowerExponent:
    key = (p, fam, level)
    atom = _RUNG_ATOMS.get(key)
    if atom is None:
        if isinstance(e, int):
            # log2(p^e) lies in [e*(bitlen-1), e*bitlen]
            atom = TowerAtom(
                f"rung:{p}:{fam}", level, e * (p.bit_length() - 1), e * p.bit_length()
            )
        else:
            atom = TowerAtom(f"rung:{p}:{fam}", level, _DEEP_BITS, None)
        _RUNG_ATOMS[key] = atom
    return TowerExponent.atom(atom)


def _materializable(e: ExponentLike, p: int) -> bool:
    return isinstance(e, int) and e * p.bit_length() <= _INT_BITS_CAP


# ---------------------------------------------------------------------------
# certified comparisons against pi


def _cmp_pi_multiple(m: int, rhs: Fraction, cfg: RunConfig) -> int:
    """Certified sign of m*pi - rhs (nonzero whenever m or rhs is)."""
    if m == 0:
        return (rhs < 0) - (rhs > 0)
    for bits in cfg.ladder():
        with working_precision(bits):
            rhs_m = mpf(rhs.numerator) / rhs.denominator
            lhs = RealInterval(mpmath.pi * m, abs(mpf(m)) * 8 * _bump())
            diff = lhs - RealInterval(rhs_m, abs(rhs_m) * 4 * _bump() + _bump())
            s = diff.sign()
        if s is not None:
            return s
    raise PrecisionUnreachable("cannot separate an integer multiple of pi")


def _least_even_coprime_above(thresh: Fraction, p: int, cfg: RunConfig) -> int:
    """Least even m coprime to p with m*pi > thresh."""
    m = 2 * max(0, math.floor(float(thresh) / math.pi / 2) - 1)
    while True:
        m += 2
        if m % p == 0:
            continue
        if _cmp_pi_multiple(m, thresh, cfg) > 0:
            return m


# ---------------------------------------------------------------------------
# build


def build(params: TowerParams, cfg: RunConfig = DEFAULT) -> TowerData:
    """Construct ladder artifacts to the requested depth.

    Number-theoretic invariants (coefficients even and coprime to p,
    integer parts odd and coprime to p, picks within their grid) hold
    by construction and are re-checked; each grid scan is a literal
    argmin over exact rational circle distances with ties resolved to
    the smallest pick, and the dropped continuation is certified too
    small to flip the winner.
    """
    p, K = params.p, params.depth
    if p**K > cfg.grid_cap:
        raise CapExceeded(f"grid p^depth = {p**K} exceeds cap {cfg.grid_cap}")
    fam = params.family

    weights = tuple(fam.weight(k) for k in range(1, K + 3))
    for k, (mod, _) in enumerate(weights, start=1):
        if not Fraction(1, k) <= mod <= Fraction(k):
            raise ValueError(f"target modulus at level {k} leaves the band")

    # coefficients c_1..c_{K+3}; the spares only feed remainder bounds
    coeffs = [1]
    for k in range(2, K + 4):
        thresh = weights[k - 2][0] * p ** (k - 1)
        m = _least_even_coprime_above(thresh, p, cfg)
        if _cmp_pi_multiple(m - 4, thresh, cfg) >= 0:
            raise PrecisionUnreachable("coefficient rule left its 4-window")
        coeffs.append(m)

    # ladder exponents exp_1..exp_{K+3}
    exps: list[ExponentLike] = [1]
    for k in range(1, K + 3):
        e = exps[-1]
        rung: ExponentLike = p**e if _materializable(e, p) else _rung_symbol(p, fam.name, k, e)
        nxt = e + k + rung
        if isinstance(nxt, TowerExponent) and nxt.is_int:
            nxt = nxt.as_int()
        exps.append(nxt)

    # odd integer parts of rung_k * series where materializable
    whole_parts: list[Optional[int]] = []
    for k in range(1, K + 1):
        e_k = exps[k - 1]
        if isinstance(e_k, int) and (e_k - 1) * p.bit_length() <= _INT_BITS_CAP:
            n_k = sum(coeffs[s - 1] * p ** (e_k - exps[s - 1]) for s in range(1, k + 1))
            if n_k % 2 == 0 or n_k % p == 0:
                raise ArithmeticError("integer part lost parity or coprimality")
            whole_parts.append(n_k)
        else:
            whole_parts.append(None)

    tails = [_tail_info(exps, coeffs, k, p) for k in range(1, K + 3)]

    # grid picks against the continuation-corrected target phase
    picks: list[int] = []
    for k in range(1, K + 1):
        t = tails[k - 1]
        target = (weights[k - 1][1] + Fraction(1, 2) - t.prefix / 2) % 2
        grid = p**k
        best_q, best_d, second = 0, None, None
        for q in range(grid):
            delta = (Fraction(2 * q, grid) - target) % 2
            d = min(delta, 2 - delta)
            if best_d is None or d < best_d:
                best_q, best_d, second = q, d, best_d
            elif second is None or d < second:
                second = d
        if second is not None and second > best_d:
            gap = second - best_d
            # the dropped continuation shifts the target by less than
            # 2^-rem_bits; certify the argmin cannot flip
            if not mpf(2) ** (-t.rem_bits) < mpf(gap.numerator) / gap.denominator / 4:
                raise PrecisionUnreachable("grid argmin not separated from runner-up")
        picks.append(best_q)

    u_tails = [_u_tail_info(exps, picks, k, p, K) for k in range(1, K + 1)]

    # the two angles; the returning one carries the cancellation hook
    tau_terms = [
        (coeffs[s - 1], exps[s - 1]) for s in range(1, K + 3) if isinstance(exps[s - 1], int)
    ]
    tau_bits = _series_rem_bits(exps, coeffs, len(tau_terms), p)
    hook = _make_hook(p, exps, coeffs, tails)
    tau = LacunaryAngle(
        p,
        tuple(c for c, _ in tau_terms),
        tuple(e for _, e in tau_terms),
        tail_hi_bits=tau_bits,
        family=("tower-return", p, fam.meta, K),
        cancellation_hook=hook,
    )
    u_terms = [
        (2 * picks[s - 1], s + exps[s - 1])
        for s in range(1, K + 1)
        if isinstance(exps[s - 1], int) and picks[s - 1] > 0
    ]
    u_bits = _u_series_rem_bits(exps, p, K)
    u_angle = LacunaryAngle(
        p,
        tuple(c for c, _ in u_terms),
        tuple(e for _, e in u_terms),
        tail_hi_bits=u_bits,
        family=("tower-steer", p, fam.meta, K),
    )

    return TowerData(
        params=params,
        exps=tuple(exps),
        coeffs=tuple(coeffs),
        whole_parts=tuple(whole_parts),
        phase_picks=tuple(picks),
        weights=weights,
        tau=tau,
        u_angle=u_angle,
        tails=tuple(tails),
        u_tails=tuple(u_tails),
    )


def _series_rem_bits(exps, coeffs, dropped: int, p: int) -> int:
    """Bits bound for the series terms from 0-based index `dropped` on.

    Successive terms shrink by more than half, so the first dropped
    term bounds the lot after one doubling.
    """
    if dropped >= len(exps):
        e = exps[-1]
        # the next exponent exceeds exp_last + p^{exp_last}
        return e - 8 if isinstance(e, int) and e <= _INT_BITS_CAP else _DEEP_BITS
    e = exps[dropped]
    if isinstance(e, int):
        c = coeffs[dropped] if dropped < len(coeffs) else 1
        return max(0, e - c.bit_length() - 2)
    return _DEEP_BITS


def _u_series_rem_bits(exps, p: int, K: int) -> int:
    """Bits bound for the steering series past its stored terms."""
    e_next = exps[K] if K < len(exps) else None
    if isinstance(e_next, int):
        # next coefficient is below 2 p^{K+1}, at exponent exp_{K+1}+K+1
        if e_next > _INT_BITS_CAP:
            return _DEEP_BITS
        return max(0, e_next + (K + 1) - (K + 1) * p.bit_length() - 3)
    return _DEEP_BITS


def _tail_info(exps, coeffs, k: int, p: int) -> TailInfo:
    """Continuation t_k of the series past level k, scaled by rung_k."""
    e_k = exps[k - 1]
    prefix = Fraction(0)
    s = k + 1
    while s <= len(exps) and isinstance(e_k, int):
        e_s = exps[s - 1]
        if not isinstance(e_s, int) or (e_s - e_k) * p.bit_length() > _INT_BITS_CAP:
            break
        prefix += Fraction(coeffs[s - 1], p ** (e_s - e_k))
        s += 1
    if s <= len(exps) and isinstance(e_k, int) and isinstance(exps[s - 1], int):
        off = exps[s - 1] - e_k
        if off > _INT_BITS_CAP:
            bits = _DEEP_BITS
        else:
            c = coeffs[s - 1] if s - 1 < len(coeffs) else 1
            bits = max(0, off - c.bit_length() - 2)
    elif s > len(exps) and isinstance(e_k, int) and isinstance(exps[-1], int):
        # past the computed ladder: the next exponent exceeds
        # exp_last + p^{exp_last}
        bits = exps[-1] - e_k - 8 if exps[-1] <= _INT_BITS_CAP else _DEEP_BITS
    else:
        bits = _DEEP_BITS
    return TailInfo(prefix, bits)


def _u_tail_info(exps, picks, k: int, p: int, K: int) -> TailInfo:
    """Continuation of the steering power at level k past its grid term."""
    e_k = exps[k - 1]
    prefix = Fraction(0)
    s = k + 1
    while s <= K and isinstance(e_k, int):
        e_s = exps[s - 1]
        if not isinstance(e_s, int) or (e_s + s - e_k) * p.bit_length() > _INT_BITS_CAP:
            break
        prefix += Fraction(2 * picks[s - 1], p ** (e_s + s - e_k))
        s += 1
    if isinstance(e_k, int) and s <= K and isinstance(exps[s - 1], int):
        off = exps[s - 1] + s - e_k
        if off > _INT_BITS_CAP:
            bits = _DEEP_BITS
        else:
            bits = max(0, off - (2 * picks[s - 1] + 1).bit_length() - 2)
    elif isinstance(e_k, int) and s == K + 1 and isinstance(exps[K], int):
        # the next pick is unknown but below its grid p^{K+1}
        if exps[K] > _INT_BITS_CAP:
            bits = _DEEP_BITS
        else:
            off = exps[K] + (K + 1) - e_k
            bits = max(0, off - (K + 1) * p.bit_length() - 3)
    else:
        bits = _DEEP_BITS
    return TailInfo(prefix, bits)


# ---------------------------------------------------------------------------
# the exact polar form of 1 + z^n at structured indices


def _cancel_at(p: int, exps, coeffs, tails, k: int, m: int) -> Optional[CancelInfo]:
    """Polar form of 1 + z^{m rung_k} for odd m (None when out of range).

    With a = m t_k: 1 + z^{m rung_k} = 2 sin(pi a / 2) e^{i pi (a-1)/2}.
    Levels whose continuation has a materialized leading term evaluate
    the sine on it directly; deeper levels use the linear form pi a / 2,
    whose curvature error is certified below 2^-128, with the exponent
    kept exact (an integer or a symbolic rung).
    """
    t = tails[k - 1]
    e_k = exps[k - 1]
    if t.prefix != 0:
        a = m * t.prefix
        if not 0 < a < Fraction(1, 2):
            return None
        rem = m * t.hi_mpf()
        arg = RealInterval(
            mpmath.pi * (mpf(a.numerator) / a.denominator) / 2,
            mpmath.pi * (rem / 2 + 4 * _bump()),
        )
        mag = _ri_sin(arg) * 2
        if not mag.lo > 0:
            return None
        rel = mag.rad / mag.lo
        if not rel < mpf("0.5"):
            return None
        phase = (Fraction(3, 2) + a / 2) % 2
        return CancelInfo(ScaledReal.from_mpf(mag.mid, p, rel), phase, rem / 2 + 4 * _bump())
    if k >= len(exps) or not _materializable(e_k, p):
        return None
    rung = p**e_k
    c_next = coeffs[k]
    # certified smallness of a = m t_k via bit counts (p >= 2)
    if m.bit_length() + c_next.bit_length() + 66 > k + rung:
        return None
    rho_bits = _ratio_bound_bits(exps, coeffs, k, p)
    rel = mpf(2) ** (-rho_bits) + mpf(2) ** (-128) + 8 * _bump()
    modulus = ScaledReal.from_components(1, mpmath.pi * m * c_next, p, -(k + rung), rel)
    a_hi = mpf(2) ** (-(k + rung)) * (2 * m * c_next)
    return CancelInfo(modulus, Fraction(3, 2), a_hi / 2 + 4 * _bump())


def _ratio_bound_bits(exps, coeffs, k: int, p: int) -> int:
    """Bits bound on t_k's continuation relative to its leading term."""
    if k + 1 >= len(exps):
        e = exps[-1]
        return e - 8 if isinstance(e, int) and e <= _INT_BITS_CAP else _DEEP_BITS
    e1, e2 = exps[k], exps[k + 1]
    if isinstance(e1, int) and isinstance(e2, int):
        off = e2 - e1
        if off > _INT_BITS_CAP:
            return _DEEP_BITS
        c2 = coeffs[k + 1] if k + 1 < len(coeffs) else 1
        return max(0, off - c2.bit_length() - 2)
    return _DEEP_BITS


def _make_hook(p, exps, coeffs, tails):
    levels = [
        (k, p ** exps[k - 1])
        for k in range(1, len(tails) + 1)
        if _materializable(exps[k - 1], p)
    ]

    def hook(n: int) -> Optional[CancelInfo]:
        if n <= 0:
            return None
        for k, rung in reversed(levels):
            if n % rung == 0:
                m = n // rung
                if m % 2 == 0:
                    return None
                return _cancel_at(p, exps, coeffs, tails, k, m)
        return None

    return hook


# ---------------------------------------------------------------------------
# verification


def _return_polar(data: TowerData, k: int) -> tuple[ScaledReal, Fraction, mpf]:
    """p^{rung_k} (1 + z^{rung_k}) in polar pieces: modulus, exact phase
    part (pi units), phase error bound."""
    info = _cancel_at(data.p, data.exps, data.coeffs, data.tails, k, 1)
    if info is None:
        # beyond materialization: linear form with the shared rung symbol
        c_next = data.coeff_at(k + 1)
        rho_bits = _ratio_bound_bits(data.exps, data.coeffs, k, data.p)
        rel = mpf(2) ** (-rho_bits) + mpf(2) ** (-128) + 8 * _bump()
        rung = data.rung_exp(k)
        modulus = ScaledReal.from_components(
            1, mpmath.pi * c_next, data.p, -(k + rung), rel
        )
        return modulus.mul_base_pow(rung), Fraction(3, 2), data.tail_at(k).hi_mpf()
    scaled = info.modulus.mul_base_pow(data.rung_exp(k))
    return scaled, info.phase_pi, info.phase_err


def verify_return_modulus(
    data: TowerData, k: int, cfg: RunConfig = DEFAULT
) -> tuple[RealInterval, mpf]:
    """Certified p^{rung_k}|1 + z^{rung_k}| - |w_k| and its budget.

    The budget 4 pi p^-k (plus continuation dust) comes from the
    coefficient rule's 4-window; callers assert the enclosure sits
    inside it.  Deep levels cancel the rung exponent symbolically.
    """
    if not 1 <= k <= data.depth - 1:
        raise ValueError("level must satisfy 1 <= k <= depth - 1")
    with working_precision(max(cfg.precision_bits, 256)):
        scaled, _, _ = _return_polar(data, k)
        w_mod = data.weight_at(k)[0]
        delta = scaled.to_interval() - RealInterval.exact(
            mpf(w_mod.numerator) / w_mod.denominator
        )
        budget = 4 * mpmath.pi * pow_int(data.p, -k) + scaled.to_mpf() * (
            scaled.rel_err + mpf(2) ** (-100)
        )
        return delta, budget


def return_value_bound(data: TowerData, k: int) -> mpf:
    """Analytic budget for the full return offset at level k.

    The carried modulus misses |w_k| by at most 4 pi p^-k and the
    steered phase misses arg w_k by at most a grid half-step plus
    continuation dust, costing at most pi/p^k of the modulus.
    """
    with working_precision(128):
        w = data.weight_at(k)[0]
        w_mpf = mpf(w.numerator) / w.denominator
        step = mpmath.pi * pow_int(data.p, -k)
        return (4 * step + (w_mpf + 4 * step) * step) * (1 + mpf(2) ** -40)


def verify_return_value(
    data: TowerData, k: int, cfg: RunConfig = DEFAULT
) -> ComplexInterval:
    """Certified u^{rung_k} p^{rung_k}(1 + z^{rung_k}) - w_k."""
    if not 1 <= k <= data.depth - 1:
        raise ValueError("level must satisfy 1 <= k <= depth - 1")
    with working_precision(max(cfg.precision_bits, 256)):
        scaled, phase_z, err_z = _return_polar(data, k)
        phase_u, err_u = data.u_phase_at(k)
        total = (phase_z + phase_u) % 2
        direction = circle_point(mpf(total.numerator) / total.denominator, err_z + err_u)
        mod_int = scaled.to_interval()
        value = direction * ComplexInterval(mod_int.mid, mpf(0), mod_int.rad)
        return value - data.weight_interval(k)


# ---------------------------------------------------------------------------
# scans


def in_sparse_set(data: TowerData, n: int) -> bool:
    """Membership in the near-return set {rung_k * m : m odd,
    m^2 < p^{k + rung_k}} union'd over materialized levels."""
    if n <= 0:
        return False
    p = data.p
    for k in range(1, len(data.exps) + 1):
        rung = data.rung_int(k)
        if rung is None or rung > n:
            break
        if n % rung:
            continue
        m = n // rung
        if m % 2 == 0:
            continue
        # m^2 < p^{k+rung}: bit-length shortcut, exact power fallback
        if 2 * m.bit_length() <= k + rung:
            return True
        if k + rung <= 4096 and m * m < p ** (k + rung):
            return True
    return False


@dataclass(frozen=True)
class FloorScanReport:
    scanned: int
    excluded_returns: tuple[int, ...]
    sparse_checked: int
    floor_checked: int
    min_floor_margin: float  # min of |1+z^n| * 2n^2 off the near-return set
    min_rate: float  # min certified |1+z^n|^{1/n} on the near-return set
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def scan_floor(
    data: TowerData,
    limit: int,
    rate_from: int = 9,
    tol: float = 1e-9,
    cfg: RunConfig = DEFAULT,
) -> FloorScanReport:
    """Certify the escape floor |1 + z^n| >= 1/(2 n^2) for 2 <= n <= limit
    off the near-return set, and the rate |1 + z^n|^{1/n} >= p^{-1/3}
    (with `tol` slack) on the near-return set from `rate_from` on.

    The pure rung indices are where returns happen by design; they are
    excluded from both checks and reported separately.
    """
    if limit > cfg.scan_cap:
        raise CapExceeded(f"scan limit {limit} exceeds cap {cfg.scan_cap}")
    p = data.p
    returns = tuple(
        r
        for k in range(1, len(data.exps) + 1)
        if (r := data.rung_int(k)) is not None and r <= limit
    )
    violations = []
    min_margin = mpf("inf")
    min_rate = mpf("inf")
    sparse_n = floor_n = 0
    with working_precision(max(cfg.precision_bits, 160)):
        rate_floor = mpmath.power(mpf(p), mpf(-1) / 3) * (1 - mpf(tol))
        for n in range(2, limit + 1):
            if n in returns:
                continue
            if in_sparse_set(data, n):
                if n < rate_from:
                    continue
                sparse_n += 1
                val = one_plus_pow(data.tau, n, 1e-6, cfg).to_interval()
                rate = mpmath.exp(mpmath.log(val.lo) / n)
                min_rate = min(min_rate, rate)
                if not rate >= rate_floor:
                    violations.append((n, "rate", float(val.lo), float(val.hi)))
            else:
                floor_n += 1
                val = one_plus_pow(data.tau, n, 1e-6, cfg).to_interval()
                floor = Fraction(1, 2 * n * n)
                floor_m = mpf(floor.numerator) / floor.denominator
                if not val.lo >= floor_m:
                    val = one_plus_pow(data.tau, n, 1e-15, cfg).to_interval()
                    if not val.lo >= floor_m:
                        violations.append((n, "floor", float(val.lo), float(val.hi)))
                        continue
                min_margin = min(min_margin, val.lo * 2 * n * n)
    return FloorScanReport(
        scanned=limit - 1,
        excluded_returns=returns,
        sparse_checked=sparse_n,
        floor_checked=floor_n,
        min_floor_margin=float(min_margin),
        min_rate=float(min_rate),
        violations=tuple(violations),
    )


@dataclass(frozen=True)
class EscapeScanReport:
    lo: int
    hi: int
    min_margin: float  # min of |1+z^{2n}| * 8n^2
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def scan_even_escape(
    data: TowerData, lo: int = 10, hi: int = 2000, cfg: RunConfig = DEFAULT
) -> EscapeScanReport:
    """Certify |1 + z^{2n}| >= 1/(8 n^2) for lo <= n <= hi.

    Even powers never meet the odd-multiple near-return set, so the
    doubled index escapes a polynomial floor everywhere; this is the
    finite-window certificate of that dichotomy.
    """
    violations = []
    min_margin = mpf("inf")
    with working_precision(max(cfg.precision_bits, 160)):
        for n in range(lo, hi + 1):
            val = one_plus_pow(data.tau, 2 * n, 1e-6, cfg).to_interval()
            floor = Fraction(1, 8 * n * n)
            floor_m = mpf(floor.numerator) / floor.denominator
            if not val.lo >= floor_m:
                val = one_plus_pow(data.tau, 2 * n, 1e-15, cfg).to_interval()
                if not val.lo >= floor_m:
                    violations.append((n, float(val.lo), float(val.hi)))
                    continue
            min_margin = min(min_margin, val.lo * 8 * n * n)
    return EscapeScanReport(
        lo=lo, hi=hi, min_margin=float(min_margin), violations=tuple(violations)
    )


@dataclass(frozen=True)
class UnbalancedScanReport:
    lo: int
    hi: int
    floor_coeff: float  # limiting value of the certified floor / p^n
    min_margin: float  # min of |orbit value| / floor over certified n
    skipped: int = 0  # leading n where the floor is not yet positive
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def scan_unbalanced_escape(
    big: TowerData,
    small: TowerData,
    pair: NormalizedPair,
    lo: int = 1,
    hi: int = 1000,
    cfg: RunConfig = DEFAULT,
) -> UnbalancedScanReport:
    """Certify the orbit floor on the 4x4 two-prime diagonal when the
    leading block carries unequal weights.

    With pair coefficients c1..c4 the orbit value divided by (p u)^n is
    c1 + c2 z^n + (q/p)^n (u'/u)^n (c3 + c4 z'^n), so the reverse
    triangle inequality gives the exact floor

        |orbit value| >= (c1 - c2 - (c3 + c4)(q/p)^n) * p^n.

    c1 > c2 beats the returning angle on the leading block and the
    prime gap kills the trailing block geometrically; the scan checks
    the computed enclosures against the floor across the window.
    """
    if hi > cfg.scan_cap:
        raise CapExceeded(f"scan limit {hi} exceeds cap {cfg.scan_cap}")
    p, q = big.p, small.p
    if q >= p:
        raise InvalidPrimes(f"need q < p for a decaying tail, got p={p}, q={q}")
    if len(pair.coeffs) != 4:
        raise ValueError("pair must weight the four diagonal coordinates")
    if any(im != 0 or re < 0 for re, im in pair.coeffs):
        raise ValueError("pair coefficients must be real and nonnegative")
    c1, c2, c3, c4 = (re for re, _ in pair.coeffs)
    if c1 <= c2:
        raise ValueError("floor needs c1 > c2; balanced weights keep returning")

    def frac_ci(fr: Fraction) -> ComplexInterval:
        v = mpf(fr.numerator) / fr.denominator
        return ComplexInterval(v, mpf(0), (abs(v) + 1) * 2 * _bump())

    def enclose(n: int, tol: float) -> RealInterval:
        fz, ez = big.tau.reduce_mod2(n, tol, cfg)
        ratio = frac_ci(c1) + frac_ci(c2) * circle_point(fz % 2, ez)
        if c3 or c4:
            fu, eu = big.u_angle.reduce_mod2(n, tol, cfg)
            fu2, eu2 = small.u_angle.reduce_mod2(n, tol, cfg)
            fz2, ez2 = small.tau.reduce_mod2(n, tol, cfg)
            drift = circle_point((fu2 - fu) % 2, eu + eu2)
            tail = frac_ci(c3) + frac_ci(c4) * circle_point(fz2 % 2, ez2)
            ratio = ratio + frac_ci(Fraction(q, p) ** n) * drift * tail
        return abs(ratio)

    gap = c1 - c2
    tail_mass = c3 + c4
    violations = []
    min_margin = mpf("inf")
    skipped = 0
    with working_precision(max(cfg.precision_bits, 160)):
        for n in range(lo, hi + 1):
            floor = gap - tail_mass * Fraction(q, p) ** n
            if floor <= 0:
                skipped += 1
                continue
            floor_m = mpf(floor.numerator) / floor.denominator
            val = enclose(n, 1e-9)
            if not val.lo >= floor_m:
                val = enclose(n, 1e-15)
                if not val.lo >= floor_m:
                    violations.append((n, float(val.lo), float(floor_m)))
                    continue
            min_margin = min(min_margin, val.lo / floor_m)
    return UnbalancedScanReport(
        lo=lo,
        hi=hi,
        floor_coeff=float(gap),
        min_margin=float(min_margin),
        skipped=skipped,
        violations=tuple(violations),
    )


# ---------------------------------------------------------------------------
# operators


def make_diag2(data: TowerData) -> tuple[ExactDiagonal, NormalizedPair]:
    """2x2 diagonal diag(p u, p u z) with the equal-weight norming pair.

    The pair hint carries the returning angle so orbit values at rung
    indices stay certified through the near-total cancellation.
    """
    radius = Fraction(data.p)
    entries = (
        DiagEntry(radius, data.u_angle),
        DiagEntry(radius, data.u_angle.merge(data.tau)),
    )
    op = ExactDiagonal(
        entries,
        pairs=(PairHint(0, 1, data.tau),),
        label=f"diag2:p{data.p}:{data.params.family.name}",
    )
    return op, hilbert_pair([1, 1])


def make_diag4(
    big: TowerData, small: TowerData
) -> tuple[ExactDiagonal, NormalizedPair, NormalizedPair]:
    """4x4 diagonal pairing two ladders over primes with p^2 > q^3.

    Returns the operator and the norming pairs supported on the first
    and second blocks; each block's returns land near its own targets
    while the growth gap keeps the blocks from trading places.
    """
    p, q = big.p, small.p
    if p * p <= q**3:
        raise InvalidPrimes(f"need p^2 > q^3 strictly, got p={p}, q={q}")
    entries = (
        DiagEntry(Fraction(p), big.u_angle),
        DiagEntry(Fraction(p), big.u_angle.merge(big.tau)),
        DiagEntry(Fraction(q), small.u_angle),
        DiagEntry(Fraction(q), small.u_angle.merge(small.tau)),
    )
    op = ExactDiagonal(
        entries,
        pairs=(PairHint(0, 1, big.tau), PairHint(2, 3, small.tau)),
        label=f"diag4:p{p}:q{q}",
    )
    return op, hilbert_pair([1, 1, 0, 0]), hilbert_pair([0, 0, 1, 1])


def make_disk_orbit(data: TowerData) -> tuple[ExactDiagonal, NormalizedPair]:
    """The 2x2 construction driven by disk-dense targets: the orbit's
    near-returns at the rung indices enumerate half of each target."""
    return make_diag2(data)
