"""Finite-target hitting certificates for torus-driven sums.

Instead of density claims, everything here produces checkable data:
exact rational angles, explicit exponents, and residuals that a replay
through the interval layer certifies.  `torus_steer` drives one or two
free unimodular angles so a scaled monomial sum passes near each listed
target; the pentagon solver writes a point of a small disk as a convex
combination of five nearly-regular unimodular points; the alignment
search finds exponents at which powers of chosen circle points realize
a prescribed pattern twice (the second time squared); the sparse-weight
greedy stacks alignments and pentagon solves into an ever-extendable
nonnegative weight vector whose scaled power sums hit a target stream.

Residual convention: a steering hit at exponent n bounds the defect of
the unit-scale equation, |pattern(n) - target / R_n|.  Multiplying by
the schedule radius R_n recovers the raw orbit equation; the certified
quantity is the one the adjustment arithmetic actually controls.
"""

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import mpmath
import numpy as np
from mpmath import mpf

from .config import DEFAULT, RunConfig, working_precision
from .errors import (
    CalibrationFailure,
    LeftRegion,
    OutOfCalibratedRegion,
    PrecisionUnreachable,
    ScheduleOverflow,
    SearchExhausted,
    SingularConfiguration,
    Unreachable,
)
from .exact_arith import ComplexInterval, RealInterval, circle_point

# ---------------------------------------------------------------------------
# targets and radius schedules


@dataclass(frozen=True)
class TargetList:
    """Complex targets with per-target tolerances."""

    targets: tuple[complex, ...]
    tolerances: tuple[float, ...]

    def __post_init__(self):
        if len(self.targets) < 1:
            raise ValueError("need at least one target")
        if len(self.tolerances) != len(self.targets):
            raise ValueError("one tolerance per target")
        if any(t <= 0 for t in self.tolerances):
            raise ValueError("tolerances must be positive")

    @classmethod
    def uniform(cls, points: Sequence[complex], eps: float) -> "TargetList":
        pts = tuple(complex(p) for p in points)
        return cls(pts, (float(eps),) * len(pts))


def grid_targets(nx: int = 5, ny: int = 4, radius: float = 5.0) -> tuple[complex, ...]:
    """Deterministic nx*ny rectangular grid inside the given disk."""
    xs = [radius * 0.78 * (2 * i / (nx - 1) - 1) for i in range(nx)] if nx > 1 else [0.0]
    ys = [radius * 0.58 * (2 * j / (ny - 1) - 1) for j in range(ny)] if ny > 1 else [0.0]
    return tuple(complex(x, y) for y in ys for x in xs)


@dataclass(frozen=True)
class RadiusSchedule:
    """Closed-form radius family n -> R_n.

    base**n by default; `linear` multiplies by n; `minor` attaches a
    secondary family minor**n used by the folded steering pattern.
    Bases are exact rationals so replay scales are reproducible."""

    base: Fraction
    linear: bool = False
    minor: Optional[Fraction] = None

    def __post_init__(self):
        if self.base <= 1:
            raise ValueError("radius base must exceed 1")
        if self.minor is not None and not 1 < self.minor < self.base:
            raise ValueError("minor base must sit strictly between 1 and base")

    def _base_mpf(self) -> mpf:
        return mpf(self.base.numerator) / self.base.denominator

    def major_inv(self, n: int) -> mpf:
        """1 / R_n, safe for astronomically large n."""
        v = self._base_mpf() ** (-n)
        return v / n if self.linear else v

    def minor_ratio(self, n: int) -> mpf:
        """(minor/base)**n, the relative size of the secondary term."""
        if self.minor is None:
            raise ValueError("schedule has no minor family")
        r = mpf(self.minor.numerator) / self.minor.denominator
        return (r / self._base_mpf()) ** n

    def minor_reaches(self, n: int, size) -> bool:
        """True when minor**n strictly exceeds size."""
        if self.minor is None:
            raise ValueError("schedule has no minor family")
        r = mpf(self.minor.numerator) / self.minor.denominator
        return r**n > mpf(size)


@dataclass(frozen=True)
class SteerPattern:
    """Monomial layout of the steered sum.

    With `folded` None the sum is z^n + w^n over two free angles.  With
    `folded = (k, m)` both monomials ride the z angle as z^{kn} + z^{mn}
    while w carries the minor-radius term of the schedule."""

    folded: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.folded is not None:
            k, m = self.folded
            if k == m:
                raise ValueError("folded exponents must be distinct")

    @property
    def angle_lipschitz(self) -> int:
        if self.folded is None:
            return 2
        k, m = self.folded
        return abs(k) + abs(m) + 1


@dataclass(frozen=True)
class SteerHit:
    n: int
    target: complex
    residual: float
    tolerance: float


@dataclass(frozen=True)
class SteerStep:
    index: int
    n: int
    grid_denominator: int
    drift_z: Fraction
    drift_w: Fraction


@dataclass(frozen=True)
class SteeringResult:
    z_angle: Fraction
    w_angle: Fraction
    hits: tuple[SteerHit, ...]
    schedule_log: tuple[SteerStep, ...]
    pattern: SteerPattern
    schedule: RadiusSchedule

    def exponents(self) -> tuple[int, ...]:
        return tuple(h.n for h in self.hits)


# ---------------------------------------------------------------------------
# torus steering


def _nint(x: mpf) -> int:
    return int(mpmath.nint(x))


def _to_grid(x, den: int) -> Fraction:
    return Fraction(_nint(mpf(x) * den) % (2 * den), den)


def _root_adjust(theta: Fraction, fiber: Fraction, n: int) -> tuple[Fraction, Fraction]:
    """Nearest n-th root of e^{i pi fiber} to e^{i pi theta}.

    Returns the new angle and the drift |new - old|; the drift never
    exceeds 1/n, half the root spacing 2/n."""
    k = round((theta * n - fiber) / 2)
    new = Fraction(fiber + 2 * k, n)
    drift = abs(new - theta)
    assert drift <= Fraction(1, n)
    return new % 2, drift


def _scaled_target(schedule: RadiusSchedule, y: complex, n: int) -> mpmath.mpc:
    return mpmath.mpc(y) * schedule.major_inv(n)


def _pair_fiber_angles(tau: mpmath.mpc, den: int) -> tuple[Fraction, Fraction]:
    """Grid angles a, b with e^{i pi a} + e^{i pi b} close to tau."""
    size = abs(tau)
    if size == 0:
        return Fraction(0), Fraction(1)
    s = mpmath.atan2(tau.imag, tau.real) / mpmath.pi
    h = mpmath.acos(min(size / 2, mpf(1))) / mpmath.pi
    return _to_grid(s + h, den), _to_grid(s - h, den)


def _folded_fiber_angles(
    tau: mpmath.mpc,
    rho: mpf,
    powers: tuple[int, int],
    den: int,
    eps: float,
) -> tuple[Fraction, Fraction]:
    """Grid angles (a for z, b for w) solving psi(a) + rho e^{i pi b} ~ tau,
    where psi(f) = e^{i pi k f} + e^{i pi m f}."""
    k, m = powers
    span = Fraction(1, abs(k - m))

    def psi(f) -> mpmath.mpc:
        return mpmath.expjpi(k * mpf(f)) + mpmath.expjpi(m * mpf(f))

    if rho <= mpf(eps) / 16 or rho < mpf(2) ** -900:
        # the secondary term cannot matter; park z on the zero of psi
        return _to_grid(mpf(span.numerator) / span.denominator, den), Fraction(0)

    lo, hi = mpf(0), mpf(span.numerator) / span.denominator
    if not (abs(tau - psi(lo)) - rho > 0 and abs(tau - psi(hi)) - rho < 0):
        raise Unreachable("folded pattern cannot reach the target at this exponent")
    width_goal = mpf(eps) / (2048 * (abs(k) + abs(m)))
    while hi - lo > width_goal:
        mid = (lo + hi) / 2
        if abs(tau - psi(mid)) - rho > 0:
            lo = mid
        else:
            hi = mid
    alpha = _to_grid((lo + hi) / 2, den)
    defect = psi(mpf(alpha.numerator) / alpha.denominator) - tau
    if abs(defect) == 0:
        return alpha, Fraction(0)
    beta = _to_grid(mpmath.atan2(-defect.imag, -defect.real) / mpmath.pi, den)
    return alpha, beta


def _steer_defect(
    z_angle: Fraction,
    w_angle: Fraction,
    pattern: SteerPattern,
    schedule: RadiusSchedule,
    n: int,
    target: complex,
) -> ComplexInterval:
    """Enclosure of pattern(n) - target / R_n with exact angle reduction."""
    phi_z = (z_angle * n) % 2
    phi_w = (w_angle * n) % 2
    if pattern.folded is None:
        val = circle_point(phi_z) + circle_point(phi_w)
    else:
        k, m = pattern.folded
        val = circle_point((k * phi_z) % 2) + circle_point((m * phi_z) % 2)
        val = val + circle_point(phi_w).scaled(schedule.minor_ratio(n))
    return val - ComplexInterval.exact(_scaled_target(schedule, target, n))


def steering_residual(
    result: SteeringResult, hit: SteerHit, cfg: RunConfig = DEFAULT
) -> mpf:
    """Certified upper bound on the hit's defect, replayed from scratch."""
    for bits in cfg.ladder():
        with working_precision(max(bits, 192)):
            d = abs(
                _steer_defect(
                    result.z_angle,
                    result.w_angle,
                    result.pattern,
                    result.schedule,
                    hit.n,
                    hit.target,
                )
            )
            if d.rad <= mpf(hit.tolerance) / 16:
                return d.hi
    raise PrecisionUnreachable("steering replay radius will not shrink")


def _first_exponent(
    schedule: RadiusSchedule, pattern: SteerPattern, y: complex, floor: int, cap: int
) -> int:
    """Smallest exponent >= floor where the fiber equation is solvable."""
    n = max(floor, 1)
    size = abs(y)
    while n <= cap:
        with working_precision(128):
            if pattern.folded is None:
                ok = mpf(size) * schedule.major_inv(n) <= 2
            else:
                ok = schedule.minor_reaches(n, 2 * size + 1) and schedule.minor_ratio(
                    n
                ) < mpf("0.25")
        if ok:
            return n
        n += max(1, n // 4)
    return n


def torus_steer(
    schedule: RadiusSchedule,
    pattern: SteerPattern,
    targets: TargetList,
    cfg: RunConfig = DEFAULT,
    start: Optional[tuple[Fraction, Fraction]] = None,
    min_exponent: int = 1,
) -> SteeringResult:
    """Greedy steering of the free angles through every target in order.

    Each step solves the fiber equation at its own exponent on a fixed
    rational grid, then replaces each free angle by its nearest n-th
    root of the solved fiber point, moving it by at most pi/n.  The
    geometric exponent schedule keeps the total later movement seen by
    an earlier hit below half its tolerance.  All hits are certified at
    the end by exact replay with the final angles.

    `start` seeds the two angles; with a large `min_exponent` the total
    movement away from the seed stays below pi * 2 / min_exponent, which
    is what perturbation arguments need."""
    if pattern.folded is not None and schedule.minor is None:
        raise ValueError("folded pattern needs a schedule with a minor family")
    if min_exponent < 1:
        raise ValueError("min_exponent must be at least 1")
    eps_min = min(targets.tolerances)
    growth = max(2, math.ceil(cfg.steer_growth * pattern.angle_lipschitz / (2 * eps_min)))
    if start is None:
        theta_z, theta_w = Fraction(0), Fraction(1)
    else:
        theta_z, theta_w = Fraction(start[0]) % 2, Fraction(start[1]) % 2
    steps: list[SteerStep] = []
    ns: list[int] = []
    n_prev = 0
    for j, (y, eps) in enumerate(zip(targets.targets, targets.tolerances)):
        floor = min_exponent if n_prev == 0 else growth * n_prev
        if floor > cfg.exponent_cap:
            raise ScheduleOverflow(
                f"schedule passes the exponent cap {cfg.exponent_cap} at target {j}"
            )
        n = _first_exponent(schedule, pattern, y, floor, cfg.exponent_cap)
        if n > cfg.exponent_cap:
            raise Unreachable(f"target {j} outside pattern range below the cap")
        den = 1 << max(
            16, math.ceil(math.log2(64 * math.pi * pattern.angle_lipschitz / eps))
        )
        with working_precision(320):
            tau = _scaled_target(schedule, y, n)
            if pattern.folded is None:
                alpha, beta = _pair_fiber_angles(tau, den)
            else:
                alpha, beta = _folded_fiber_angles(
                    tau, schedule.minor_ratio(n), pattern.folded, den, eps
                )
        theta_z, drift_z = _root_adjust(theta_z, alpha, n)
        theta_w, drift_w = _root_adjust(theta_w, beta, n)
        steps.append(SteerStep(j, n, den, drift_z, drift_w))
        ns.append(n)
        n_prev = n

    bare = SteeringResult(theta_z, theta_w, (), tuple(steps), pattern, schedule)
    hits = []
    for j, (y, eps) in enumerate(zip(targets.targets, targets.tolerances)):
        probe = SteerHit(ns[j], y, 0.0, eps)
        bound = steering_residual(bare, probe, cfg)
        if not bound <= mpf(eps):
            raise Unreachable(
                f"replayed residual {mpmath.nstr(bound, 8)} exceeds {eps} at target {j}"
            )
        hits.append(SteerHit(ns[j], y, float(bound), eps))
    return SteeringResult(theta_z, theta_w, tuple(hits), tuple(steps), pattern, schedule)


def schedule_degradations(result: SteeringResult) -> tuple[Fraction, ...]:
    """Per-hit degradation bound sum_{j>i} n_i / n_j (in units of pi)."""
    ns = [s.n for s in result.schedule_log]
    return tuple(
        sum((Fraction(ns[i], ns[j]) for j in range(i + 1, len(ns))), Fraction(0))
        for i in range(len(ns))
    )


# ---------------------------------------------------------------------------
# pentagon configurations


def _unit(angle) -> complex:
    """e^{i pi angle} as a double."""
    a = float(angle)
    return complex(math.cos(math.pi * a), math.sin(math.pi * a))


def pentagon_matrix_interval() -> list[list[RealInterval]]:
    """The 4x4 real matrix of the two pentagon constraints, as intervals.

    Row pairs are (Re, Im) of the coefficient maps of sum_j a_j (xi^j - 1)
    and sum_j a_j (xi^{2j} - 1), the translation-reduced forms of the two
    convex-combination constraints at the regular pentagon."""
    rows = []
    for mult in (1, 2):
        re_row, im_row = [], []
        for j in range(1, 5):
            c = circle_point(Fraction(2 * mult * j, 5))
            re_row.append(RealInterval(c.re, c.rad) - 1)
            im_row.append(RealInterval(c.im, c.rad))
        rows.append(re_row)
        rows.append(im_row)
    return rows


def _interval_det(m: list[list[RealInterval]]) -> RealInterval:
    if len(m) == 1:
        return m[0][0]
    total = RealInterval.exact(0)
    for col in range(len(m)):
        minor = [row[:col] + row[col + 1 :] for row in m[1:]]
        term = m[0][col] * _interval_det(minor)
        total = total + (term if col % 2 == 0 else -term)
    return total


def pentagon_det_interval(cfg: RunConfig = DEFAULT) -> RealInterval:
    """Certified enclosure of the pentagon matrix determinant."""
    with working_precision(max(cfg.precision_bits, 192)):
        det = _interval_det(pentagon_matrix_interval())
        if det.sign() is None:
            raise PrecisionUnreachable("determinant enclosure straddles zero")
        return det


@dataclass(frozen=True)
class PentagonCalibration:
    """Perturbation radius and disk radius within which the solver is safe."""

    epsilon: float
    d: float
    det: RealInterval
    samples: int
    seed: int


def _pentagon_system(u: Sequence[complex]) -> np.ndarray:
    s = np.empty((4, 4))
    for j in range(4):
        s[0, j] = (u[j] - u[4]).real
        s[1, j] = (u[j] - u[4]).imag
        s[2, j] = (u[5 + j] - u[9]).real
        s[3, j] = (u[5 + j] - u[9]).imag
    return s


def _sample_configuration(rng: random.Random, eps: float) -> list[complex]:
    """Random member of the eps-perturbed pentagon family."""
    theta_max = (2 / math.pi) * math.asin(min(eps, 1.999) / 2) * 0.999
    alpha = _unit(rng.uniform(0, 2))
    beta = _unit(rng.uniform(0, 2))
    u = []
    for j in range(1, 5):
        u.append(alpha * _unit(Fraction(2 * j, 5)) * _unit(rng.uniform(-theta_max, theta_max)))
    u.append(alpha)
    for j in range(1, 5):
        u.append(
            beta
            * _unit(Fraction(2 * ((2 * j) % 5), 5))
            * _unit(rng.uniform(-theta_max, theta_max))
        )
    u.append(beta)
    return u


def _worst_margin(rng: random.Random, eps: float, count: int) -> float:
    """Smallest safe disk radius over sampled perturbed configurations.

    Margin = slack of the zero-target solve divided by the sensitivity
    of the solution to (z, w); negative when a sample already fails."""
    worst = math.inf
    for _ in range(count):
        u = _sample_configuration(rng, eps)
        s = _pentagon_system(u)
        if np.linalg.cond(s) > 1e8:
            return -1.0
        inv = np.linalg.inv(s)
        rhs = np.array([-u[4].real, -u[4].imag, -u[9].real, -u[9].imag])
        a0 = inv @ rhs
        slack = min(float(a0.min()), float(1 - a0.sum()))
        if slack <= 0:
            return -1.0
        row_norms = np.linalg.norm(inv, axis=1)
        sens = max(float(row_norms.max()), float(np.linalg.norm(inv.sum(axis=0))))
        worst = min(worst, slack / (sens * math.sqrt(2.0)))
    return worst


def pentagon_calibrate(
    samples: int = 2000, cfg: RunConfig = DEFAULT, seed: Optional[int] = None
) -> PentagonCalibration:
    """Find a perturbation radius and disk radius for the solver.

    Bisects the largest perturbation size whose sampled worst-case
    margin stays positive, then halves both numbers.  Sampling is
    seeded, so the output is deterministic per (samples, seed)."""
    if samples < 1000:
        raise ValueError("need at least 1000 calibration samples")
    det = pentagon_det_interval(cfg)
    seed = cfg.seed if seed is None else seed
    per_round = max(200, samples // 10)
    lo, hi = 0.0, 0.7
    if _worst_margin(random.Random(seed), hi, per_round) > 0:
        lo = hi
    else:
        for _ in range(24):
            mid = (lo + hi) / 2
            if _worst_margin(random.Random(seed), mid, per_round) > 0:
                lo = mid
            else:
                hi = mid
    if lo == 0.0:
        raise CalibrationFailure("no admissible perturbation radius found")
    eps_final = lo / 2
    d_final = _worst_margin(random.Random(seed), eps_final, samples) / 2
    if d_final <= 0:
        raise CalibrationFailure("margin collapsed at the shrunk radius")
    return PentagonCalibration(eps_final, d_final, det, samples, seed)


def _pentagon_membership(u: Sequence[complex], eps: float) -> bool:
    if any(abs(abs(complex(x)) - 1) > 1e-9 for x in u):
        return False
    for j in range(1, 5):
        if abs(complex(u[j - 1]) / complex(u[4]) - _unit(Fraction(2 * j, 5))) >= eps:
            return False
        if (
            abs(complex(u[4 + j]) / complex(u[9]) - _unit(Fraction(2 * ((2 * j) % 5), 5)))
            >= eps
        ):
            return False
    return True


def pentagon_solve(
    u: Sequence[complex],
    z: complex,
    w: complex,
    cal: PentagonCalibration,
    cfg: RunConfig = DEFAULT,
) -> tuple[mpf, mpf, mpf, mpf, mpf]:
    """Positive unit-sum weights a with sum a_j u_j = z, sum a_j u_{5+j} = w.

    Only valid inside the calibrated region; the returned weights are
    verified by substitution to 1e-10."""
    if len(u) != 10:
        raise ValueError("need ten unimodular points")
    if not _pentagon_membership(u, cal.epsilon):
        raise OutOfCalibratedRegion("configuration outside the calibrated family")
    if not (abs(complex(z)) < cal.d and abs(complex(w)) < cal.d):
        raise OutOfCalibratedRegion("targets outside the calibrated disk")
    uc = [complex(x) for x in u]
    s = _pentagon_system(uc)
    zc, wc = complex(z), complex(w)
    rhs = np.array(
        [
            (zc - uc[4]).real,
            (zc - uc[4]).imag,
            (wc - uc[9]).real,
            (wc - uc[9]).imag,
        ]
    )
    try:
        raw = np.linalg.solve(s, rhs)
    except np.linalg.LinAlgError:
        raise OutOfCalibratedRegion("constraint system is singular here") from None
    with working_precision(max(cfg.precision_bits, 128)):
        a = [mpf(x) for x in raw]
        a.append(1 - sum(a))
        if min(a) <= 0:
            raise OutOfCalibratedRegion("solve left the positive simplex")
        um = [mpmath.mpc(x) for x in uc]
        res_z = abs(sum(aj * um[j] for j, aj in enumerate(a)) - mpmath.mpc(zc))
        res_w = abs(sum(aj * um[5 + j] for j, aj in enumerate(a)) - mpmath.mpc(wc))
        if not (res_z <= mpf("1e-10") and res_w <= mpf("1e-10")):
            raise PrecisionUnreachable("substitution residual above 1e-10")
        return tuple(a)


# ---------------------------------------------------------------------------
# power alignment on a countable circle subset

AngleValue = Union[Fraction, float]


@dataclass(frozen=True)
class AngleSet:
    """Countable set of unimodular points e^{i pi angle_fn(j)}.

    `clusters_at_one` declares that the angles sink to 0 with ever finer
    scales; the alignment search then runs an exact construction over
    rational angles.  Without the declaration the search falls back to
    heuristic clustering among enumerated elements and flags its output,
    and angles may be floats."""

    angle_fn: Callable[[int], AngleValue]
    label: str = "custom"
    clusters_at_one: bool = False

    def angle(self, index: int) -> AngleValue:
        a = self.angle_fn(index)
        if isinstance(a, Fraction):
            return a % 2
        return float(a) % 2.0


def dyadic_angles() -> AngleSet:
    return AngleSet(lambda j: Fraction(1, 2 ** int(j)), "dyadic", True)


@dataclass(frozen=True)
class Progression:
    """Arithmetic-progression index filter; syndetic by construction."""

    modulus: int = 1
    residues: tuple[int, ...] = (0,)

    def __post_init__(self):
        if self.modulus < 1:
            raise ValueError("modulus must be positive")
        if not self.residues:
            raise ValueError("need at least one residue")
        if any(not 0 <= r < self.modulus for r in self.residues):
            raise ValueError("residues must be reduced")

    def contains(self, n: int) -> bool:
        return n % self.modulus in self.residues

    def next_at_least(self, x: int) -> int:
        return min(x + ((r - x) % self.modulus) for r in self.residues)


@dataclass(frozen=True)
class PowerAlignment:
    """Exponents n < m, a base element, and member elements such that
    base^-n member_j^n sits within eps of the j-th target point and
    base^-m member_j^m within eps of its square."""

    n: int
    m: int
    base_index: int
    member_indices: tuple[int, ...]
    first_residuals: tuple[float, ...]
    second_residuals: tuple[float, ...]
    heuristic: bool


def _chord(x: Fraction) -> mpf:
    """|e^{i pi x} - 1|."""
    x = x % 2
    return 2 * abs(mpmath.sinpi(mpf(x.numerator) / x.denominator / 2))


def _signed_window(x: Fraction) -> Fraction:
    """Representative of x mod 2 in (-1, 1]."""
    x = x % 2
    return x if x <= 1 else x - 2


def _element_period(angle: Fraction) -> int:
    """Smallest t > 0 with t * angle an even integer."""
    return 2 * angle.denominator // math.gcd(angle.numerator, 2 * angle.denominator)


def _select_members(
    angle_set: AngleSet, modulus0: int, count: int, slack: Fraction
) -> list[tuple[int, Fraction]]:
    """Pick elements whose phase step under the growing modulus is a
    small nonzero rotation; each pick absorbs its period into the
    modulus, so later adjustments leave earlier picks exactly fixed."""
    chosen: list[tuple[int, Fraction]] = []
    modulus = modulus0
    idx = 0
    while len(chosen) < count:
        cap = 4096 + 16 * (modulus.bit_length() + slack.denominator.bit_length())
        if idx > cap:
            raise SearchExhausted("set does not refine against the growing modulus")
        a = angle_set.angle(idx)
        if not isinstance(a, Fraction):
            raise TypeError("exact alignment needs rational angles")
        g = _signed_window(a * modulus)
        if g != 0 and abs(g) <= slack:
            chosen.append((idx, a))
            modulus = math.lcm(modulus, _element_period(a))
        idx += 1
    return chosen


def _greedy_exponent(
    start: int,
    modulus0: int,
    members: Sequence[tuple[int, Fraction]],
    taus: Sequence[Fraction],
) -> int:
    """Walk the modulus chain, steering each member's phase in turn.

    Level j moves in multiples of the accumulated modulus, which already
    contains the periods of members 1..j-1: their phases do not move at
    all, while member j lands within half its own phase step of tau_j."""
    n = start
    modulus = modulus0
    for (_, b), tau in zip(members, taus):
        g = _signed_window(b * modulus)
        diff = (tau - n * b) % 2
        t = round(diff / g) if g > 0 else round((diff - 2) / g)
        n += max(t, 0) * modulus
        modulus = math.lcm(modulus, _element_period(b))
    return n


def _exact_align(
    angle_set: AngleSet,
    index_filter: Progression,
    taus: list[Fraction],
    eps: float,
    n0: int,
    cfg: RunConfig,
) -> PowerAlignment:
    k = len(taus)
    slack = Fraction(eps) / 8
    if len(index_filter.residues) != 1:
        raise SearchExhausted("exact alignment needs a single-residue progression")
    members = _select_members(angle_set, index_filter.modulus, k, slack)
    start = index_filter.next_at_least(max(n0, 0) + 1)
    n = _greedy_exponent(start, index_filter.modulus, members, taus)
    m = _greedy_exponent(
        n + index_filter.modulus,
        index_filter.modulus,
        members,
        [(2 * t) % 2 for t in taus],
    )
    if max(n, m) > cfg.exponent_cap:
        raise SearchExhausted("aligned exponent passed the cap")
    base_bound = slack / (2 * m)
    taken = {i for i, _ in members}
    idx = 0
    while True:
        cap = 4096 + 16 * (m.bit_length() + slack.denominator.bit_length())
        if idx > cap:
            raise SearchExhausted("no element deep enough to serve as the base")
        a = angle_set.angle(idx)
        c = _signed_window(a)
        if idx not in taken and c != 0 and abs(c) <= base_bound:
            base_idx, base_angle = idx, a
            break
        idx += 1
    first, second = [], []
    with working_precision(max(cfg.precision_bits, 200)):
        for (_, b), tau in zip(members, taus):
            r1 = _chord((n * (b - base_angle) - tau) % 2)
            r2 = _chord((m * (b - base_angle) - 2 * tau) % 2)
            first.append(float(r1))
            second.append(float(r2))
            if not (r1 < eps and r2 < eps):
                raise SearchExhausted("exact alignment failed its own certificate")
    return PowerAlignment(
        n,
        m,
        base_idx,
        tuple(i for i, _ in members),
        tuple(first),
        tuple(second),
        heuristic=False,
    )


def _scan_exponent(
    diffs: np.ndarray,
    taus: np.ndarray,
    index_filter: Progression,
    start: int,
    eps: float,
    cap: int,
) -> Optional[tuple[int, np.ndarray]]:
    """First filter point n >= start where every chord
    |e^{i pi (n diff_j - tau_j)} - 1| falls below eps."""
    block = 1 << 16
    lo = start
    scanned = 0
    while scanned < cap:
        raw = np.arange(lo, lo + block)
        ns = raw[np.isin(raw % index_filter.modulus, index_filter.residues)]
        if ns.size:
            phases = np.outer(ns.astype(np.float64), diffs) - taus
            chords = 2 * np.abs(np.sin(np.pi * phases / 2))
            good = np.nonzero((chords < eps).all(axis=1))[0]
            if good.size:
                i = int(good[0])
                return int(ns[i]), chords[i]
        scanned += block
        lo += block
    return None


def _heuristic_align(
    angle_set: AngleSet,
    index_filter: Progression,
    taus: list[Fraction],
    eps: float,
    n0: int,
    cfg: RunConfig,
) -> PowerAlignment:
    """Clustering fallback for sets without a declared structure.

    Detects the densest angle cluster among enumerated elements, takes
    its nearest neighbors as members with the closest one as base, and
    brute-scans filter exponents.  Residuals are plain floats and the
    result is flagged."""
    k = len(taus)
    count = 2048
    arr = np.array([float(angle_set.angle(i)) % 2.0 for i in range(count)])
    d = np.abs(arr[None, :] - arr[:, None])
    d = np.minimum(d, 2 - d)
    width = max(min(eps / (4 * math.pi), 0.01), 1e-6)
    counts = (d < width).sum(axis=1)
    center = int(counts.argmax())
    near = [int(i) for i in np.nonzero(d[center] < width)[0] if i != center]
    near.sort(key=lambda i: d[center, i])
    if len(near) < k + 1:
        raise SearchExhausted("no angle cluster detected among enumerated elements")
    base = near[0]
    members = near[1 : k + 1]
    diffs = arr[members] - arr[base]
    tau_arr = np.array([float(t) % 2.0 for t in taus])
    first = _scan_exponent(diffs, tau_arr, index_filter, max(n0, 0) + 1, eps, cfg.scan_cap)
    if first is None:
        raise SearchExhausted("no aligned exponent below the scan cap")
    n, res1 = first
    second = _scan_exponent(diffs, (2 * tau_arr) % 2, index_filter, n + 1, eps, cfg.scan_cap)
    if second is None:
        raise SearchExhausted("no squared-pattern exponent below the scan cap")
    m, res2 = second
    return PowerAlignment(
        n,
        m,
        base,
        tuple(members),
        tuple(float(x) for x in res1),
        tuple(float(x) for x in res2),
        heuristic=True,
    )


def align_powers(
    angle_set: AngleSet,
    index_filter: Progression,
    target_angles: Sequence[AngleValue],
    eps: float,
    n0: int = 0,
    cfg: RunConfig = DEFAULT,
) -> PowerAlignment:
    """Exponents m > n > n0 in the filter, plus base and member elements,
    with base^-n member_j^n within eps of e^{i pi t_j} and
    base^-m member_j^m within eps of the squared point.

    Sets declared to cluster at 1 get the exact route: member phases are
    steered through a modulus chain whose later steps provably do not
    move earlier phases, so the residuals are certified rational
    statements.  Other sets get the flagged heuristic route."""
    if not target_angles:
        raise ValueError("need at least one target")
    if not 0 < eps < 2:
        raise ValueError("eps must lie in (0, 2)")
    if angle_set.clusters_at_one:
        taus = [Fraction(t) % 2 for t in target_angles]
        return _exact_align(angle_set, index_filter, taus, eps, n0, cfg)
    taus = [Fraction(float(t)).limit_denominator(10**12) % 2 for t in target_angles]
    return _heuristic_align(angle_set, index_filter, taus, eps, n0, cfg)


# ---------------------------------------------------------------------------
# sparse-weight greedy


def _mpf_to_fraction(x: mpf) -> Fraction:
    sign, man, exp, _ = mpmath.mpf(x)._mpf_
    man = -man if sign else man
    if exp >= 0:
        return Fraction(int(man) << int(exp))
    return Fraction(int(man), 1 << int(-exp))


def _omega_sqrt(t: float) -> float:
    return math.sqrt(t)


@dataclass(frozen=True)
class WeightCertificate:
    """One extension's replayable record.

    At `exponent` the scaled weight sum of `weights` (the full snapshot
    as of this extension) hits `scaled_target` (target divided by the
    schedule radius, stored as a double) within `residual`; at
    `zero_exponent` the same sum returns to zero within `zero_defect`.
    Both bounds are certified enclosure tops.  Later extensions move
    these sums by at most the sum of their deltas, so certificates are
    statements about their own snapshot, not about the final state."""

    exponent: int
    target: complex
    scaled_target: complex
    residual: float
    zero_exponent: int
    zero_defect: float
    omega_cost: float
    delta: float
    weights: tuple[tuple[int, Fraction], ...] = ()


@dataclass(frozen=True)
class SparseSteering:
    """Nonnegative sparse weights on an angle set, plus hit certificates.

    Extensions return new instances; `zero_exponent` is the latest
    exponent where the whole sum was pinned near zero, and every
    weighted element repeats exactly on the progression through it."""

    angle_set: AngleSet
    weights: tuple[tuple[int, Fraction], ...] = ()
    certificates: tuple[WeightCertificate, ...] = ()
    zero_exponent: int = 0
    omega: Callable[[float], float] = _omega_sqrt

    def support(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.weights)

    def omega_mass(self) -> float:
        return sum(self.omega(float(w)) for _, w in self.weights)

    def period(self) -> int:
        p = 1
        for idx, _ in self.weights:
            p = math.lcm(p, _element_period(self.angle_set.angle(idx)))
        return p

    def power_sum(self, n: int) -> ComplexInterval:
        total = ComplexInterval.exact(0)
        for idx, w in self.weights:
            a = self.angle_set.angle(idx)
            total = total + circle_point((a * n) % 2).scaled(
                mpf(w.numerator) / w.denominator
            )
        return total


def extend_sparse_weights(
    state: SparseSteering,
    y: complex,
    delta: float,
    schedule: RadiusSchedule,
    cal: PentagonCalibration,
    q_min: int = 0,
    cfg: RunConfig = DEFAULT,
) -> SparseSteering:
    """Add at most five support points so the scaled power sum hits y.

    The new exponent n is aligned on the progression where every current
    support point repeats exactly, so the existing sum at n equals its
    certified near-zero value; five fresh deeper points in a
    perturbed-pentagon position then absorb the target, and the same
    solve pins the full sum back to zero at a later exponent m."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    period = state.period()
    filt = Progression(period, (state.zero_exponent % period,))
    floor = max(q_min, state.zero_exponent, 1)
    while True:
        with working_precision(128):
            small = abs(mpmath.mpc(y)) * schedule.major_inv(floor) <= mpf(delta) * cal.d / 4
        if small:
            break
        if floor > cfg.exponent_cap:
            raise SearchExhausted("target needs an exponent beyond the cap")
        floor *= 2

    if complex(y) == 0:
        n = filt.next_at_least(floor + 1)
        m = n + period
        with working_precision(max(cfg.precision_bits, 200)):
            residual = abs(state.power_sum(n)).hi
            zero_defect = abs(state.power_sum(m)).hi
        cert = WeightCertificate(
            n,
            0j,
            0j,
            float(residual),
            m,
            float(zero_defect),
            0.0,
            float(delta),
            state.weights,
        )
        return SparseSteering(
            state.angle_set,
            state.weights,
            state.certificates + (cert,),
            m,
            state.omega,
        )

    taus = [Fraction(2 * j, 5) for j in range(1, 6)]
    align = align_powers(state.angle_set, filt, taus, cal.epsilon / 3, n0=floor, cfg=cfg)
    n, m = align.n, align.m
    with working_precision(max(cfg.precision_bits, 200)):
        old_n = state.power_sum(n)
        old_m = state.power_sum(m)
        y_scaled = mpmath.mpc(y) * schedule.major_inv(n)
        dm = mpf(str(delta))
        z_t = (y_scaled - mpmath.mpc(old_n.re, old_n.im)) / dm
        w_t = -mpmath.mpc(old_m.re, old_m.im) / dm
        if not (abs(z_t) < cal.d and abs(w_t) < cal.d):
            raise SearchExhausted(
                "current sums too large for this delta; extend with a larger one"
            )
        u = []
        for power in (n, m):
            for idx in align.member_indices:
                r = (state.angle_set.angle(idx) * power) % 2
                t = mpf(r.numerator) / r.denominator
                u.append(complex(mpmath.cospi(t), mpmath.sinpi(t)))
        beta = pentagon_solve(u, complex(z_t), complex(w_t), cal, cfg)
    additions = [
        (idx, _mpf_to_fraction(dm * b)) for idx, b in zip(align.member_indices, beta)
    ]
    if any(w <= 0 for _, w in additions):
        raise SearchExhausted("pentagon weights left the positive cone")
    merged = dict(state.weights)
    for idx, w in additions:
        merged[idx] = merged.get(idx, Fraction(0)) + w
    extended = SparseSteering(
        state.angle_set,
        tuple(sorted(merged.items())),
        state.certificates,
        m,
        state.omega,
    )
    with working_precision(max(cfg.precision_bits, 200)):
        residual = abs(extended.power_sum(n) - ComplexInterval.exact(y_scaled)).hi
        zero_defect = abs(extended.power_sum(m)).hi
    cert = WeightCertificate(
        n,
        complex(y),
        complex(y_scaled),
        float(residual),
        m,
        float(zero_defect),
        sum(state.omega(float(w)) for _, w in additions),
        float(delta),
        extended.weights,
    )
    return SparseSteering(
        extended.angle_set,
        extended.weights,
        state.certificates + (cert,),
        m,
        state.omega,
    )


def build_sparse_weights(
    angle_set: AngleSet,
    targets: Sequence[complex],
    schedule: RadiusSchedule,
    cal: PentagonCalibration,
    deltas: Optional[Sequence[float]] = None,
    cfg: RunConfig = DEFAULT,
) -> SparseSteering:
    """Run extensions for a stream of targets, halving delta each step."""
    state = SparseSteering(angle_set)
    if deltas is None:
        deltas = [2.0 ** -(j + 1) for j in range(len(targets))]
    for y, d in zip(targets, deltas):
        state = extend_sparse_weights(state, y, d, schedule, cal, cfg=cfg)
    return state


def replay_certificate(
    angle_set: AngleSet, cert: WeightCertificate, cfg: RunConfig = DEFAULT
) -> tuple[mpf, mpf]:
    """Re-derive the hit and zero defects of a certificate from scratch,
    using the exact weight snapshot the certificate carries."""
    snap = SparseSteering(angle_set, cert.weights)
    with working_precision(max(cfg.precision_bits, 200)):
        hit = abs(
            snap.power_sum(cert.exponent) - ComplexInterval.exact(cert.scaled_target)
        ).hi
        zero = abs(snap.power_sum(cert.zero_exponent)).hi
    return hit, zero


# ---------------------------------------------------------------------------
# three-point local solver


def three_point_solve(
    xi: Sequence[complex],
    y_scaled: complex,
    x0: tuple[float, float] = (1 / 3, 1 / 3),
    tol: float = 1e-10,
    cfg: RunConfig = DEFAULT,
) -> tuple[mpf, mpf]:
    """Solve a xi_1 + b xi_2 + (1-a-b) xi_3 = y for (a, b) in the open
    region a > 0, b > 0, a + b < 1.

    The system is affine in (a, b), so the local root-finding collapses
    to one 2x2 real solve; pairwise distinct unimodular coordinates keep
    the differential at full rank."""
    if len(xi) != 3:
        raise ValueError("need exactly three unimodular coordinates")
    a0, b0 = x0
    if not (a0 > 0 and b0 > 0 and a0 + b0 < 1):
        raise LeftRegion("starting point outside the open region")
    with working_precision(max(cfg.precision_bits, 128)):
        z = [mpmath.mpc(c) for c in xi]
        for i in range(3):
            for j in range(i + 1, 3):
                if abs(z[i] - z[j]) <= mpf("1e-9"):
                    raise SingularConfiguration("coordinates must be pairwise distinct")
        c1, c2 = z[0] - z[2], z[1] - z[2]
        det = c1.real * c2.imag - c1.imag * c2.real
        if abs(det) <= mpf("1e-12") * (abs(c1) + abs(c2)) ** 2:
            raise SingularConfiguration("differential drops rank at this configuration")
        rhs = mpmath.mpc(y_scaled) - z[2]
        a = (rhs.real * c2.imag - rhs.imag * c2.real) / det
        b = (c1.real * rhs.imag - c1.imag * rhs.real) / det
        if not (a > 0 and b > 0 and a + b < 1):
            raise LeftRegion("solution leaves the region")
        res = abs(a * z[0] + b * z[1] + (1 - a - b) * z[2] - mpmath.mpc(y_scaled))
        if not res <= mpf(tol):
            raise PrecisionUnreachable("substitution residual above tolerance")
        return a, b
