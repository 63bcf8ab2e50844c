"""Witness-layer tests.

Oracles come first and never call the code they check: plain mpmath
arithmetic replays steering defects, pentagon substitution, alignment
chords, and weight-sum certificates from the exact rational data the
library returns."""

import math
import random
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from mpmath import mpf

from numcyc.config import DEFAULT
from numcyc.errors import (
    LeftRegion,
    OutOfCalibratedRegion,
    ScheduleOverflow,
    SearchExhausted,
    SingularConfiguration,
    Unreachable,
)
from numcyc.witness import (
    AngleSet,
    Progression,
    RadiusSchedule,
    SparseSteering,
    SteerPattern,
    TargetList,
    align_powers,
    build_sparse_weights,
    dyadic_angles,
    extend_sparse_weights,
    grid_targets,
    pentagon_calibrate,
    pentagon_det_interval,
    pentagon_solve,
    replay_certificate,
    schedule_degradations,
    steering_residual,
    three_point_solve,
    torus_steer,
)

# ---------------------------------------------------------------------------
# oracles


def _frac_mpf(fr: Fraction) -> mpf:
    return mpf(fr.numerator) / fr.denominator


def oracle_pair_defect(z_angle, w_angle, n, target, base, linear=False) -> mpf:
    """|e^{i pi n z} + e^{i pi n w} - y / R_n| by direct evaluation."""
    with mpmath.workprec(300):
        zp = mpmath.expjpi(_frac_mpf((z_angle * n) % 2))
        wp = mpmath.expjpi(_frac_mpf((w_angle * n) % 2))
        scale = (mpf(base.numerator) / base.denominator) ** (-n)
        if linear:
            scale /= n
        return abs(zp + wp - mpmath.mpc(target) * scale)


def oracle_folded_defect(z_angle, w_angle, n, target, base, minor, powers) -> mpf:
    with mpmath.workprec(300):
        k, m = powers
        zk = mpmath.expjpi(_frac_mpf((k * z_angle * n) % 2))
        zm = mpmath.expjpi(_frac_mpf((m * z_angle * n) % 2))
        wp = mpmath.expjpi(_frac_mpf((w_angle * n) % 2))
        big = mpf(base.numerator) / base.denominator
        small = mpf(minor.numerator) / minor.denominator
        return abs(zk + zm + (small / big) ** n * wp - mpmath.mpc(target) * big ** (-n))


def oracle_pentagon_det() -> mpf:
    """LU determinant of the raw 4x4 cos/sin matrix."""
    with mpmath.workprec(300):
        m = mpmath.matrix(4, 4)
        for row, mult in ((0, 1), (2, 2)):
            for j in range(1, 5):
                m[row, j - 1] = mpmath.cospi(mpf(2 * mult * j) / 5) - 1
                m[row + 1, j - 1] = mpmath.sinpi(mpf(2 * mult * j) / 5)
        return mpmath.det(m)


def oracle_substitution(u, a, z, w) -> mpf:
    """max of both constraint residuals for pentagon weights a."""
    with mpmath.workprec(300):
        am = [mpf(x) for x in a]
        um = [mpmath.mpc(x) for x in u]
        r1 = abs(sum(am[j] * um[j] for j in range(5)) - mpmath.mpc(z))
        r2 = abs(sum(am[j] * um[5 + j] for j in range(5)) - mpmath.mpc(w))
        return max(r1, r2)


def oracle_chord(fr: Fraction) -> mpf:
    with mpmath.workprec(300):
        return 2 * abs(mpmath.sinpi(_frac_mpf(fr % 2) / 2))


def dyadic_angle(idx: int) -> Fraction:
    return Fraction(1, 2**idx)


def oracle_weight_sum(pairs, n) -> mpmath.mpc:
    """sum of w * e^{i pi a n} over (angle, weight) pairs."""
    with mpmath.workprec(300):
        total = mpmath.mpc(0)
        for a, w in pairs:
            total += _frac_mpf(w) * mpmath.expjpi(_frac_mpf((a * n) % 2))
        return total


# frozen regression values
DET_30 = "13.9754248593736856025573354296"
FROZEN_STEER_Z = Fraction(27497, 65536)
FROZEN_STEER_W = Fraction(103575, 65536)
FROZEN_ALIGN = (64, 128, 15, (7,))


@pytest.fixture(scope="module")
def cal():
    return pentagon_calibrate(2000)


# ---------------------------------------------------------------------------
# torus steering


def test_steer_antipodal_trivial():
    res = torus_steer(
        RadiusSchedule(Fraction(2)), SteerPattern(), TargetList.uniform([0], 1e-9)
    )
    assert res.hits[0].n == 1
    assert res.z_angle == 0 and res.w_angle == 1
    assert res.hits[0].residual < 1e-30


def test_steer_single_target_low_exponent():
    res = torus_steer(
        RadiusSchedule(Fraction(2)), SteerPattern(), TargetList.uniform([3.5], 1e-3)
    )
    assert res.hits[0].n == 1
    d = oracle_pair_defect(res.z_angle, res.w_angle, 1, 3.5, Fraction(2))
    assert d <= 1e-3


def test_steer_single_frozen():
    res = torus_steer(
        RadiusSchedule(Fraction(2)),
        SteerPattern(),
        TargetList.uniform([1.0], Fraction(1, 32)),
    )
    assert (res.z_angle, res.w_angle) == (FROZEN_STEER_Z, FROZEN_STEER_W)
    d = oracle_pair_defect(FROZEN_STEER_Z, FROZEN_STEER_W, 1, 1.0, Fraction(2))
    assert abs(d - res.hits[0].residual) < 1e-12
    assert d < 1 / 32


def test_steer_grid_twenty_targets():
    tl = TargetList.uniform(grid_targets(), 1e-6)
    res = torus_steer(RadiusSchedule(Fraction(2)), SteerPattern(), tl)
    assert len(res.hits) == 20
    ns = res.exponents()
    assert all(a < b for a, b in zip(ns, ns[1:]))
    for hit in res.hits:
        assert hit.residual <= 1e-6
        d = oracle_pair_defect(res.z_angle, res.w_angle, hit.n, hit.target, Fraction(2))
        assert d <= 1e-6


def test_steer_schedule_safety():
    tl = TargetList.uniform(grid_targets(nx=3, ny=2), 1e-4)
    res = torus_steer(RadiusSchedule(Fraction(2)), SteerPattern(), tl)
    degr = schedule_degradations(res)
    for hit, d in zip(res.hits, degr):
        assert float(d) * math.pi <= hit.tolerance / 2
    for step in res.schedule_log:
        assert step.drift_z <= Fraction(1, step.n)
        assert step.drift_w <= Fraction(1, step.n)


def test_steer_linear_radius():
    sched = RadiusSchedule(Fraction(2), linear=True)
    res = torus_steer(sched, SteerPattern(), TargetList.uniform([1j, -0.5], 1e-4))
    for hit in res.hits:
        d = oracle_pair_defect(
            res.z_angle, res.w_angle, hit.n, hit.target, Fraction(2), linear=True
        )
        assert d <= 1e-4


def test_steer_folded_pattern():
    sched = RadiusSchedule(Fraction(3), minor=Fraction(2))
    pattern = SteerPattern(folded=(2, 1))
    res = torus_steer(sched, pattern, TargetList.uniform([1 + 1j, -2, 0.5j], 1e-4))
    for hit in res.hits:
        assert hit.residual <= 1e-4
        d = oracle_folded_defect(
            res.z_angle, res.w_angle, hit.n, hit.target, Fraction(3), Fraction(2), (2, 1)
        )
        assert d <= 1e-4


def test_steer_schedule_overflow():
    cfg = DEFAULT.with_(exponent_cap=10**4)
    tl = TargetList.uniform([1.0] * 5, 1e-6)
    with pytest.raises(ScheduleOverflow):
        torus_steer(RadiusSchedule(Fraction(2)), SteerPattern(), tl, cfg)


def test_steer_unreachable_below_cap():
    cfg = DEFAULT.with_(exponent_cap=10**3)
    tl = TargetList.uniform([1e400], 1e-3)
    with pytest.raises(Unreachable):
        torus_steer(RadiusSchedule(Fraction(2)), SteerPattern(), tl, cfg)


def test_steer_validation():
    with pytest.raises(ValueError):
        torus_steer(
            RadiusSchedule(Fraction(2)),
            SteerPattern(folded=(2, 1)),
            TargetList.uniform([0], 1.0),
        )
    with pytest.raises(ValueError):
        TargetList((), ())
    with pytest.raises(ValueError):
        TargetList((1 + 0j,), (0.0,))
    with pytest.raises(ValueError):
        RadiusSchedule(Fraction(1))
    with pytest.raises(ValueError):
        RadiusSchedule(Fraction(2), minor=Fraction(3))
    with pytest.raises(ValueError):
        SteerPattern(folded=(3, 3))


@given(
    ys=st.lists(
        st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
        min_size=1,
        max_size=3,
    ),
    eps=st.floats(min_value=1e-3, max_value=0.1),
    base=st.sampled_from([2, 3]),
)
@settings(max_examples=12, deadline=None)
def test_steer_replay_soundness_property(ys, eps, base):
    res = torus_steer(
        RadiusSchedule(Fraction(base)), SteerPattern(), TargetList.uniform(ys, eps)
    )
    for hit in res.hits:
        assert hit.residual <= eps
        d = oracle_pair_defect(res.z_angle, res.w_angle, hit.n, hit.target, Fraction(base))
        assert d <= eps
    for d in schedule_degradations(res):
        assert float(d) * math.pi <= eps / 2


def test_steering_residual_reentrant():
    res = torus_steer(
        RadiusSchedule(Fraction(2)), SteerPattern(), TargetList.uniform([2j], 1e-5)
    )
    again = steering_residual(res, res.hits[0])
    assert float(again) <= 1e-5
    assert abs(float(again) - res.hits[0].residual) < 1e-12


# ---------------------------------------------------------------------------
# pentagon machinery


def test_pentagon_det_frozen_oracle():
    lu = oracle_pentagon_det()
    with mpmath.workprec(300):
        assert abs(lu - mpf(DET_30)) < mpf("1e-28")
        closed_form = 25 * mpmath.sqrt(5) / 4
        assert abs(lu - closed_form) < mpf("1e-80")


def test_pentagon_det_interval_certified():
    det = pentagon_det_interval()
    with mpmath.workprec(300):
        assert det.contains(oracle_pentagon_det())
        assert abs(det.mid - mpf(DET_30)) < mpf("1e-28")
    assert det.sign() == 1
    assert det.rad < 1e-40


def test_calibration_properties(cal):
    assert cal.epsilon > 0 and cal.d > 0
    assert cal.det.sign() == 1
    again = pentagon_calibrate(2000)
    assert (again.epsilon, again.d) == (cal.epsilon, cal.d)
    with pytest.raises(ValueError):
        pentagon_calibrate(999)


def _unit_d(angle) -> complex:
    a = float(angle)
    return complex(math.cos(math.pi * a), math.sin(math.pi * a))


def _regular_configuration() -> list[complex]:
    first = [_unit_d(Fraction(2 * j, 5)) for j in range(1, 5)] + [1 + 0j]
    second = [_unit_d(Fraction(4 * j, 5)) for j in range(1, 5)] + [1 + 0j]
    return first + second


def test_pentagon_solve_regular_baseline(cal):
    a = pentagon_solve(_regular_configuration(), 0, 0, cal)
    for x in a:
        assert abs(x - mpf(1) / 5) < 1e-12


def test_pentagon_solve_random_substitution(cal):
    rng = random.Random(11)
    from numcyc.witness import _sample_configuration

    for _ in range(1000):
        u = _sample_configuration(rng, cal.epsilon)
        r = cal.d * math.sqrt(rng.random()) * 0.98
        ph = rng.uniform(0, 2 * math.pi)
        z = complex(r * math.cos(ph), r * math.sin(ph))
        r = cal.d * math.sqrt(rng.random()) * 0.98
        ph = rng.uniform(0, 2 * math.pi)
        w = complex(r * math.cos(ph), r * math.sin(ph))
        a = pentagon_solve(u, z, w, cal)
        assert min(a) > 0
        assert abs(sum(a) - 1) < 1e-12
        assert oracle_substitution(u, a, z, w) <= 1e-10


def test_pentagon_solve_point_mass_rejected(cal):
    u = _regular_configuration()
    with pytest.raises(OutOfCalibratedRegion):
        pentagon_solve(u, u[4], u[9], cal)


def test_pentagon_solve_region_checks(cal):
    u = _regular_configuration()
    with pytest.raises(OutOfCalibratedRegion):
        pentagon_solve(u, cal.d * 1.01, 0, cal)
    with pytest.raises(OutOfCalibratedRegion):
        pentagon_solve([1 + 0j] * 10, 0, 0, cal)
    with pytest.raises(ValueError):
        pentagon_solve(u[:9], 0, 0, cal)


# ---------------------------------------------------------------------------
# power alignment


def test_align_frozen_dyadic():
    al = align_powers(dyadic_angles(), Progression(), [Fraction(1, 2)], 1 / 16)
    assert (al.n, al.m, al.base_index, al.member_indices) == FROZEN_ALIGN
    assert not al.heuristic
    # the member phase itself lands exactly; all residual comes from the base
    assert (FROZEN_ALIGN[0] * dyadic_angle(7)) % 2 == Fraction(1, 2)
    b, b0 = dyadic_angle(7), dyadic_angle(15)
    r1 = oracle_chord(al.n * (b - b0) - Fraction(1, 2))
    r2 = oracle_chord(al.m * (b - b0) - 1)
    assert abs(r1 - al.first_residuals[0]) < 1e-12
    assert abs(r2 - al.second_residuals[0]) < 1e-12


def test_align_all_ones_trivial():
    al = align_powers(dyadic_angles(), Progression(), [Fraction(0)], 0.05)
    assert max(al.first_residuals + al.second_residuals) < 0.05
    assert not al.heuristic


def test_align_pentagon_targets(cal):
    taus = [Fraction(2 * j, 5) for j in range(1, 6)]
    al = align_powers(dyadic_angles(), Progression(), taus, cal.epsilon / 3)
    assert al.m > al.n > 0
    angles = [dyadic_angle(i) for i in al.member_indices]
    # relative chords of the realized points against the exact pattern
    for exp, mult in ((al.n, 1), (al.m, 2)):
        for j in range(1, 5):
            rel = exp * (angles[j - 1] - angles[4]) - Fraction(2 * mult * j, 5)
            assert oracle_chord(rel) < cal.epsilon


def test_align_filter_and_monotonic():
    al = align_powers(
        dyadic_angles(), Progression(6, (5,)), [Fraction(1, 3)], 0.02, n0=100
    )
    assert al.n % 6 == 5 and al.m % 6 == 5
    assert al.m > al.n > 100


def test_align_heuristic_flagged():
    s2 = math.sqrt(2)
    irr = AngleSet(lambda j: (s2 * j) % 2.0, "sqrt2-orbit")
    al = align_powers(irr, Progression(), [0.0], 0.1)
    assert al.heuristic
    assert max(al.first_residuals + al.second_residuals) < 0.1
    filtered = align_powers(irr, Progression(3, (1,)), [0.25], 0.15, n0=10)
    assert filtered.n % 3 == 1 and filtered.m % 3 == 1 and filtered.n > 10


def test_align_heuristic_no_cluster():
    spread = AngleSet(lambda j: Fraction(j % 2048, 1024), "spread")
    with pytest.raises(SearchExhausted):
        align_powers(spread, Progression(), [Fraction(0)], 0.001)


def test_align_exact_needs_rationals():
    bad = AngleSet(lambda j: 2.0 ** -j, "floats", clusters_at_one=True)
    with pytest.raises(TypeError):
        align_powers(bad, Progression(), [Fraction(0)], 0.1)


def test_align_validation():
    with pytest.raises(ValueError):
        align_powers(dyadic_angles(), Progression(), [], 0.1)
    with pytest.raises(ValueError):
        align_powers(dyadic_angles(), Progression(), [Fraction(0)], 3.0)
    with pytest.raises(SearchExhausted):
        align_powers(dyadic_angles(), Progression(4, (0, 1)), [Fraction(0)], 0.1)
    with pytest.raises(ValueError):
        Progression(0)
    with pytest.raises(ValueError):
        Progression(4, (5,))


# ---------------------------------------------------------------------------
# sparse weights


def test_sparse_empty_zero_target(cal):
    state = extend_sparse_weights(
        SparseSteering(dyadic_angles()), 0, 0.5, RadiusSchedule(Fraction(2)), cal
    )
    assert state.support() == ()
    cert = state.certificates[0]
    assert cert.residual < 1e-30 and cert.zero_defect < 1e-30
    assert cert.zero_exponent > cert.exponent > 0


def test_sparse_single_extension(cal):
    empty = SparseSteering(dyadic_angles())
    state = extend_sparse_weights(
        empty, 1 - 2j, 0.5, RadiusSchedule(Fraction(2)), cal
    )
    assert empty.weights == ()  # input untouched
    assert len(state.support()) == 5
    assert all(w > 0 for _, w in state.weights)
    cert = state.certificates[0]
    assert cert.residual <= 1e-8 and cert.zero_defect <= 1e-8
    pairs = [(dyadic_angle(i), w) for i, w in cert.weights]
    hit = abs(oracle_weight_sum(pairs, cert.exponent) - mpmath.mpc(cert.scaled_target))
    zero = abs(oracle_weight_sum(pairs, cert.zero_exponent))
    assert hit <= 1e-8 and zero <= 1e-8


def test_sparse_ten_targets_accounting(cal):
    targets = [complex(0.5 * j, -0.3 * j) for j in range(1, 11)]
    state = build_sparse_weights(
        dyadic_angles(), targets, RadiusSchedule(Fraction(2)), cal
    )
    assert len(state.support()) <= 50
    assert len(state.certificates) == 10
    exps = [c.exponent for c in state.certificates]
    assert all(a < b for a, b in zip(exps, exps[1:]))
    budget = 0.0
    for cert in state.certificates:
        assert cert.omega_cost <= 5 * math.sqrt(cert.delta)
        budget += 5 * math.sqrt(cert.delta)
        assert cert.residual <= 1e-8 and cert.zero_defect <= 1e-8
        pairs = [(dyadic_angle(i), w) for i, w in cert.weights]
        hit = abs(
            oracle_weight_sum(pairs, cert.exponent) - mpmath.mpc(cert.scaled_target)
        )
        assert hit <= 1e-8
        h, z = replay_certificate(state.angle_set, cert)
        assert float(h) <= 1e-8 and float(z) <= 1e-8
    assert state.omega_mass() <= budget


def test_sparse_progression_preservation(cal):
    sched = RadiusSchedule(Fraction(2))
    one = extend_sparse_weights(SparseSteering(dyadic_angles()), 1j, 0.5, sched, cal)
    two = extend_sparse_weights(one, -0.7, 0.25, sched, cal)
    n2 = two.certificates[-1].exponent
    # the second exponent sits on the progression where every weighted
    # element of the first state repeats exactly
    for idx, _ in one.weights:
        a = dyadic_angle(idx)
        assert (a * n2) % 2 == (a * one.zero_exponent) % 2
    assert two.certificates[-1].weights == two.weights


def test_sparse_validation(cal):
    with pytest.raises(ValueError):
        extend_sparse_weights(
            SparseSteering(dyadic_angles()), 1, 0, RadiusSchedule(Fraction(2)), cal
        )


# ---------------------------------------------------------------------------
# three-point solver


def test_three_point_symmetric():
    xi = [_unit_d(Fraction(0)), _unit_d(Fraction(2, 3)), _unit_d(Fraction(4, 3))]
    a, b = three_point_solve(xi, 0)
    assert abs(a - mpf(1) / 3) < 1e-15
    assert abs(b - mpf(1) / 3) < 1e-15


def test_three_point_perturbed_substitution():
    rng = random.Random(5)
    xi = [_unit_d(Fraction(0)), _unit_d(Fraction(2, 3)), _unit_d(Fraction(4, 3))]
    for _ in range(50):
        y = complex(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2))
        a, b = three_point_solve(xi, y)
        assert a > 0 and b > 0 and a + b < 1
        with mpmath.workprec(300):
            z = [mpmath.mpc(c) for c in xi]
            res = abs(a * z[0] + b * z[1] + (1 - a - b) * z[2] - mpmath.mpc(y))
            assert res <= 1e-10


def test_three_point_singular():
    xi = [_unit_d(Fraction(0)), _unit_d(Fraction(0)), _unit_d(Fraction(1))]
    with pytest.raises(SingularConfiguration):
        three_point_solve(xi, 0)
    with pytest.raises(SingularConfiguration):
        three_point_solve([1 + 0j, 2 + 0j, 3 + 0j], 0)


def test_three_point_leaves_region():
    xi = [_unit_d(Fraction(0)), _unit_d(Fraction(2, 3)), _unit_d(Fraction(4, 3))]
    with pytest.raises(LeftRegion):
        three_point_solve(xi, 10)
    with pytest.raises(LeftRegion):
        three_point_solve(xi, 0, x0=(0.9, 0.3))
