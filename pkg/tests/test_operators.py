"""Tests for operator specs, norming pairs, orbits and shift norms.

Derived expectations are computed inline with plain mpmath/Fraction
arithmetic (never through the code under test) and frozen where they
are single constants.
"""

import random
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from mpmath import mpf

from numcyc.config import RunConfig, working_precision
from numcyc.errors import (
    ConvergenceFailure,
    DimensionMismatch,
    ZeroVector,
)
from numcyc.exact_arith import LacunaryAngle, RationalAngle, log_angle
from numcyc.operators import (
    DiagEntry,
    ExactDiagonal,
    NormalizedPair,
    OrbitSeries,
    PairHint,
    PNorm,
    ShiftOp,
    certify_pair,
    hilbert_pair,
    materialize_diagonal,
    orbit,
    pair_from_weights,
    qc,
    shift_norm,
)

E4 = 253 + 3**250
TAU3 = LacunaryAngle(3, (1, 2, 4, 10), (1, 5, 250, E4), tail_hi_bits=10**6)

F = Fraction


def diag(*radii, angles=None):
    entries = tuple(
        DiagEntry(F(r), RationalAngle(F(0)) if angles is None else angles[i])
        for i, r in enumerate(radii)
    )
    return ExactDiagonal(entries)


# --- pairs -------------------------------------------------------------


def test_hilbert_pair_basis_vector():
    pair = hilbert_pair([1, 0])
    assert pair.coeffs == ((F(1), F(0)), (F(0), F(0)))
    assert pair.pi_certified
    assert certify_pair(pair)["ok"]


def test_hilbert_pair_equal_weights():
    pair = hilbert_pair([1, 1])
    assert pair.coeffs == ((F(1, 2), F(0)), (F(1, 2), F(0)))


def test_hilbert_pair_complex_conjugation():
    pair = hilbert_pair([qc(1), qc(0, 1)])
    assert pair.coeffs == ((F(1, 2), F(0)), (F(1, 2), F(0)))
    with working_precision(128):
        xs = pair.x_mp()
        fs = pair.f_mp()
        # f = (1/sqrt 2, -i/sqrt 2) and f(x) = 1
        root_half = mpmath.sqrt(mpf(1) / 2)
        assert abs(fs[0] - root_half) < mpf("1e-30")
        assert abs(fs[1] + mpmath.mpc(0, 1) * root_half) < mpf("1e-30")
        fx = sum(a * b for a, b in zip(fs, xs))
        assert abs(fx - 1) < mpf("1e-30")


def test_hilbert_pair_zero_raises():
    with pytest.raises(ZeroVector):
        hilbert_pair([0, 0, 0])


@given(st.lists(st.tuples(st.integers(-50, 50), st.integers(-50, 50)), min_size=1, max_size=6))
@settings(max_examples=60, deadline=None)
def test_hilbert_pair_coefficients_form_distribution(vals):
    if all(a == 0 and b == 0 for a, b in vals):
        vals = vals + [(1, 0)]
    pair = hilbert_pair([qc(a, b) for a, b in vals])
    assert sum(c[0] for c in pair.coeffs) == 1
    assert all(c[0] >= 0 and c[1] == 0 for c in pair.coeffs)


def test_pair_from_weights_basis():
    pair = pair_from_weights([F(1), F(0)])
    assert pair.coeffs == ((F(1), F(0)), (F(0), F(0)))
    assert not pair.approximate


def test_pair_from_weights_half():
    pair = pair_from_weights([F(1, 2), F(1, 2)])
    assert pair.coeffs[0][0] == F(1, 2)
    assert certify_pair(pair)["exact"]


def test_pair_from_weights_thirds_products():
    pair = pair_from_weights([F(1, 3)] * 3)
    with working_precision(128):
        xs = pair.x_mp()
        fs = pair.f_mp()
        for x_j, f_j in zip(xs, fs):
            assert abs(x_j * f_j - mpf(1) / 3) < mpf("1e-30")


def test_pair_from_weights_validation():
    with pytest.raises(ValueError):
        pair_from_weights([F(-1, 2), F(3, 2)])
    with pytest.raises(ValueError):
        pair_from_weights([F(1, 2), F(1, 3)])


def test_pair_from_weights_pnorm():
    pair = pair_from_weights([F(1, 4), F(3, 4)], norm=PNorm(F(4)))
    assert pair.approximate
    exact = pair_from_weights([F(1, 4), F(3, 4)], norm=PNorm(F(2)))
    assert not exact.approximate


def test_pair_from_weights_unknown_norm_raises():
    with pytest.raises(ConvergenceFailure):
        pair_from_weights([F(1, 2), F(1, 2)], norm=lambda v: max(v))


# --- orbits: literal examples ------------------------------------------


def test_orbit_diag23_basis_powers():
    series = orbit(diag(2, 3), hilbert_pair([1, 0]), range(11), tol=1e-9)
    assert series.mode == "exact"
    v10 = series.value_at(10)
    assert v10.contains(1024)
    assert v10.rad <= mpf("1e-9")
    for n, v in zip(series.indices, series.values):
        assert v.contains(2**n)


def test_orbit_identity_constant():
    series = orbit(diag(1, 1, 1), hilbert_pair([1, 2, 2]), [0, 7, 10**6], tol=1e-12)
    for v in series.values:
        assert v.contains(1)


def test_orbit_rotation_eighth_turn():
    op = ExactDiagonal((DiagEntry(F(1), RationalAngle(F(1, 4))),))
    series = orbit(op, hilbert_pair([1]), [2, 4, 8], tol=1e-12)
    assert series.value_at(2).contains(mpmath.mpc(0, 1))
    assert series.value_at(4).contains(-1)
    assert series.value_at(8).contains(1)


def test_orbit_index_normalization():
    series = orbit(diag(2), hilbert_pair([1]), [5, 1, 5, 3], tol=1e-9)
    assert series.indices == (1, 3, 5)
    assert series.value_at(3).contains(8)


def test_orbit_errors():
    with pytest.raises(DimensionMismatch):
        orbit(diag(2, 3), hilbert_pair([1]), [1])
    with pytest.raises(DimensionMismatch):
        orbit(ShiftOp(lambda i: F(1)), hilbert_pair([1]), [1])
    with pytest.raises(ValueError):
        orbit(diag(2), hilbert_pair([1]), [-1])


def test_orbit_series_strictly_increasing_enforced():
    with pytest.raises(ValueError):
        OrbitSeries((3, 3), (None, None), 1e-9)


# --- orbits: invariants --------------------------------------------------


def test_orbit_linearity_in_functional():
    op = diag(2, 3)
    base = pair_from_weights([F(1, 4), F(3, 4)])
    alpha = qc(3, -2)
    scaled = base.scaled_functional(alpha)
    ns = [0, 1, 2, 5, 9]
    a = orbit(op, base, ns, tol=1e-15)
    b = orbit(op, scaled, ns, tol=1e-12)
    with working_precision(128):
        amp = mpmath.mpc(3, -2)
        for n in ns:
            want = amp * mpmath.mpc(a.value_at(n).re, a.value_at(n).im)
            assert b.value_at(n).contains(want) or b.value_at(n).distance(
                type(b.value_at(n)).exact(want)
            ).mid < mpf("1e-10")


def test_orbit_cross_oracle_exact_vs_dense():
    angles = [RationalAngle(F(2, 7)), log_angle(2)]
    op = ExactDiagonal(
        (
            DiagEntry(F(6, 5), angles[0]),
            DiagEntry(F(1, 2), angles[1]),
        ),
        label="cross",
    )
    pair = pair_from_weights([F(1, 3), F(2, 3)])
    ns = [0, 1, 2, 3, 5, 10, 50, 100, 200]
    exact = orbit(op, pair, ns, tol=1e-12)
    dense = orbit(materialize_diagonal(op), pair, ns, tol=1e-12)
    assert dense.mode == "float"
    for n in ns:
        a, b = exact.value_at(n), dense.value_at(n)
        assert a.distance(b).mid <= a.rad + b.rad + mpf("1e-20")


def test_orbit_paired_matches_unpaired():
    # same operator with and without the cancellation pair hint; at
    # n = 243 the unpaired route must brute-force a 116-digit collapse
    entries = (
        DiagEntry(F(3), RationalAngle(F(0))),
        DiagEntry(F(3), TAU3),
    )
    hinted = ExactDiagonal(entries, pairs=(PairHint(0, 1, TAU3),))
    plain = ExactDiagonal(entries)
    pair = pair_from_weights([F(1, 2), F(1, 2)])
    for n in (1, 3, 17, 243):
        a = orbit(hinted, pair, [n], tol=1e-9).value_at(n)
        b = orbit(plain, pair, [n], tol=1e-9).value_at(n)
        assert a.distance(b).mid <= a.rad + b.rad + mpf("1e-20")


def test_orbit_deep_cancellation_oracle():
    # oracle: nu_2 = 243, nu_2 * tau = 83 + t with t = 4*3^-245 + tail
    # below 3^-(10^100); the orbit value of the paired diagonal from
    # equal weights is (1/2) * 3^243 * (1 + e^{i pi 243 tau})
    #                = (1/2) * 3^243 * 2 sin(pi t / 2) * e^{i pi (t-1)/2}
    entries = (
        DiagEntry(F(3), RationalAngle(F(0))),
        DiagEntry(F(3), TAU3),
    )
    op = ExactDiagonal(entries, pairs=(PairHint(0, 1, TAU3),))
    got = orbit(op, pair_from_weights([F(1, 2), F(1, 2)]), [243], tol=1e-9).value_at(243)
    with working_precision(900):
        t = 4 * mpf(3) ** -245
        mag = mpf(3) ** 243 * mpmath.sinpi(t / 2)
        want = mag * mpmath.expjpi((t - 1) / 2)
        assert abs(want.real - got.re) <= got.rad + mpf("1e-12")
        assert abs(want.imag - got.im) <= got.rad + mpf("1e-12")
        # modulus against the frozen return value: 3^243 |1+z^243| / 2
        assert abs(abs(want) - mpf("0.698131700797731830769476307396")) < mpf("1e-25")


# --- shift norms ---------------------------------------------------------


def test_shift_norm_unit_weights():
    op = ShiftOp(lambda i: F(1), sup_bound=F(1))
    assert shift_norm(op, 7) == (F(1), F(1), False)


def test_shift_norm_constant_two():
    op = ShiftOp(lambda i: F(2), sup_bound=F(2))
    lower, upper, truncated = shift_norm(op, 5)
    assert lower == 32 and upper == 32 and not truncated


def test_shift_norm_telescoping():
    # w_j = 1 + 1/j: window product from k is (k+n)/k, maximal at k=1
    op = ShiftOp(
        lambda i: F(i + 1, i),
        sup_bound=F(2),
        norm_formula=lambda n: F(n + 1),
    )
    lower, upper, truncated = shift_norm(op, 100, window=500)
    assert lower == 101
    assert upper == 101
    assert not truncated


def test_shift_norm_truncated_flag():
    op = ShiftOp(lambda i: F(1, 1) if i % 2 else F(3, 2))
    lower, upper, truncated = shift_norm(op, 4, window=10)
    assert upper is None and truncated
    assert lower == F(9, 4)


def test_shift_norm_window_monotone():
    rng = random.Random(3)
    weights = {i: F(rng.randrange(1, 9), rng.randrange(1, 9)) for i in range(1, 200)}
    op = ShiftOp(lambda i: weights.get(i, F(1)))
    prev = F(0)
    for window in (1, 5, 20, 80, 150):
        lower, _, _ = shift_norm(op, 6, window=window)
        assert lower >= prev
        prev = lower


def test_shift_norm_bilateral_scans_negative_start():
    op = ShiftOp(lambda i: F(5) if i == -3 else F(1), kind="bilateral")
    lower, _, _ = shift_norm(op, 2, window=10)
    assert lower == 5


def test_shift_norm_formula_contradiction_raises():
    op = ShiftOp(lambda i: F(2), norm_formula=lambda n: F(1))
    with pytest.raises(ValueError):
        shift_norm(op, 3)


def test_shift_kind_validation():
    with pytest.raises(ValueError):
        ShiftOp(lambda i: F(1), kind="sideways")


# --- pair-hint validation -------------------------------------------------


def test_pair_hint_requires_equal_radii():
    entries = (
        DiagEntry(F(2), RationalAngle(F(0))),
        DiagEntry(F(3), RationalAngle(F(1, 2))),
    )
    with pytest.raises(ValueError):
        ExactDiagonal(entries, pairs=(PairHint(0, 1, RationalAngle(F(1, 2))),))


def test_pair_hint_range_check():
    entries = (DiagEntry(F(2), RationalAngle(F(0))),)
    with pytest.raises(DimensionMismatch):
        ExactDiagonal(entries, pairs=(PairHint(0, 1, RationalAngle(F(0))),))
