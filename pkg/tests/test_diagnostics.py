"""Orbit-prefix diagnostics: coverage, escape, gaps, line confinement.

Oracles come first and never call the code they check.  Grid counts are
frozen from independent integer arithmetic; gaps and rates are
recomputed from scratch where a diagnostic reports them.
"""

import math
import xml.dom.minidom
from fractions import Fraction as F

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from mpmath import mpf

from numcyc.diagnostics import (
    BOUNDED,
    ESCAPING,
    MIXED,
    UNCOVERED_CAP,
    coverage,
    disk_cells,
    escape_profile,
    line_confinement,
    orbit_svg,
    r_scan,
    r_scan_csv,
    return_times,
)
from numcyc.exact_arith import ComplexInterval, RationalAngle, log_angle
from numcyc.operators import DiagEntry, ExactDiagonal, OrbitSeries, hilbert_pair, orbit
from numcyc.towers import TowerParams, build, make_diag2, weight_family

# ---------------------------------------------------------------------------
# oracles


def oracle_disk_cell_count(rho_num: int, rho_den: int, eps_num: int, eps_den: int) -> int:
    """Count centers ((2i+1)/2 * eps, (2j+1)/2 * eps) inside the disk.

    Pure integer arithmetic: scale by 2*eps_den*rho_den and compare
    squares, with a bounding box wide enough to be conservative.
    """
    span = (2 * rho_num * eps_den) // (rho_den * eps_num) + 2
    lim = (2 * rho_num * eps_den) ** 2
    scale = rho_den * eps_num
    count = 0
    for i in range(-span, span):
        a = (2 * i + 1) * scale
        for j in range(-span, span):
            b = (2 * j + 1) * scale
            if a * a + b * b <= lim:
                count += 1
    return count


# frozen from the integer count above
CELLS_DEFAULT = 812  # rho=4, eps=1/4
CELLS_SMALL = 52  # rho=2, eps=1/2


def oracle_max_gap(returns, n0, n1):
    walk = [n0 - 1, *returns, n1 + 1]
    best = 0
    for a, b in zip(walk, walk[1:]):
        best = max(best, b - a)
    return best


def oracle_cells_of_points(points, rho: F, eps: F) -> int:
    """Distinct disk cells met by exact rational points."""
    hit = set()
    for re, im in points:
        i, j = (re / eps).__floor__(), (im / eps).__floor__()
        c_re, c_im = (i + F(1, 2)) * eps, (j + F(1, 2)) * eps
        if c_re * c_re + c_im * c_im <= rho * rho:
            hit.add((i, j))
    return len(hit)


def points_series(points, rad=0.0) -> OrbitSeries:
    values = tuple(
        ComplexInterval(mpf(float(re)), mpf(float(im)), mpf(rad)) for re, im in points
    )
    return OrbitSeries(tuple(range(len(values))), values, tol=1e-9, mode="float")


def real_diag(*radii) -> ExactDiagonal:
    zero = RationalAngle(F(0))
    return ExactDiagonal(tuple(DiagEntry(F(r), zero) for r in radii))


def ones_tower_series(extra=()):
    data = build(TowerParams(3, weight_family("ones"), 3))
    op, pair = make_diag2(data)
    return orbit(op, pair, list(range(101)) + list(extra), 1e-9)


# ---------------------------------------------------------------------------
# grid geometry


def test_disk_cells_default_matches_integer_oracle():
    assert oracle_disk_cell_count(4, 1, 1, 4) == CELLS_DEFAULT
    assert len(disk_cells(F(4), F(1, 4))) == CELLS_DEFAULT


def test_disk_cells_small_grid():
    assert oracle_disk_cell_count(2, 1, 1, 2) == CELLS_SMALL
    assert len(disk_cells(F(2), F(1, 2))) == CELLS_SMALL


def test_disk_cells_centers_inside_and_symmetric():
    cells = set(disk_cells(F(2), F(1, 2)))
    eps, rho = F(1, 2), F(2)
    for i, j in cells:
        c = (i + F(1, 2)) * eps, (j + F(1, 2)) * eps
        assert c[0] ** 2 + c[1] ** 2 <= rho * rho
        assert (-1 - i, j) in cells and (i, -1 - j) in cells


# ---------------------------------------------------------------------------
# coverage


def test_coverage_empty_prefix_is_zero():
    rep = coverage(OrbitSeries((), (), tol=1e-9))
    assert rep.hit_fraction == 0.0
    assert rep.prefix_length == 0
    assert rep.cells_total == CELLS_DEFAULT


def test_coverage_all_cell_centers_is_one():
    eps = F(1, 2)
    centers = [
        ((i + F(1, 2)) * eps, (j + F(1, 2)) * eps) for i, j in disk_cells(F(2), eps)
    ]
    rep = coverage(points_series(centers), rho=F(2), eps=eps)
    assert rep.hit_fraction == 1.0
    assert rep.uncovered == ()
    assert rep.cells_hit == rep.cells_total == CELLS_SMALL


def test_coverage_single_point_counts_one_cell():
    rep = coverage(points_series([(F(1, 8), F(1, 8))]))
    assert rep.cells_hit == 1
    assert rep.hit_fraction == 1 / CELLS_DEFAULT
    assert len(rep.uncovered) == UNCOVERED_CAP


def test_coverage_point_outside_disk_ignored():
    rep = coverage(points_series([(F(7), F(7))]))
    assert rep.cells_hit == 0


def test_coverage_midpoint_rule_with_wide_enclosure():
    # enclosure spans several cells; only the cell of the center counts
    rep = coverage(points_series([(F(1, 8), F(1, 8))], rad=0.6))
    assert rep.cells_hit == 1


def test_coverage_matches_rational_oracle_on_random_cloud():
    rng = np.random.RandomState(7)
    raw = rng.uniform(-3, 3, size=(120, 2))
    points = [(F(a).limit_denominator(512), F(b).limit_denominator(512)) for a, b in raw]
    rep = coverage(points_series(points), rho=F(2), eps=F(1, 2))
    assert rep.cells_hit == oracle_cells_of_points(points, F(2), F(1, 2))


def test_coverage_monotone_in_prefix_length():
    rng = np.random.RandomState(11)
    pts = [(x, y) for x, y in rng.uniform(-4, 4, size=(60, 2))]
    series = points_series(pts)
    prev = -1.0
    for k in range(0, 61, 5):
        sub = OrbitSeries(series.indices[:k], series.values[:k], tol=1e-9)
        rep = coverage(sub)
        assert rep.hit_fraction >= prev
        prev = rep.hit_fraction


def test_coverage_validates_geometry():
    with pytest.raises(ValueError):
        coverage(points_series([]), rho=0)
    with pytest.raises(ValueError):
        coverage(points_series([]), eps=-1)


def test_coverage_tower_prefix_increases_through_rungs():
    data = build(TowerParams(3, weight_family("spiral"), 3))
    op, pair = make_diag2(data)
    rungs = [data.rung_exp(k) for k in (1, 2, 3)]
    fractions = []
    for k in range(1, 4):
        series = orbit(op, pair, [0, 1] + rungs[:k], 1e-9)
        fractions.append(coverage(series).hit_fraction)
    assert fractions[0] > 0
    assert fractions[0] < fractions[1] < fractions[2]


# ---------------------------------------------------------------------------
# escape profile


def test_escape_geometric_rate_matches_log2():
    series = orbit(real_diag(2, 3), hilbert_pair([1, 0]), range(48), 1e-9)
    prof = escape_profile(series)
    assert prof.verdict == ESCAPING
    assert abs(prof.rate - math.log(2)) <= 0.01 * math.log(2)
    assert prof.outliers == ()


def test_escape_single_support_rate_within_one_percent():
    series = orbit(real_diag(5, 1), hilbert_pair([1, 0]), range(32), 1e-9)
    prof = escape_profile(series)
    assert prof.verdict == ESCAPING
    assert abs(prof.rate - math.log(5)) <= 0.01 * math.log(5)


def test_escape_identity_is_bounded():
    series = orbit(real_diag(1, 1), hilbert_pair([1, 1]), range(24), 1e-9)
    prof = escape_profile(series)
    assert prof.verdict == BOUNDED
    assert abs(prof.rate) < 1e-9


def test_escape_tower_orbit_is_mixed():
    prof = escape_profile(ones_tower_series(extra=[243]))
    assert prof.verdict == MIXED


def test_escape_flags_corrupted_point_as_outlier():
    points = [(2.0**n, 0.0) for n in range(32)]
    points[10] = (1.0, 0.0)
    prof = escape_profile(points_series(points))
    assert 10 in prof.outliers
    assert abs(prof.rate - math.log(2)) < 1e-6


def test_escape_requires_sixteen_points():
    with pytest.raises(ValueError):
        escape_profile(points_series([(1.0, 0.0)] * 15))


# ---------------------------------------------------------------------------
# return times


def test_returns_constant_orbit_full_range():
    series = points_series([(1.0, 0.0)] * 20)
    rep = return_times(series, 2)
    assert rep.returns == tuple(range(20))
    assert rep.max_gap == 1
    assert rep.gaps_bounded
    assert rep.syndetic_bound == 1


def test_returns_escaping_orbit_finite_prefix_then_empty():
    series = orbit(real_diag(2, 3), hilbert_pair([1, 0]), range(64), 1e-9)
    rep = return_times(series, 10)
    assert rep.returns == (0, 1, 2, 3)
    assert rep.max_gap == oracle_max_gap(rep.returns, 0, 63) == 61
    assert not rep.gaps_bounded
    assert rep.syndetic_bound is None


def test_returns_empty_set_spans_window():
    series = points_series([(5.0, 5.0)] * 10)
    rep = return_times(series, 1)
    assert rep.returns == ()
    assert rep.max_gap == 11


def test_returns_rotation_gaps_bounded_over_long_scan():
    n = np.arange(100_000)
    z = np.exp(1j * math.pi * math.sqrt(2) * n)
    v = 1 + z
    hits = np.flatnonzero(np.abs(v) <= 0.1)
    walk = np.concatenate(([-1], hits, [len(n)]))
    assert np.diff(walk).max() * 4 <= len(n) + 1  # oracle: gaps bounded

    values = tuple(
        ComplexInterval(mpf(re), mpf(im), mpf(0)) for re, im in zip(v.real, v.imag)
    )
    rep = return_times(OrbitSeries(tuple(n.tolist()), values, tol=1e-9), F(1, 10))
    assert rep.returns == tuple(hits.tolist())
    assert rep.max_gap == int(np.diff(walk).max())
    assert rep.gaps_bounded
    assert rep.syndetic_bound == rep.max_gap


def test_returns_max_gap_monotone_when_threshold_shrinks():
    series = orbit(real_diag(2, 3), hilbert_pair([1, 1]), range(40), 1e-9)
    gaps = [return_times(series, c).max_gap for c in (1000, 100, 10, 1, F(1, 10))]
    assert gaps == sorted(gaps)


def test_returns_validates_threshold():
    with pytest.raises(ValueError):
        return_times(points_series([(1.0, 0.0)]), 0)


# ---------------------------------------------------------------------------
# line confinement


def test_lines_single_diagonal_line():
    e = math.sqrt(2) / 2
    points = [(t * e, t * e) for t in (-3, -2, -1, 1, 2, 3)]
    rep = line_confinement(points_series(points), l_max=1, tol=0.05)
    assert rep.confined
    assert len(rep.lines) == 1
    assert abs(rep.lines[0] - math.pi / 4) < 1e-9
    assert rep.max_deviation < 1e-9


def test_lines_finite_order_diagonal_confined():
    zero = RationalAngle(F(1, 4))
    op = ExactDiagonal((DiagEntry(F(2), zero), DiagEntry(F(2), zero)))
    series = orbit(op, hilbert_pair([1, 0]), range(32), 1e-9)
    rep = line_confinement(series, l_max=8, tol=0.01)
    assert rep.confined
    assert len(rep.lines) == 4  # order-8 phase folds to 4 lines mod pi


def test_lines_dense_rotation_not_confined():
    points = [
        (math.cos(math.pi * math.sqrt(2) * n), math.sin(math.pi * math.sqrt(2) * n))
        for n in range(64)
    ]
    rep = line_confinement(points_series(points), l_max=4, tol=0.02)
    assert not rep.confined


def test_lines_zero_points_are_skipped():
    points = [(0.0, 0.0)] * 4 + [(1.0, 1.0), (2.0, 2.0)]
    rep = line_confinement(points_series(points), l_max=2, tol=0.05)
    assert rep.confined
    assert rep.skipped == 4
    assert len(rep.lines) == 1


def test_lines_validation():
    series = points_series([(1.0, 0.0)] * 8)
    with pytest.raises(ValueError):
        line_confinement(series, l_max=0)
    with pytest.raises(ValueError):
        line_confinement(series, l_max=2, tol=0.0)
    with pytest.raises(ValueError):
        line_confinement(points_series([(1.0, 0.0)] * 3), l_max=2)


@given(st.floats(0.1, 10.0))
@settings(max_examples=25, deadline=None)
def test_lines_invariant_under_positive_scaling(scale):
    points = [(1.0, 0.5), (-2.0, -1.0), (0.5, 2.0), (1.0, 4.0)]
    base = line_confinement(points_series(points), l_max=2, tol=0.1)
    scaled = line_confinement(
        points_series([(scale * a, scale * b) for a, b in points]), l_max=2, tol=0.1
    )
    assert scaled == base


# ---------------------------------------------------------------------------
# r scan and emitters


def test_r_scan_three_rows_with_replay():
    rows = r_scan(log_angle(3), log_angle(5), [F(1, 2), F(1), F(3, 2)], 48)
    assert [float(r) for r, _ in rows] == [0.5, 1.0, 1.5]
    for _, rep in rows:
        assert rep.cells_total == CELLS_DEFAULT
        assert 0 < rep.hit_fraction <= 1
        assert rep.prefix_length == 48
    again = r_scan(log_angle(3), log_angle(5), [F(1, 2), F(1), F(3, 2)], 48)
    assert again == rows


def test_r_scan_csv_shape():
    rows = r_scan(log_angle(3), log_angle(5), [F(1), F(2)], 24)
    text = r_scan_csv(rows)
    lines = text.strip().split("\n")
    assert lines[0] == "r,hit_fraction,cells_hit,cells_total"
    assert len(lines) == 3
    r, frac, hit, total = lines[1].split(",")
    assert float(r) == 1.0
    assert int(total) == CELLS_DEFAULT
    assert abs(float(frac) - int(hit) / int(total)) < 1e-6


def test_r_scan_validates_prefix():
    with pytest.raises(ValueError):
        r_scan(log_angle(3), log_angle(5), [F(1)], 0)


def test_orbit_svg_deterministic_and_wellformed():
    series = orbit(real_diag(2, 3), hilbert_pair([1, 1]), range(12), 1e-9)
    svg = orbit_svg(series)
    assert svg == orbit_svg(series)
    doc = xml.dom.minidom.parseString(svg)
    circles = doc.getElementsByTagName("circle")
    assert len(circles) == 1 + len(series.values)  # disk outline + points
    assert 'viewBox="-4.25 -4.25 8.5 8.5"' in svg


def test_orbit_svg_validates_geometry():
    with pytest.raises(ValueError):
        orbit_svg(points_series([]), rho=-1)


# ---------------------------------------------------------------------------
# determinism


def test_reports_are_deterministic():
    series = ones_tower_series(extra=[243])
    assert coverage(series) == coverage(series)
    assert escape_profile(series) == escape_profile(series)
    assert return_times(series, 2) == return_times(series, 2)
    assert line_confinement(series, 8, 0.05) == line_confinement(series, 8, 0.05)
