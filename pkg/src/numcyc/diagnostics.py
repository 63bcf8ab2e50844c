"""Quantitative descriptors of finite orbit prefixes.

Density, escape, and syndeticity are asymptotic notions; nothing finite
decides them.  This module computes honest finite surrogates instead:
how much of a disk grid the prefix covers, whether the log-modulus
trend grows, how large the gaps between small-modulus returns are, and
whether the points stay near finitely many lines through the origin.

Every count follows the midpoint rule: an orbit value participates via
the center of its enclosure.  At the tolerances used throughout the
package the enclosure radii are far below one grid cell, so the rule
never flips a count; it exists to make every number an integer a
re-run reproduces exactly.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import mpmath
import numpy as np
from mpmath import mpf

from .config import DEFAULT, RunConfig
from .exact_arith import Angle
from .operators import DiagEntry, ExactDiagonal, OrbitSeries, hilbert_pair, orbit

DEFAULT_RHO = Fraction(4)
DEFAULT_EPS = Fraction(1, 4)

# uncovered-cell lists are truncated to keep reports readable
UNCOVERED_CAP = 64

ESCAPING = "escaping"
BOUNDED = "bounded"
MIXED = "mixed"

# log-modulus drift below this is treated as noise, not growth
_ENVELOPE_MARGIN = math.log(2) / 2


@dataclass(frozen=True)
class CoverageReport:
    """Fraction of disk grid cells visited by an orbit prefix."""

    rho: Fraction
    eps: Fraction
    hit_fraction: float
    uncovered: tuple[tuple[int, int], ...]
    prefix_length: int
    cells_hit: int
    cells_total: int


@dataclass(frozen=True)
class EscapeProfile:
    """Log-modulus trend of an orbit prefix.

    The verdict compares the first and last quarters of the prefix:
    ``escaping`` when even the smallest late values sit above the early
    ones, ``bounded`` when the largest never grow, ``mixed`` otherwise.
    The rate is the least-squares slope of log-modulus against the
    orbit index after discarding outliers beyond three sigma.
    """

    verdict: str
    rate: float
    intercept: float
    outliers: tuple[int, ...]
    prefix_length: int


@dataclass(frozen=True)
class GapReport:
    """Return set below a modulus threshold and its gap structure.

    Gaps are measured on the scanned window extended by one phantom
    position at each end, so the maximum gap is defined even for an
    empty return set (it then equals the window span plus one).  The
    syndetic bound is the maximum gap when the gaps look bounded, and
    absent otherwise; "look bounded" means the worst gap fits four
    times into the window.
    """

    threshold: Fraction
    returns: tuple[int, ...]
    max_gap: int
    syndetic_bound: Optional[int]
    gaps_bounded: bool
    window: tuple[int, int]


@dataclass(frozen=True)
class LineReport:
    """Whether orbit points cluster on few lines through the origin.

    Angles are folded modulo pi, sorted on the circle, and cut at every
    gap wider than twice the tolerance.  The prefix is confined when at
    most ``l_max`` clusters remain and each spans at most twice the
    tolerance.  Values indistinguishable from zero lie on every line
    and are skipped (counted in ``skipped``).
    """

    confined: bool
    lines: tuple[float, ...]
    max_deviation: float
    l_max: int
    tol: float
    skipped: int


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(float(x))


def disk_cells(rho: Fraction, eps: Fraction) -> tuple[tuple[int, int], ...]:
    """Grid cells [i*eps,(i+1)*eps) x [j*eps,(j+1)*eps) with center in rho*D.

    Center membership is decided exactly in rational arithmetic, so the
    cell population depends only on (rho, eps).
    """
    span = math.ceil(rho / eps)
    half = Fraction(1, 2)
    rho_sq = rho * rho
    cells = []
    for i in range(-span, span):
        cre = (i + half) * eps
        for j in range(-span, span):
            cim = (j + half) * eps
            if cre * cre + cim * cim <= rho_sq:
                cells.append((i, j))
    return tuple(cells)


def _cell_of(re: mpf, im: mpf, eps: mpf) -> tuple[int, int]:
    return int(mpmath.floor(re / eps)), int(mpmath.floor(im / eps))


def coverage(
    series: OrbitSeries, rho=DEFAULT_RHO, eps=DEFAULT_EPS
) -> CoverageReport:
    """Fraction of eps-cells of the closed disk rho*D hit by the prefix."""
    rho = _as_fraction(rho)
    eps = _as_fraction(eps)
    if rho <= 0 or eps <= 0:
        raise ValueError("disk radius and cell size must be positive")
    cells = disk_cells(rho, eps)
    eps_mpf = mpf(eps.numerator) / eps.denominator
    population = set(cells)
    hit = set()
    for v in series.values:
        cell = _cell_of(v.re, v.im, eps_mpf)
        if cell in population:
            hit.add(cell)
    uncovered = tuple(c for c in cells if c not in hit)[:UNCOVERED_CAP]
    return CoverageReport(
        rho=rho,
        eps=eps,
        hit_fraction=len(hit) / len(cells),
        uncovered=uncovered,
        prefix_length=len(series.values),
        cells_hit=len(hit),
        cells_total=len(cells),
    )


def _log_moduli(series: OrbitSeries) -> np.ndarray:
    out = np.empty(len(series.values))
    for k, v in enumerate(series.values):
        m = mpmath.hypot(v.re, v.im)
        out[k] = float(mpmath.log(m)) if m > 0 else -745.0
    return out


def escape_profile(series: OrbitSeries) -> EscapeProfile:
    """Classify the log-modulus trend of the prefix and fit its rate."""
    if len(series.values) < 16:
        raise ValueError("escape profile needs at least 16 orbit values")
    x = np.asarray(series.indices, dtype=float)
    y = _log_moduli(series)

    rate, intercept = np.polyfit(x, y, 1)
    resid = y - (rate * x + intercept)
    sigma = float(np.std(resid))
    # residuals at rounding-noise scale carry no outlier information
    floor = 1e-9 * max(1.0, float(np.abs(y).max()))
    keep = np.abs(resid) <= 3 * sigma if sigma > floor else np.ones_like(y, bool)
    outliers = tuple(int(n) for n, k in zip(series.indices, keep) if not k)
    if outliers and keep.sum() >= 2:
        rate, intercept = np.polyfit(x[keep], y[keep], 1)

    q = max(1, len(y) // 4)
    first, last = y[:q], y[-q:]
    if last.min() >= first.min() + _ENVELOPE_MARGIN and rate > 0:
        verdict = ESCAPING
    elif last.max() <= first.max() + _ENVELOPE_MARGIN:
        verdict = BOUNDED
    else:
        verdict = MIXED
    return EscapeProfile(
        verdict=verdict,
        rate=float(rate),
        intercept=float(intercept),
        outliers=outliers,
        prefix_length=len(y),
    )


def return_times(series: OrbitSeries, threshold) -> GapReport:
    """Exact return set {n : |orbit_n| <= threshold} over the scanned window."""
    threshold = _as_fraction(threshold)
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    bound = mpf(threshold.numerator) / threshold.denominator
    returns = tuple(
        n
        for n, v in zip(series.indices, series.values)
        if mpmath.hypot(v.re, v.im) <= bound
    )
    n0, n1 = series.indices[0], series.indices[-1]
    positions = [n0 - 1, *returns, n1 + 1]
    max_gap = max(b - a for a, b in zip(positions, positions[1:]))
    span = n1 - n0 + 2
    bounded = bool(returns) and 4 * max_gap <= span
    return GapReport(
        threshold=threshold,
        returns=returns,
        max_gap=max_gap,
        syndetic_bound=max_gap if bounded else None,
        gaps_bounded=bounded,
        window=(n0, n1),
    )


def line_confinement(
    series: OrbitSeries, l_max: int, tol: float = 0.05
) -> LineReport:
    """Test whether the prefix stays within tol of at most l_max lines."""
    if l_max < 1:
        raise ValueError("need at least one line")
    if tol <= 0:
        raise ValueError("angular tolerance must be positive")
    if len(series.values) < 2 * l_max:
        raise ValueError("prefix too short to distinguish l_max lines")

    angles = []
    skipped = 0
    for v in series.values:
        if mpmath.hypot(v.re, v.im) <= v.rad:
            skipped += 1
            continue
        angles.append(float(mpmath.atan2(v.im, v.re)) % math.pi)
    if not angles:
        return LineReport(True, (), 0.0, l_max, tol, skipped)

    angles = sorted(set(angles))
    gaps = [b - a for a, b in zip(angles, angles[1:])]
    gaps.append(angles[0] + math.pi - angles[-1])
    cuts = [k for k, g in enumerate(gaps) if g > 2 * tol]

    if not cuts:
        # one cluster around the circle; its arc excludes the widest gap
        widest = max(range(len(gaps)), key=gaps.__getitem__)
        diameter = math.pi - gaps[widest]
        mid = (angles[(widest + 1) % len(angles)] + diameter / 2) % math.pi
        clusters = [(mid, diameter)]
    else:
        clusters = []
        m = len(angles)
        for c, nxt in zip(cuts, cuts[1:] + [cuts[0] + m]):
            start = angles[(c + 1) % m]
            arc = sum(gaps[(c + 1 + k) % m] for k in range(nxt - c - 1))
            clusters.append(((start + arc / 2) % math.pi, arc))

    confined = len(clusters) <= l_max and all(d <= 2 * tol for _, d in clusters)
    return LineReport(
        confined=confined,
        lines=tuple(sorted(mid for mid, _ in clusters)),
        max_deviation=max(d for _, d in clusters) / 2,
        l_max=l_max,
        tol=tol,
        skipped=skipped,
    )


def r_scan(
    z: Angle,
    w: Angle,
    r_grid: Sequence,
    n_points: int,
    rho=DEFAULT_RHO,
    eps=DEFAULT_EPS,
    tol: float = 1e-9,
    cfg: RunConfig = DEFAULT,
) -> tuple[tuple[Fraction, CoverageReport], ...]:
    """Coverage of the averaged pair orbit (r e^{i pi z}, r e^{i pi w}) per r.

    Each row replays the orbit of the two-point diagonal with both
    moduli equal to r, applied to the balanced unit vector, and scores
    the prefix with `coverage`.  Scores are descriptive only; no
    measure statement is attached to them.
    """
    if n_points < 1:
        raise ValueError("need at least one orbit point per row")
    rows = []
    for r in r_grid:
        r = _as_fraction(r)
        op = ExactDiagonal((DiagEntry(r, z), DiagEntry(r, w)))
        series = orbit(op, hilbert_pair([1, 1]), range(n_points), tol, cfg)
        rows.append((r, coverage(series, rho, eps)))
    return tuple(rows)


def r_scan_csv(rows: Sequence[tuple[Fraction, CoverageReport]]) -> str:
    lines = ["r,hit_fraction,cells_hit,cells_total"]
    for r, rep in rows:
        lines.append(
            f"{float(r):.6g},{rep.hit_fraction:.6f},{rep.cells_hit},{rep.cells_total}"
        )
    return "\n".join(lines) + "\n"


def _svg_num(x) -> str:
    return f"{float(x):.4f}".rstrip("0").rstrip(".")


def orbit_svg(series: OrbitSeries, rho=DEFAULT_RHO, eps=DEFAULT_EPS) -> str:
    """Deterministic SVG scatter of orbit midpoints with disk and grid."""
    rho = _as_fraction(rho)
    eps = _as_fraction(eps)
    if rho <= 0 or eps <= 0:
        raise ValueError("disk radius and cell size must be positive")
    lo = -float(rho + eps)
    size = 2 * float(rho + eps)
    steps = math.ceil(rho / eps)
    out = [
        '<svg xmlns="http://www.w3.org/2000/svg" width="480" height="480" '
        f'viewBox="{_svg_num(lo)} {_svg_num(lo)} {_svg_num(size)} {_svg_num(size)}">',
        f'<rect x="{_svg_num(lo)}" y="{_svg_num(lo)}" width="{_svg_num(size)}" '
        f'height="{_svg_num(size)}" fill="white"/>',
    ]
    for k in range(-steps, steps + 1):
        c = float(k * eps)
        for x1, y1, x2, y2 in (
            (c, lo, c, -lo),
            (lo, c, -lo, c),
        ):
            out.append(
                f'<line x1="{_svg_num(x1)}" y1="{_svg_num(y1)}" '
                f'x2="{_svg_num(x2)}" y2="{_svg_num(y2)}" '
                'stroke="#ddd" stroke-width="0.01"/>'
            )
    out.append(
        f'<circle cx="0" cy="0" r="{_svg_num(rho)}" fill="none" '
        'stroke="#444" stroke-width="0.02"/>'
    )
    for v in series.values:
        out.append(
            f'<circle cx="{_svg_num(v.re)}" cy="{_svg_num(-v.im)}" '
            f'r="{_svg_num(float(eps) / 8)}" fill="#1f6fb2"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
