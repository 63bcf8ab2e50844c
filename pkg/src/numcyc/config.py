"""Run-wide configuration: precision ladder, tolerances, caps, seeds.

Every certified routine takes an optional RunConfig; the module-level
default can be tuned once per process.  Precision is expressed in bits.
The starting precision may be overridden with the environment variable
NUMCYC_PRECISION_BITS.
"""

from __future__ import annotations

import os
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import mpmath

_ENV_BITS = "NUMCYC_PRECISION_BITS"


def _start_bits() -> int:
    raw = os.environ.get(_ENV_BITS)
    if raw is None:
        return 128
    bits = int(raw)
    if bits < 16:
        raise ValueError(f"{_ENV_BITS} must be >= 16, got {bits}")
    return bits


@dataclass(frozen=True)
class RunConfig:
    """Knobs shared across modules.

    precision_bits      starting working precision
    max_precision_bits  ladder cap; exceeding it raises PrecisionUnreachable
    tolerance           default certification tolerance
    tie_threshold       numeric modulus comparisons closer than this are UNKNOWN
    scan_cap            largest exponent scanned by exhaustive scans
    relation_height     PSLQ coefficient height bound
    grid_cap            largest brute-force grid (phase argmin search)
    steer_growth        exponent schedule factor numerator (C = steer_growth/eps)
    exponent_cap        largest exponent a schedule may reach
    seed                seed for all sampled procedures
    """

    precision_bits: int = field(default_factory=_start_bits)
    max_precision_bits: int = 8192
    tolerance: float = 1e-12
    tie_threshold: float = 1e-9
    scan_cap: int = 10**6
    relation_height: int = 10**6
    grid_cap: int = 10**7
    steer_growth: float = 64.0
    exponent_cap: int = 10**500
    seed: int = 0

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    def ladder(self):
        """Yield precisions from the start, doubling, up to the cap."""
        bits = self.precision_bits
        while bits <= self.max_precision_bits:
            yield bits
            bits *= 2


DEFAULT = RunConfig()


@contextmanager
def working_precision(bits: int):
    """Temporarily set mpmath's working precision."""
    with mpmath.workprec(bits):
        yield
