"""JSON schema: strict parsing, round trips, atomic writes.

The round-trip invariant is the contract under test: dump then parse
gives back an equal object, and parse then dump reproduces the byte
content.  Rejection tests poke one malformed field at a time.
"""

import copy
import csv
import io
import json
import math
import os
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from numcyc.errors import SchemaError
from numcyc.exact_arith import RationalAngle, log_angle
from numcyc.operators import (
    DenseMatrix,
    DiagEntry,
    ExactDiagonal,
    PolarEntry,
    hilbert_pair,
    orbit,
)
from numcyc.serialize import (
    SCHEMA_VERSION,
    angle_from_json,
    angle_to_json,
    dump_json,
    load_json,
    named_shift,
    operator_from_json,
    operator_to_json,
    orbit_csv,
    pair_from_json,
    pair_to_json,
    steering_from_json,
    steering_to_json,
    tower_from_json,
    tower_to_json,
)
from numcyc.towers import TowerParams, build, make_diag2, weight_family
from numcyc.witness import TargetList, steering_residual, torus_steer

# ---------------------------------------------------------------------------
# angles


def test_rational_angle_round_trip():
    a = RationalAngle(F(-7, 12))
    doc = angle_to_json(a)
    assert doc == {"rational": "-7/12"}
    assert angle_from_json(doc) == a


def test_symbolic_angle_round_trip():
    a = log_angle(3, "logs_of_primes")
    doc = angle_to_json(a)
    assert doc["symbolic"]["log_arg"] == "3/1"
    assert angle_from_json(doc) == a


def test_symbolic_angle_without_closed_form_rejected():
    from numcyc.exact_arith import SymbolicAngle
    from mpmath import mpf

    a = SymbolicAngle("measured", lambda bits: mpf(1) / 3)
    with pytest.raises(SchemaError):
        angle_to_json(a)


def test_lacunary_angle_round_trip_restores_hook():
    data = build(TowerParams(3, weight_family("ones"), 3))
    doc = angle_to_json(data.tau)
    back = angle_from_json(doc)
    assert back == data.tau
    assert back.cancellation_hook is not None


def test_merged_lacunary_round_trip():
    data = build(TowerParams(3, weight_family("spiral"), 3))
    merged = data.u_angle.merge(data.tau)
    assert angle_from_json(angle_to_json(merged)) == merged


def test_bare_lacunary_rejected():
    from numcyc.exact_arith import LacunaryAngle

    with pytest.raises(SchemaError):
        angle_to_json(LacunaryAngle(3, (1,), (2,)))


def test_angle_requires_exactly_one_variant():
    with pytest.raises(SchemaError):
        angle_from_json({"rational": "1/2", "symbolic": {}})
    with pytest.raises(SchemaError):
        angle_from_json({})
    with pytest.raises(SchemaError):
        angle_from_json({"spin": "1/2"})


def test_fraction_strings_are_strict():
    for bad in ("1.5", "2/0x3", "", "a/b", 3, "1/2/3"):
        with pytest.raises(SchemaError):
            angle_from_json({"rational": bad})


# ---------------------------------------------------------------------------
# operators


def sample_diag() -> ExactDiagonal:
    return ExactDiagonal(
        (
            DiagEntry(F(2), RationalAngle(F(1, 3))),
            DiagEntry(F(2), log_angle(5, "logs_of_primes")),
        ),
        label="sample",
    )


def test_exact_diagonal_round_trip():
    op = sample_diag()
    doc = operator_to_json(op)
    assert doc["kind"] == "exact_diagonal"
    assert operator_from_json(doc) == op
    assert operator_to_json(operator_from_json(doc)) == doc


def test_tower_diagonal_round_trip_with_hints():
    data = build(TowerParams(3, weight_family("ones"), 3))
    op, _ = make_diag2(data)
    back = operator_from_json(operator_to_json(op))
    assert back == op
    assert back.pairs[0].offset.cancellation_hook is not None


def test_dense_matrix_round_trip():
    op = DenseMatrix(
        (
            (PolarEntry(F(2), log_angle(2, "logs_of_primes")), (F(1), F(0))),
            ((F(0), F(0)), PolarEntry(F(2), log_angle(3, "logs_of_primes"))),
        ),
        label="upper",
    )
    assert operator_from_json(operator_to_json(op)) == op


def test_shift_round_trip_document_and_weights():
    for spec in (
        named_shift("backward", "constant", value=2),
        named_shift("backward", "harmonic_bump"),
        named_shift("bilateral", "listed", values=[F(1, 2), 3]),
    ):
        doc = operator_to_json(spec)
        back = operator_from_json(doc)
        assert operator_to_json(back) == doc
        assert back.kind == spec.kind and back.sup_bound == spec.sup_bound
        assert all(back.weight_fn(j) == spec.weight_fn(j) for j in range(1, 40))


def test_adhoc_shift_rejected():
    from numcyc.operators import ShiftOp

    with pytest.raises(SchemaError):
        operator_to_json(ShiftOp(lambda j: F(1)))


def test_operator_rejects_unknown_fields_and_versions():
    doc = operator_to_json(sample_diag())
    for mutate in (
        lambda d: d.update(extra=1),
        lambda d: d.update(schema=SCHEMA_VERSION + 1),
        lambda d: d.pop("schema"),
        lambda d: d.update(kind="sparse"),
        lambda d: d["entries"][0].update(phase="1/2"),
        lambda d: d["entries"][0]["angle"].update(degrees=60),
    ):
        bad = copy.deepcopy(doc)
        mutate(bad)
        with pytest.raises(SchemaError):
            operator_from_json(bad)


def test_shift_sup_bound_contradiction_rejected():
    doc = operator_to_json(named_shift("backward", "constant", value=2))
    doc["sup_bound"] = "3/1"
    with pytest.raises(SchemaError):
        operator_from_json(doc)


@given(
    st.lists(
        st.tuples(
            st.fractions(min_value=F(1, 4), max_value=4),
            st.fractions(min_value=-2, max_value=2),
        ),
        min_size=1,
        max_size=4,
    )
)
@settings(max_examples=40, deadline=None)
def test_random_rational_diagonals_round_trip(entries):
    op = ExactDiagonal(
        tuple(DiagEntry(r, RationalAngle(a)) for r, a in entries)
    )
    doc = operator_to_json(op)
    assert operator_from_json(doc) == op
    assert json.loads(json.dumps(doc)) == doc


# ---------------------------------------------------------------------------
# pairs


def test_hilbert_pair_round_trip():
    pair = hilbert_pair([1, (F(1, 2), F(-1, 3)), 0])
    assert pair_from_json(pair_to_json(pair)) == pair


def test_non_hilbert_pair_rejected():
    pair = hilbert_pair([1, 1]).scaled_functional((F(2), F(0)))
    with pytest.raises(SchemaError):
        pair_to_json(pair)


# ---------------------------------------------------------------------------
# steering certificates


def steer_result():
    targets = TargetList.uniform([complex(j, 1 - j) for j in range(4)], 1e-6)
    return torus_steer(None, None, targets)


def test_steering_round_trip_replays_identically():
    from numcyc.witness import RadiusSchedule, SteerPattern

    result = torus_steer(
        RadiusSchedule(F(2)),
        SteerPattern(),
        TargetList.uniform([complex(j, 1 - j) for j in range(4)], 1e-6),
    )
    back = steering_from_json(steering_to_json(result))
    assert back == result
    for h_old, h_new in zip(result.hits, back.hits):
        r_old = steering_residual(result, h_old)
        r_new = steering_residual(back, h_new)
        assert r_old == r_new


def test_steering_rejects_tampered_step():
    from numcyc.witness import RadiusSchedule, SteerPattern

    result = torus_steer(
        RadiusSchedule(F(2)),
        SteerPattern(),
        TargetList.uniform([complex(1, 1)], 1e-6),
    )
    doc = steering_to_json(result)
    doc["steps"][0]["speed"] = 9
    with pytest.raises(SchemaError):
        steering_from_json(doc)


# ---------------------------------------------------------------------------
# tower artifacts


def test_tower_document_round_trip():
    data = build(TowerParams(3, weight_family("ones"), 4))
    doc = tower_to_json(data)
    assert doc["levels"][1]["whole_part"] == "83"  # 3^4 + 2, odd, not divisible by 3
    assert tower_from_json(doc) == data


def test_tower_exponents_are_decimal_strings():
    data = build(TowerParams(3, weight_family("ones"), 4))
    doc = tower_to_json(data)
    exps = [lvl["exponent"] for lvl in doc["levels"]]
    assert exps[:3] == ["1", "5", "250"]
    assert int(exps[3]) == 250 + 3 + 3**250


def test_tower_document_tamper_rejected():
    data = build(TowerParams(3, weight_family("ones"), 3))
    doc = tower_to_json(data)
    doc["levels"][0]["coefficient"] = "7"
    with pytest.raises(SchemaError):
        tower_from_json(doc)


def test_listed_family_round_trip():
    fam = weight_family("listed", [(F(1, 2), F(1, 4)), (2, 1)])
    data = build(TowerParams(3, fam, 2))
    assert tower_from_json(tower_to_json(data)) == data


# ---------------------------------------------------------------------------
# orbit dumps and files


def test_orbit_csv_columns_parse_back():
    op = sample_diag()
    series = orbit(op, hilbert_pair([1, 1]), range(8), 1e-9)
    text = orbit_csv(series)
    rows = list(csv.DictReader(io.StringIO(text)))
    assert [r["n"] for r in rows] == [str(n) for n in range(8)]
    for r, v in zip(rows, series.values):
        assert float(r["re"]) == float(v.re)
        assert float(r["im"]) == float(v.im)
        assert float(r["rad"]) == float(v.rad)
        assert float(r["rad"]) <= series.tol


def test_dump_and_load_json_atomic(tmp_path):
    path = str(tmp_path / "op.json")
    doc = operator_to_json(sample_diag())
    dump_json(doc, path)
    assert load_json(path) == doc
    assert [p for p in os.listdir(tmp_path) if p.endswith(".tmp")] == []
    dump_json({"schema": 1}, path)  # overwrite in place
    assert load_json(path) == {"schema": 1}


def test_load_json_rejects_garbage(tmp_path):
    path = str(tmp_path / "bad.json")
    with open(path, "w") as f:
        f.write("{nope")
    with pytest.raises(SchemaError):
        load_json(path)
    with open(path, "w") as f:
        f.write("[1, 2]")
    with pytest.raises(SchemaError):
        load_json(path)
