"""Versioned JSON documents for operators, pairs and certificates.

Every document carries a schema version; parsers reject unknown fields
and wrong versions, so a certificate written today replays byte for
byte tomorrow.  Angles and weight families serialize their construction
recipe, never evaluated digits: parsing re-runs the constructor, which
restores cancellation hooks that no list of numbers could carry.

Shift operators round-trip at the document level (dump(parse(doc)) ==
doc) and reproduce the same weights; their weight functions are
rebuilt from a closed registry of named families, so an ad-hoc shift
with an anonymous weight function is not serializable.
"""

import json
import os
import re
import tempfile
from fractions import Fraction
from functools import lru_cache
from typing import Optional

from .errors import SchemaError
from .exact_arith import (
    Angle,
    LacunaryAngle,
    RationalAngle,
    SymbolicAngle,
    log_angle,
)
from .operators import (
    DenseMatrix,
    DiagEntry,
    ExactDiagonal,
    NormalizedPair,
    OperatorSpec,
    OrbitSeries,
    PairHint,
    PolarEntry,
    ShiftOp,
    hilbert_pair,
)
from .towers import TowerData, TowerParams, build, weight_family
from .witness import (
    RadiusSchedule,
    SteerHit,
    SteeringResult,
    SteerPattern,
    SteerStep,
)

SCHEMA_VERSION = 1

_FRACTION_RE = re.compile(r"^-?\d+(/\d+)?$")


def _frac_str(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def _parse_frac(s, where: str) -> Fraction:
    if not isinstance(s, str) or not _FRACTION_RE.match(s):
        raise SchemaError(f"{where}: expected a fraction string, got {s!r}")
    return Fraction(s)


def _check_keys(doc: dict, where: str, required: set, optional: set = frozenset()):
    if not isinstance(doc, dict):
        raise SchemaError(f"{where}: expected an object, got {type(doc).__name__}")
    keys = set(doc)
    missing = required - keys
    if missing:
        raise SchemaError(f"{where}: missing fields {sorted(missing)}")
    unknown = keys - required - optional
    if unknown:
        raise SchemaError(f"{where}: unknown fields {sorted(unknown)}")


def _check_version(doc: dict, where: str):
    if doc.get("schema") != SCHEMA_VERSION:
        raise SchemaError(
            f"{where}: schema version {doc.get('schema')!r}, expected {SCHEMA_VERSION}"
        )


# ---------------------------------------------------------------------------
# angles


def _weights_to_json(meta: tuple) -> dict:
    if len(meta) == 1:
        return {"name": meta[0]}
    if len(meta) == 2 and meta[0] == "listed":
        return {
            "name": "listed",
            "targets": [[_frac_str(m), _frac_str(ph)] for m, ph in meta[1]],
        }
    raise SchemaError(f"weight family metadata {meta!r} is not serializable")


def _weights_from_json(doc: dict):
    _check_keys(doc, "weights", {"name"}, {"targets"})
    name = doc["name"]
    if name == "listed":
        targets = doc.get("targets")
        if not isinstance(targets, list) or not targets:
            raise SchemaError("weights: listed family needs a target list")
        pairs = []
        for row in targets:
            if not isinstance(row, list) or len(row) != 2:
                raise SchemaError("weights: each target is a [modulus, phase] pair")
            pairs.append((_parse_frac(row[0], "target"), _parse_frac(row[1], "target")))
        return weight_family("listed", pairs)
    if "targets" in doc:
        raise SchemaError(f"weights: family {name!r} takes no targets")
    try:
        return weight_family(name)
    except ValueError as e:
        raise SchemaError(str(e)) from None


def _weights_key(doc: dict) -> tuple:
    fam = _weights_from_json(doc)
    return fam.meta


@lru_cache(maxsize=32)
def _build_tower(p: int, meta: tuple, depth: int) -> TowerData:
    name = meta[0]
    targets = meta[1] if len(meta) > 1 else ()
    return build(TowerParams(p, weight_family(name, targets), depth))


def _family_to_json(family: tuple) -> dict:
    if not family:
        raise SchemaError("lacunary angle without construction metadata")
    role = family[0]
    if role in ("tower-return", "tower-steer"):
        _, p, meta, depth = family
        return {
            "role": role,
            "p": p,
            "depth": depth,
            "weights": _weights_to_json(meta),
        }
    if role == "sum":
        return {"role": "sum", "parts": [_family_to_json(f) for f in family[1:]]}
    raise SchemaError(f"lacunary role {role!r} is not serializable")


def _lacunary_from_json(doc: dict) -> LacunaryAngle:
    _check_keys(doc, "lacunary", {"role"}, {"p", "depth", "weights", "parts"})
    role = doc["role"]
    if role in ("tower-return", "tower-steer"):
        _check_keys(doc, "lacunary", {"role", "p", "depth", "weights"})
        p, depth = doc["p"], doc["depth"]
        if not (isinstance(p, int) and isinstance(depth, int)):
            raise SchemaError("lacunary: p and depth must be integers")
        data = _build_tower(p, _weights_key(doc["weights"]), depth)
        return data.tau if role == "tower-return" else data.u_angle
    if role == "sum":
        _check_keys(doc, "lacunary", {"role", "parts"})
        parts = doc["parts"]
        if not isinstance(parts, list) or len(parts) != 2:
            raise SchemaError("lacunary: sum takes exactly two parts")
        return _lacunary_from_json(parts[0]).merge(_lacunary_from_json(parts[1]))
    raise SchemaError(f"lacunary: unknown role {role!r}")


def angle_to_json(angle: Angle) -> dict:
    if isinstance(angle, RationalAngle):
        return {"rational": _frac_str(angle.value)}
    if isinstance(angle, LacunaryAngle):
        return {"lacunary": _family_to_json(angle.family)}
    if isinstance(angle, SymbolicAngle):
        if angle.log_arg is None:
            raise SchemaError(
                f"symbolic angle {angle.label!r} has no closed form to replay"
            )
        return {
            "symbolic": {
                "label": angle.label,
                "indep_class": angle.indep_class,
                "log_arg": _frac_str(angle.log_arg),
            }
        }
    raise SchemaError(f"cannot serialize angle {angle!r}")


def angle_from_json(doc: dict) -> Angle:
    _check_keys(doc, "angle", set(), {"rational", "lacunary", "symbolic"})
    if len(doc) != 1:
        raise SchemaError("angle: exactly one of rational/lacunary/symbolic")
    if "rational" in doc:
        return RationalAngle(_parse_frac(doc["rational"], "angle"))
    if "lacunary" in doc:
        return _lacunary_from_json(doc["lacunary"])
    body = doc["symbolic"]
    _check_keys(body, "symbolic angle", {"label", "log_arg"}, {"indep_class"})
    base = log_angle(_parse_frac(body["log_arg"], "log_arg"), body.get("indep_class"))
    if body["label"] != base.label:
        raise SchemaError(
            f"symbolic angle label {body['label']!r} does not match its closed form"
        )
    return base


# ---------------------------------------------------------------------------
# operators


def _qc_to_json(v) -> dict:
    return {"re": _frac_str(v[0]), "im": _frac_str(v[1])}


def _qc_from_json(doc: dict):
    _check_keys(doc, "entry", {"re", "im"})
    return (_parse_frac(doc["re"], "re"), _parse_frac(doc["im"], "im"))


def _entry_to_json(entry) -> dict:
    if isinstance(entry, PolarEntry):
        return {"radius": _frac_str(entry.radius), "angle": angle_to_json(entry.angle)}
    return _qc_to_json(entry)


def _entry_from_json(doc: dict):
    if not isinstance(doc, dict):
        raise SchemaError("entry: expected an object")
    if "radius" in doc:
        _check_keys(doc, "entry", {"radius", "angle"})
        return PolarEntry(_parse_frac(doc["radius"], "radius"), angle_from_json(doc["angle"]))
    return _qc_from_json(doc)


_SHIFT_WEIGHTS = ("constant", "harmonic_bump", "listed")


def named_shift(
    direction: str,
    weights: str,
    value=None,
    values=None,
    sup_bound=None,
) -> ShiftOp:
    """Shift with weights from the closed serializable registry.

    constant: |w_j| = value for all j; harmonic_bump: |w_j| = 1 + 1/|j|;
    listed: |w_j| cycles through `values`.
    """
    if weights == "constant":
        if value is None:
            raise ValueError("constant weights need a value")
        v = Fraction(value)
        if v <= 0:
            raise ValueError("weights must be positive")
        return ShiftOp(
            lambda j: v,
            kind=direction,
            name="constant",
            sup_bound=v,
            norm_formula=lambda n: v**n,
            params=(v,),
        )
    if weights == "harmonic_bump":
        return ShiftOp(
            lambda j: 1 + Fraction(1, abs(j)),
            kind=direction,
            name="harmonic_bump",
            sup_bound=Fraction(2),
            params=(),
        )
    if weights == "listed":
        if not values:
            raise ValueError("listed weights need at least one value")
        vals = tuple(Fraction(v) for v in values)
        if any(v <= 0 for v in vals):
            raise ValueError("weights must be positive")
        bound = Fraction(sup_bound) if sup_bound is not None else max(vals)
        return ShiftOp(
            lambda j: vals[(abs(j) - 1) % len(vals)],
            kind=direction,
            name="listed",
            sup_bound=bound,
            params=(vals,),
        )
    raise ValueError(f"unknown weight registry entry {weights!r}")


def _shift_to_json(spec: ShiftOp) -> dict:
    if spec.name not in _SHIFT_WEIGHTS:
        raise SchemaError(
            f"shift weights {spec.name!r} are not in the serializable registry"
        )
    body: dict = {"name": spec.name}
    if spec.name == "constant":
        body["value"] = _frac_str(spec.params[0])
    elif spec.name == "listed":
        body["values"] = [_frac_str(v) for v in spec.params[0]]
    out = {
        "schema": SCHEMA_VERSION,
        "kind": "shift",
        "direction": spec.kind,
        "weights": body,
    }
    if spec.sup_bound is not None:
        out["sup_bound"] = _frac_str(spec.sup_bound)
    return out


def _shift_from_json(doc: dict) -> ShiftOp:
    _check_keys(doc, "shift", {"schema", "kind", "direction", "weights"}, {"sup_bound"})
    body = doc["weights"]
    _check_keys(body, "shift weights", {"name"}, {"value", "values"})
    name = body["name"]
    kwargs = {}
    if name == "constant":
        kwargs["value"] = _parse_frac(body.get("value", ""), "shift value")
    elif name == "listed":
        vals = body.get("values")
        if not isinstance(vals, list) or not vals:
            raise SchemaError("shift: listed weights need a value list")
        kwargs["values"] = [_parse_frac(v, "shift value") for v in vals]
    elif name != "harmonic_bump":
        raise SchemaError(f"shift: unknown weight registry entry {name!r}")
    if "sup_bound" in doc:
        kwargs["sup_bound"] = _parse_frac(doc["sup_bound"], "sup_bound")
    try:
        spec = named_shift(doc["direction"], name, **kwargs)
    except ValueError as e:
        raise SchemaError(str(e)) from None
    if "sup_bound" in doc and name != "listed":
        declared = _parse_frac(doc["sup_bound"], "sup_bound")
        if declared != spec.sup_bound:
            raise SchemaError("shift: declared sup_bound contradicts the registry")
    return spec


def operator_to_json(spec: OperatorSpec) -> dict:
    if isinstance(spec, ExactDiagonal):
        return {
            "schema": SCHEMA_VERSION,
            "kind": "exact_diagonal",
            "entries": [
                {"radius": _frac_str(e.radius), "angle": angle_to_json(e.angle)}
                for e in spec.entries
            ],
            "hints": [
                {"i": h.i, "j": h.j, "offset": angle_to_json(h.offset)}
                for h in spec.pairs
            ],
            "label": spec.label,
        }
    if isinstance(spec, DenseMatrix):
        return {
            "schema": SCHEMA_VERSION,
            "kind": "dense",
            "rows": [[_entry_to_json(e) for e in row] for row in spec.rows],
            "label": spec.label,
        }
    if isinstance(spec, ShiftOp):
        return _shift_to_json(spec)
    raise SchemaError(f"cannot serialize operator {type(spec).__name__}")


def operator_from_json(doc: dict) -> OperatorSpec:
    if not isinstance(doc, dict):
        raise SchemaError("operator: expected an object")
    _check_version(doc, "operator")
    kind = doc.get("kind")
    if kind == "exact_diagonal":
        _check_keys(
            doc, "operator", {"schema", "kind", "entries"}, {"hints", "label"}
        )
        entries = doc["entries"]
        if not isinstance(entries, list) or not entries:
            raise SchemaError("exact_diagonal: needs a nonempty entry list")
        diag = []
        for e in entries:
            _check_keys(e, "diagonal entry", {"radius", "angle"})
            diag.append(
                DiagEntry(_parse_frac(e["radius"], "radius"), angle_from_json(e["angle"]))
            )
        hints = []
        for h in doc.get("hints", []):
            _check_keys(h, "pair hint", {"i", "j", "offset"})
            if not (isinstance(h["i"], int) and isinstance(h["j"], int)):
                raise SchemaError("pair hint: indices must be integers")
            hints.append(PairHint(h["i"], h["j"], angle_from_json(h["offset"])))
        return ExactDiagonal(tuple(diag), tuple(hints), label=doc.get("label", ""))
    if kind == "dense":
        _check_keys(doc, "operator", {"schema", "kind", "rows"}, {"label"})
        rows = doc["rows"]
        if not isinstance(rows, list) or not rows:
            raise SchemaError("dense: needs a nonempty row list")
        parsed = tuple(
            tuple(_entry_from_json(e) for e in row) for row in rows
        )
        return DenseMatrix(parsed, label=doc.get("label", ""))
    if kind == "shift":
        return _shift_from_json(doc)
    raise SchemaError(f"operator: unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# pairs


def pair_to_json(pair: NormalizedPair) -> dict:
    if pair.kind != "hilbert":
        raise SchemaError(f"pair kind {pair.kind!r} is not serializable")
    return {
        "schema": SCHEMA_VERSION,
        "kind": "hilbert_pair",
        "x": [_qc_to_json(v) for v in pair.x_raw],
    }


def pair_from_json(doc: dict) -> NormalizedPair:
    _check_version(doc, "pair")
    _check_keys(doc, "pair", {"schema", "kind", "x"})
    if doc["kind"] != "hilbert_pair":
        raise SchemaError(f"pair: unknown kind {doc['kind']!r}")
    x = doc["x"]
    if not isinstance(x, list) or not x:
        raise SchemaError("pair: needs a nonempty coordinate list")
    return hilbert_pair([_qc_from_json(v) for v in x])


# ---------------------------------------------------------------------------
# steering certificates


def steering_to_json(result: SteeringResult) -> dict:
    sched: dict = {"base": _frac_str(result.schedule.base)}
    if result.schedule.linear:
        sched["linear"] = True
    if result.schedule.minor is not None:
        sched["minor"] = _frac_str(result.schedule.minor)
    out: dict = {
        "schema": SCHEMA_VERSION,
        "kind": "steering",
        "z_angle": _frac_str(result.z_angle),
        "w_angle": _frac_str(result.w_angle),
        "schedule": sched,
        "hits": [
            {
                "n": str(h.n),
                "target": [h.target.real, h.target.imag],
                "residual": h.residual,
                "tolerance": h.tolerance,
            }
            for h in result.hits
        ],
        "steps": [
            {
                "index": s.index,
                "n": str(s.n),
                "grid_denominator": s.grid_denominator,
                "drift_z": _frac_str(s.drift_z),
                "drift_w": _frac_str(s.drift_w),
            }
            for s in result.schedule_log
        ],
    }
    if result.pattern.folded is not None:
        out["folded"] = list(result.pattern.folded)
    return out


def _parse_big_int(s, where: str) -> int:
    if not isinstance(s, str) or not re.match(r"^-?\d+$", s):
        raise SchemaError(f"{where}: expected a decimal integer string, got {s!r}")
    return int(s)


def steering_from_json(doc: dict) -> SteeringResult:
    _check_version(doc, "steering")
    _check_keys(
        doc,
        "steering",
        {"schema", "kind", "z_angle", "w_angle", "schedule", "hits", "steps"},
        {"folded"},
    )
    if doc["kind"] != "steering":
        raise SchemaError(f"steering: unknown kind {doc['kind']!r}")
    sched = doc["schedule"]
    _check_keys(sched, "schedule", {"base"}, {"linear", "minor"})
    schedule = RadiusSchedule(
        _parse_frac(sched["base"], "base"),
        linear=bool(sched.get("linear", False)),
        minor=_parse_frac(sched["minor"], "minor") if "minor" in sched else None,
    )
    hits = []
    for h in doc["hits"]:
        _check_keys(h, "hit", {"n", "target", "residual", "tolerance"})
        t = h["target"]
        if not isinstance(t, list) or len(t) != 2:
            raise SchemaError("hit: target is a [re, im] pair")
        hits.append(
            SteerHit(
                _parse_big_int(h["n"], "hit n"),
                complex(t[0], t[1]),
                float(h["residual"]),
                float(h["tolerance"]),
            )
        )
    steps = []
    for s in doc["steps"]:
        _check_keys(s, "step", {"index", "n", "grid_denominator", "drift_z", "drift_w"})
        steps.append(
            SteerStep(
                s["index"],
                _parse_big_int(s["n"], "step n"),
                s["grid_denominator"],
                _parse_frac(s["drift_z"], "drift_z"),
                _parse_frac(s["drift_w"], "drift_w"),
            )
        )
    folded = doc.get("folded")
    pattern = SteerPattern(tuple(folded) if folded is not None else None)
    return SteeringResult(
        _parse_frac(doc["z_angle"], "z_angle"),
        _parse_frac(doc["w_angle"], "w_angle"),
        tuple(hits),
        tuple(steps),
        pattern,
        schedule,
    )


# ---------------------------------------------------------------------------
# tower artifacts


def _exp_to_json(e):
    if isinstance(e, int):
        return str(e)
    return {"tower": repr(e)}


def tower_to_json(data: TowerData) -> dict:
    levels = []
    for k in range(1, data.depth + 1):
        rung = data.rung_int(k)
        tail = data.tail_at(k)
        steer = data.u_tails[k - 1]
        levels.append(
            {
                "k": k,
                "exponent": _exp_to_json(data.exp_at(k)),
                "rung": str(rung) if rung is not None else None,
                "coefficient": str(data.coeff_at(k)),
                "whole_part": (
                    str(data.whole_parts[k - 1])
                    if data.whole_parts[k - 1] is not None
                    else None
                ),
                "phase_pick": str(data.phase_picks[k - 1]),
                "weight": [_frac_str(w) for w in data.weight_at(k)],
                "tail": {"prefix": _frac_str(tail.prefix), "bits": tail.rem_bits},
                "steer_tail": {"prefix": _frac_str(steer.prefix), "bits": steer.rem_bits},
            }
        )
    return {
        "schema": SCHEMA_VERSION,
        "kind": "tower",
        "p": data.p,
        "depth": data.depth,
        "weights": _weights_to_json(data.params.family.meta),
        "levels": levels,
    }


def tower_from_json(doc: dict) -> TowerData:
    """Rebuild from the recipe and insist the document matches it."""
    _check_version(doc, "tower")
    _check_keys(
        doc, "tower", {"schema", "kind", "p", "depth", "weights", "levels"}
    )
    if doc["kind"] != "tower":
        raise SchemaError(f"tower: unknown kind {doc['kind']!r}")
    p, depth = doc["p"], doc["depth"]
    if not (isinstance(p, int) and isinstance(depth, int)):
        raise SchemaError("tower: p and depth must be integers")
    data = _build_tower(p, _weights_key(doc["weights"]), depth)
    if tower_to_json(data) != doc:
        raise SchemaError("tower: level data does not match its own recipe")
    return data


# ---------------------------------------------------------------------------
# orbit dumps and files


def orbit_csv(series: OrbitSeries) -> str:
    lines = ["n,re,im,rad"]
    for n, v in zip(series.indices, series.values):
        lines.append(f"{n},{float(v.re)!r},{float(v.im)!r},{float(v.rad)!r}")
    return "\n".join(lines) + "\n"


def dump_json(doc: dict, path: str) -> None:
    """Write atomically: a crash never leaves a half document behind."""
    text = json.dumps(doc, indent=2, allow_nan=False) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_json(path: str) -> dict:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    return doc
