"""JSON model, delay and report files.

A model document looks like::

    {"format": 1, "states": ["A", "C"], "rates": [["A", "C", 2.0]],
     "fd_states": ["A"], "F": [["A", "A", 1.0]],
     "costs": {"R": {"A": 1, "C": 1}, "I_F": [["A", "A", 1.0]]},
     "initial": "A", "targets": ["C"]}

with either ``rates`` or ``lambda`` plus ``P``. Matrices are lists of
``[from, to, value]`` triples; absent entries are zero.
"""
from __future__ import annotations

import json
import math
from typing import Any

import jsonschema
import numpy as np
import scipy.sparse as sp

from .errors import ModelError
from .model import CostStructure, DelayFunction, FdCtmc, RateModel

FORMAT = 1
SIG_DIGITS = 9

_TRIPLES = {
    "type": "array",
    "items": {
        "type": "array",
        "prefixItems": [{"type": "string"}, {"type": "string"}, {"type": "number"}],
        "minItems": 3,
        "maxItems": 3,
    },
}

MODEL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["format", "states", "fd_states", "F", "costs", "initial", "targets"],
    "properties": {
        "format": {"const": FORMAT},
        "states": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "lambda": {"type": "number", "exclusiveMinimum": 0},
        "rates": _TRIPLES,
        "P": _TRIPLES,
        "fd_states": {"type": "array", "items": {"type": "string"}},
        "F": _TRIPLES,
        "costs": {
            "type": "object",
            "additionalProperties": False,
            "required": ["R"],
            "properties": {
                "R": {"type": "object", "additionalProperties": {"type": "number"}},
                "I_P": _TRIPLES,
                "I_F": _TRIPLES,
            },
        },
        "initial": {"type": "string"},
        "targets": {"type": "array", "items": {"type": "string"}, "minItems": 1},
    },
    "oneOf": [
        {"required": ["rates"], "not": {"anyOf": [{"required": ["lambda"]}, {"required": ["P"]}]}},
        {"required": ["lambda", "P"], "not": {"required": ["rates"]}},
    ],
}

DELAYS_SCHEMA = {
    "type": "object",
    "required": ["delays"],
    "properties": {
        "format": {"const": FORMAT},
        "delays": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
    },
}


def _pointer(path) -> str:
    return "/" + "/".join(str(p).replace("~", "~0").replace("/", "~1") for p in path) if path else ""


def _validate(doc, schema, what: str) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        loc = _pointer(e.absolute_path)
        raise ModelError(f"{what}: {e.message} at '{loc or '/'}'", code="schema_violation", location=loc)


def _loads(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelError(f"{what} is not valid JSON: {e}", code="bad_json") from None


def _matrix(triples, key, idx, n) -> sp.csr_array:
    rows, cols, vals = [], [], []
    for k, (a, b, v) in enumerate(triples or ()):
        for pos, s in ((0, a), (1, b)):
            if s not in idx:
                raise ModelError(
                    f"undeclared state {s!r}", code="dangling_state", location=f"{key}/{k}/{pos}"
                )
        rows.append(idx[a])
        cols.append(idx[b])
        vals.append(float(v))
    return sp.csr_array((vals, (rows, cols)), shape=(n, n))


def _row_location(doc, key: str, state: str) -> str:
    for k, (a, _b, _v) in enumerate(doc.get(key, ())):
        if a == state:
            return f"/{key}/{k}"
    return f"/{key}"


def parse_model(text: str) -> RateModel | FdCtmc:
    """Parse and validate a model document; ``lambda``+``P`` yields an FdCtmc."""
    doc = _loads(text, "model")
    _validate(doc, MODEL_SCHEMA, "model")
    states = doc["states"]
    if len(set(states)) != len(states):
        dup = next(s for s in states if states.count(s) > 1)
        raise ModelError(f"duplicate state {dup!r}", code="duplicate_state", location="/states")
    idx = {s: i for i, s in enumerate(states)}
    n = len(states)
    for key in ("fd_states", "targets"):
        for k, s in enumerate(doc[key]):
            if s not in idx:
                raise ModelError(f"undeclared state {s!r}", code="dangling_state", location=f"/{key}/{k}")
    if doc["initial"] not in idx:
        raise ModelError(f"undeclared state {doc['initial']!r}", code="dangling_state", location="/initial")
    costs = doc["costs"]
    for s in costs["R"]:
        if s not in idx:
            raise ModelError(f"undeclared state {s!r}", code="dangling_state", location=f"/costs/R/{s}")
    missing = [s for s in states if s not in costs["R"]]
    if missing:
        raise ModelError(f"no rate cost for {missing[0]!r}", code="missing_cost", location="/costs/R")
    cs = CostStructure.build(
        n,
        [costs["R"][s] for s in states],
        _matrix(costs.get("I_P"), "/costs/I_P", idx, n),
        _matrix(costs.get("I_F"), "/costs/I_F", idx, n),
    )
    F = _matrix(doc["F"], "/F", idx, n)
    try:
        if "rates" in doc:
            rates = _matrix(doc["rates"], "/rates", idx, n)
            return RateModel(states, rates, doc["fd_states"], F, cs, doc["initial"], doc["targets"])
        P = _matrix(doc["P"], "/P", idx, n)
        return FdCtmc(states, doc["lambda"], P, doc["fd_states"], F, cs, doc["initial"], doc["targets"])
    except ModelError as e:
        # rewrite "/<matrix>/<state>" locations into pointers at the first triple of that row
        loc = e.location
        if loc and loc.count("/") == 2:
            key, state = loc[1:].split("/")
            if key in ("P", "F", "rates") and state in idx:
                e.location = _row_location(doc, key, state)
        raise


def _triples(m: sp.csr_array, states, skip_rows=()) -> list:
    coo = sp.coo_array(m)
    order = np.lexsort((coo.col, coo.row))
    return [
        [states[coo.row[k]], states[coo.col[k]], float(coo.data[k])]
        for k in order
        if coo.data[k] != 0 and coo.row[k] not in skip_rows
    ]


def model_to_dict(m: RateModel | FdCtmc) -> dict:
    states = list(m.states)
    fd = set(m.fd_states)
    non_fd = {i for i, s in enumerate(states) if s not in fd}
    doc: dict[str, Any] = {"format": FORMAT, "states": states}
    if isinstance(m, RateModel):
        doc["rates"] = _triples(m.rates, states)
    else:
        doc["lambda"] = m.lam
        doc["P"] = _triples(m.P, states)
    doc["fd_states"] = list(m.fd_states)
    doc["F"] = _triples(m.F, states, skip_rows=non_fd)  # identity rows are implicit
    doc["costs"] = {
        "R": {s: float(r) for s, r in zip(states, m.costs.R)},
        "I_P": _triples(m.costs.I_P, states),
        "I_F": _triples(m.costs.I_F, states),
    }
    doc["initial"] = m.initial
    doc["targets"] = list(m.targets)
    return doc


def serialize_model(m: RateModel | FdCtmc) -> str:
    return json.dumps(model_to_dict(m), indent=1)


# ------------------------------------------------------------ delays/report


def parse_delays(text: str) -> dict:
    """Timeouts from a delays file or a synthesis report (both carry ``delays``)."""
    doc = _loads(text, "delays file")
    _validate(doc, DELAYS_SCHEMA, "delays file")
    return {s: float(v) for s, v in doc["delays"].items()}


def resolve_delays(c: FdCtmc, cls, delays: dict) -> DelayFunction:
    for s in delays:
        if s not in c.index:
            raise ModelError(f"delay given for unknown state {s!r}", code="dangling_state", location=f"/delays/{s}")
    known = {s: t for s, t in delays.items() if s in c.fd_states}
    return DelayFunction.from_mapping(c, cls, known)


def round_sig(v):
    if isinstance(v, float):
        return float(f"{v:.{SIG_DIGITS}g}") if math.isfinite(v) else None
    if isinstance(v, dict):
        return {k: round_sig(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [round_sig(x) for x in v]
    if isinstance(v, np.generic):
        return round_sig(v.item())
    return v


def report_to_dict(r, epsilon: float | None = None) -> dict:
    p = r.params
    doc = {
        "format": FORMAT,
        "mode": r.mode,
        "delays": r.delays.finite(),
        "clock_off": sorted(s for s, t in r.delays.delays.items() if not math.isfinite(t)),
        "value": r.value_at_initial,
        "initial_in_target": r.initial_in_target,
        "epsilon": p.epsilon if epsilon is None else epsilon,
        "delta": p.delta,
        "tau_max": p.tau_max,
        "kappa": p.kappa,
        "I": r.trunc_index,
        "iterations": r.iterations,
        "kernel_evaluations": r.kernel_evaluations,
        "per_iteration": [
            {
                "value": st.value,
                "max_degree": st.max_degree,
                "num_roots": st.num_roots,
                "candidates": st.candidates,
                "millis": st.millis,
            }
            for st in r.per_iteration
        ],
    }
    return round_sig(doc)


def dump_report(r, deterministic: bool = False) -> str:
    """Report JSON; ``deterministic`` drops wall-clock fields."""
    doc = report_to_dict(r)
    if deterministic:
        for st in doc["per_iteration"]:
            st.pop("millis")
    return json.dumps(doc, indent=1)
