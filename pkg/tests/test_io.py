import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdsynth import DiscretizationParams, DpmParams, FdCtmc, ModelError, ProtocolParams, RateModel
from fdsynth import gen_dpm, gen_protocol, prepare, synthesize
from fdsynth.io import dump_report, parse_delays, parse_model, resolve_delays, round_sig, serialize_model

MINIMAL = {
    "format": 1,
    "states": ["s0", "s1"],
    "rates": [["s0", "s1", 2.0]],
    "fd_states": [],
    "F": [],
    "costs": {"R": {"s0": 1.0, "s1": 0.0}},
    "initial": "s0",
    "targets": ["s1"],
}


def doc(**changes):
    d = json.loads(json.dumps(MINIMAL))
    d.update(changes)
    return json.dumps(d)


def assert_same(a, b):
    assert type(a) is type(b)
    assert a.states == b.states and a.fd_states == b.fd_states
    assert a.initial == b.initial and a.targets == b.targets
    mats = ("rates",) if isinstance(a, RateModel) else ("P",)
    for name in mats + ("F",):
        np.testing.assert_array_equal(getattr(a, name).toarray(), getattr(b, name).toarray())
    np.testing.assert_array_equal(a.costs.R, b.costs.R)
    for name in ("I_P", "I_F"):
        np.testing.assert_array_equal(getattr(a.costs, name).toarray(), getattr(b.costs, name).toarray())
    if isinstance(a, FdCtmc):
        assert a.lam == b.lam


def test_minimal_document():
    m = parse_model(doc())
    assert isinstance(m, RateModel) and m.states == ("s0", "s1")


@pytest.mark.parametrize(
    "model",
    [gen_protocol(ProtocolParams(1)), gen_protocol(ProtocolParams(2)), gen_dpm(DpmParams(3))],
)
def test_round_trip(model):
    assert_same(parse_model(serialize_model(model)), model)
    c, _ = prepare(model)
    assert_same(parse_model(serialize_model(c)), c)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.99), st.floats(0.05, 0.99), st.floats(0.1, 10.0), st.floats(0.0, 10.0))
def test_round_trip_property(p, q, lam, imp):
    m = gen_protocol(ProtocolParams(1, p=p, q=q, lam=lam, fd_impulse=imp))
    assert_same(parse_model(serialize_model(m)), m)
    c, _ = prepare(m)
    text = serialize_model(c)
    assert serialize_model(parse_model(text)) == text


def test_row_sum_error_cites_row():
    text = doc(rates=None)
    d = json.loads(text)
    del d["rates"]
    d.update({"lambda": 1.0, "P": [["s0", "s1", 0.8], ["s1", "s1", 1.0]]})
    with pytest.raises(ModelError) as e:
        parse_model(json.dumps(d))
    assert e.value.code == "not_stochastic" and "'s0'" in str(e.value)
    assert e.value.location == "/P/0"


@pytest.mark.parametrize(
    "text,code,location",
    [
        (doc(extra=1), "schema_violation", ""),
        (doc(format=2), "schema_violation", "/format"),
        (doc(rates=[["s0", "zz", 1.0]]), "dangling_state", "/rates/0/1"),
        (doc(targets=["zz"]), "dangling_state", "/targets/0"),
        (doc(initial="zz"), "dangling_state", "/initial"),
        (doc(rates=[["s0", "s1"]]), "schema_violation", "/rates/0"),
        (doc(**{"lambda": 1.0}), "schema_violation", ""),
        ("{not json", "bad_json", None),
    ],
)
def test_invalid_documents(text, code, location):
    with pytest.raises(ModelError) as e:
        parse_model(text)
    assert e.value.code == code
    assert e.value.location == location


def test_missing_rate_cost():
    with pytest.raises(ModelError) as e:
        parse_model(doc(costs={"R": {"s0": 1.0}}))
    assert e.value.code == "missing_cost"


def test_report_and_delays(proto1):
    r = synthesize(proto1, DiscretizationParams.from_epsilon(1e-2, 0.01, 10.0))
    rep = json.loads(dump_report(r, deterministic=True))
    assert rep["format"] == 1 and rep["mode"] == "symbolic"
    assert set(rep["delays"]) == {"A"} and rep["clock_off"] == ["C"]
    assert {"value", "epsilon", "delta", "tau_max", "kappa", "I", "iterations", "per_iteration"} <= set(rep)
    assert "millis" not in rep["per_iteration"][0]
    assert parse_delays(json.dumps(rep)) == rep["delays"]
    c, cls = prepare(proto1)
    d = resolve_delays(c, cls, rep["delays"])
    assert d["A"] == rep["delays"]["A"]
    with pytest.raises(ModelError):
        resolve_delays(c, cls, {"nope": 1.0})
    with pytest.raises(ModelError):
        parse_delays('{"delays": {"A": -1}}')


def test_nine_significant_digits():
    assert round_sig(3.14159265358979) == 3.14159265
    assert round_sig({"a": [1 / 3]}) == {"a": [0.333333333]}
    assert round_sig(float("inf")) is None
