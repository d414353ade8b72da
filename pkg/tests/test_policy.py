import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import retry_model, retry_value
from fdsynth import (
    CostStructure,
    DiscretizationParams,
    NumericError,
    ProtocolParams,
    RateModel,
    build_kernel,
    gen_protocol,
    policy_evaluate,
    prepare,
    synthesize,
)
from fdsynth.model import DelayFunction
from fdsynth.policy import _tie_choice, candidate_set, initial_value


def evaluate(c, cls, delays, params):
    k = build_kernel(c, params, cls)
    d = DelayFunction.from_mapping(c, cls, delays)
    return initial_value(k, c, d, policy_evaluate(k, c, d))


@pytest.mark.parametrize("d", [0.05, 0.4, 1.0, 3.0])
def test_evaluate_retry_closed_form(d):
    c, cls = prepare(retry_model())
    params = DiscretizationParams(0.01, 5.0, 1e-10, 1e-8)
    assert evaluate(c, cls, {"A": d}, params) == pytest.approx(retry_value(d), rel=1e-8)


def test_retry_prefers_longest_timeout():
    # value strictly decreases in d, so the grid maximum wins
    r = synthesize(retry_model(), DiscretizationParams.from_epsilon(1e-3, 0.01, 4.0))
    assert r.grid == {"A": 400}
    assert r.value_at_initial == pytest.approx(retry_value(4.0), rel=1e-6)


def test_proto1_matches_grid_bruteforce(proto1_c):
    c, cls = proto1_c
    params = DiscretizationParams.from_epsilon(1e-3, 0.01, 10.0)
    k = build_kernel(c, params, cls)
    vals = []
    for g in range(1, params.k_max + 1):
        d = DelayFunction.from_mapping(c, cls, {"A": params.tau(g)})
        vals.append(initial_value(k, c, d, policy_evaluate(k, c, d)))
    best = int(np.argmin(vals)) + 1
    for mode in ("explicit", "symbolic"):
        r = synthesize(c, params, mode, kernel=k)
        assert r.value_at_initial == pytest.approx(min(vals), rel=1e-9)
        assert abs(r.grid["A"] - best) <= 1 or vals[r.grid["A"] - 1] <= min(vals) * (1 + 1e-12)


def test_values_monotone_and_modes_agree(dpm2_c):
    c, _ = dpm2_c
    params = DiscretizationParams.from_epsilon(1e-3, 0.01, 10.0)
    rs = {m: synthesize(c, params, m) for m in ("explicit", "symbolic")}
    assert rs["explicit"].grid == rs["symbolic"].grid
    assert rs["explicit"].value_at_initial == rs["symbolic"].value_at_initial
    vals = [st.value for st in rs["symbolic"].per_iteration]
    assert all(b <= a * (1 + 1e-10) for a, b in zip(vals, vals[1:]))
    assert rs["symbolic"].kernel_evaluations < rs["explicit"].kernel_evaluations / 20


@settings(max_examples=15, deadline=None)
@given(st.floats(0.3, 0.99), st.floats(0.3, 0.99), st.floats(0.2, 5.0), st.floats(0.0, 5.0))
def test_modes_agree_on_random_protocols(p, q, lam, imp):
    m = gen_protocol(ProtocolParams(1, p=p, q=q, lam=lam, fd_impulse=imp))
    params = DiscretizationParams.from_epsilon(1e-2, 0.01, 5.0)
    c, cls = prepare(m)
    k = build_kernel(c, params, cls)
    a = synthesize(c, params, "explicit", kernel=k)
    b = synthesize(c, params, "symbolic", kernel=k)
    assert a.grid == b.grid
    assert a.value_at_initial == b.value_at_initial


def test_tie_rule():
    ks = np.array([1, 2, 3, 4])
    vals = np.array([2.0, 1.0, 1.0, 3.0])
    assert _tie_choice(ks, vals, 3)[0] == 3
    assert _tie_choice(ks, vals, 4)[0] == 2
    chosen, L = _tie_choice(ks, vals, 1)
    assert chosen == 2 and list(L) == [2, 3]


def test_candidate_set(proto1_c):
    c, cls = proto1_c
    k = build_kernel(c, DiscretizationParams.from_epsilon(1e-2, 0.1, 2.0), cls)
    cs = candidate_set(k, [0.55], current=12)
    assert cs.ks == (1, 4, 5, 6, 7, 12, 20)
    assert cs.provenance[0] == "interval-bound" and cs.provenance[-1] == "interval-bound"
    assert cs.provenance[cs.ks.index(12)] == "current"


def test_infinite_cost_detected():
    # B is absorbing and never reaches the target
    rates = sp.csr_array(np.array([[0, 1.0, 1.0], [0, 0, 0], [0, 0, 0]]))
    F = sp.csr_array(np.eye(3))
    costs = CostStructure.build(3, [1, 1, 0])
    m = RateModel(("A", "B", "G"), rates, ("A",), F, costs, "A", ("G",))
    with pytest.raises(NumericError) as e:
        synthesize(m, DiscretizationParams.from_epsilon(1e-2, 0.1, 1.0))
    assert e.value.code == "infinite_cost"


def test_initial_in_target_unrolls_one_step():
    rates = sp.csr_array(np.array([[0, 1.0], [2.0, 0]]))
    F = sp.csr_array(np.eye(2))
    I_F = sp.csr_array(np.array([[0, 0], [0, 3.0]]))
    costs = CostStructure.build(2, [1.0, 1.0], None, I_F)
    m = RateModel(("G", "A"), rates, ("A",), F, costs, "G", ("G",))
    r = synthesize(m, DiscretizationParams.from_epsilon(1e-4, 0.01, 2.0))
    assert r.initial_in_target
    # from G: sojourn cost 1/lam, then A with prob 1/2 (self-loop otherwise ends the run)
    assert r.value_at_initial == pytest.approx(0.5 + 0.5 * retry_value(2.0), rel=1e-6)
