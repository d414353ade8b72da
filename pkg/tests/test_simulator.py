import math

import numpy as np
import pytest
import scipy.sparse as sp

from fdsynth import (
    CostStructure,
    DiscretizationParams,
    ModelError,
    NumericError,
    RateModel,
    SimConfig,
    build_kernel,
    estimate,
    policy_evaluate,
    prepare,
)
from fdsynth.model import DelayFunction
from fdsynth.policy import initial_value
from fdsynth.simulator import sample_run


def one_step_model():
    rates = sp.csr_array(np.array([[0, 2.0], [0, 0]]))
    return prepare(RateModel(("A", "G"), rates, (), None, CostStructure.build(2, [1, 0]), "A", ("G",)))


def test_one_step_sojourn():
    c, cls = one_step_model()
    d = DelayFunction.from_mapping(c, cls, {})
    e = estimate(c, d, SimConfig(runs=100_000, seed=3))
    assert abs(e.mean - 0.5) < 4 * e.std_error
    assert sample_run(c, d, np.random.default_rng(0)) > 0


def first_segment_model(p=0.9, tau_cost=1.0):
    """Single-Bob protocol where every timeout leads to an extra absorbing target ``T`` at impulse 1."""
    states = ("A", "B", "C", "F", "T")
    ix = {s: i for i, s in enumerate(states)}
    R = np.zeros((5, 5))
    R[ix["A"], ix["B"]] = p
    R[ix["A"], ix["F"]] = 1 - p
    R[ix["B"], ix["C"]] = p
    R[ix["B"], ix["F"]] = 1 - p
    F = np.eye(5)
    I_F = np.zeros((5, 5))
    for s in "ABF":
        F[ix[s]] = 0
        F[ix[s], ix["T"]] = 1
        I_F[ix[s], ix["T"]] = tau_cost
    # rate costs must be positive off the targets; keep them negligible
    costs = CostStructure.build(5, [1e-12, 1e-12, 0, 1e-12, 0], None, sp.csr_array(I_F))
    m = RateModel(states, sp.csr_array(R), ("A", "B", "F"), sp.csr_array(F), costs, "A", ("C", "T"))
    return prepare(m)


def test_first_segment_reaches_C_closed_form():
    c, cls = first_segment_model()
    tau = 1.7
    d = DelayFunction.from_mapping(c, cls, {"A": tau})
    e = estimate(c, d, SimConfig(runs=1_000_000, seed=11))
    p_c = 0.81 * (1 - math.exp(-tau) * (1 + tau))
    assert abs(e.mean - (1 - p_c)) < 3 * e.std_error + 1e-9


@pytest.mark.parametrize("name", ["proto1_c", "dpm2_c"])
def test_agrees_with_policy_evaluation(name, request):
    c, cls = request.getfixturevalue(name)
    delays = {"A": 2.5} if "A" in cls.s_set else {"idle,0": 0.3, "sleep,0": 0.8}
    d = DelayFunction.from_mapping(c, cls, delays)
    k = build_kernel(c, DiscretizationParams(0.1, 3.0, 1e-9, 1e-8), cls)
    exact = initial_value(k, c, d, policy_evaluate(k, c, d))
    e = estimate(c, d, SimConfig(runs=300_000, seed=5))
    assert e.truncated_runs == 0
    assert abs(e.mean - exact) < 3 * e.std_error


def test_reproducible_and_seed_dependent(proto1_c):
    c, cls = proto1_c
    d = DelayFunction.from_mapping(c, cls, {"A": 3.0})
    a = estimate(c, d, SimConfig(runs=20_000, seed=1, batch=7_000))
    b = estimate(c, d, SimConfig(runs=20_000, seed=1, batch=7_000))
    other = estimate(c, d, SimConfig(runs=20_000, seed=2, batch=7_000))
    assert a == b
    assert a.mean != other.mean
    assert abs(a.mean - other.mean) < 6 * math.hypot(a.std_error, other.std_error)


def test_single_run_has_undefined_error(proto1_c):
    c, cls = proto1_c
    e = estimate(c, DelayFunction.from_mapping(c, cls, {"A": 3.0}), SimConfig(runs=1))
    assert math.isnan(e.std_error) and e.runs == 1


def test_caps(proto1_c):
    c, cls = proto1_c
    d = DelayFunction.from_mapping(c, cls, {"A": 3.0})
    with pytest.raises(NumericError) as err:
        estimate(c, d, SimConfig(runs=100, cost_cap=1e-6))
    assert err.value.code == "estimator_starved"
    with pytest.warns(UserWarning, match="truncated"):
        e = estimate(c, d, SimConfig(runs=2000, step_cap=3))
    assert 0 < e.truncated_runs < 2000 and e.runs + e.truncated_runs == 2000


def test_config_validation():
    with pytest.raises(ModelError):
        SimConfig(runs=0)
    with pytest.raises(ModelError):
        SimConfig(cost_cap=0.0)


def test_missing_delay_rejected(proto1_c):
    c, _ = proto1_c
    with pytest.raises(ModelError):
        estimate(c, DelayFunction({"C": math.inf}), SimConfig(runs=10))
