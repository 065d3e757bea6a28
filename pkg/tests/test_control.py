import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tidelevy.control import (
    ControlProblem,
    CostSpec,
    check_admissibility,
    control_modes,
    evaluate_cost,
    evaluate_costs,
    optimize,
)
from tidelevy.grid import ContractError, DomainSpec, synthesize
from tidelevy.noise import default_noise
from tidelevy.operators import ModelParams
from tidelevy.stepper import SimConfig

DOM = DomainSpec.square(3)


def _problem(w_track=1.0, noise=None, seeds=(0,), m=2, bound=4.0):
    p = ModelParams(DOM, alpha=0.1, beta=0.3)
    tgt = np.zeros((2,) + DOM.modal_shape)
    tgt[0, 0, 0] = 0.5
    ref = synthesize(tgt, DOM)
    cost = CostSpec(w_track, 0.01, lambda t: ref)
    sim = SimConfig(dt=0.05, horizon_T=0.5)
    return ControlProblem(np.zeros((2,) + DOM.modal_shape), np.zeros(DOM.nodal_shape), m, bound,
                          cost, p, sim, noise, seeds)


def test_control_modes_ordered_by_eigenvalue():
    d = DomainSpec(2.0, 1.0, 3, 3, 7, 7)
    assert control_modes(d, 3) == [(0, 0), (1, 0), (2, 0)]
    with pytest.raises(ContractError):
        control_modes(d, 10)


def test_to_modal_layout():
    prob = _problem()
    U = np.array([1.0, 2.0, 3.0, 4.0])
    m = prob.to_modal(U)
    modes = control_modes(DOM, 2)
    assert m[0][modes[0]] == 1.0 and m[0][modes[1]] == 2.0
    assert m[1][modes[0]] == 3.0 and m[1][modes[1]] == 4.0
    assert np.count_nonzero(m) == 4


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 4, elements=st.floats(-1e3, 1e3)))
def test_projection_onto_ball(U):
    prob = _problem()
    P = prob.project(U)
    assert np.sum(P * P) <= prob.control_bound
    assert np.allclose(prob.project(P), P)
    if np.sum(U * U) <= prob.control_bound:
        assert np.array_equal(P, U)
    else:
        # radial: same direction
        assert np.allclose(P / np.linalg.norm(P), U / np.linalg.norm(U))


def test_cost_validation_and_admissibility():
    with pytest.raises(ValueError):
        CostSpec(1.0, 0.0)
    with pytest.raises(ValueError):
        CostSpec(-1.0, 0.1)
    out = check_admissibility(CostSpec(1.0, 0.05))
    assert out["satisfied"] and out["min_gap"] >= 0
    assert out["coercive"] and len(set(np.round(out["coercivity_ratios"], 12))) == 1


def test_regularisation_only_cost_is_closed_form():
    prob = _problem(w_track=0.0)
    U = np.array([0.5, -1.0, 0.25, 0.0])
    J, se = evaluate_cost(U, prob)
    assert J == pytest.approx(0.01 * np.sum(U * U) * 0.5) and se == 0.0


def test_tracking_cost_oracle_at_zero_control():
    # u stays zero, so the cost is w_track * T * ||u_ref||^2
    prob = _problem()
    J, _ = evaluate_cost(np.zeros(4), prob)
    assert J == pytest.approx(0.25 * 0.5, rel=1e-12)


def test_common_random_numbers_make_cost_deterministic():
    prob = _problem(noise=default_noise(DOM), seeds=(3, 4, 5))
    U = np.array([0.2, 0.1, -0.1, 0.0])
    a = evaluate_cost(U, prob)
    b = evaluate_cost(U, prob)
    assert a == b and a[1] > 0
    batched, _ = evaluate_costs(np.stack([U, 2 * U]), prob)
    assert batched[0] == a[0]


@pytest.mark.parametrize("method", ["fd_gradient", "coordinate_search"])
def test_optimizers_decrease_and_respect_budget(method):
    prob = _problem(noise=default_noise(DOM), seeds=(0, 1))
    tr = optimize(prob, method, budget=25)
    vals = tr.values()
    assert np.all(np.diff(vals) <= 0) and vals[-1] < vals[0]
    assert tr.evaluations <= 25
    assert tr.budget_exhausted
    assert np.sum(tr.best[0] ** 2) <= prob.control_bound
    d = tr.to_dict()
    assert d["method"] == method and d["best"]["J"] == vals[-1]


def test_optimizer_contracts():
    prob = _problem()
    with pytest.raises(ContractError):
        optimize(prob, "newton", 10)
    with pytest.raises(ContractError):
        optimize(prob, "fd_gradient", 0)
    with pytest.raises(ContractError):
        prob.to_modal(np.zeros(3))
