import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tidelevy.diagnostics import (
    cadlag_modulus,
    energy_constants,
    energy_estimate_check,
    energy_path_terms,
    fit_power_law,
    h1_blowup_probe,
    hminus1_distances,
    increment_moments,
    lp_energy_check,
    martingale_mean_check,
    modulus_bruteforce,
    modulus_from_distances,
    pair_stability_check,
    probe_admissible,
    stability_bound,
    tightness_probe,
)
from tidelevy.grid import ContractError, DomainSpec, random_modal
from tidelevy.noise import JumpSpec, NoiseModel, WienerSpec, default_noise
from tidelevy.operators import ModelParams
from tidelevy.stepper import SimConfig, TrajectoryRecord, simulate_ensemble, simulate_pairs

DOM = DomainSpec.square(4)


def _params(**kw):
    depth = 1.0 + 0.5 * DOM.x1[:, None] + 0.25 * DOM.x2[None, :]
    w0 = np.zeros((2,) + DOM.nodal_shape)
    w0[0] = 0.05
    base = dict(alpha=0.05, beta=0.5, g=1.0, r=0.1, depth=depth, background_flow=lambda t: w0)
    base.update(kw)
    return ModelParams(DOM, **base)


def _u0():
    u = np.zeros((2,) + DOM.modal_shape)
    u[0, 0, 0] = 0.5
    return u


@pytest.fixture(scope="module")
def ensemble():
    p = _params()
    noise = default_noise(DOM)
    c = SimConfig(dt=0.01, horizon_T=0.5, record_stride=5, seed=1)
    return p, noise, simulate_ensemble(_u0(), None, p, c, noise, 32)


def test_energy_constants_frozen():
    p = _params()
    noise = default_noise(DOM)
    k = energy_constants(p, noise, 1.0, 4.0, 4.0)
    K = noise.K
    C = max(1 + p.M + 0.1 / 1.0, 2 * 1.0 / 0.05 + 2 * 1.75**2 / 0.05 + p.M)
    assert k["C"] == pytest.approx(C)
    assert k["C_prime"] == pytest.approx(2 * (C + 32 * K**2 + 3 * K))
    assert k["C_dprime"] == pytest.approx(2 * (32 * K**2 + 3 * K))


def test_energy_check_assembles_bound(ensemble):
    p, noise, trajs = ensemble
    rep = energy_estimate_check(trajs, p, noise)
    k = rep.constants
    T = 0.5
    D = 2 * 0.1 * k["int_w0_L4_4"] + 0 + k["C_dprime"] * T + 2 * 0.25
    assert k["data_D"] == pytest.approx(D)
    assert rep.gronwall_bound == pytest.approx(D * math.exp(k["C_prime"] * T))
    assert rep.satisfied and rep.recompute_satisfied()
    sup_e, diss = energy_path_terms(trajs, p.alpha)
    assert rep.lhs_sup == float(np.mean(sup_e)) and rep.lhs_dissipation == float(np.mean(diss))
    assert rep.extras["jump_qv_bound_factor2"] == 2 * rep.extras["jump_qv_bound_raw"]


def test_energy_bound_overflows_to_inf(ensemble):
    _, noise, trajs = ensemble
    p = _params(alpha=1e-4)
    rep = energy_estimate_check(trajs, p, noise)
    assert rep.constants["log_bound"] > 709 and rep.gronwall_bound == math.inf
    assert rep.satisfied


def test_lp_energy(ensemble):
    p, _, trajs = ensemble
    rep = lp_energy_check(trajs, p, 4.0)
    assert rep.satisfied and rep.extras["empirical_constant"] > 0
    with pytest.raises(ContractError):
        lp_energy_check(trajs, p, 2.0)


def test_martingale_channels_centered(ensemble):
    _, _, trajs = ensemble
    out = martingale_mean_check(trajs)
    assert out["ensemble_size"] == 32 and out["satisfied"]


def test_pair_stability_identical_pairs():
    p, noise = _params(), default_noise(DOM)
    c = SimConfig(dt=0.01, horizon_T=0.2, seed=2)
    d = np.zeros_like(_u0())
    d[1, 1, 1] = 1e-3
    rep = pair_stability_check(simulate_pairs(_u0(), _u0() + d, None, p, c, noise, 8), p, noise)
    assert rep["satisfied"] and rep["w0_sq"] == pytest.approx(1e-6)
    assert stability_bound(p, noise, 0.2)["C"] == pytest.approx(2 / 0.05 + 2 * 1.75**2 / 0.05 + p.M)


def test_probe_refuses_state_dependent_noise():
    p = _params()
    c = SimConfig(dt=2.0**-6, horizon_T=0.5)
    assert probe_admissible(default_noise(DOM))
    with pytest.raises(ContractError, match="additive"):
        h1_blowup_probe(p, c, [2.0], [0.5], 4, default_noise(DOM))
    smooth = NoiseModel(WienerSpec.power_law(DOM, 0.01, 1.5))
    with pytest.raises(ContractError, match="decay"):
        h1_blowup_probe(p, c, [2.0], [0.5], 4, smooth)


def test_probe_table_and_degenerate_cells():
    p = _params()
    psi = np.zeros((2,) + DOM.modal_shape)
    psi[0, 0, 0] = 1
    noise = NoiseModel(WienerSpec.power_law(DOM, 0.05, 2.5), JumpSpec(2, ("uniform", -1, 1), 0.2, 0, psi))
    c = SimConfig(dt=2.0**-6, horizon_T=0.5, seed=3)
    tab = h1_blowup_probe(p, c, [0.5, 1.0, 2.0, 50.0], [0.125, 0.5, 0.25], 16, noise)
    assert tab.horizons == [0.5, 0.25, 0.125]
    assert tab.degenerate == [True, True, False, False]
    assert tab.probabilities.shape == (4, 3)
    assert np.all(tab.probabilities[3] == 0.0)
    assert tab.monotone
    with pytest.raises(ContractError):
        h1_blowup_probe(p, c, [2.0], [0.3], 4, noise)


def _record(times, u):
    c = SimConfig(dt=float(times[-1]), horizon_T=float(times[-1]))
    n = len(times)
    return TrajectoryRecord(np.asarray(times, float), u, np.zeros((n,) + DOM.nodal_shape), {},
                            np.zeros(n), 0, 0, c)


def test_modulus_of_constant_and_single_jump():
    times = np.linspace(0, 1, 11)
    u = np.zeros((11, 2) + DOM.modal_shape)
    assert cadlag_modulus(_record(times, u), 0.25, DOM) == 0.0
    u[6:, 0, 0, 0] = 1.0
    # one jump at t = 0.6: a cell can end there as long as cells are >= delta
    assert cadlag_modulus(_record(times, u), 0.3, DOM) == 0.0
    jump = float(hminus1_distances(u[[0, 6]], DOM)[0, 1])
    assert jump == pytest.approx(1 / np.sqrt(DOM.lambda_min))
    # cells of length >= 0.7 cannot avoid straddling t = 0.6
    assert cadlag_modulus(_record(times, u), 0.7, DOM) == pytest.approx(jump)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 10))
def test_modulus_is_monotone_in_delta_and_matches_bruteforce(seed, n):
    rng = np.random.default_rng(seed)
    times = np.concatenate([[0.0], np.sort(rng.uniform(0, 1, n - 2)), [1.0]])
    u = random_modal(rng, DOM, n)
    dist = hminus1_distances(u, DOM)
    deltas = np.sort(rng.uniform(0.01, 0.99, 4))
    w = [modulus_from_distances(times, dist, d) for d in deltas]
    assert all(a <= b for a, b in zip(w, w[1:]))
    assert w == [modulus_bruteforce(times, dist, d) for d in deltas]


def test_modulus_contracts():
    times = np.linspace(0, 1, 20)
    dist = np.zeros((20, 20))
    with pytest.raises(ContractError):
        modulus_from_distances(times, dist, 1.0)
    with pytest.raises(ContractError):
        modulus_bruteforce(times, dist, 0.5)


def test_fit_power_law_exact():
    theta = np.array([0.01, 0.02, 0.04, 0.08])
    beta, c_fit, c_env = fit_power_law(theta, 3.0 * theta**1.5)
    assert beta == pytest.approx(1.5) and c_fit == pytest.approx(3.0) and c_env == pytest.approx(3.0)


def test_tightness_diffusive_exponent():
    p = ModelParams(DOM, alpha=0.05)
    noise = NoiseModel(WienerSpec.power_law(DOM, q0=0.5, decay=1.5))
    c = SimConfig(dt=0.005, horizon_T=0.5, seed=4)
    trajs = simulate_ensemble(np.zeros((2,) + DOM.modal_shape), None, p, c, noise, 32)
    rep = tightness_probe(trajs, [0.05, 0.1, 0.2], [0.01, 0.02, 0.04, 0.08], DOM)
    assert 0.7 <= rep.aldous_moment["beta"] <= 1.3
    assert [d for d, _ in rep.modulus_curve] == [0.05, 0.1, 0.2]
    ws = [w for _, w in rep.modulus_curve]
    assert ws == sorted(ws)
    with pytest.raises(ContractError):
        increment_moments(trajs, [0.0125], DOM)
