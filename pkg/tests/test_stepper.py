import numpy as np
import pytest

from tidelevy.grid import ContractError, DomainSpec, random_modal
from tidelevy.noise import NoiseDraw, NoiseModel, WienerSpec, default_noise
from tidelevy.operators import ModelParams, random_depth
from tidelevy.stepper import (
    CHANNELS,
    DivergenceError,
    SimConfig,
    State,
    path_noise,
    refinement_study,
    simulate,
    simulate_ensemble,
    simulate_pair,
    simulate_with_noise,
    step,
)

DOM = DomainSpec.square(4)


def _params(**kw):
    depth = random_depth(np.random.default_rng(0), DOM, 0.8, 1.5)
    w0 = np.full((2,) + DOM.nodal_shape, 0.1)
    base = dict(alpha=0.1, beta=0.5, g=1.0, r=0.1, depth=depth, background_flow=lambda t: w0)
    base.update(kw)
    return ModelParams(DOM, **base)


def _u0():
    return random_modal(np.random.default_rng(1), DOM, smoothness=2.0, scale=0.3)


def test_simconfig_validation():
    with pytest.raises(ValueError, match="integer multiple"):
        SimConfig(dt=0.3, horizon_T=1.0)
    with pytest.raises(ValueError, match="dt > 0"):
        SimConfig(dt=0.0, horizon_T=1.0)
    with pytest.raises(ValueError, match="elevation_update"):
        SimConfig(dt=0.1, horizon_T=1.0, elevation_update="mid")
    c = SimConfig(dt=0.1, horizon_T=1.0)
    assert c.n_steps == 10 and c.replace(dt=0.05).n_steps == 20


def test_record_layout():
    c = SimConfig(dt=0.01, horizon_T=0.2, record_stride=5)
    tr = simulate(_u0(), None, _params(), c, default_noise(DOM))
    assert set(tr.channels) == set(CHANNELS)
    assert all(len(v) == 21 for v in tr.channels.values())
    assert tr.u.shape == (5, 2, 4, 4) and tr.zhat.shape == (5,) + DOM.nodal_shape
    assert np.allclose(tr.times, [0, 0.05, 0.1, 0.15, 0.2])
    assert tr.energies["l2_sq"].shape == (5,)
    assert tr.final.t == pytest.approx(0.2)
    assert np.array_equal(tr.channels["l2_sq"][0], np.sum(_u0() ** 2))


def test_batch_size_does_not_change_paths():
    p, noise = _params(), default_noise(DOM)
    c = SimConfig(dt=0.01, horizon_T=0.1, seed=3)
    a = simulate_ensemble(_u0(), None, p, c.replace(batch_size=1), noise, 5)
    b = simulate_ensemble(_u0(), None, p, c.replace(batch_size=4), noise, 5)
    for x, y in zip(a, b):
        assert np.array_equal(x.u, y.u) and np.array_equal(x.zhat, y.zhat)
    assert [t.path_index for t in a] == list(range(5))
    single = simulate(_u0(), None, p, c, noise, path_index=2)
    assert np.array_equal(single.u, a[2].u)


def test_step_matches_batched_run():
    p, noise = _params(), default_noise(DOM)
    c = SimConfig(dt=0.01, horizon_T=0.05, seed=4)
    pn = path_noise(p, c, noise, 0)
    tr = simulate_with_noise(_u0(), None, p, c, noise, [pn])[0]
    s = State(0.0, _u0(), np.zeros(DOM.nodal_shape))
    for m in range(c.n_steps):
        # one jump carrying the whole mark sum is equivalent, H is linear in z
        s = step(s, NoiseDraw(pn.dW[m], [(0.5 * c.dt, pn.mark_sums[m])]), p, c, noise)
    assert np.allclose(s.u, tr.u[-1], rtol=1e-13, atol=1e-15)
    assert np.allclose(s.zhat, tr.zhat[-1], rtol=1e-13, atol=1e-15)


def test_common_noise_pair_and_elevation_modes():
    p, noise = _params(), default_noise(DOM)
    c = SimConfig(dt=0.01, horizon_T=0.1, seed=5)
    a, b = simulate_pair(_u0(), _u0(), None, p, c, noise, 1)
    assert np.array_equal(a.u, b.u)
    old = simulate(_u0(), None, p, c.replace(elevation_update="old"), noise)
    new = simulate(_u0(), None, p, c, noise)
    assert not np.array_equal(old.zhat[-1], new.zhat[-1])


def test_martingale_channels_vanish_without_noise():
    c = SimConfig(dt=0.01, horizon_T=0.1)
    tr = simulate(_u0(), None, _params(), c, None)
    for k in ("mart_wiener", "mart_jump", "jump_qv"):
        assert np.all(tr.channels[k] == 0)


def test_divergence_is_reported():
    p = _params(alpha=0.01)
    big = NoiseModel(WienerSpec.power_law(DOM, q0=1e6))
    c = SimConfig(dt=0.01, horizon_T=0.5, divergence_threshold=10.0)
    with pytest.raises(DivergenceError) as err:
        simulate_ensemble(_u0(), None, p, c, big, 3)
    assert err.value.step >= 1 and err.value.paths
    assert err.value.record is not None


def test_store_states_off():
    c = SimConfig(dt=0.01, horizon_T=0.05, store_states=False)
    tr = simulate(_u0(), None, _params(), c)
    assert tr.u is None
    with pytest.raises(ContractError):
        tr.final


def test_contract_errors_on_bad_initial_data():
    c = SimConfig(dt=0.01, horizon_T=0.05)
    with pytest.raises(ContractError):
        simulate(np.zeros((2, 3, 3)), None, _params(), c)
    bad = _u0()
    bad[0, 0, 0] = np.nan
    with pytest.raises(ContractError):
        simulate(bad, None, _params(), c)


def test_refinement_converges_under_common_noise():
    def make(dom):
        return ModelParams(dom, alpha=0.1, beta=0.5)

    add = NoiseModel(WienerSpec.power_law(DomainSpec.square(8), q0=0.01, decay=2.0))
    u0 = random_modal(np.random.default_rng(2), DomainSpec.square(8), smoothness=3.0, scale=0.2)
    c = SimConfig(dt=0.02, horizon_T=0.32)
    rows = refinement_study(u0, lambda d: np.zeros(d.nodal_shape), make, c, [8],
                            [0.04, 0.02, 0.01, 0.005], add)
    d = [r["distance"] for r in rows]
    assert d[0] > d[1] > d[2] > 0
    assert 1.3 < rows[2]["ratio"] < 3.0
    with pytest.raises(ContractError):
        refinement_study(u0, lambda d: np.zeros(d.nodal_shape), make, c, [8], [0.01, 0.02], add)
