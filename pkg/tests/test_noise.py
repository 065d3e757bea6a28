import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tidelevy.grid import ContractError, DomainSpec, random_modal
from tidelevy.noise import (
    H_moment,
    JumpSpec,
    NoiseModel,
    WienerSpec,
    apply_H,
    compensator,
    default_noise,
    draw_path_noise,
    draw_step,
    hypothesis_checks,
    path_rng,
    sample_jumps,
    sample_wiener,
    sigma_lq_sq,
)

DOM = DomainSpec.square(4)


def _psi():
    psi = np.zeros((2,) + DOM.modal_shape)
    psi[0, 0, 0] = 1.0
    return psi


def test_path_rng_is_reproducible_and_distinct():
    a = path_rng(7, 3).standard_normal(5)
    assert np.array_equal(a, path_rng(7, 3).standard_normal(5))
    assert not np.array_equal(a, path_rng(7, 4).standard_normal(5))
    assert not np.array_equal(a, path_rng(8, 3).standard_normal(5))


def test_power_law_spectrum():
    w = WienerSpec.power_law(DOM, q0=0.2, decay=2.0)
    assert w.q.shape == (2, 4, 4)
    assert w.q[0, 0, 0] == pytest.approx(0.2)
    assert w.q[1, 1, 2] == pytest.approx(0.2 * (2 / 13) ** 2)


def test_wiener_constants_frozen():
    q = np.zeros((2, 4, 4))
    q[0, 0, 0], q[1, 2, 1] = 0.5, 0.25
    w = WienerSpec(q, sigma_add=2.0, sigma_mult=0.5)
    assert w.trace == 0.75
    assert w.K == 2 * 4.0 * 0.75
    assert w.L == 0.25 * 0.75


def test_mark_moments_frozen():
    j = JumpSpec(3.0, ("uniform", -1.0, 1.0), 0.2, 0.05, _psi())
    assert j.mark_moment(1) == 0.0
    assert j.mark_moment(2) == pytest.approx(1 / 3)
    assert j.mark_moment(3, absolute=True) == pytest.approx(1 / 4)
    assert j.K == pytest.approx(2 * 3.0 * (1 / 3) * 0.04)
    assert j.L == pytest.approx(3.0 * (1 / 3) * 0.0025)
    assert j.moment_constant(4) == pytest.approx(8 * 3.0 * 0.2 * 0.2**4)
    d = JumpSpec(1.0, ("discrete", [-2.0, 1.0], [0.25, 0.75]), 1.0, 0.0, _psi())
    assert d.mean_mark == pytest.approx(0.25)
    assert d.mark_moment(3, absolute=True) == pytest.approx(0.25 * 8 + 0.75)
    u = np.zeros((2, 4, 4))
    assert np.allclose(compensator(u, d), 0.25 * _psi())


def test_spec_validation():
    with pytest.raises(ValueError):
        WienerSpec(-np.ones((2, 2, 2)))
    with pytest.raises(ValueError):
        JumpSpec(1.0, ("uniform", 1.0, 1.0), 0, 0, _psi())
    with pytest.raises(ValueError):
        JumpSpec(1.0, ("discrete", [1.0], [0.5]), 0, 0, _psi())
    with pytest.raises(ValueError):
        JumpSpec(-1.0, ("uniform", 0, 1), 0, 0, _psi())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 5.0), st.integers(1, 6))
def test_exact_H_moment_matches_quadrature(seed, scale, p):
    j = JumpSpec(2.0, ("uniform", -0.5, 1.5), 0.3, 0.2, _psi())
    u = random_modal(np.random.default_rng(seed), DOM, scale=scale)
    z = np.linspace(-0.5, 1.5, 20001)
    vals = np.sqrt(np.sum(apply_H(u, z[:, None, None, None], j) ** 2, axis=(1, 2, 3))) ** p
    quadrature = 2.0 * np.trapezoid(vals, z) / 2.0
    assert float(H_moment(u, j, p)) == pytest.approx(quadrature, rel=1e-6)


def test_sigma_norm_formula():
    w = WienerSpec.power_law(DOM, 0.1, 1.5, 1.0, 0.3)
    u = random_modal(np.random.default_rng(0), DOM)
    assert float(sigma_lq_sq(u, w)) == pytest.approx(float(np.sum(w.q * (1 + 0.3 * u) ** 2)))


def test_default_noise_hypotheses_hold():
    noise = default_noise(DOM)
    reps = hypothesis_checks(noise, DOM, 500, seed=3, p=4)
    assert all(r.satisfied for r in reps)
    assert {r.name for r in reps} == {"growth", "lipschitz", "moment_p4"}


def test_additive_flag_and_off():
    noise = default_noise(DOM)
    assert not noise.additive
    assert NoiseModel().is_off and NoiseModel().K == 0.0
    add = NoiseModel(WienerSpec.power_law(DOM, sigma_mult=0.0), JumpSpec(1, ("uniform", 0, 1), 1, 0, _psi()))
    assert add.additive and not add.is_off


def test_sample_jumps_sorted_inside_step():
    j = JumpSpec(400.0, ("uniform", 0.0, 1.0), 1.0, 0.0, _psi())
    ev = sample_jumps(0.05, j, np.random.default_rng(0))
    times = [t for t, _ in ev]
    assert len(ev) > 0 and times == sorted(times)
    assert all(0 < t < 0.05 for t in times)
    with pytest.raises(ContractError):
        sample_wiener(0.0, WienerSpec.power_law(DOM), np.random.default_rng(0))


def test_draw_step_shapes():
    noise = default_noise(DOM)
    d = draw_step(1e-2, noise.wiener, noise.jumps, np.random.default_rng(1), DOM)
    assert d.wiener_increment.shape == (2, 4, 4)
    assert d.mark_sum == pytest.approx(sum(z for _, z in d.jump_events))


def test_path_noise_draw_order_is_fixed():
    noise = default_noise(DOM)
    pn = draw_path_noise(50, 1e-2, noise.wiener, noise.jumps, path_rng(1, 0), DOM)
    rng = path_rng(1, 0)
    dW = np.sqrt(noise.wiener.q * 1e-2) * rng.standard_normal((50, 2, 4, 4))
    counts = rng.poisson(2.0 * 1e-2, size=50)
    assert np.array_equal(pn.dW, dW) and np.array_equal(pn.jump_counts, counts)


def test_coarsen_sums_steps_and_truncates():
    noise = default_noise(DOM)
    pn = draw_path_noise(12, 1e-2, noise.wiener, noise.jumps, path_rng(2, 0), DOM)
    small = DomainSpec.square(2)
    c = pn.coarsen(3, small)
    assert c.dW.shape == (4, 2, 2, 2)
    assert np.allclose(c.dW[1], pn.dW[3:6, :, :2, :2].sum(axis=0))
    assert c.jump_counts.sum() == pn.jump_counts.sum()
    with pytest.raises(ContractError):
        pn.coarsen(5, small)
    with pytest.raises(ContractError):
        pn.coarsen(3, DomainSpec.square(5))


def test_restrict():
    noise = default_noise(DOM).restrict(DomainSpec.square(2))
    assert noise.wiener.q.shape == (2, 2, 2) and noise.jumps.shape.shape == (2, 2, 2)
