import numpy as np
import pytest

from bridgegp.errors import NumericError
from bridgegp.hmc import (
    DualAveragingState,
    HmcConfig,
    TargetFunctions,
    adapt_step_size,
    check_gradient,
    heuristic_initial_step,
    hmc_iteration,
    leapfrog_step,
)


def gaussian(scale=1.0):
    s2 = scale**2
    return TargetFunctions(lambda x: 0.5 * float(x @ x) / s2, lambda x: x / s2)


FLAT = TargetFunctions(lambda x: 0.0, lambda x: np.zeros_like(x))


def test_leapfrog_hand_values():
    th, ph = leapfrog_step(np.array([1.0]), np.array([0.0]), 0.1, gaussian())
    assert th[0] == pytest.approx(0.995, abs=1e-15)
    assert ph[0] == pytest.approx(-0.09975, abs=1e-15)


def test_leapfrog_free_particle():
    th, ph = leapfrog_step(np.array([1.0, 2.0]), np.array([0.5, -1.0]), 0.2, FLAT)
    assert np.allclose(th, [1.1, 1.8]) and np.allclose(ph, [0.5, -1.0])


def test_leapfrog_reversible():
    rng = np.random.default_rng(0)
    t = TargetFunctions(lambda x: float(np.sum(x**4)) / 4, lambda x: x**3)
    th, ph = rng.standard_normal(3), rng.standard_normal(3)
    t1, p1 = leapfrog_step(th, ph, 0.07, t)
    t2, p2 = leapfrog_step(t1, -p1, 0.07, t)
    assert np.allclose(t2, th, atol=1e-12) and np.allclose(-p2, ph, atol=1e-12)


def test_leapfrog_volume_preserving():
    t = TargetFunctions(lambda x: float(np.sum(x**4)) / 4 + x[0] * x[1], lambda x: x**3 + x[::-1])
    z0 = np.array([0.3, -0.7, 0.4, 1.1])
    h = 1e-6

    def f(z):
        a, b = leapfrog_step(z[:2], z[2:], 0.1, t)
        return np.concatenate([a, b])

    J = np.empty((4, 4))
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        J[:, i] = (f(z0 + e) - f(z0 - e)) / (2 * h)
    assert abs(np.linalg.det(J) - 1.0) < 1e-6


def test_rejection_returns_input_object():
    cfg = HmcConfig(step_size=50.0)
    rng = np.random.default_rng(1)
    x = np.array([0.1, 0.2])
    for _ in range(20):
        nxt, acc, _ = hmc_iteration(x, gaussian(0.01), cfg, rng)
        if not acc:
            assert nxt is x
            return
    pytest.fail("expected at least one rejection")


def test_small_step_accepts():
    cfg = HmcConfig(step_size=1e-4, u_turn=False)
    rng = np.random.default_rng(2)
    _, _, st = hmc_iteration(np.array([0.5, -0.5]), gaussian(), cfg, rng)
    assert st["accept_prob"] > 0.999


def test_divergence_is_rejected_and_flagged():
    t = TargetFunctions(lambda x: float(np.exp(x @ x)), lambda x: 2 * x * np.exp(x @ x))
    cfg = HmcConfig(step_size=3.0, u_turn=False)
    _, acc, st = hmc_iteration(np.array([0.5]), t, cfg, np.random.default_rng(3), n_steps=5)
    assert st["divergent"] and not acc


def test_non_finite_start_raises():
    t = TargetFunctions(lambda x: np.inf, lambda x: x)
    with pytest.raises(NumericError):
        hmc_iteration(np.zeros(1), t, HmcConfig(), np.random.default_rng(0))


@pytest.mark.parametrize("target", [gaussian(), TargetFunctions(lambda x: float(np.sum(x**4)) / 4, lambda x: x**3)])
def test_energy_error_second_order(target):
    # fixed trajectory length 1, so only the step size changes
    def med(eps):
        out = []
        r = np.random.default_rng(5)
        for _ in range(400):
            x = r.standard_normal(2)
            _, _, st = hmc_iteration(x, target, HmcConfig(step_size=eps, u_turn=False), r, n_steps=round(1 / eps))
            out.append(abs(st["delta_H"]))
        return np.median(out)

    ratio = med(0.2) / med(0.1)
    assert 3.0 <= ratio <= 5.0


def test_dual_averaging_directions():
    s_up = s_dn = DualAveragingState.start(0.5)
    eps_up, eps_dn = [], []
    for _ in range(30):
        s_up = adapt_step_size(s_up, 1.0)
        s_dn = adapt_step_size(s_dn, 0.0)
        eps_up.append(s_up.step_size)
        eps_dn.append(s_dn.step_size)
    assert all(b > a for a, b in zip(eps_up, eps_up[1:]))
    assert all(b < a for a, b in zip(eps_dn, eps_dn[1:]))


def test_dual_averaging_fixed_point():
    s = DualAveragingState.start(0.5, target_accept=0.8)
    for _ in range(50):
        s = adapt_step_size(s, 0.8)
    assert s.step_size == pytest.approx(np.exp(s.mu))
    assert s.final_step_size == pytest.approx(np.exp(s.mu))


def test_heuristic_step_bracket_and_scale():
    e1 = heuristic_initial_step(np.zeros(1), gaussian(), np.random.default_rng(0))
    assert 0.5 <= e1 <= 4
    e01 = heuristic_initial_step(np.zeros(1), gaussian(0.1), np.random.default_rng(0))
    assert 5 <= e1 / e01 <= 20


def test_heuristic_step_flat_is_capped():
    assert heuristic_initial_step(np.zeros(2), FLAT, np.random.default_rng(0)) == 2.0**10


def test_check_gradient():
    assert check_gradient(gaussian(2.0), np.array([0.3, -1.0])) < 1e-8


def _run_chain(d, n_warm, n_draw, seed):
    rng = np.random.default_rng(seed)
    t = gaussian()
    x = rng.standard_normal(d)
    state = DualAveragingState.start(heuristic_initial_step(x, t, rng))
    cfg = HmcConfig()
    draws, accs, probs = [], [], []
    for i in range(n_warm + n_draw):
        warm = i < n_warm
        eps = state.step_size if warm else state.final_step_size
        x, acc, st = hmc_iteration(x, t, cfg, rng, step_size=eps)
        if warm:
            state = adapt_step_size(state, st["accept_prob"])
        else:
            draws.append(x)
            accs.append(acc)
            probs.append(st["accept_prob"])
    return np.array(draws), np.array(accs), np.array(probs)


@pytest.mark.slow
@pytest.mark.parametrize("d", [1, 2, 5])
def test_standard_normal_calibration(d):
    draws, _, probs = _run_chain(d, 2000, 20000, seed=d)
    # batch-means standard errors
    batches = draws.reshape(40, -1, d)
    bm = batches.mean(axis=1)
    se_mean = bm.std(axis=0, ddof=1) / np.sqrt(40)
    bv = (batches**2).mean(axis=1)
    se_var = bv.std(axis=0, ddof=1) / np.sqrt(40)
    assert np.all(np.abs(draws.mean(0)) <= 3 * se_mean + 1e-3)
    assert np.all(np.abs((draws**2).mean(0) - 1.0) <= 3 * se_var + 1e-3)
    assert 0.7 <= probs.mean() <= 0.9
