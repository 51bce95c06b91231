import math

import numpy as np
import pytest

from guidedplace.diffusion import (ddpm_step, guided_epsilon, make_schedule, noise, predict_x0,
                                 q_sample, respace, rng, schedule_from_dict)
from guidedplace.errors import (InvalidScheduleParams, ScheduleMismatch, ShapeMismatch,
                              TimestepOutOfRange)

S = make_schedule(1000)


def test_single_step_schedule():
    s = make_schedule(1, beta_start=0.3, beta_end=0.3)
    np.testing.assert_array_equal(s.alpha_bar, [0.7])


def test_terminal_alpha_bar_frozen():
    # product of (1 - beta) with betas on the linear grid, evaluated by a plain loop
    assert math.isclose(S.alpha_bar[-1], 4.0358297653756754e-05, rel_tol=1e-12)
    assert S.alpha_bar[-1] < 1e-4


def test_schedule_invariants():
    for s in (S, make_schedule(300, "cosine", 1e-4, 0.999 * 0.999)):
        assert np.all(np.diff(s.alpha_bar) < 0)
        prod, ref = 1.0, []
        for a in s.alpha:
            prod *= a
            ref.append(prod)
        np.testing.assert_allclose(s.alpha_bar, ref, rtol=1e-12)
        np.testing.assert_allclose(s.sigma ** 2, s.beta, rtol=1e-15)
        assert np.all((s.beta > 0) & (s.beta < 1))


@pytest.mark.parametrize("kw", [dict(beta_end=1.0), dict(beta_start=0.0), dict(beta_start=0.1, beta_end=0.01),
                                dict(T=0), dict(kind="sigmoid")])
def test_invalid_params(kw):
    with pytest.raises(InvalidScheduleParams):
        make_schedule(**{"T": 10, **kw})


def test_respacing_keeps_the_chain():
    r = respace(S, 200)
    assert r.T == 200 and r.timesteps[0] == 1 and r.timesteps[-1] == 1000
    np.testing.assert_allclose(r.alpha_bar, S.alpha_bar[r.timesteps - 1], rtol=1e-12)
    assert r.signature() == S.signature()
    assert schedule_from_dict(r.to_dict()).timesteps.tolist() == r.timesteps.tolist()
    with pytest.raises(InvalidScheduleParams):
        respace(S, 1001)


def test_signature_check():
    S.ensure_compatible(S.signature())
    with pytest.raises(ScheduleMismatch):
        S.ensure_compatible(make_schedule(500).signature())
    with pytest.raises(ScheduleMismatch):
        S.ensure_compatible({**S.signature(), "beta_end": 0.03})


def test_q_sample_limits():
    x0 = np.array([[0.3, -0.7], [0.1, 0.9]])
    np.testing.assert_array_equal(q_sample(x0, 10, np.zeros_like(x0), S), math.sqrt(S.alpha_bar[9]) * x0)
    eps = np.array([[1.0, 2.0], [-1.0, 0.5]])
    np.testing.assert_allclose(q_sample(x0, 1000, eps, S), eps, atol=0.01)


def test_inverse_identities_random():
    g = np.random.default_rng(0)
    for _ in range(1000):
        t = int(g.integers(1, 1001))
        x0, e = g.normal(size=(5, 2)), g.normal(size=(5, 2))
        xt = q_sample(x0, t, e, S)
        np.testing.assert_allclose(predict_x0(xt, e, t, S), x0, atol=1e-10, rtol=0)
        np.testing.assert_allclose(guided_epsilon(xt, predict_x0(xt, e, t, S), t, S), e, atol=1e-10, rtol=0)
        np.testing.assert_allclose(q_sample(predict_x0(xt, e, t, S), t, e, S), xt, atol=1e-10, rtol=0)


def test_guided_epsilon_cases():
    g = np.random.default_rng(1)
    xt, e = g.normal(size=(3, 2)), g.normal(size=(3, 2))
    t = 421
    np.testing.assert_allclose(guided_epsilon(xt, xt / math.sqrt(S.alpha_bar[t - 1]), t, S), 0, atol=1e-12)
    delta = g.normal(size=(3, 2))
    x0 = predict_x0(xt, e, t, S)
    eg = guided_epsilon(xt, x0 + delta, t, S)
    np.testing.assert_allclose(predict_x0(xt, eg, t, S), x0 + delta, atol=1e-10)
    np.testing.assert_allclose(predict_x0(xt, np.zeros_like(xt), t, S), xt / math.sqrt(S.alpha_bar[t - 1]))


def test_ddpm_step_cases():
    x = np.array([[0.5, -0.25]])
    z = np.array([[3.0, 3.0]])
    np.testing.assert_allclose(ddpm_step(x, np.zeros_like(x), 50, np.zeros_like(x), S),
                               x / math.sqrt(S.alpha[49]), rtol=1e-15)
    # t = 1 ignores z
    np.testing.assert_array_equal(ddpm_step(x, x, 1, z, S), ddpm_step(x, x, 1, None, S))
    stepped = ddpm_step(x, np.zeros_like(x), 50, z, S)
    np.testing.assert_allclose(stepped - x / math.sqrt(S.alpha[49]), S.sigma[49] * z)


def test_errors():
    x = np.zeros((2, 2))
    for t in (0, 1001):
        with pytest.raises(TimestepOutOfRange):
            q_sample(x, t, x, S)
    with pytest.raises(ShapeMismatch):
        predict_x0(x, np.zeros((3, 2)), 5, S)
    with pytest.raises(ShapeMismatch):
        ddpm_step(x, x, 5, np.zeros((1, 2)), S)


@pytest.mark.parametrize("t", [1, 100, 500, 1000])
def test_forward_marginal_statistics(t):
    n = 100_000
    x0 = np.array([0.4, -0.8])
    e = rng(7, t, "misc").standard_normal((n, 2))
    xt = q_sample(np.broadcast_to(x0, (n, 2)), t, e, S)
    ab = S.alpha_bar[t - 1]
    mean_se = math.sqrt((1 - ab) / n)
    var = 1 - ab
    var_se = var * math.sqrt(2.0 / (n - 1))
    assert np.all(np.abs(xt.mean(0) - math.sqrt(ab) * x0) < 3 * mean_se)
    assert np.all(np.abs(xt.var(0, ddof=1) - var) < 3 * var_se)


def test_oracle_reverse_pass_recovers_x0():
    x0 = np.random.default_rng(5).uniform(-0.9, 0.9, (16, 2))
    x = noise(3, 0, "init", x0.shape)
    for t in range(S.T, 0, -1):
        ab = S.alpha_bar[t - 1]
        eps = (x - math.sqrt(ab) * x0) / math.sqrt(1 - ab)
        z = noise(3, t, "step", x.shape) if t > 1 else None
        x = ddpm_step(x, eps, t, z, S)
    assert np.sqrt(np.mean((x - x0) ** 2)) < 0.05


def test_rng_streams():
    a = rng(1, 5, "step").standard_normal(4)
    np.testing.assert_array_equal(a, rng(1, 5, "step").standard_normal(4))
    assert not np.array_equal(a, rng(1, 6, "step").standard_normal(4))
    assert not np.array_equal(a, rng(1, 5, "init").standard_normal(4))
    assert not np.array_equal(a, rng(2, 5, "step").standard_normal(4))
