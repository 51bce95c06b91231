import csv
import math

import numpy as np
import pytest
import torch

from conftest import make_netlist
from guidedplace.data import synthetic_netlist
from guidedplace.diffusion import ddpm_step, make_schedule, noise, respace
from guidedplace.errors import NonFiniteState, ScheduleMismatch
from guidedplace.guidance import GuidanceConfig
from guidedplace.model import Denoiser, ModelConfig
from guidedplace.sampler import sample, sample_batch

SCHED = respace(make_schedule(1000), 20)
NONE = GuidanceConfig(mode="none")


def toy_model(x, t):
    return 0.3 * np.tanh(x) + 0.01 * t / SCHED.T


def small_model():
    torch.manual_seed(0)
    m = Denoiser(ModelConfig(hidden=16, heads=2))
    with torch.no_grad():
        m.cell_head.weight.normal_(0, 0.3)
    return m


def vanilla(netlist, f, sched, seed):
    """Plain DDPM written out from the posterior-mean formula."""
    x = noise(seed, 0, "init", (netlist.n_movable, 2))
    states = [x]
    for t in range(sched.T, 0, -1):
        a, ab, b = sched.alpha[t - 1], sched.alpha_bar[t - 1], sched.beta[t - 1]
        e = f(x, t)
        x = (x - b / math.sqrt(1 - ab) * e) / math.sqrt(a)
        if t > 1:
            x = x + math.sqrt(b) * noise(seed, t, "step", x.shape)
        states.append(x)
    return states


@pytest.fixture(scope="module")
def design():
    return synthetic_netlist(6, 3)


def test_unguided_equals_vanilla_ddpm(design):
    _, traj = sample(design, toy_model, SCHED, NONE, seed=4, keep_states=True)
    ref = vanilla(design, toy_model, SCHED, 4)
    assert len(traj.states) == len(ref) == SCHED.T + 1
    for a, b in zip(traj.states, ref):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_unguided_is_bitwise_plain_loop(design):
    model = small_model()
    _, traj = sample(design, model, SCHED, NONE, seed=1, keep_states=True)
    x = noise(1, 0, "init", (design.n_movable, 2))
    for t, state in zip(range(SCHED.T, 0, -1), traj.states[1:]):
        e = model.predict(design, x, int(SCHED.timesteps[t - 1]))
        x = ddpm_step(x, e, t, noise(1, t, "step", x.shape) if t > 1 else None, SCHED)
        np.testing.assert_array_equal(state, x)


def test_deterministic_per_seed(design):
    cfg = GuidanceConfig(K=20)
    p1, t1 = sample(design, toy_model, SCHED, cfg, seed=9)
    p2, t2 = sample(design, toy_model, SCHED, cfg, seed=9)
    np.testing.assert_array_equal(p1, p2)
    assert [r.hpwl for r in t1.records] == [r.hpwl for r in t2.records]
    p3, _ = sample(design, toy_model, SCHED, cfg, seed=10)
    assert not np.array_equal(p1, p3)


def test_trajectory_records(design, tmp_path):
    _, traj = sample(design, toy_model, SCHED, GuidanceConfig(K=20), seed=0)
    assert [r.t for r in traj.records] == list(range(SCHED.T, 0, -1))
    assert [r.model_t for r in traj.records] == SCHED.timesteps[::-1].tolist()
    assert all(math.isfinite(r.hpwl) and math.isfinite(r.overlap) for r in traj.records)
    assert all(0 <= r.guidance_steps <= 20 for r in traj.records)
    path = tmp_path / "traj.csv"
    traj.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "model_t", "hpwl", "overlap", "guidance_steps", "switched_at"]
    assert len(rows) == SCHED.T + 1
    assert float(rows[1][2]) == traj.records[0].hpwl


def test_batch_matches_single_runs(design):
    cfg = GuidanceConfig(K=10)
    single = sample(design, toy_model, SCHED, cfg, seed=5)[0]
    [one] = sample_batch(design, toy_model, SCHED, cfg, seeds=[5])
    np.testing.assert_array_equal(one.placement, single)
    fwd = sample_batch(design, toy_model, SCHED, cfg, seeds=[1, 2, 3])
    rev = sample_batch(design, toy_model, SCHED, cfg, seeds=[3, 2, 1], workers=3)
    assert [r.seed for r in rev] == [3, 2, 1]
    for a, b in zip(fwd, rev[::-1]):
        np.testing.assert_array_equal(a.placement, b.placement)


def test_batch_collects_failures(design):
    def blows_up(x, t):
        return np.full_like(x, np.nan) if t == 7 else np.zeros_like(x)

    res = sample_batch(design, blows_up, SCHED, NONE, seeds=[0, 1])
    assert all(r.placement is None and r.error.startswith("NonFiniteState") for r in res)


def test_non_finite_state_names_the_step(design):
    with pytest.raises(NonFiniteState) as ei:
        sample(design, lambda x, t: np.full_like(x, np.inf) if t == 12 else 0 * x, SCHED, NONE)
    assert ei.value.t == 12


def test_schedule_mismatch(design):
    model = small_model()
    model.schedule_signature = make_schedule(500).signature()
    with pytest.raises(ScheduleMismatch):
        sample(design, model, SCHED, NONE)


def test_guidance_reduces_overlap_of_estimates():
    nl = make_netlist([(30, 30)] * 4, [[0, 1], [2, 3]])
    f = lambda x, t: np.zeros_like(x)
    _, plain = sample(nl, f, SCHED, NONE, seed=2)
    _, guided = sample(nl, f, SCHED, GuidanceConfig(K=200), seed=2)
    assert guided.records[-1].overlap < plain.records[-1].overlap
