"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that the terminal summary prints.
"""

import json
import math
import time
from collections import Counter

import numpy as np
import pytest
import torch

from conftest import random_instance
from test_bookshelf import MINIMAL, write
from test_model import explicit_jacobian, model64
from test_objectives import central_fd, rel_err
from guidedplace.bookshelf import parse_bookshelf, serialize_bookshelf
from guidedplace.config import TrainConfig
from guidedplace.data import TrainSample, augment_netlist, make_reference_placement, synthetic_netlist
from guidedplace.diffusion import ddpm_step, guided_epsilon, make_schedule, noise, predict_x0, q_sample, respace
from guidedplace.evaluate import evaluate
from guidedplace.guidance import GuidanceConfig, guidance_inner_loop
from guidedplace.legalize import boundary_protrusion, legalize, overlap_area_exact
from guidedplace.model import ModelConfig, fuse_noise, make_batch, project_net_noise
from guidedplace.netlist import load_json, save_json
from guidedplace.objectives import overlap_loss, per_net_hpwl_smooth, weighted_hpwl
from guidedplace.sampler import sample
from guidedplace.train import batch_loss, load_model, train

RESULTS = []
HELD_OUT = (16, 4242)
SEEDS = list(range(10))


def report(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# --- 1 ------------------------------------------------------------------------

def test_criterion_01_diffusion_identities():
    s = make_schedule(1000)
    g = np.random.default_rng(101)
    start = time.perf_counter()
    worst_eps = worst_rt = 0.0
    for _ in range(1000):
        t = int(g.integers(1, 1001))
        x0, e = g.normal(size=(8, 2)), g.normal(size=(8, 2))
        xt = q_sample(x0, t, e, s)
        x0_hat = predict_x0(xt, e, t, s)
        worst_eps = max(worst_eps, np.max(np.abs(guided_epsilon(xt, x0_hat, t, s) - e)))
        worst_rt = max(worst_rt, np.max(np.abs(x0_hat - x0)),
                       np.max(np.abs(q_sample(x0_hat, t, e, s) - xt)))
    dt = time.perf_counter() - start
    report(1, worst_eps < 1e-10 and worst_rt < 1e-10 and dt < 1.0,
           f"eps err {worst_eps:.1e}, round trip {worst_rt:.1e}, {dt:.2f}s")


# --- 2 ------------------------------------------------------------------------

def test_criterion_02_gradients():
    start = time.perf_counter()
    worst_h = worst_o = 0.0
    for seed in range(50):
        nl, p = random_instance(10, 14, 1000 + seed)
        nn = nl.normalized
        x = nl.frame.normalize(p) * 1.05
        w = np.random.default_rng(seed).normal(size=14)
        f = lambda y: float(np.dot(w, per_net_hpwl_smooth(nn, y, 0.01)[0]))
        worst_h = max(worst_h, rel_err(weighted_hpwl(nn, x, 0.01, w)[1], central_fd(f, x, 1e-5)))
        fo = lambda y: overlap_loss(nn, y)[0]
        worst_o = max(worst_o, rel_err(overlap_loss(nn, x)[1], central_fd(fo, x, 1e-6)))

    nl, p = random_instance(4, 3, 8, n_pads=1)
    smp = TrainSample(nl, nl.frame.normalize(p), p)
    sched, ts = make_schedule(1000), np.array([250])
    eps = [np.random.default_rng(1).normal(size=(4, 2))]
    m = model64()
    m.zero_grad()
    batch_loss(m, [smp], ts, eps, sched).backward()
    worst_p, h = 0.0, 1e-6
    for prm in m.parameters():
        flat, grad = prm.data.view(-1), prm.grad.view(-1)
        for i in range(0, flat.numel(), max(1, flat.numel() // 3)):
            old = flat[i].item()
            with torch.no_grad():
                flat[i] = old + h
                up = batch_loss(m, [smp], ts, eps, sched).item()
                flat[i] = old - h
                dn = batch_loss(m, [smp], ts, eps, sched).item()
                flat[i] = old
            num = (up - dn) / (2 * h)
            err = abs(grad[i].item() - num) / max(abs(num), abs(grad[i].item()), 1e-5)
            worst_p = max(worst_p, err)
    dt = time.perf_counter() - start
    report(2, worst_h < 1e-4 and worst_o < 1e-4 and worst_p < 1e-3 and dt < 30,
           f"hpwl {worst_h:.1e}, overlap {worst_o:.1e}, params {worst_p:.1e}, {dt:.1f}s")


# --- 3 ------------------------------------------------------------------------

def test_criterion_03_net_noise_projection():
    start = time.perf_counter()
    nl, p = random_instance(6, 5, 21, n_pads=2)
    x = nl.frame.normalize(p)
    b = make_batch([nl], [x], [37], 0.01, dtype=torch.float64)
    eps_net = torch.as_tensor(np.random.default_rng(0).normal(size=5), dtype=torch.float64)
    ref = (explicit_jacobian(nl.normalized, x, 0.01).T @ eps_net.numpy()).reshape(6, 2)
    err = rel_err(project_net_noise(eps_net, b).numpy(), ref)
    fused = fuse_noise(torch.zeros(6, 2, dtype=torch.float64), eps_net, b, 1.0, 1.0).numpy()
    err_f = rel_err(fused, ref / np.sqrt(np.mean(ref ** 2)))
    dt = time.perf_counter() - start
    report(3, err < 1e-3 and err_f < 1e-3 and dt < 5, f"projection {err:.1e}, fused {err_f:.1e}, {dt:.2f}s")


# --- 4 ------------------------------------------------------------------------

def test_criterion_04_guidance_monotone_and_plain_ddpm():
    start = time.perf_counter()
    increases, steps = 0, 0
    for seed in range(100):
        nl, _ = random_instance(10, 12, 2000 + seed)
        x = np.random.default_rng(seed).uniform(-1.2, 1.0, (10, 2))
        out = guidance_inner_loop(x, nl.normalized, GuidanceConfig(), record=True)
        increases += sum(after > before for _, before, after, _, _ in out.trace)
        steps += len(out.trace)

    nl = synthetic_netlist(8, 77)
    sched = respace(make_schedule(1000), 50)
    m = model64()
    _, traj = sample(nl, m, sched, GuidanceConfig(mode="none"), seed=3, keep_states=True)
    x = noise(3, 0, "init", (8, 2))
    equal = np.array_equal(traj.states[0], x)
    for t, state in zip(range(sched.T, 0, -1), traj.states[1:]):
        e = m.predict(nl, x, int(sched.timesteps[t - 1]))
        x = ddpm_step(x, e, t, noise(3, t, "step", x.shape) if t > 1 else None, sched)
        equal &= np.array_equal(state, x)
    dt = time.perf_counter() - start
    report(4, increases == 0 and steps > 0 and equal and dt < 60,
           f"{steps} accepted steps, {increases} increases, unguided states equal: {equal}, {dt:.1f}s")


# --- 5 and 6 ------------------------------------------------------------------

@pytest.fixture(scope="module")
def ablation(desk_dataset, tmp_path_factory):
    d = tmp_path_factory.mktemp("ablation")
    held = synthetic_netlist(*HELD_OUT)
    sched = respace(make_schedule(1000), 200)
    out = {"train_seconds": {}}
    for variant in ("full", "no_eps_net"):
        cfg = TrainConfig(epochs=60, batch_size=8, lr=0.02, seed=0, model=ModelConfig(variant=variant))
        start = time.perf_counter()
        train(cfg, desk_dataset, d / f"{variant}.json")
        out["train_seconds"][variant] = time.perf_counter() - start
        model, _ = load_model(d / f"{variant}.json")
        modes = ("full", "none") if variant == "full" else ("full",)
        for mode in modes:
            reports, summary = evaluate(held, model, sched, GuidanceConfig().with_mode(mode), SEEDS)
            out[(variant, mode)] = (reports, summary)
    return out


@pytest.mark.slow
def test_criterion_05_guidance_ablation(ablation):
    full = ablation[("full", "full")][1]
    none = ablation[("full", "none")][1]
    d_full, d_none = full["displacement"]["mean"], none["displacement"]["mean"]
    h_full, h_none = full["hpwl"]["mean"], none["hpwl"]["mean"]
    secs = ablation["train_seconds"]["full"]
    ok = (full["failed"] == none["failed"] == 0 and d_none >= 2 * d_full and h_full <= h_none
          and secs <= 600)
    report(5, ok, f"displacement {d_full:.1f} vs {d_none:.1f} (x{d_none / d_full:.2f}), "
                  f"HPWL {h_full:.0f} vs {h_none:.0f}, training {secs:.0f}s")


@pytest.mark.slow
def test_criterion_06_net_noise_ablation(ablation):
    full = ablation[("full", "full")][1]
    no_net = ablation[("no_eps_net", "full")][1]
    a, b = full["displacement"]["mean"], no_net["displacement"]["mean"]
    report(6, no_net["failed"] == 0 and b > a, f"displacement without net noise {b:.1f} vs full {a:.1f} "
                                                f"({100 * (b / a - 1):+.1f}%)")


# --- 7 ------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_07_legality(ablation):
    outputs, idempotent = 0, True
    bad = []
    for key, val in ablation.items():
        if key == "train_seconds":
            continue
        for r in val[0]:
            outputs += 1
            if r.error is not None or r.overlap_area != 0:
                bad.append((key, r.seed, r.error))
    for seed in range(200):
        g = np.random.default_rng(seed)
        nl = synthetic_netlist(int(g.choice([8, 16, 32])), 5000 + seed)
        p = g.uniform(-0.2, 1.1, (nl.n_movable, 2)) * nl.canvas.width
        res = legalize(nl, p)
        outputs += 1
        if overlap_area_exact(nl, res.placement) != 0 or boundary_protrusion(nl, res.placement) != 0:
            bad.append(("random", seed, None))
        again = legalize(nl, res.placement)
        idempotent &= np.array_equal(again.placement, res.placement) and again.displacement_total == 0
    report(7, not bad and idempotent, f"{outputs} legalized placements, {len(bad)} illegal, "
                                      f"idempotent: {idempotent}")


# --- 8 ------------------------------------------------------------------------

def test_criterion_08_augmentation_degrees():
    broken = 0
    bases = [synthetic_netlist(n, 900 + n) for n in (8, 16, 32, 64)]
    for base in bases:
        node_deg = Counter(p.owner for n in base.nets for p in n.pins)
        net_deg = [len(n.pins) for n in base.nets]
        for seed in range(100):
            out = augment_netlist(base, seed)
            if (Counter(p.owner for n in out.nets for p in n.pins) != node_deg
                    or [len(n.pins) for n in out.nets] != net_deg):
                broken += 1
    report(8, broken == 0, f"400 rewirings, {broken} changed a degree")


# --- 9 ------------------------------------------------------------------------

def test_criterion_09_determinism(desk_dataset, tmp_path):
    cfg = TrainConfig(epochs=5, seed=7)
    train(cfg, desk_dataset, tmp_path / "a.json", loss_csv=tmp_path / "a.csv")
    train(cfg, desk_dataset, tmp_path / "b.json", loss_csv=tmp_path / "b.csv")
    train_same = ((tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
                  and (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes())

    model, _ = load_model(tmp_path / "a.json")
    held = synthetic_netlist(*HELD_OUT)
    sched = respace(make_schedule(1000), 200)
    runs = [sample(held, model, sched, GuidanceConfig(), seed=11, keep_states=True)[1] for _ in range(2)]
    sample_same = (all(np.array_equal(a, b) for a, b in zip(runs[0].states, runs[1].states))
                   and runs[0].records == runs[1].records
                   and np.array_equal(runs[0].placement, runs[1].placement))

    trips = 0
    d = parse_bookshelf(write(tmp_path, MINIMAL))
    back = parse_bookshelf(serialize_bookshelf(d.netlist, d.placement, tmp_path / "min"))
    parse_same = back.netlist == d.netlist and np.array_equal(back.placement, d.placement)
    trips += 1
    for n in (8, 16, 32, 64):
        nl = synthetic_netlist(n, 31)
        p = np.round(np.random.default_rng(n).uniform(0, nl.canvas.width / 2, (n, 2)), 3)
        bs = parse_bookshelf(serialize_bookshelf(nl, p, tmp_path / f"s{n}", name=nl.name))
        same_nets = all((a.id, a.name, a.pins) == (b.id, b.name, b.pins) for a, b in zip(bs.netlist.nets, nl.nets))
        save_json(nl, tmp_path / f"s{n}.json", p)
        js, jp = load_json(tmp_path / f"s{n}.json")
        parse_same &= (bs.netlist.macros == nl.macros and bs.netlist.pads == nl.pads
                       and bs.netlist.canvas == nl.canvas and same_nets and len(bs.netlist.nets) == len(nl.nets)
                       and np.array_equal(bs.placement, p) and js == nl and np.array_equal(jp, p))
        trips += 2
    report(9, train_same and sample_same and parse_same,
           f"train bitwise {train_same}, sampling bitwise {sample_same}, {trips} parser round trips {parse_same}")


# --- 10 -----------------------------------------------------------------------

def test_criterion_10_oracle_denoiser():
    nl = synthetic_netlist(16, 55)
    x0 = nl.frame.normalize(make_reference_placement(nl, 0))
    s = make_schedule(1000)

    def oracle(x, t):
        ab = s.alpha_bar[t - 1]
        return (x - math.sqrt(ab) * x0) / math.sqrt(1 - ab)

    start = time.perf_counter()
    placement, traj = sample(nl, oracle, s, GuidanceConfig(mode="none"), seed=0)
    dt = time.perf_counter() - start
    rms = float(np.sqrt(np.mean((nl.frame.normalize(placement) - x0) ** 2)))
    report(10, rms < 0.05 and dt < 10 and all(math.isfinite(r.hpwl) for r in traj.records),
           f"RMS to x0 {rms:.2e}, {dt:.1f}s")
