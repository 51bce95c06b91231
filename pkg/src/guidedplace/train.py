"""Noise-prediction training with momentum SGD and cosine learning-rate decay.

Randomness is keyed by ``(seed, global step)``: the epoch permutation, the
per-example timesteps and the noise all come from counter-based streams, so
a run resumed from a checkpoint continues bit for bit.
"""

from __future__ import annotations

import json
import logging
import math
import time
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt
from .config import TrainConfig, config_hash
from .diffusion import make_schedule, q_sample, rng
from .errors import CheckpointError, NonFiniteLoss
from .model import Denoiser, ModelConfig, make_batch

log = logging.getLogger(__name__)


def training_schedule(cfg: TrainConfig):
    s = cfg.schedule
    return make_schedule(s.T, s.kind, s.beta_start, s.beta_end)


def init_model(cfg: TrainConfig):
    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed)
        return Denoiser(cfg.model)


def steps_per_epoch(n_samples, batch_size):
    return math.ceil(n_samples / batch_size)


def batch_indices(cfg: TrainConfig, n_samples, step):
    spe = steps_per_epoch(n_samples, cfg.batch_size)
    epoch, k = divmod(step, spe)
    order = rng(cfg.seed, epoch, "data").permutation(n_samples)
    return order[k * cfg.batch_size:(k + 1) * cfg.batch_size]


def draw_noise(seed, step, sizes, T):
    """Per-example timesteps in ``[1, T]`` and noise arrays of shape ``(m, 2)``."""
    ts = rng(seed, step, "train_t").integers(1, T + 1, size=len(sizes))
    g = rng(seed, step, "train_eps")
    return ts, [g.standard_normal((m, 2)) for m in sizes]


def batch_loss(model, samples, ts, eps, sched):
    """Mean over examples of the per-macro squared error ``|eps - eps_theta|^2``."""
    x_t = [q_sample(s.x0, int(t), e, sched) for s, t, e in zip(samples, ts, eps)]
    batch = make_batch([s.netlist for s in samples], x_t, sched.timesteps[np.asarray(ts) - 1],
                       model.config.gamma, dtype=model.dtype)
    pred = model(batch)
    target = torch.as_tensor(np.concatenate(eps, axis=0), dtype=model.dtype)
    sq = ((pred - target) ** 2).sum(1)
    per = torch.zeros(batch.n_graphs, dtype=sq.dtype).index_add(0, torch.as_tensor(
        np.repeat(np.arange(batch.n_graphs), batch.n_movable)), sq)
    per = per / torch.as_tensor(batch.n_movable, dtype=sq.dtype)
    return per.mean()


def cosine_lr(base, step, total):
    if total <= 0:
        return base
    return base * 0.5 * (1.0 + math.cos(math.pi * min(step, total) / total))


def make_optimizer(model, cfg: TrainConfig):
    return torch.optim.SGD(model.parameters(), lr=cfg.lr, momentum=cfg.momentum)


def train_step(model, optimizer, samples, sched, cfg: TrainConfig, step, lr):
    ts, eps = draw_noise(cfg.seed, step, [s.netlist.n_movable for s in samples], sched.T)
    for group in optimizer.param_groups:
        group["lr"] = lr
    optimizer.zero_grad(set_to_none=True)
    loss = batch_loss(model, samples, ts, eps, sched)
    if not torch.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss.item()} at step {step} "
                            f"(timesteps {ts.tolist()}, designs {[s.netlist.name for s in samples]})")
    loss.backward()
    if cfg.clip:
        torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.clip)
    optimizer.step()
    return float(loss.item())


def _momentum_state(model, optimizer):
    out = {}
    for name, p in model.named_parameters():
        buf = optimizer.state.get(p, {}).get("momentum_buffer")
        if buf is not None:
            out[name] = buf
    return out


def _restore_momentum(model, optimizer, buffers):
    for name, p in model.named_parameters():
        if name in buffers:
            optimizer.state[p]["momentum_buffer"] = buffers[name].to(p.dtype).clone()


def save_checkpoint(path, model, optimizer, cfg: TrainConfig, step, losses, total_steps):
    sched = training_schedule(cfg)
    ckpt.save(path, {
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "schedule": sched.signature(),
        "frame": "normalized [-1, 1]^2, bottom-left corners",
        "step": int(step),
        "total_steps": int(total_steps),
        "losses": [float(v) for v in losses],
        "params": ckpt.encode_state(model.state_dict()),
        "momentum": ckpt.encode_state(_momentum_state(model, optimizer)),
    })


def load_model(path):
    """Rebuild the :class:`Denoiser` stored in a checkpoint (eval mode)."""
    doc = ckpt.load(path)
    try:
        cfg = TrainConfig.from_dict(doc["config"])
        model = Denoiser(cfg.model)
        state = ckpt.decode_state(doc["params"])
        model = model.to(next(iter(state.values())).dtype) if state else model
        model.load_state_dict(state)
    except (KeyError, RuntimeError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    model.eval()
    model.schedule_signature = doc["schedule"]
    model.config_hash = doc.get("config_hash")
    return model, doc


def write_loss_csv(path, losses):
    lines = ["step,loss"] + [f"{i},{v!r}" for i, v in enumerate(losses)]
    ckpt.atomic_write_text(path, "\n".join(lines) + "\n")


def smoothed(losses, window=20):
    v = np.asarray(losses, dtype=np.float64)
    if v.size == 0:
        return v
    c = np.cumsum(np.concatenate([[0.0], v]))
    n = np.minimum(np.arange(1, v.size + 1), window)
    return (c[1:] - c[np.arange(1, v.size + 1) - n]) / n


def train(cfg: TrainConfig, dataset, out_path, loss_csv=None, resume=None,
          stop_after=None, checkpoint_every=0, progress=None):
    """Run ``cfg.epochs`` epochs over ``dataset`` and write a checkpoint.

    ``resume`` continues from a checkpoint written by an earlier call with
    the same config and dataset.  ``stop_after`` ends the run once that many
    global steps are done (used to split a run in two).
    """
    if not dataset and cfg.epochs:
        raise ValueError("empty dataset")
    sched = training_schedule(cfg)
    model = init_model(cfg)
    optimizer = make_optimizer(model, cfg)
    spe = steps_per_epoch(len(dataset), cfg.batch_size) if dataset else 0
    total = cfg.epochs * spe
    step, losses = 0, []
    if resume is not None:
        doc = ckpt.load(resume)
        if doc.get("config_hash") != config_hash(cfg):
            raise CheckpointError(f"{resume} was written with a different training config")
        model.load_state_dict(ckpt.decode_state(doc["params"]))
        _restore_momentum(model, optimizer, ckpt.decode_state(doc["momentum"]))
        step, losses = int(doc["step"]), list(doc["losses"])
    end = total if stop_after is None else min(total, stop_after)
    model.train()
    started = time.perf_counter()
    while step < end:
        idx = batch_indices(cfg, len(dataset), step)
        loss = train_step(model, optimizer, [dataset[i] for i in idx], sched, cfg, step,
                          cosine_lr(cfg.lr, step, total))
        losses.append(loss)
        step += 1
        if progress is not None:
            progress(step, total, loss)
        elif step % max(1, spe) == 0:
            log.info("epoch %d/%d  loss %.4f  (%.1fs)", step // spe, cfg.epochs,
                     float(np.mean(losses[-spe:])), time.perf_counter() - started)
        if checkpoint_every and step % checkpoint_every == 0 and step < end:
            save_checkpoint(out_path, model, optimizer, cfg, step, losses, total)
    save_checkpoint(out_path, model, optimizer, cfg, step, losses, total)
    if loss_csv is not None:
        write_loss_csv(loss_csv, losses)
    return Path(out_path)


def dump_diagnostics(path, exc, cfg: TrainConfig):
    Path(path).write_text(json.dumps({"error": str(exc), "config": cfg.to_dict()},
                                     indent=1, default=list))


__all__ = ["TrainConfig", "ModelConfig", "train", "train_step", "load_model", "init_model",
           "batch_loss", "write_loss_csv", "smoothed", "training_schedule"]
