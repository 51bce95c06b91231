"""Guided reverse diffusion over macro placements.

Each reverse step predicts the noise, forms the clean estimate, refines it
with :func:`guidance_inner_loop`, converts the refined estimate back into a
noise and takes the DDPM step with that noise.  When guidance took no step
the predicted noise is used as is, so guidance-free runs are bitwise equal to
plain DDPM.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .diffusion import ddpm_step, guided_epsilon, noise, predict_x0
from .errors import PlacementError, NonFiniteState
from .graph import build_graph, update_dynamic
from .guidance import GuidanceConfig, guidance_inner_loop
from .objectives import hpwl_exact, overlap_loss

log = logging.getLogger(__name__)


@dataclass
class StepRecord:
    t: int
    model_t: int
    hpwl: float              # exact HPWL of the guided clean estimate, canvas units
    overlap: float           # overlap penalty of the same estimate, canvas units
    guidance_steps: int
    switched_at: int | None


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    placement: np.ndarray | None = None      # final x_0 in canvas units
    states: list | None = None               # normalized x_T, ..., x_0 when kept

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "model_t", "hpwl", "overlap", "guidance_steps", "switched_at"])
            for r in self.records:
                w.writerow([r.t, r.model_t, repr(r.hpwl), repr(r.overlap), r.guidance_steps,
                            "" if r.switched_at is None else r.switched_at])


def _noise_fn(model, netlist):
    """Adapt a :class:`Denoiser` or a plain ``f(x_t, t)`` callable."""
    if hasattr(model, "predict"):
        def eps(x_t, t, model_t, graph):
            return model.predict(netlist, x_t, model_t, graph=graph)
        return eps, True

    def eps(x_t, t, model_t, graph):
        return np.asarray(model(x_t, t), dtype=np.float64)
    return eps, False


def sample(netlist, model, sched, cfg: GuidanceConfig = GuidanceConfig(), seed=0,
           keep_states=False, record=True):
    """Draw one placement; returns ``(placement in canvas units, Trajectory)``.

    ``model`` is a :class:`~guidedplace.model.Denoiser` (optionally carrying the
    ``schedule_signature`` of its checkpoint) or any callable mapping
    ``(x_t, t)`` to a noise estimate, where ``t`` indexes ``sched``.
    """
    signature = getattr(model, "schedule_signature", None)
    if signature is not None:
        sched.ensure_compatible(signature)
    nn = netlist.normalized
    m = netlist.n_movable
    eps_fn, wants_graph = _noise_fn(model, netlist)
    x = noise(seed, 0, "init", (m, 2))
    traj = Trajectory(states=[x.copy()] if keep_states else None)
    graph = build_graph(netlist, x, int(sched.timesteps[-1])) if wants_graph else None
    for t in range(sched.T, 0, -1):
        model_t = int(sched.timesteps[t - 1])
        eps_pred = eps_fn(x, t, model_t, graph)
        x0_hat = predict_x0(x, eps_pred, t, sched)
        if not np.all(np.isfinite(x0_hat)):
            raise NonFiniteState(t, "non-finite clean estimate")
        out = guidance_inner_loop(x0_hat, nn, cfg)
        eps_used = guided_epsilon(x, out.x, t, sched) if out.steps else eps_pred
        z = noise(seed, t, "step", (m, 2)) if t > 1 else None
        x = ddpm_step(x, eps_used, t, z, sched)
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(t)
        if keep_states:
            traj.states.append(x.copy())
        if record:
            est = netlist.frame.denormalize(out.x)
            traj.records.append(StepRecord(t, model_t, hpwl_exact(netlist, est),
                                           overlap_loss(netlist, est)[0], out.steps, out.switched_at))
        if wants_graph and t > 1:
            graph = update_dynamic(graph, netlist, x, int(sched.timesteps[t - 2]))
    traj.placement = netlist.frame.denormalize(x)
    return traj.placement, traj


@dataclass
class BatchResult:
    seed: int
    design: str
    placement: np.ndarray | None = None
    trajectory: Trajectory | None = None
    error: str | None = None


def sample_batch(netlists, model, sched, cfg: GuidanceConfig = GuidanceConfig(), seeds=(0,),
                 workers=1, **kwargs):
    """Independent runs, one per seed; failures are recorded, not raised.

    ``netlists`` is one netlist shared by every seed or a list matching ``seeds``.
    Results come back in seed order whatever ``workers`` is.
    """
    seeds = list(seeds)
    if not isinstance(netlists, (list, tuple)):
        netlists = [netlists] * len(seeds)
    if len(netlists) != len(seeds):
        raise ValueError("need one netlist per seed")

    def run(item):
        nl, s = item
        try:
            p, traj = sample(nl, model, sched, cfg, s, **kwargs)
            return BatchResult(s, nl.name, p, traj)
        except PlacementError as exc:
            log.warning("sampling %s with seed %s failed: %s", nl.name, s, exc)
            return BatchResult(s, nl.name, error=f"{type(exc).__name__}: {exc}")

    items = list(zip(netlists, seeds))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(run, items))
    return [run(i) for i in items]
