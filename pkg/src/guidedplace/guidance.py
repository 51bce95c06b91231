"""Gradient-descent refinement of a predicted clean placement.

Runs in the normalized frame.  Each inner step uses the weights handed out by
the two-phase schedule; a step that would raise the composite loss is halved
up to ``max_halvings`` times, and the loop stops if none of the halvings help.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import NonFiniteInput
from .objectives import GuideWeights, ScheduleState, weight_schedule

MODES = ("full", "overlap_only", "none")


@dataclass(frozen=True)
class GuidanceConfig:
    K: int = 700
    eta: float = 0.05
    threshold: float = 0.1
    window: int = 10
    phase1: tuple = (1.0, 0.1)
    phase2: tuple = (0.01, 1.0)
    gamma: float = 0.01
    gamma_anneal: float = 0.5
    mode: str = "full"
    max_halvings: int = 10
    grad_tol: float = 1e-6

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown guidance mode {self.mode!r}")
        if self.K < 0 or not self.eta > 0 or not self.gamma > 0:
            raise ValueError("need K >= 0, eta > 0 and gamma > 0")
        if self.mode == "none" and self.K:
            object.__setattr__(self, "K", 0)
        object.__setattr__(self, "phase1", tuple(float(v) for v in self.phase1))
        object.__setattr__(self, "phase2", tuple(float(v) for v in self.phase2))

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def with_mode(self, mode):
        return replace(self, mode=mode, K=self.K if mode != "none" else 0)


@dataclass
class GuidanceOutcome:
    x: np.ndarray
    steps: int = 0
    switched_at: int | None = None
    loss_start: float = 0.0
    loss_end: float = 0.0
    trace: list = field(default_factory=list)


class _Evaluator:
    """Smoothed HPWL and overlap penalty with gradients, straight on the kernels."""

    def __init__(self, netlist):
        a = netlist.arrays
        self.a = a
        self.ones = np.ones(a.n_nets)
        self.sizes = np.ascontiguousarray(a.sizes[: a.n_movable])
        self.pos = np.concatenate([np.zeros((a.n_movable, 2)), a.pad_xy], axis=0)

    def __call__(self, x, gamma, need_hpwl=True):
        a = self.a
        if need_hpwl:
            self.pos[: a.n_movable] = x
            h, gh = kernels.weighted_hpwl_grad(self.pos, a.half, a.pin_node, a.pin_off, a.net_ptr,
                                               gamma, self.ones, a.n_movable)
        else:
            h, gh = 0.0, None
        o, go = kernels.overlap_penalty(x, self.sizes, a.canvas)
        return h, gh, o, go


def _combine(w, h, gh, o, go):
    value = w.w_hpwl * h + w.w_overlap * o
    grad = w.w_overlap * go
    if w.w_hpwl:
        grad = grad + w.w_hpwl * gh
    return value, grad


def guidance_inner_loop(x0_hat, netlist, cfg: GuidanceConfig, record=False):
    """Refine ``x0_hat`` (normalized, shape (M, 2)) against ``netlist.normalized``-frame losses.

    ``netlist`` must already be in the frame of ``x0_hat``.  Returns a
    :class:`GuidanceOutcome`; ``record=True`` keeps one ``(k, loss_before,
    loss_after, w_hpwl, w_overlap)`` tuple per accepted step.
    """
    x = np.array(x0_hat, dtype=np.float64)
    if x.shape != (netlist.n_movable, 2):
        raise ValueError(f"x0_hat has shape {x.shape}, expected ({netlist.n_movable}, 2)")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("predicted placement contains non-finite values")
    out = GuidanceOutcome(x=x)
    if cfg.mode == "none" or cfg.K == 0:
        return out

    ev = _Evaluator(netlist)
    overlap_only = cfg.mode == "overlap_only"
    fixed = GuideWeights(0.0, 1.0)
    state = ScheduleState(window=cfg.window, threshold=cfg.threshold,
                          phase1=GuideWeights(*cfg.phase1), phase2=GuideWeights(*cfg.phase2))
    gamma = cfg.gamma
    comps = ev(x, gamma, need_hpwl=not overlap_only)
    first = True
    for k in range(1, cfg.K + 1):
        if overlap_only:
            w = fixed
        else:
            phase_before = state.phase
            w, state = weight_schedule(state, k, comps[0])
            if state.phase != phase_before:
                out.switched_at = k
                gamma *= cfg.gamma_anneal
                comps = ev(x, gamma)
        value, grad = _combine(w, *comps)
        if first:
            out.loss_start = value
            first = False
        out.loss_end = value
        if np.sqrt(np.mean(grad * grad)) < cfg.grad_tol:
            break
        step = cfg.eta
        accepted = False
        for _ in range(cfg.max_halvings + 1):
            trial = x - step * grad
            trial_comps = ev(trial, gamma, need_hpwl=not overlap_only)
            trial_value, _ = _combine(w, *trial_comps)
            if trial_value <= value:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        if record:
            out.trace.append((k, value, trial_value, w.w_hpwl, w.w_overlap))
        x, comps = trial, trial_comps
        out.steps = k
        out.loss_end = trial_value
    out.x = x
    return out
