"""Placement objectives: HPWL (exact and log-sum-exp smoothed), overlap penalty,
the composite guidance loss and its two-phase weight schedule.

All functions work in whatever frame the netlist is expressed in; pass
``netlist.normalized`` together with a normalized placement for diffusion-space
quantities.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NonFiniteInput, ShapeMismatch
from .netlist import check_placement

DEFAULT_GAMMA = 0.01


def _positions(netlist, placement):
    p = check_placement(netlist, placement)
    return netlist.arrays, netlist.arrays.positions(p)


def per_net_hpwl(netlist, placement):
    a, pos = _positions(netlist, placement)
    return kernels.net_hpwl(pos, a.half, a.pin_node, a.pin_off, a.net_ptr)


def hpwl_exact(netlist, placement):
    return float(np.sum(per_net_hpwl(netlist, placement)))


def _check_gamma(gamma):
    if not gamma > 0:
        raise ValueError(f"smoothing temperature must be positive, got {gamma}")


def per_net_hpwl_smooth(netlist, placement, gamma=DEFAULT_GAMMA):
    """Smoothed per-net HPWL and the derivative of each net's value w.r.t. its pins.

    The second array has one row per pin (net-major order, see ``NetArrays``).
    """
    _check_gamma(gamma)
    a, pos = _positions(netlist, placement)
    return kernels.net_hpwl_smooth(pos, a.half, a.pin_node, a.pin_off, a.net_ptr, float(gamma))


def hpwl_smooth(netlist, placement, gamma=DEFAULT_GAMMA):
    vals, _ = per_net_hpwl_smooth(netlist, placement, gamma)
    return float(np.sum(vals))


def _net_weights(netlist, net_weights):
    n = netlist.arrays.n_nets
    if net_weights is None:
        return np.ones(n)
    w = np.asarray(net_weights, dtype=np.float64)
    if w.shape != (n,):
        raise ShapeMismatch(f"net weights have shape {w.shape}, expected ({n},)")
    if not np.all(np.isfinite(w)):
        raise NonFiniteInput("net weights contain non-finite values")
    return w


def weighted_hpwl(netlist, placement, gamma=DEFAULT_GAMMA, net_weights=None):
    """``(sum_n v_n * smooth_hpwl_n, gradient)`` for movable macros."""
    _check_gamma(gamma)
    w = _net_weights(netlist, net_weights)
    a, pos = _positions(netlist, placement)
    return kernels.weighted_hpwl_grad(pos, a.half, a.pin_node, a.pin_off, a.net_ptr,
                                      float(gamma), w, a.n_movable)


def grad_hpwl(netlist, placement, gamma=DEFAULT_GAMMA, net_weights=None):
    """Gradient of (weighted) smoothed HPWL w.r.t. movable macro corners.

    With ``net_weights = v`` this is the Jacobian-transpose product
    ``J^T v`` where ``J[n] = d smooth_hpwl_n / d x``.
    """
    return weighted_hpwl(netlist, placement, gamma, net_weights)[1]


def overlap_loss(netlist, placement):
    """Pairwise overlap penalty plus squared boundary protrusion, and its gradient.

    Each overlapping pair contributes the product of its per-axis penetration
    depths ``min(r_i - l_j, r_j - l_i)``; that is the overlap area unless one
    side contains the other.  Zero exactly when the layout is legal.
    """
    p = check_placement(netlist, placement)
    a = netlist.arrays
    return kernels.overlap_penalty(p, a.sizes[: a.n_movable], a.canvas)


@dataclass(frozen=True)
class GuideWeights:
    w_hpwl: float = 1.0
    w_overlap: float = 0.1

    def __post_init__(self):
        if self.w_hpwl < 0 or self.w_overlap < 0:
            raise ValueError("guidance weights must be non-negative")


def guide_loss(netlist, placement, weights: GuideWeights, gamma=DEFAULT_GAMMA):
    value = 0.0
    grad = np.zeros((netlist.n_movable, 2))
    if weights.w_hpwl:
        h, gh = weighted_hpwl(netlist, placement, gamma)
        value += weights.w_hpwl * h
        grad += weights.w_hpwl * gh
    if weights.w_overlap:
        o, go = overlap_loss(netlist, placement)
        value += weights.w_overlap * o
        grad += weights.w_overlap * go
    if not weights.w_hpwl and not weights.w_overlap:
        check_placement(netlist, placement)
    return value, grad


@dataclass
class ScheduleState:
    """Two-phase weight schedule: wirelength first, overlap once HPWL plateaus."""

    window: int = 10
    threshold: float = 0.1
    phase1: GuideWeights = GuideWeights(1.0, 0.1)
    phase2: GuideWeights = GuideWeights(0.1, 1.0)
    phase: int = 1
    switched_at: int | None = None
    history: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("plateau window must be at least 2")
        self.history = deque(self.history, maxlen=self.window)

    @property
    def weights(self):
        return self.phase1 if self.phase == 1 else self.phase2


def relative_improvement(history):
    first, last = history[0], history[-1]
    return (first - last) / max(abs(first), 1e-12)


def weight_schedule(state: ScheduleState, k: int, current_hpwl: float):
    """Record ``current_hpwl`` for inner step ``k`` and return the weights to use.

    The switch to phase 2 happens when the relative HPWL improvement across a
    full trailing window falls below the threshold, and is never undone.
    """
    if k < 1:
        raise ValueError("inner step index starts at 1")
    state.history.append(float(current_hpwl))
    if (state.phase == 1 and len(state.history) == state.window
            and relative_improvement(state.history) < state.threshold):
        state.phase = 2
        state.switched_at = k
    return state.weights, state
