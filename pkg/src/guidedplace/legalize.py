"""Greedy macro legalization and the exact geometric metrics around it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NonConvergence, ShapeMismatch
from .netlist import check_placement

MAX_UTILIZATION = 0.98
REFINEMENTS = 3


@dataclass
class LegalizationResult:
    placement: np.ndarray
    displacement_total: float
    per_macro_displacement: np.ndarray
    moved_count: int


def overlap_area_exact(netlist, placement):
    p = check_placement(netlist, placement)
    a = netlist.arrays
    return kernels.overlap_area(p, np.ascontiguousarray(a.sizes[: a.n_movable]))


def overlapping_pairs(netlist, placement):
    """Index pairs ``(i, j)``, ``i < j``, of macros with positive-area overlap."""
    p = check_placement(netlist, placement)
    s = netlist.arrays.sizes[: netlist.n_movable]
    r = p + s
    ox = np.minimum(r[:, None, 0], r[None, :, 0]) - np.maximum(p[:, None, 0], p[None, :, 0])
    oy = np.minimum(r[:, None, 1], r[None, :, 1]) - np.maximum(p[:, None, 1], p[None, :, 1])
    hit = np.triu((ox > 0) & (oy > 0), k=1)
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(hit))]


def boundary_protrusion(netlist, placement):
    """Total length by which macros stick out of the canvas (0 when in bounds)."""
    p = check_placement(netlist, placement)
    a = netlist.arrays
    s = a.sizes[: a.n_movable]
    under = np.maximum(a.canvas[None, :2] - p, 0.0)
    over = np.maximum(p + s - a.canvas[None, 2:], 0.0)
    return float(under.sum() + over.sum())


def displacement(before, after):
    """Per-macro Manhattan distance and its total."""
    b = np.asarray(before, dtype=np.float64)
    c = np.asarray(after, dtype=np.float64)
    if b.shape != c.shape:
        raise ShapeMismatch(f"placements have shapes {b.shape} and {c.shape}")
    per = np.abs(c - b).sum(axis=1)
    return float(per.sum()), per


def legalize(netlist, placement) -> LegalizationResult:
    """Place macros largest-first at the nearest free grid spot around their target.

    The search walks square rings of a grid anchored at the macro's own
    position with pitch ``min macro side / 4``; if the canvas is exhausted the
    pitch is halved, at most three times.
    """
    p = check_placement(netlist, placement)
    a = netlist.arrays
    m = a.n_movable
    sizes = a.sizes[:m]
    xmin, ymin, xmax, ymax = a.canvas
    width, height = xmax - xmin, ymax - ymin
    area = float(np.sum(sizes[:, 0] * sizes[:, 1]))
    if area > MAX_UTILIZATION * width * height:
        raise NonConvergence(f"macro area {area:.6g} exceeds {MAX_UTILIZATION:.0%} of the canvas")
    if np.any(sizes[:, 0] > width) or np.any(sizes[:, 1] > height):
        raise NonConvergence("a macro is larger than the canvas")

    order = sorted(range(m), key=lambda i: (-sizes[i, 0] * sizes[i, 1], i))
    base_pitch = float(np.min(sizes)) / 4.0
    placed = np.zeros((m, 4))
    out = p.copy()
    for n, i in enumerate(order):
        w, h = float(sizes[i, 0]), float(sizes[i, 1])
        # anchor the rings inside the canvas so they cover it even for far-off targets
        ax = min(max(float(p[i, 0]), xmin), xmax - w)
        ay = min(max(float(p[i, 1]), ymin), ymax - h)
        found = False
        for level in range(REFINEMENTS + 1):
            pitch = base_pitch / 2 ** level
            rings = int(math.ceil(max(width, height) / pitch)) + 1
            found, x, y = kernels.spiral_search(ax, ay, w, h,
                                                placed, n, a.canvas, pitch, rings)
            if found:
                break
        if not found:
            raise NonConvergence(f"no legal position for macro {i}")
        out[i] = (x, y)
        placed[n] = (x, y, w, h)
    total, per = displacement(p, out)
    return LegalizationResult(out, total, per, int(np.count_nonzero(per)))
