"""Loop kernels compiled with numba.

Every function here has a vectorized twin in ``_numpy`` with an identical
signature and bit-compatible tie-breaking; the parity tests hold them together.
No ``fastmath``: the legalizer relies on exact IEEE comparisons.
"""

import numpy as np
from numba import njit

_jit = njit(cache=True, nogil=True)


@_jit
def _pin_coord(pos, half, pin_node, pin_off, k, axis):
    node = pin_node[k]
    return pos[node, axis] + half[node, axis] + pin_off[k, axis]


@_jit
def net_hpwl(pos, half, pin_node, pin_off, net_ptr):
    n_nets = net_ptr.shape[0] - 1
    out = np.zeros(n_nets)
    for n in range(n_nets):
        a, b = net_ptr[n], net_ptr[n + 1]
        if b <= a:
            continue
        for axis in range(2):
            lo = np.inf
            hi = -np.inf
            for k in range(a, b):
                v = _pin_coord(pos, half, pin_node, pin_off, k, axis)
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            out[n] += hi - lo
    return out


@_jit
def net_hpwl_smooth(pos, half, pin_node, pin_off, net_ptr, gamma):
    """Log-sum-exp HPWL per net and d(net value)/d(pin position)."""
    n_nets = net_ptr.shape[0] - 1
    vals = np.zeros(n_nets)
    dpin = np.zeros((pin_node.shape[0], 2))
    for n in range(n_nets):
        a, b = net_ptr[n], net_ptr[n + 1]
        if b <= a:
            continue
        for axis in range(2):
            lo = np.inf
            hi = -np.inf
            for k in range(a, b):
                v = _pin_coord(pos, half, pin_node, pin_off, k, axis)
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            s_hi = 0.0
            s_lo = 0.0
            for k in range(a, b):
                v = _pin_coord(pos, half, pin_node, pin_off, k, axis)
                s_hi += np.exp((v - hi) / gamma)
                s_lo += np.exp((lo - v) / gamma)
            vals[n] += (hi + gamma * np.log(s_hi)) - (lo - gamma * np.log(s_lo))
            for k in range(a, b):
                v = _pin_coord(pos, half, pin_node, pin_off, k, axis)
                dpin[k, axis] = np.exp((v - hi) / gamma) / s_hi - np.exp((lo - v) / gamma) / s_lo
    return vals, dpin


@_jit
def weighted_hpwl_grad(pos, half, pin_node, pin_off, net_ptr, gamma, weights, n_movable):
    """Value and movable-node gradient of sum_n weights[n] * smooth_hpwl_n."""
    vals, dpin = net_hpwl_smooth(pos, half, pin_node, pin_off, net_ptr, gamma)
    grad = np.zeros((n_movable, 2))
    total = 0.0
    for n in range(net_ptr.shape[0] - 1):
        wn = weights[n]
        total += wn * vals[n]
        for k in range(net_ptr[n], net_ptr[n + 1]):
            node = pin_node[k]
            if node < n_movable:
                grad[node, 0] += wn * dpin[k, 0]
                grad[node, 1] += wn * dpin[k, 1]
    return total, grad


@_jit
def overlap_penalty(pos, sizes, canvas):
    """Pairwise penetration-depth products plus squared boundary protrusion.

    Per axis the depth is ``min(r_i - l_j, r_j - l_i)``: the shorter push that
    separates the pair.  It equals the overlap length unless one interval
    contains the other, where it stays informative instead of going flat.
    """
    m = pos.shape[0]
    grad = np.zeros((m, 2))
    loss = 0.0
    for i in range(m):
        li_x = pos[i, 0]
        li_y = pos[i, 1]
        ri_x = li_x + sizes[i, 0]
        ri_y = li_y + sizes[i, 1]
        for j in range(i + 1, m):
            lj_x = pos[j, 0]
            lj_y = pos[j, 1]
            rj_x = lj_x + sizes[j, 0]
            rj_y = lj_y + sizes[j, 1]
            ax = ri_x - lj_x
            bx = rj_x - li_x
            dx = min(ax, bx)
            if dx <= 0.0:
                continue
            ay = ri_y - lj_y
            by = rj_y - li_y
            dy = min(ay, by)
            if dy <= 0.0:
                continue
            loss += dx * dy
            # ties go to the first branch: i is pushed towards -axis
            sx = 1.0 if ax <= bx else -1.0
            sy = 1.0 if ay <= by else -1.0
            grad[i, 0] += sx * dy
            grad[j, 0] -= sx * dy
            grad[i, 1] += sy * dx
            grad[j, 1] -= sy * dx
    for i in range(m):
        for axis in range(2):
            under = canvas[axis] - pos[i, axis]
            if under > 0.0:
                loss += under * under
                grad[i, axis] -= 2.0 * under
            over = pos[i, axis] + sizes[i, axis] - canvas[axis + 2]
            if over > 0.0:
                loss += over * over
                grad[i, axis] += 2.0 * over
    return loss, grad


@_jit
def overlap_area(pos, sizes):
    m = pos.shape[0]
    total = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            ox = min(pos[i, 0] + sizes[i, 0], pos[j, 0] + sizes[j, 0]) - max(pos[i, 0], pos[j, 0])
            oy = min(pos[i, 1] + sizes[i, 1], pos[j, 1] + sizes[j, 1]) - max(pos[i, 1], pos[j, 1])
            if ox > 0.0 and oy > 0.0:
                total += ox * oy
    return total


@_jit
def _clamp(v, lo, hi_edge, extent):
    if v < lo:
        v = lo
    if v + extent > hi_edge:
        v = hi_edge - extent
        while v + extent > hi_edge:
            v = np.nextafter(v, -np.inf)
        if v < lo:
            v = lo
    return v


@_jit
def _is_free(x, y, w, h, placed, n_placed):
    for k in range(n_placed):
        ox = min(x + w, placed[k, 0] + placed[k, 2]) - max(x, placed[k, 0])
        if ox <= 0.0:
            continue
        oy = min(y + h, placed[k, 1] + placed[k, 3]) - max(y, placed[k, 1])
        if oy > 0.0:
            return False
    return True


@_jit
def spiral_search(x0, y0, w, h, placed, n_placed, canvas, pitch, max_ring):
    """First free spot on square rings of growing radius around (x0, y0).

    Within ring ``r`` candidates are visited by Manhattan distance, then in a
    fixed sign order.  Returns ``(found, x, y)``.
    """
    xmin, ymin, xmax, ymax = canvas[0], canvas[1], canvas[2], canvas[3]
    for r in range(max_ring + 1):
        for a in range(r + 1):
            for c in range(8):
                if c < 4:
                    dx = r if c < 2 else -r
                    dy = a if c % 2 == 0 else -a
                else:
                    dx = a if c % 2 == 0 else -a
                    dy = r if c < 6 else -r
                # skip duplicates produced by zero components or the corner a == r
                if r == 0 and c > 0:
                    continue
                if a == 0 and c % 2 == 1:
                    continue
                if a == r and c >= 4:
                    continue
                x = _clamp(x0 + dx * pitch, xmin, xmax, w)
                y = _clamp(y0 + dy * pitch, ymin, ymax, h)
                if _is_free(x, y, w, h, placed, n_placed):
                    return True, x, y
    return False, x0, y0
