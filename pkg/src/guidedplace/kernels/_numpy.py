"""Vectorized numpy versions of the numba kernels (same signatures)."""

import numpy as np


def _pin_xy(pos, half, pin_node, pin_off):
    return pos[pin_node] + half[pin_node] + pin_off


def _segments(net_ptr, n_pins):
    n_nets = net_ptr.shape[0] - 1
    nonempty = net_ptr[1:] > net_ptr[:-1]
    starts = net_ptr[:-1][nonempty]
    seg = np.repeat(np.arange(n_nets), np.diff(net_ptr))
    return nonempty, starts, seg


def net_hpwl(pos, half, pin_node, pin_off, net_ptr):
    n_nets = net_ptr.shape[0] - 1
    out = np.zeros(n_nets)
    if pin_node.shape[0] == 0:
        return out
    xy = _pin_xy(pos, half, pin_node, pin_off)
    nonempty, starts, _ = _segments(net_ptr, xy.shape[0])
    if starts.size:
        hi = np.maximum.reduceat(xy, starts, axis=0)
        lo = np.minimum.reduceat(xy, starts, axis=0)
        spread = hi - lo
        out[nonempty] = spread[:, 0] + spread[:, 1]
    return out


def net_hpwl_smooth(pos, half, pin_node, pin_off, net_ptr, gamma):
    n_nets = net_ptr.shape[0] - 1
    vals = np.zeros(n_nets)
    dpin = np.zeros((pin_node.shape[0], 2))
    if pin_node.shape[0] == 0:
        return vals, dpin
    xy = _pin_xy(pos, half, pin_node, pin_off)
    nonempty, starts, seg = _segments(net_ptr, xy.shape[0])
    hi = np.full((n_nets, 2), np.nan)
    lo = np.full((n_nets, 2), np.nan)
    hi[nonempty] = np.maximum.reduceat(xy, starts, axis=0)
    lo[nonempty] = np.minimum.reduceat(xy, starts, axis=0)
    e_hi = np.exp((xy - hi[seg]) / gamma)
    e_lo = np.exp((lo[seg] - xy) / gamma)
    s_hi = np.zeros((n_nets, 2))
    s_lo = np.zeros((n_nets, 2))
    s_hi[nonempty] = np.add.reduceat(e_hi, starts, axis=0)
    s_lo[nonempty] = np.add.reduceat(e_lo, starts, axis=0)
    spread = (hi[nonempty] + gamma * np.log(s_hi[nonempty])) - (lo[nonempty] - gamma * np.log(s_lo[nonempty]))
    vals[nonempty] = spread[:, 0] + spread[:, 1]
    dpin[:] = e_hi / s_hi[seg] - e_lo / s_lo[seg]
    return vals, dpin


def weighted_hpwl_grad(pos, half, pin_node, pin_off, net_ptr, gamma, weights, n_movable):
    vals, dpin = net_hpwl_smooth(pos, half, pin_node, pin_off, net_ptr, gamma)
    seg = np.repeat(np.arange(net_ptr.shape[0] - 1), np.diff(net_ptr))
    contrib = dpin * weights[seg][:, None]
    grad = np.zeros((n_movable, 2))
    mask = pin_node < n_movable
    np.add.at(grad, pin_node[mask], contrib[mask])
    return float(np.dot(weights, vals)), grad


def _pairwise(pos, sizes):
    left = pos
    right = pos + sizes
    ox = np.minimum(right[:, None, 0], right[None, :, 0]) - np.maximum(left[:, None, 0], left[None, :, 0])
    oy = np.minimum(right[:, None, 1], right[None, :, 1]) - np.maximum(left[:, None, 1], left[None, :, 1])
    m = pos.shape[0]
    upper = np.triu(np.ones((m, m), dtype=bool), k=1)
    active = upper & (ox > 0.0) & (oy > 0.0)
    return left, right, ox, oy, active


def overlap_penalty(pos, sizes, canvas):
    m = pos.shape[0]
    grad = np.zeros((m, 2))
    right = pos + sizes
    a = right[:, None, :] - pos[None, :, :]       # r_i - l_j
    b = right[None, :, :] - pos[:, None, :]       # r_j - l_i
    depth = np.minimum(a, b)
    active = np.triu((depth[..., 0] > 0.0) & (depth[..., 1] > 0.0), k=1)
    ii, jj = np.nonzero(active)
    loss = 0.0
    if ii.size:
        dx, dy = depth[ii, jj, 0], depth[ii, jj, 1]
        loss = float(np.sum(dx * dy))
        sign = np.where(a[ii, jj] <= b[ii, jj], 1.0, -1.0)
        for axis, weight in ((0, dy), (1, dx)):
            np.add.at(grad[:, axis], ii, sign[:, axis] * weight)
            np.add.at(grad[:, axis], jj, -sign[:, axis] * weight)
    under = canvas[None, :2] - pos
    over = pos + sizes - canvas[None, 2:]
    under_pos = np.where(under > 0.0, under, 0.0)
    over_pos = np.where(over > 0.0, over, 0.0)
    loss += float(np.sum(under_pos ** 2) + np.sum(over_pos ** 2))
    grad += 2.0 * over_pos - 2.0 * under_pos
    return loss, grad


def overlap_area(pos, sizes):
    _, _, ox, oy, active = _pairwise(pos, sizes)
    return float(np.sum(np.where(active, ox * oy, 0.0)))


def _clamp(v, lo, hi_edge, extent):
    v = np.maximum(v, lo)
    v = np.where(v + extent > hi_edge, hi_edge - extent, v)
    bad = v + extent > hi_edge
    while np.any(bad):
        v = np.where(bad, np.nextafter(v, -np.inf), v)
        bad = v + extent > hi_edge
    return np.maximum(v, lo)


def _ring_offsets(r):
    out = []
    for a in range(r + 1):
        for c in range(8):
            if r == 0 and c > 0:
                continue
            if a == 0 and c % 2 == 1:
                continue
            if a == r and c >= 4:
                continue
            if c < 4:
                out.append((r if c < 2 else -r, a if c % 2 == 0 else -a))
            else:
                out.append((a if c % 2 == 0 else -a, r if c < 6 else -r))
    return np.array(out, dtype=np.float64)


def spiral_search(x0, y0, w, h, placed, n_placed, canvas, pitch, max_ring):
    xmin, ymin, xmax, ymax = canvas
    p = placed[:n_placed]
    for r in range(max_ring + 1):
        off = _ring_offsets(r)
        xs = _clamp(x0 + off[:, 0] * pitch, xmin, xmax, w)
        ys = _clamp(y0 + off[:, 1] * pitch, ymin, ymax, h)
        if n_placed:
            ox = np.minimum(xs[:, None] + w, p[None, :, 0] + p[None, :, 2]) - np.maximum(xs[:, None], p[None, :, 0])
            oy = np.minimum(ys[:, None] + h, p[None, :, 1] + p[None, :, 3]) - np.maximum(ys[:, None], p[None, :, 1])
            blocked = np.any((ox > 0.0) & (oy > 0.0), axis=1)
        else:
            blocked = np.zeros(xs.shape[0], dtype=bool)
        free = np.flatnonzero(~blocked)
        if free.size:
            k = free[0]
            return True, float(xs[k]), float(ys[k])
    return False, x0, y0
