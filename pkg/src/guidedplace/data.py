"""Training data: synthetic base designs, configuration-model rewiring and
reference placements."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .diffusion import rng as keyed_rng
from .errors import NonConvergence
from .guidance import GuidanceConfig, guidance_inner_loop
from .legalize import legalize
from .netlist import Canvas, Macro, Net, Netlist, Pin, check
from .objectives import hpwl_exact

log = logging.getLogger(__name__)

DESK_MACRO_COUNTS = (8, 16, 32, 64)


@dataclass
class TrainSample:
    netlist: Netlist
    x0: np.ndarray          # normalized reference placement
    placement: np.ndarray   # the same placement in canvas units (legal)


def synthetic_netlist(n_macros, seed, *, utilization=0.45, nets_per_macro=2.5,
                      max_degree=10, degree_exponent=2.2, pad_ratio=0.5, locality=0.2,
                      name=None):
    """Random mixed-size design with a power-law net degree distribution.

    Net members are drawn around a root node with Gaussian falloff (width
    ``locality``, relative to the canvas) in a hidden latent layout.

    Macro aspect ratios lie in [0.5, 2]; I/O pads sit on the canvas edge.
    Values are rounded to 1e-3 so the design survives a text round trip.
    """
    rng = np.random.default_rng([int(seed), int(n_macros), 0x5D])
    areas = np.exp(rng.uniform(math.log(40.0), math.log(400.0), n_macros))
    aspect = np.exp(rng.uniform(math.log(0.5), math.log(2.0), n_macros))
    widths = np.round(np.sqrt(areas * aspect), 3)
    heights = np.round(np.sqrt(areas / aspect), 3)
    side = float(np.ceil(math.sqrt(np.sum(widths * heights) / utilization)))
    side = max(side, float(np.ceil(max(widths.max(), heights.max()))) + 1.0)
    macros = tuple(Macro(i, float(widths[i]), float(heights[i]), True, f"m{i}") for i in range(n_macros))

    n_pads = max(4, int(round(pad_ratio * n_macros)))
    pads = []
    for j in range(n_pads):
        edge, u = rng.integers(4), round(float(rng.uniform(0.0, side)), 3)
        x, y = [(u, 0.0), (side, u), (u, side), (0.0, u)][edge]
        pads.append(Macro(n_macros + j, 0.0, 0.0, False, f"p{j}", x, y))

    n_nodes = n_macros + n_pads
    node_weight = np.concatenate([np.ones(n_macros), np.full(n_pads, 0.35)])
    # latent locations give the connectivity spatial locality, as in real designs
    latent = np.concatenate([rng.uniform(0.0, 1.0, (n_macros, 2)),
                             np.array([[p.x, p.y] for p in pads]) / side])
    degrees = np.arange(2, min(max_degree, n_nodes) + 1)
    pk = degrees.astype(float) ** -degree_exponent
    pk /= pk.sum()
    nets = []
    for k in range(int(round(nets_per_macro * n_macros))):
        d = int(rng.choice(degrees, p=pk))
        root = int(rng.choice(n_nodes, p=node_weight / node_weight.sum()))
        near = node_weight * np.exp(-np.sum((latent - latent[root]) ** 2, axis=1) / (2 * locality ** 2))
        near[root] = 0.0
        others = rng.choice(n_nodes, size=d - 1, replace=False, p=near / near.sum())
        owners = np.concatenate([[root], others])
        pins = []
        for o in owners:
            if o < n_macros:
                ox = round(float(rng.uniform(-0.5, 0.5) * widths[o]), 3)
                oy = round(float(rng.uniform(-0.5, 0.5) * heights[o]), 3)
                pins.append(Pin(int(o), ox, oy))
            else:
                pins.append(Pin(int(o)))
        extra = int(rng.poisson(1.5))
        nets.append(Net(k, tuple(pins), f"n{k}", d + extra))
    return check(Netlist(macros, tuple(pads), tuple(nets), Canvas(0.0, 0.0, side, side),
                         name=name or f"synth{n_macros}_{seed}"))


def desk_bases(seed=0, counts=DESK_MACRO_COUNTS, per_count=2):
    return [synthetic_netlist(c, seed * 1000 + 10 * c + r) for c in counts for r in range(per_count)]


def rewire(netlist, seed, max_attempts_factor=100):
    """Degree-preserving rewiring of macro/pad pins across nets.

    Returns ``(netlist, remaining_duplicates)``.
    """
    a = netlist.arrays
    pin_net = a.pin_net.copy()
    stubs = a.pin_node.copy()
    rng = keyed_rng(seed, 0, "augment")
    stubs = stubs[rng.permutation(stubs.shape[0])]
    ptr = a.net_ptr

    members = [dict() for _ in range(a.n_nets)]
    for p, (n, u) in enumerate(zip(pin_net, stubs)):
        members[n][u] = members[n].get(u, 0) + 1

    def duplicate_positions():
        return [p for p in range(stubs.shape[0]) if members[pin_net[p]][stubs[p]] > 1]

    dups = duplicate_positions()
    attempts = 0
    limit = max_attempts_factor * max(1, stubs.shape[0])
    n_pins = stubs.shape[0]
    while dups and attempts < limit:
        attempts += 1
        p = dups[int(rng.integers(len(dups)))]
        q = int(rng.integers(n_pins))
        n, m = pin_net[p], pin_net[q]
        u, v = stubs[p], stubs[q]
        if n == m or u == v or members[m].get(u, 0) or members[n].get(v, 0):
            continue
        for net, old, new in ((n, u, v), (m, v, u)):
            members[net][old] -= 1
            if not members[net][old]:
                del members[net][old]
            members[net][new] = members[net].get(new, 0) + 1
        stubs[p], stubs[q] = v, u
        dups = duplicate_positions()

    # offsets are resampled from each owner's original offset set
    offsets_by_node = {}
    for u, off in zip(a.pin_node, a.pin_off):
        offsets_by_node.setdefault(int(u), []).append((float(off[0]), float(off[1])))
    nets = []
    for k, net in enumerate(netlist.nets):
        kept_cells = tuple(pin for pin in net.pins if pin.owner >= a.n_nodes)
        pins = []
        for p in range(ptr[k], ptr[k + 1]):
            u = int(stubs[p])
            choices = offsets_by_node[u]
            ox, oy = choices[int(rng.integers(len(choices)))]
            pins.append(Pin(u, ox, oy))
        nets.append(replace(net, pins=tuple(pins) + kept_cells))
    return replace(netlist, nets=tuple(nets)), len(dups)


def augment_netlist(netlist, seed):
    """Configuration-model augmentation: same degree sequences, new wiring."""
    out, dups = rewire(netlist, seed)
    if dups:
        log.warning("rewiring left %d duplicate net/node pins in %s (seed %s)", dups, netlist.name, seed)
    return out


# phase 2 leans harder on overlap than the sampler default so legalization moves little
REFERENCE_GUIDANCE = GuidanceConfig(K=500, eta=0.05, threshold=0.1, phase2=(0.01, 1.0))


def make_reference_placement(netlist, seed, cfg: GuidanceConfig = REFERENCE_GUIDANCE):
    """Descend the guidance loss from a random start, then legalize (canvas units)."""
    nn = netlist.normalized
    rng = keyed_rng(seed, 1, "data")
    sizes = nn.arrays.sizes[: nn.n_movable]
    init = rng.uniform(-1.0, 1.0, size=sizes.shape) * (1.0 - sizes / 2) - sizes / 2
    refined = guidance_inner_loop(init, nn, cfg).x
    target = netlist.frame.denormalize(refined)
    start = netlist.frame.denormalize(init)
    result = legalize(netlist, target)
    if hpwl_exact(netlist, result.placement) > hpwl_exact(netlist, start):
        log.debug("reference placement for %s did not beat its random start", netlist.name)
    return result.placement


REFERENCE_ATTEMPTS = 5


def _reference_with_retries(netlist, seed):
    # greedy legalization can fail on a fragmented layout; a new start usually fixes it
    for attempt in range(REFERENCE_ATTEMPTS):
        s = seed if attempt == 0 else sample_seed(seed, -1, attempt)
        try:
            return make_reference_placement(netlist, s)
        except NonConvergence as exc:
            log.warning("reference placement for %s failed (attempt %d): %s", netlist.name, attempt + 1, exc)
    raise NonConvergence(f"no legal reference placement for {netlist.name} after {REFERENCE_ATTEMPTS} starts")


def sample_seed(seed, base, aug):
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(base) & 0xFFFFFFFF, int(aug)]).generate_state(1)[0])


def build_dataset(bases, n_aug, seed=0, progress=None):
    if n_aug < 1:
        raise ValueError("n_aug must be at least 1")
    out = []
    total = len(bases) * n_aug
    for b, base in enumerate(bases):
        for k in range(n_aug):
            s = sample_seed(seed, b, k)
            nl = augment_netlist(base, s)
            nl = replace(nl, name=f"{base.name}_aug{k}")
            placement = _reference_with_retries(nl, s)
            out.append(TrainSample(nl, nl.frame.normalize(placement), placement))
            if progress is not None:
                progress(len(out), total)
            elif len(out) % max(1, total // 10) == 0:
                log.info("dataset: %d/%d samples", len(out), total)
    return out
