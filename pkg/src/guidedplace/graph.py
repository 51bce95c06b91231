"""Heterogeneous macro/net graph with static and dynamic input features.

Macro nodes (movable macros followed by fixed pads) carry normalized size,
normalized bottom-left position and a pad flag.  Net nodes carry the exact
HPWL of the current placement and the degree pair
``(macro-and-pad pins, total declared pins)``.  One edge per pin links a net
to its owner, with the normalized center-relative pin offset as feature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import NonFiniteInput, ShapeMismatch
from .frame import CoordFrame, denormalize, normalize  # noqa: F401  (re-exported)
from .objectives import per_net_hpwl


@dataclass(frozen=True)
class HeteroGraph:
    n_movable: int
    node_size: np.ndarray    # (M+Q, 2) static
    node_is_pad: np.ndarray  # (M+Q,) static
    node_pos: np.ndarray     # (M+Q, 2) dynamic
    net_hpwl: np.ndarray     # (N,) dynamic
    net_degree: np.ndarray   # (N, 2) static
    edge_index: np.ndarray   # (E, 2) static: (net id, node id)
    edge_feat: np.ndarray    # (E, 2) static
    global_feat: np.ndarray  # (2,) canvas width, height in canvas units
    timestep: int = 0

    @property
    def n_nodes(self):
        return self.node_size.shape[0]

    @property
    def n_nets(self):
        return self.net_hpwl.shape[0]

    @property
    def macro_feat(self):
        return np.concatenate([self.node_size, self.node_pos, self.node_is_pad[:, None]], axis=1)

    @property
    def net_feat(self):
        return np.concatenate([self.net_hpwl[:, None], self.net_degree], axis=1)

    @property
    def size_feat(self):
        """Conditioning features (normalized w, h) of the movable macros."""
        return self.node_size[: self.n_movable]

    def to_dict(self):
        return {
            "n_movable": self.n_movable,
            "timestep": self.timestep,
            "global": self.global_feat.tolist(),
            "macro_feat": self.macro_feat.tolist(),
            "net_feat": self.net_feat.tolist(),
            "edge_index": self.edge_index.tolist(),
            "edge_feat": self.edge_feat.tolist(),
        }

    def dump_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


def _check_positions(netlist, placement):
    p = np.asarray(placement, dtype=np.float64)
    if p.shape != (netlist.n_movable, 2):
        raise ShapeMismatch(f"placement has shape {p.shape}, expected ({netlist.n_movable}, 2)")
    if not np.all(np.isfinite(p)):
        raise NonFiniteInput("placement contains non-finite coordinates")
    return p


def build_graph(netlist, placement, t=0):
    """Graph for ``placement`` given in the normalized frame of ``netlist``."""
    p = _check_positions(netlist, placement)
    nn = netlist.normalized
    a = nn.arrays
    m = a.n_movable
    is_pad = np.zeros(a.n_nodes)
    is_pad[m:] = 1.0
    degree = np.stack([netlist.net_degrees(), netlist.total_degrees()], axis=1).astype(np.float64)
    return HeteroGraph(
        n_movable=m,
        node_size=a.sizes.copy(),
        node_is_pad=is_pad,
        node_pos=a.positions(p),
        net_hpwl=per_net_hpwl(nn, p),
        net_degree=degree.reshape(-1, 2),
        edge_index=np.stack([a.pin_net, a.pin_node], axis=1).reshape(-1, 2),
        edge_feat=a.pin_off.copy(),
        global_feat=np.array([netlist.canvas.width, netlist.canvas.height], dtype=np.float64),
        timestep=int(t),
    )


def update_dynamic(graph, netlist, placement, t):
    """Rebuild only position and HPWL features; static arrays are shared."""
    p = _check_positions(netlist, placement)
    if p.shape[0] != graph.n_movable:
        raise ShapeMismatch("placement does not match graph")
    nn = netlist.normalized
    return replace(
        graph,
        node_pos=nn.arrays.positions(p),
        net_hpwl=per_net_hpwl(nn, p),
        timestep=int(t),
    )
