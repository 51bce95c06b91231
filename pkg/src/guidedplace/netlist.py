"""Netlist domain types, validation, connectivity filtering and the JSON format.

Node indexing is global: movable macros come first (``0..M-1``), then fixed
pads (``M..M+Q-1``), then standard cells if any are still attached.  A pin's
``owner`` is such a global index.  Pin offsets are measured from the owner's
center; placements store bottom-left corners.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import NetlistError, ShapeMismatch, NonFiniteInput

log = logging.getLogger(__name__)

JSON_FORMAT = "guidedplace-netlist"
JSON_VERSION = 1


@dataclass(frozen=True)
class Macro:
    id: int
    width: float
    height: float
    movable: bool = True
    name: str = ""
    # fixed location (bottom-left) for pads and pass-through cells
    x: float = 0.0
    y: float = 0.0

    @property
    def area(self):
        return self.width * self.height


@dataclass(frozen=True)
class Pin:
    owner: int
    offset_x: float = 0.0
    offset_y: float = 0.0


@dataclass(frozen=True)
class Net:
    id: int
    pins: tuple[Pin, ...]
    name: str = ""
    # declared degree before standard cells were stripped; None = len(pins)
    total_degree: int | None = None

    @property
    def degree(self):
        return len(self.pins)


@dataclass(frozen=True)
class Canvas:
    origin_x: float
    origin_y: float
    width: float
    height: float

    @property
    def bounds(self):
        return (self.origin_x, self.origin_y,
                self.origin_x + self.width, self.origin_y + self.height)

    @property
    def area(self):
        return self.width * self.height


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def __len__(self):
        return len(self.violations)


@dataclass(frozen=True)
class NetArrays:
    """Flat array view of a netlist used by the numeric kernels.

    Only macros and pads are represented; pins owned by standard cells are
    dropped.  Pins are grouped by net: net ``n`` owns ``net_ptr[n]:net_ptr[n+1]``.
    """

    n_movable: int
    sizes: np.ndarray       # (M+Q, 2) width/height
    pad_xy: np.ndarray      # (Q, 2) fixed bottom-left of pads
    pin_node: np.ndarray    # (P,) int64 global node index
    pin_net: np.ndarray     # (P,) int64
    pin_off: np.ndarray     # (P, 2) center-relative offsets
    net_ptr: np.ndarray     # (N+1,) int64
    canvas: np.ndarray      # (xmin, ymin, xmax, ymax)

    @property
    def n_nodes(self):
        return self.sizes.shape[0]

    @property
    def n_nets(self):
        return self.net_ptr.shape[0] - 1

    @cached_property
    def half(self):
        return 0.5 * self.sizes

    def positions(self, placement):
        """Stack movable coordinates on top of the fixed pad coordinates."""
        return np.concatenate([placement, self.pad_xy], axis=0)


@dataclass(frozen=True)
class Netlist:
    macros: tuple[Macro, ...]
    pads: tuple[Macro, ...]
    nets: tuple[Net, ...]
    canvas: Canvas
    cells: tuple[Macro, ...] = ()
    name: str = "design"

    def __post_init__(self):
        for attr in ("macros", "pads", "nets", "cells"):
            value = getattr(self, attr)
            if not isinstance(value, tuple):
                object.__setattr__(self, attr, tuple(value))

    @property
    def n_movable(self):
        return len(self.macros)

    @property
    def n_nodes(self):
        return len(self.macros) + len(self.pads) + len(self.cells)

    def node(self, index):
        m, q = len(self.macros), len(self.pads)
        if index < m:
            return self.macros[index]
        if index < m + q:
            return self.pads[index - m]
        return self.cells[index - m - q]

    @property
    def n_pins(self):
        return sum(len(n.pins) for n in self.nets)

    @cached_property
    def arrays(self) -> NetArrays:
        m, q = len(self.macros), len(self.pads)
        nodes = self.macros + self.pads
        sizes = np.array([[n.width, n.height] for n in nodes], dtype=np.float64).reshape(-1, 2)
        pad_xy = np.array([[p.x, p.y] for p in self.pads], dtype=np.float64).reshape(-1, 2)
        pin_node, pin_net, pin_off, ptr = [], [], [], [0]
        for k, net in enumerate(self.nets):
            for pin in net.pins:
                if pin.owner < m + q:
                    pin_node.append(pin.owner)
                    pin_net.append(k)
                    pin_off.append((pin.offset_x, pin.offset_y))
            ptr.append(len(pin_node))
        c = self.canvas
        return NetArrays(
            n_movable=m,
            sizes=sizes,
            pad_xy=pad_xy,
            pin_node=np.asarray(pin_node, dtype=np.int64),
            pin_net=np.asarray(pin_net, dtype=np.int64),
            pin_off=np.asarray(pin_off, dtype=np.float64).reshape(-1, 2),
            net_ptr=np.asarray(ptr, dtype=np.int64),
            canvas=np.array(c.bounds, dtype=np.float64),
        )

    @cached_property
    def frame(self):
        from .frame import CoordFrame
        return CoordFrame.from_canvas(self.canvas)

    @cached_property
    def normalized(self) -> "Netlist":
        """The same circuit expressed in the normalized [-1, 1]^2 frame."""
        return self.frame.netlist_to_normalized(self)

    def macro_degrees(self):
        """Pin count per macro-or-pad node (length M+Q)."""
        a = self.arrays
        return np.bincount(a.pin_node, minlength=a.n_nodes)

    def net_degrees(self):
        return np.diff(self.arrays.net_ptr)

    def total_degrees(self):
        return np.array([n.total_degree if n.total_degree is not None else len(n.pins)
                         for n in self.nets], dtype=np.int64)

    def stats(self):
        return {
            "name": self.name,
            "macros": len(self.macros),
            "io": len(self.pads),
            "cells": len(self.cells),
            "nets": len(self.nets),
            "pins": self.n_pins,
            "canvas": [self.canvas.width, self.canvas.height],
            "utilization": sum(m.area for m in self.macros) / self.canvas.area,
        }


def check_placement(netlist, placement, *, name="placement"):
    """Coerce ``placement`` to a float64 (M, 2) array and check it is finite."""
    p = np.asarray(placement, dtype=np.float64)
    if p.shape != (netlist.n_movable, 2):
        raise ShapeMismatch(f"{name} has shape {p.shape}, expected ({netlist.n_movable}, 2)")
    if not np.all(np.isfinite(p)):
        raise NonFiniteInput(f"{name} contains non-finite coordinates")
    return p


def validate(netlist: Netlist) -> ValidationReport:
    report = ValidationReport()
    v, w = report.violations, report.warnings
    c = netlist.canvas
    if not (c.width > 0 and c.height > 0):
        v.append(f"canvas dimensions must be positive, got {c.width}x{c.height}")
    if not netlist.macros:
        v.append("at least one movable macro is required")
    m, q = len(netlist.macros), len(netlist.pads)
    for i, mac in enumerate(netlist.macros):
        if mac.id != i:
            v.append(f"macro ids must be dense: position {i} has id {mac.id}")
        if not mac.movable:
            v.append(f"macro {mac.id} is listed as movable but flagged fixed")
        if not (mac.width > 0 and mac.height > 0):
            v.append(f"macro {mac.id} must have positive dimensions")
    for j, pad in enumerate(netlist.pads):
        if pad.id != m + j:
            v.append(f"pad ids must follow macros: position {j} has id {pad.id}")
        if pad.movable:
            v.append(f"pad {pad.id} must not be movable")
        if pad.width != 0 or pad.height != 0:
            v.append(f"pad {pad.id}: pad dimensions must be zero")
        if not (math.isfinite(pad.x) and math.isfinite(pad.y)):
            v.append(f"pad {pad.id} has a non-finite location")
    n_nodes = netlist.n_nodes
    for k, net in enumerate(netlist.nets):
        if net.id != k:
            v.append(f"net ids must be dense: position {k} has id {net.id}")
        if not net.pins:
            v.append(f"net {net.id}: empty net")
        for pin in net.pins:
            if not 0 <= pin.owner < n_nodes:
                v.append(f"net {net.id}: pin owner {pin.owner} does not exist")
                continue
            if pin.owner < m + q:
                owner = netlist.node(pin.owner)
                if (abs(pin.offset_x) > owner.width / 2 + 1e-9
                        or abs(pin.offset_y) > owner.height / 2 + 1e-9):
                    w.append(f"net {net.id}: pin offset lies outside node {pin.owner}")
        if net.total_degree is not None and net.total_degree < len(net.pins):
            v.append(f"net {net.id}: total degree {net.total_degree} below pin count")
    return report


def check(netlist: Netlist) -> Netlist:
    report = validate(netlist)
    if not report.ok:
        raise NetlistError("invalid netlist: " + "; ".join(report.violations[:5]))
    for msg in report.warnings[:5]:
        log.warning(msg)
    return netlist


def filter_macro_connectivity(netlist: Netlist) -> Netlist:
    """Keep nets touching a macro or pad, stripped of their standard-cell pins.

    Standard cells are removed from the netlist.  Each retained net records its
    original degree in ``total_degree`` so the cell count is not lost.
    """
    limit = len(netlist.macros) + len(netlist.pads)
    nets = []
    for net in netlist.nets:
        kept = tuple(p for p in net.pins if p.owner < limit)
        if not kept:
            continue
        total = net.total_degree if net.total_degree is not None else len(net.pins)
        nets.append(Net(id=len(nets), pins=kept, name=net.name, total_degree=total))
    return replace(netlist, nets=tuple(nets), cells=())


# --- native JSON format -----------------------------------------------------

def _node_json(node, with_xy):
    d = {"id": node.id, "name": node.name, "width": node.width, "height": node.height}
    if with_xy:
        d["x"], d["y"] = node.x, node.y
    return d


def netlist_to_dict(netlist: Netlist, placement=None):
    c = netlist.canvas
    doc = {
        "format": JSON_FORMAT,
        "version": JSON_VERSION,
        "name": netlist.name,
        "canvas": {"origin_x": c.origin_x, "origin_y": c.origin_y,
                   "width": c.width, "height": c.height},
        "macros": [_node_json(mac, False) for mac in netlist.macros],
        "pads": [_node_json(p, True) for p in netlist.pads],
        "cells": [_node_json(cl, True) for cl in netlist.cells],
        "nets": [{"id": n.id, "name": n.name, "total_degree": n.total_degree,
                  "pins": [[p.owner, p.offset_x, p.offset_y] for p in n.pins]}
                 for n in netlist.nets],
    }
    if placement is not None:
        doc["placement"] = np.asarray(placement, dtype=float).tolist()
    return doc


def netlist_from_dict(doc):
    """Inverse of :func:`netlist_to_dict`; returns ``(netlist, placement_or_None)``."""
    try:
        if doc.get("format") != JSON_FORMAT:
            raise NetlistError(f"not a {JSON_FORMAT} document")
        cv = doc["canvas"]
        canvas = Canvas(float(cv["origin_x"]), float(cv["origin_y"]),
                        float(cv["width"]), float(cv["height"]))
        macros = [Macro(int(d["id"]), float(d["width"]), float(d["height"]), True, d.get("name", ""))
                  for d in doc["macros"]]
        pads = [Macro(int(d["id"]), float(d["width"]), float(d["height"]), False, d.get("name", ""),
                      float(d["x"]), float(d["y"])) for d in doc.get("pads", [])]
        cells = [Macro(int(d["id"]), float(d["width"]), float(d["height"]), True, d.get("name", ""),
                       float(d.get("x", 0.0)), float(d.get("y", 0.0))) for d in doc.get("cells", [])]
        nets = [Net(int(d["id"]),
                    tuple(Pin(int(o), float(ox), float(oy)) for o, ox, oy in d["pins"]),
                    d.get("name", ""), d.get("total_degree"))
                for d in doc["nets"]]
        netlist = Netlist(tuple(macros), tuple(pads), tuple(nets), canvas, tuple(cells),
                          doc.get("name", "design"))
        placement = doc.get("placement")
    except (KeyError, TypeError, ValueError) as exc:
        raise NetlistError(f"malformed netlist JSON: {exc}") from exc
    if placement is not None:
        placement = check_placement(netlist, placement)
    return check(netlist), placement


def save_json(netlist, path, placement=None):
    Path(path).write_text(json.dumps(netlist_to_dict(netlist, placement), indent=1))


def load_json(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise NetlistError(f"{path}: invalid JSON ({exc})") from exc
    return netlist_from_dict(doc)
