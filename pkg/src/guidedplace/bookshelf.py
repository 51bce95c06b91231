"""Bookshelf (.aux/.nodes/.nets/.pl/.scl) reader and writer.

Node classes follow the mixed-size benchmarks: any node taller than the
standard row is a macro (movable, whatever its terminal flag says), the
remaining terminals are I/O pads and the rest are standard cells.  Pads get
zero size and sit at the center of their declared footprint, so their pins
carry no offset.  Pin offsets in .nets are center-relative, as in the ISPD
files, and are kept that way.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BookshelfSyntaxError, DanglingPinReference, IoError, NetlistError
from .netlist import Canvas, Macro, Net, Netlist, Pin, check, check_placement


@dataclass
class BookshelfDesign:
    netlist: Netlist
    placement: np.ndarray | None     # seed placement from .pl (bottom-left), macros only
    row_height: float | None


class _Lines:
    """Significant lines of a Bookshelf file with their 1-based numbers."""

    def __init__(self, path):
        self.path = Path(path)
        try:
            raw = self.path.read_bytes()
        except FileNotFoundError:
            raise
        except OSError as exc:
            raise NetlistError(f"cannot read {self.path}: {exc}") from exc
        text = raw.decode("utf-8", errors="replace")
        self.items = []
        for no, line in enumerate(text.splitlines(), 1):
            s = line.split("#", 1)[0].strip()
            if s:
                self.items.append((no, s))

    def error(self, no, msg):
        return BookshelfSyntaxError(self.path, no, msg)

    def body(self, header):
        """Drop the ``UCLA <kind> 1.0`` header line if present."""
        items = self.items
        if items and items[0][1].split()[:2] == ["UCLA", header]:
            items = items[1:]
        return items


def _float(lines, no, token):
    try:
        v = float(token)
    except ValueError:
        raise lines.error(no, f"expected a number, got {token!r}") from None
    if not math.isfinite(v):
        raise lines.error(no, f"non-finite number {token!r}")
    return v


def _int(lines, no, token):
    try:
        return int(token)
    except ValueError:
        raise lines.error(no, f"expected an integer, got {token!r}") from None


def _keyword(s, key):
    """Value of ``key : value`` lines (spacing around the colon is free)."""
    head, sep, rest = s.partition(":")
    if sep and head.strip() == key:
        return rest.strip()
    return None


def _read_aux(path):
    lines = _Lines(path)
    files = []
    for no, s in lines.items:
        _, sep, rest = s.partition(":")
        if not sep:
            raise lines.error(no, "expected '<kind> : <files>'")
        files.extend(rest.split())
    found = {}
    for name in files:
        ext = Path(name).suffix.lower()
        found.setdefault(ext, Path(path).parent / name)
    for ext in (".nodes", ".nets", ".pl"):
        if ext not in found:
            raise lines.error(lines.items[0][0] if lines.items else 1, f"no {ext} file listed")
    for p in found.values():
        if p.suffix.lower() in (".nodes", ".nets", ".pl", ".scl") and not p.exists():
            raise FileNotFoundError(f"{p} (listed in {path})")
    return found


def _read_nodes(path):
    lines = _Lines(path)
    nodes = {}
    declared = None
    for no, s in lines.body("nodes"):
        if (v := _keyword(s, "NumNodes")) is not None:
            declared = _int(lines, no, v)
            continue
        if _keyword(s, "NumTerminals") is not None:
            continue
        tok = s.split()
        if len(tok) < 3:
            raise lines.error(no, "node line needs a name, width and height")
        w, h = _float(lines, no, tok[1]), _float(lines, no, tok[2])
        if w < 0 or h < 0:
            raise lines.error(no, f"node {tok[0]!r} has negative size")
        if tok[0] in nodes:
            raise lines.error(no, f"node {tok[0]!r} declared twice")
        terminal = len(tok) > 3 and tok[3].lower().startswith("terminal")
        nodes[tok[0]] = (w, h, terminal)
    if declared is not None and declared != len(nodes):
        raise lines.error(lines.items[-1][0] if lines.items else 1,
                          f"NumNodes says {declared} but {len(nodes)} nodes were listed")
    return nodes


def _read_nets(path, node_names):
    lines = _Lines(path)
    nets = []
    current = None
    for no, s in lines.body("nets"):
        if _keyword(s, "NumNets") is not None or _keyword(s, "NumPins") is not None:
            continue
        if (v := _keyword(s, "NetDegree")) is not None:
            tok = v.split()
            if not tok:
                raise lines.error(no, "NetDegree without a count")
            degree = _int(lines, no, tok[0])
            if degree < 0:
                raise lines.error(no, "negative net degree")
            name = tok[1] if len(tok) > 1 else f"net{len(nets)}"
            current = (name, degree, [], no)
            nets.append(current)
            continue
        if current is None:
            raise lines.error(no, "pin line before any NetDegree")
        head, _, tail = s.partition(":")
        tok = head.split()
        if not tok:
            raise lines.error(no, "empty pin line")
        if tok[0] not in node_names:
            raise DanglingPinReference(tok[0], current[0])
        offs = tail.split()
        if len(offs) not in (0, 2):
            raise lines.error(no, "pin offset needs exactly two numbers")
        ox, oy = (_float(lines, no, offs[0]), _float(lines, no, offs[1])) if offs else (0.0, 0.0)
        current[2].append((tok[0], ox, oy))
    for name, degree, pins, no in nets:
        if degree != len(pins):
            raise lines.error(no, f"net {name!r} declares {degree} pins but lists {len(pins)}")
    return nets


def _read_pl(path, node_names):
    lines = _Lines(path)
    out = {}
    for no, s in lines.body("pl"):
        tok = s.split(":")[0].split()
        if len(tok) < 3:
            raise lines.error(no, "placement line needs a name and two coordinates")
        if tok[0] not in node_names:
            raise lines.error(no, f"unknown node {tok[0]!r}")
        out[tok[0]] = (_float(lines, no, tok[1]), _float(lines, no, tok[2]))
    return out


def _read_scl(path):
    """Return ``(row_height, (xmin, ymin, xmax, ymax))`` of the row area."""
    lines = _Lines(path)
    rows = []
    row = None
    for no, s in lines.body("scl"):
        if s.startswith("CoreRow"):
            row = {}
            continue
        if s == "End":
            if row is None:
                raise lines.error(no, "End without CoreRow")
            missing = {"Coordinate", "Height", "origin", "sites"} - row.keys()
            if missing:
                raise lines.error(no, f"row lacks {', '.join(sorted(missing))}")
            rows.append(row)
            row = None
            continue
        if row is None:
            continue   # NumRows and friends
        key, _, val = s.partition(":")
        key = key.strip()
        if key in ("Coordinate", "Height", "Sitewidth", "Sitespacing"):
            row[key] = _float(lines, no, val.split()[0] if val.split() else "")
        elif key == "SubrowOrigin":
            tok = val.replace(":", " ").split()
            if len(tok) < 3 or tok[1] != "NumSites":
                raise lines.error(no, "expected 'SubrowOrigin : x NumSites : n'")
            row["origin"] = _float(lines, no, tok[0])
            row["sites"] = _float(lines, no, tok[2])
    if row is not None:
        raise lines.error(lines.items[-1][0], "unterminated CoreRow")
    if not rows:
        return None, None
    x0 = min(r["origin"] for r in rows)
    x1 = max(r["origin"] + r["sites"] * r.get("Sitespacing", r.get("Sitewidth", 1.0)) for r in rows)
    y0 = min(r["Coordinate"] for r in rows)
    y1 = max(r["Coordinate"] + r["Height"] for r in rows)
    return max(r["Height"] for r in rows), (x0, y0, x1, y1)


def parse_bookshelf(aux_path) -> BookshelfDesign:
    files = _read_aux(aux_path)
    nodes = _read_nodes(files[".nodes"])
    nets_raw = _read_nets(files[".nets"], nodes)
    pl = _read_pl(files[".pl"], nodes)
    row_height, core = _read_scl(files[".scl"]) if ".scl" in files else (None, None)

    def kind(name):
        w, h, terminal = nodes[name]
        if row_height is None:
            return "pad" if terminal else "macro"
        if h > row_height:
            return "macro"
        return "pad" if terminal else "cell"

    kinds = {name: kind(name) for name in nodes}
    order = {k: [n for n in nodes if kinds[n] == k] for k in ("macro", "pad", "cell")}
    if not order["macro"]:
        raise NetlistError(f"{aux_path}: design has no macros")
    index = {}
    for name in order["macro"] + order["pad"] + order["cell"]:
        index[name] = len(index)

    macros, pads, cells, seed = [], [], [], []
    for name in order["macro"]:
        w, h, _ = nodes[name]
        macros.append(Macro(index[name], w, h, True, name))
        seed.append(pl.get(name, (math.nan, math.nan)))
    for name in order["pad"]:
        w, h, _ = nodes[name]
        x, y = pl.get(name, (0.0, 0.0))
        pads.append(Macro(index[name], 0.0, 0.0, False, name, x + w / 2, y + h / 2))
    for name in order["cell"]:
        w, h, _ = nodes[name]
        x, y = pl.get(name, (0.0, 0.0))
        cells.append(Macro(index[name], w, h, True, name, x, y))

    nets = []
    for k, (name, degree, pins, _) in enumerate(nets_raw):
        nets.append(Net(k, tuple(Pin(index[o], 0.0 if kinds[o] == "pad" else ox,
                                     0.0 if kinds[o] == "pad" else oy)
                                 for o, ox, oy in pins), name, degree))

    if core is None:
        pts = [(pl[n][0], pl[n][1], nodes[n][0], nodes[n][1]) for n in nodes if n in pl]
        if not pts:
            raise NetlistError(f"{aux_path}: no .scl rows and no placed nodes to infer the canvas")
        core = (min(p[0] for p in pts), min(p[1] for p in pts),
                max(p[0] + p[2] for p in pts), max(p[1] + p[3] for p in pts))
    # every number in the files has six decimals; sums of rows may be off by an ulp
    canvas = Canvas(round(core[0], 6), round(core[1], 6),
                    round(core[2] - core[0], 6), round(core[3] - core[1], 6))
    netlist = check(Netlist(tuple(macros), tuple(pads), tuple(nets), canvas, tuple(cells),
                            Path(aux_path).stem))
    placement = None
    if seed and all(math.isfinite(v) for xy in seed for v in xy):
        placement = np.array(seed, dtype=np.float64)
    return BookshelfDesign(netlist, placement, row_height)


def _fmt(v):
    return f"{v:.6f}"


def _names(netlist):
    used = set()
    out = []
    for i in range(netlist.n_nodes):
        node = netlist.node(i)
        name = node.name or f"o{i}"
        while name in used or not name or any(c.isspace() for c in name) or "#" in name:
            name = f"o{i}_{len(used)}"
        used.add(name)
        out.append(name)
    return out


def serialize_bookshelf(netlist: Netlist, placement, directory, name=None):
    """Write ``<name>.aux`` and its four companions into ``directory``.

    The row height is picked so the reader classifies every node back into
    the same class: above the tallest cell and below the shortest macro.
    Returns the path of the .aux file.
    """
    p = check_placement(netlist, placement)
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {d}: {exc}") from exc
    base = name or netlist.name or "design"
    names = _names(netlist)
    m, q = len(netlist.macros), len(netlist.pads)
    min_macro = min(mac.height for mac in netlist.macros)
    max_cell = max((c.height for c in netlist.cells), default=0.0)
    if max_cell >= min_macro:
        raise NetlistError("a standard cell is as tall as a macro; row height is ambiguous")
    row_h = max_cell if netlist.cells else min_macro / 2

    nodes = ["UCLA nodes 1.0", "", f"NumNodes : {netlist.n_nodes}", f"NumTerminals : {q}"]
    for i in range(netlist.n_nodes):
        node = netlist.node(i)
        tail = "\tterminal" if m <= i < m + q else ""
        nodes.append(f"\t{names[i]}\t{_fmt(node.width)}\t{_fmt(node.height)}{tail}")

    n_pins = sum(len(n.pins) for n in netlist.nets)
    nets = ["UCLA nets 1.0", "", f"NumNets : {len(netlist.nets)}", f"NumPins : {n_pins}"]
    for net in netlist.nets:
        nets.append(f"NetDegree : {len(net.pins)}\t{net.name or f'n{net.id}'}")
        for pin in net.pins:
            nets.append(f"\t{names[pin.owner]}\tB : {_fmt(pin.offset_x)}\t{_fmt(pin.offset_y)}")

    pl = ["UCLA pl 1.0", ""]
    for i in range(netlist.n_nodes):
        node = netlist.node(i)
        if i < m:
            x, y, fixed = p[i, 0], p[i, 1], ""
        else:
            x, y, fixed = node.x, node.y, " /FIXED" if i < m + q else ""
        pl.append(f"{names[i]}\t{_fmt(x)}\t{_fmt(y)}\t: N{fixed}")

    c = netlist.canvas
    n_rows = max(1, math.ceil(c.height / row_h - 1e-9))
    scl = ["UCLA scl 1.0", "", f"NumRows : {n_rows}", ""]
    for r in range(n_rows):
        y = c.origin_y + r * row_h
        # the top row is trimmed so the rows end exactly on the canvas edge
        h = row_h if r < n_rows - 1 else c.origin_y + c.height - y
        scl += ["CoreRow Horizontal", f"  Coordinate : {_fmt(y)}", f"  Height : {_fmt(h)}",
                f"  Sitewidth : {_fmt(c.width)}", f"  Sitespacing : {_fmt(c.width)}",
                "  Siteorient : 1", "  Sitesymmetry : 1",
                f"  SubrowOrigin : {_fmt(c.origin_x)}\tNumSites : 1", "End"]

    files = {".nodes": nodes, ".nets": nets, ".pl": pl, ".scl": scl}
    for ext, body in files.items():
        _atomic_write(d / f"{base}{ext}", "\n".join(body) + "\n")
    aux = d / f"{base}.aux"
    _atomic_write(aux, "RowBasedPlacement : " + " ".join(f"{base}{e}" for e in files) + "\n")
    return aux


def _atomic_write(path, text):
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
