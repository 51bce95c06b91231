"""Mapping between canvas units and the normalized [-1, 1]^2 frame."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateCanvas


@dataclass(frozen=True)
class CoordFrame:
    """Affine map ``u = (p - origin) * scale - 1`` applied per axis."""

    origin: tuple[float, float]
    scale: tuple[float, float]

    @classmethod
    def from_canvas(cls, canvas):
        if not (canvas.width > 0 and canvas.height > 0):
            raise DegenerateCanvas(f"canvas {canvas.width}x{canvas.height} has zero extent")
        return cls((canvas.origin_x, canvas.origin_y), (2.0 / canvas.width, 2.0 / canvas.height))

    def normalize(self, points):
        p = np.asarray(points, dtype=np.float64)
        return (p - np.asarray(self.origin)) * np.asarray(self.scale) - 1.0

    def denormalize(self, points):
        u = np.asarray(points, dtype=np.float64)
        return (u + 1.0) / np.asarray(self.scale) + np.asarray(self.origin)

    def scale_lengths(self, lengths):
        """Map extents (sizes, offsets, displacements); no shift applied."""
        return np.asarray(lengths, dtype=np.float64) * np.asarray(self.scale)

    def unscale_lengths(self, lengths):
        return np.asarray(lengths, dtype=np.float64) / np.asarray(self.scale)

    def netlist_to_normalized(self, netlist):
        from .netlist import Canvas, Net, Pin

        sx, sy = self.scale

        def node(n, located=True):
            x, y = self.normalize([n.x, n.y]) if located else (n.x, n.y)
            return replace(n, width=n.width * sx, height=n.height * sy, x=float(x), y=float(y))

        nets = tuple(
            replace(net, pins=tuple(Pin(p.owner, p.offset_x * sx, p.offset_y * sy) for p in net.pins))
            for net in netlist.nets)
        return replace(
            netlist,
            macros=tuple(node(m, False) for m in netlist.macros),
            pads=tuple(node(p) for p in netlist.pads),
            cells=tuple(node(c) for c in netlist.cells),
            nets=nets,
            canvas=Canvas(-1.0, -1.0, 2.0, 2.0),
        )


def normalize(placement, frame):
    return frame.normalize(placement)


def denormalize(placement, frame):
    return frame.denormalize(placement)
