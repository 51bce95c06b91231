"""Sample, legalize and measure; mean and sample std over seeds."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .errors import PlacementError
from .legalize import boundary_protrusion, legalize, overlap_area_exact
from .objectives import hpwl_exact
from .sampler import sample

METRICS = ("hpwl", "displacement", "overlap_area", "hpwl_raw", "overlap_area_raw", "runtime")


@dataclass
class EvalReport:
    design: str
    seed: int
    mode: str
    hpwl: float = math.nan              # after legalization
    displacement: float = math.nan
    overlap_area: float = math.nan      # after legalization, 0 for a legal result
    hpwl_raw: float = math.nan          # sampler output before legalization
    overlap_area_raw: float = math.nan
    runtime: float = 0.0
    config_hash: str | None = None
    error: str | None = None


def evaluate_one(netlist, model, sched, cfg, seed, config_hash=None):
    rep = EvalReport(netlist.name, int(seed), cfg.mode, config_hash=config_hash)
    start = time.perf_counter()
    try:
        raw, _ = sample(netlist, model, sched, cfg, seed, record=False)
        res = legalize(netlist, raw)
        rep.hpwl_raw = hpwl_exact(netlist, raw)
        rep.overlap_area_raw = overlap_area_exact(netlist, raw)
        rep.hpwl = hpwl_exact(netlist, res.placement)
        rep.overlap_area = overlap_area_exact(netlist, res.placement)
        rep.displacement = res.displacement_total
        if rep.overlap_area != 0.0 or boundary_protrusion(netlist, res.placement) != 0.0:
            rep.error = "legalized placement is not legal"
    except PlacementError as exc:
        rep.error = f"{type(exc).__name__}: {exc}"
    rep.runtime = time.perf_counter() - start
    return rep


def summarize(reports):
    """Mean and sample standard deviation of every metric over successful runs.

    With a single run the deviation is undefined; it is reported as 0 and
    ``std_defined`` is false.
    """
    ok = [r for r in reports if r.error is None]
    out = {"runs": len(reports), "failed": len(reports) - len(ok), "std_defined": len(ok) > 1}
    for key in METRICS:
        vals = np.array([getattr(r, key) for r in ok], dtype=np.float64)
        mean = float(vals.mean()) if vals.size else math.nan
        std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        out[key] = {"mean": mean, "std": std}
    return out


def evaluate(netlist, model, sched, cfg, seeds, config_hash=None):
    """Per-seed reports plus their summary."""
    reports = [evaluate_one(netlist, model, sched, cfg, s, config_hash) for s in seeds]
    return reports, summarize(reports)


def to_json(reports, summary, extra=None):
    doc = {"reports": [asdict(r) for r in reports], "summary": summary}
    if extra:
        doc.update(extra)
    return json.dumps(_nan_safe(doc), indent=1, sort_keys=True, allow_nan=False)


def _nan_safe(v):
    # json would write bare NaN, which strict readers reject
    if isinstance(v, dict):
        return {k: _nan_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_nan_safe(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _pm(stat, scale, digits):
    return f"{stat['mean'] / scale:.{digits}f} ± {stat['std'] / scale:.{digits}f}"


def summary_table(rows):
    """Aligned text table; ``rows`` is a list of ``(design, mode, summary)``.

    HPWL is shown in units of 1e6 and displacement in units of 1e3.
    """
    header = ["Design", "Mode", "HPWL (x1e6) Mean ± Std", "Displacement (x1e3) Mean ± Std",
              "Overlap", "Runs"]
    body = []
    for design, mode, s in rows:
        body.append([design, mode, _pm(s["hpwl"], 1e6, 6), _pm(s["displacement"], 1e3, 4),
                     f"{s['overlap_area']['mean']:.3g}", f"{s['runs'] - s['failed']}/{s['runs']}"])
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    fmt = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
    lines = [fmt(header), "  ".join("-" * w for w in widths)] + [fmt(r) for r in body]
    return "\n".join(lines) + "\n"
