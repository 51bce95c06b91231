"""``guidedplace`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Relative input paths that do not exist are also looked up under
``$GUIDEDPLACE_DATA``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataError, PlacementError, NumericError

log = logging.getLogger("guidedplace")

DATA_ENV = "GUIDEDPLACE_DATA"
PLACEMENT_FORMAT = "guidedplace-placement"
DATASET_FORMAT = "guidedplace-dataset"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --- helpers ------------------------------------------------------------------

def resolve(path):
    p = Path(path)
    if not p.exists() and not p.is_absolute() and os.environ.get(DATA_ENV):
        alt = Path(os.environ[DATA_ENV]) / p
        if alt.exists():
            return alt
    return p


def load_netlist(path, keep_cells=False):
    """Netlist and optional seed placement from a .aux or native .json file."""
    from .bookshelf import parse_bookshelf
    from .netlist import filter_macro_connectivity, load_json

    p = resolve(path)
    if p.suffix.lower() == ".aux":
        design = parse_bookshelf(p)
        nl = design.netlist if keep_cells else filter_macro_connectivity(design.netlist)
        return nl, design.placement
    return load_json(p)


def load_placement(path, netlist):
    from .netlist import check_placement

    doc = json.loads(resolve(path).read_text())
    coords = doc["placement"] if isinstance(doc, dict) else doc
    return check_placement(netlist, coords)


def write_placement(path, netlist, placement, **meta):
    doc = {"format": PLACEMENT_FORMAT, "design": netlist.name, **meta,
           "placement": np.asarray(placement, dtype=float).tolist()}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def run_config(args):
    from .config import RunConfig, load_config

    return load_config(resolve(args.config)) if getattr(args, "config", None) else RunConfig()


def guidance_config(args, base):
    from .guidance import GuidanceConfig

    cfg = base
    if getattr(args, "preset", None):
        presets = json.loads(resources.files("guidedplace").joinpath("presets/guidance.json").read_text())
        if args.preset not in presets:
            raise UsageError(f"unknown preset {args.preset!r}; known: {', '.join(sorted(presets))}")
        cfg = GuidanceConfig.from_dict({**cfg.to_dict(), **presets[args.preset]})
    over = {k: v for k, v in (("K", args.K), ("eta", args.eta), ("threshold", args.threshold))
            if v is not None}
    if over:
        cfg = replace(cfg, **over)
    return cfg


def sampling_schedule(model, steps):
    from .diffusion import respace, schedule_from_dict

    sched = schedule_from_dict(model.schedule_signature)
    return respace(sched, steps) if steps and steps < sched.T else sched


# --- subcommands --------------------------------------------------------------

def cmd_parse(args):
    from .bookshelf import parse_bookshelf
    from .graph import build_graph
    from .netlist import filter_macro_connectivity, load_json, netlist_to_dict, validate

    src = resolve(args.input)
    if src.suffix.lower() == ".aux":
        design = parse_bookshelf(src)
        full, placement = design.netlist, design.placement
    else:
        full, placement = load_json(src)
    nl = filter_macro_connectivity(full)
    report = validate(nl)
    for w in report.warnings[:20]:
        print(f"warning: {w}", file=sys.stderr)
    s = nl.stats()
    rows = [("Design", "# Macros", "# I/O", "# Net", "# Pin"),
            (s["name"], str(s["macros"]), str(s["io"]), str(s["nets"]), str(s["pins"]))]
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    for r in rows:
        print("  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths))))
    if full.cells:
        print(f"({len(full.cells)} standard cells and {len(full.nets) - len(nl.nets)} cell-only nets dropped)")
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(netlist_to_dict(nl, placement), indent=1))
    if args.dump_graph:
        if placement is None:
            raise DataError("the design carries no placement to build a graph from")
        build_graph(nl, nl.frame.normalize(placement), 0).dump_json(args.dump_graph)
    return 0 if report.ok else 2


def cmd_augment(args):
    from .data import rewire
    from .netlist import save_json

    nl, placement = load_netlist(args.netlist)
    out, dups = rewire(nl, args.seed)
    if dups:
        print(f"warning: {dups} duplicate pins remain after swap repair", file=sys.stderr)
    save_json(out, args.out, placement)
    print(f"wrote {args.out}")
    return 0


def cmd_dataset(args):
    from .data import build_dataset, desk_bases
    from .netlist import netlist_to_dict

    rc = run_config(args)
    d = rc.data
    n_aug = args.n_aug if args.n_aug is not None else d.n_aug
    seed = args.seed if args.seed is not None else rc.seed
    if args.netlist:
        bases = [load_netlist(p)[0] for p in args.netlist]
    else:
        bases = desk_bases(d.base_seed, d.counts, d.per_count)

    def progress(done, total):
        if done % max(1, total // 10) == 0 or done == total:
            print(f"dataset {done}/{total}", file=sys.stderr)

    samples = build_dataset(bases, n_aug, seed, progress)
    doc = {"format": DATASET_FORMAT, "seed": seed, "config_hash": rc.hash(),
           "samples": [netlist_to_dict(s.netlist, s.placement) for s in samples]}
    Path(args.out).write_text(json.dumps(doc))
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def load_dataset(path):
    from .data import TrainSample
    from .netlist import netlist_from_dict

    doc = json.loads(resolve(path).read_text())
    if doc.get("format") != DATASET_FORMAT:
        raise DataError(f"{path} is not a {DATASET_FORMAT} file")
    out = []
    for d in doc["samples"]:
        nl, placement = netlist_from_dict(d)
        if placement is None:
            raise DataError(f"{path}: sample {nl.name} has no placement")
        out.append(TrainSample(nl, nl.frame.normalize(placement), placement))
    return out


def cmd_train(args):
    from .train import train

    rc = run_config(args)
    cfg = rc.train
    over = {k: v for k, v in (("epochs", args.epochs), ("batch_size", args.batch_size),
                              ("lr", args.lr), ("seed", args.seed)) if v is not None}
    if args.variant:
        over["model"] = replace(cfg.model, variant=args.variant)
    cfg = replace(cfg, **over)
    dataset = load_dataset(args.dataset)

    def progress(step, total, loss):
        if step % 50 == 0 or step == total:
            print(f"step {step}/{total} loss {loss:.4f}", file=sys.stderr)

    path = train(cfg, dataset, args.out, loss_csv=args.loss_csv, resume=args.resume,
                 progress=progress)
    print(f"wrote {path}")
    return 0


def cmd_sample(args):
    from .graph import build_graph
    from .sampler import sample
    from .train import load_model

    rc = run_config(args)
    nl, _ = load_netlist(args.netlist)
    model, doc = load_model(resolve(args.checkpoint))
    sched = sampling_schedule(model, args.steps)
    cfg = guidance_config(args, rc.guidance).with_mode(args.mode)
    seed = args.seed if args.seed is not None else rc.seed
    placement, traj = sample(nl, model, sched, cfg, seed)
    write_placement(args.out, nl, placement, seed=seed, mode=cfg.mode,
                    config_hash=doc.get("config_hash"), guidance=cfg.to_dict())
    if args.trajectory_csv:
        traj.write_csv(args.trajectory_csv)
    if args.dump_graph:
        build_graph(nl, nl.frame.normalize(placement), 0).dump_json(args.dump_graph)
    print(f"wrote {args.out}")
    return 0


def cmd_legalize(args):
    from .legalize import legalize

    nl, _ = load_netlist(args.netlist)
    placement = load_placement(args.placement, nl)
    res = legalize(nl, placement)
    write_placement(args.out, nl, res.placement, displacement=res.displacement_total,
                    moved=res.moved_count)
    print(f"displacement {res.displacement_total:.6g}  moved {res.moved_count}/{nl.n_movable}")
    return 0


def cmd_eval(args):
    from .evaluate import evaluate, summary_table, to_json
    from .train import load_model

    rc = run_config(args)
    nl, _ = load_netlist(args.netlist)
    model, doc = load_model(resolve(args.checkpoint))
    sched = sampling_schedule(model, args.steps)
    base = guidance_config(args, rc.guidance)
    seed0 = args.seed if args.seed is not None else rc.seed
    seeds = [seed0 + k for k in range(args.seeds)]
    rows, docs = [], {}
    for mode in args.mode.split(","):
        reports, summary = evaluate(nl, model, sched, base.with_mode(mode), seeds, doc.get("config_hash"))
        for r in reports:
            if r.error:
                print(f"warning: seed {r.seed} ({mode}): {r.error}", file=sys.stderr)
        rows.append((nl.name, mode, summary))
        docs[mode] = json.loads(to_json(reports, summary))
    print(summary_table(rows), end="")
    if args.json_out:
        Path(args.json_out).write_text(json.dumps({"design": nl.name, "seeds": seeds,
                                                   "config_hash": doc.get("config_hash"),
                                                   "modes": docs}, indent=1))
    return 0


def cmd_render(args):
    from .render import RenderOptions, render_svg

    nl, _ = load_netlist(args.netlist)
    placement = load_placement(args.placement, nl)
    doc = json.loads(resolve(args.placement).read_text())
    meta = doc if isinstance(doc, dict) else {}
    opts = RenderOptions(width_px=args.width, fly_lines=args.fly_lines,
                         highlight_overlaps=args.highlight_overlaps, labels=args.labels,
                         title=nl.name, config_hash=meta.get("config_hash") or "",
                         seed=meta.get("seed"))
    render_svg(nl, placement, args.out, opts)
    print(f"wrote {args.out}")
    return 0


def _guidance_flags(p):
    p.add_argument("--mode", default="full", help="full, overlap_only or none (eval: comma list)")
    p.add_argument("--preset", help="guidance preset name (see presets/guidance.json)")
    p.add_argument("--K", type=int, help="inner guidance steps")
    p.add_argument("--eta", type=float, help="inner step size, normalized units")
    p.add_argument("--threshold", type=float, help="HPWL plateau threshold")
    p.add_argument("--steps", type=int, default=200, help="respaced sampling steps (default 200)")


def build_parser():
    ap = _Parser(prog="guidedplace", description="Physics-guided diffusion macro placement")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", help="validate a design and print its statistics")
    p.add_argument("input", nargs="?", help=".aux or native .json netlist")
    p.add_argument("--aux", dest="aux", help="Bookshelf .aux file")
    p.add_argument("--json-out", help="write the filtered netlist as native JSON")
    p.add_argument("--dump-graph", help="write the circuit graph at the .pl placement as JSON")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("augment", help="degree-preserving rewiring of a netlist")
    p.add_argument("--netlist", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("dataset", help="augmented designs with reference placements")
    p.add_argument("--out", required=True)
    p.add_argument("--netlist", action="append", help="base design (repeatable); default: synthetic desk set")
    p.add_argument("--n-aug", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="train the denoiser")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--loss-csv")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=["full", "no_eps_net", "no_gnn", "no_transformer"])
    p.add_argument("--config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate a placement")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--netlist", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--trajectory-csv")
    p.add_argument("--dump-graph")
    p.add_argument("--config")
    _guidance_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("legalize", help="remove overlaps from a placement")
    p.add_argument("--netlist", required=True)
    p.add_argument("--placement", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_legalize)

    p = sub.add_parser("eval", help="sample, legalize and report over several seeds")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--netlist", required=True)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--seed", type=int, help="first seed")
    p.add_argument("--json-out")
    p.add_argument("--config")
    _guidance_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="draw a placement as SVG")
    p.add_argument("--netlist", required=True)
    p.add_argument("--placement", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fly-lines", type=int, default=0, help="longest nets to draw (max 200)")
    p.add_argument("--highlight-overlaps", action="store_true")
    p.add_argument("--labels", action="store_true")
    p.add_argument("--width", type=int, default=800)
    p.set_defaults(func=cmd_render)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        if args.command == "parse":
            args.input = args.input or args.aux
            if not args.input:
                raise UsageError("guidedplace parse: error: give a netlist path or --aux")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except PlacementError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
