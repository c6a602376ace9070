"""Command-line entry point: synth, prepare, train, eval, ablate, sweep.

Every command resolves its configuration from defaults, then the config
file (``--config``), then flags, and embeds the resolved values in the
artifacts it writes. Outputs are written atomically. The environment
variable ``FLOWGAT_LOG`` (debug/info/warning/error) controls verbosity.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import evaluation as ev
from . import model as m
from . import training as tr
from .config import RunConfig, apply_overrides, load_config
from .data import (
    build_demand,
    build_dynamic_graphs,
    build_fixed_graph,
    load_dataset,
    make_windows,
    parse_trips,
    save_dataset,
    synthesize_trip_arrays,
)
from .data.trips import TRIPS_HEADER
from .data.windows import Calendar
from .errors import FlowgatError
from .ioutil import canonical_json, write_text_atomic
from .reports import write_report

log = logging.getLogger("flowgat")


def _setup_logging() -> None:
    level = os.environ.get("FLOWGAT_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(levelname)s %(message)s")


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for key in ("seed", "days", "rows", "cols", "variant", "theta", "seq_len", "epochs"):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    return apply_overrides(cfg, **overrides)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    synth_cfg = cfg.synth_config()
    synth_cfg.validate()
    rows, metadata = synthesize_trip_arrays(synth_cfg)
    buf = io.StringIO()
    buf.write(TRIPS_HEADER + "\n")
    for o, d, t in rows:
        buf.write(f"{o},{d},{t}\n")
    trips_path = out / "trips.csv"
    write_text_atomic(trips_path, buf.getvalue())
    metadata["config_echo"] = cfg.echo()
    write_text_atomic(out / "synth_meta.json", canonical_json(metadata) + "\n")
    log.info("wrote %s (%d trips)", trips_path, rows.shape[0])
    return 0


def cmd_prepare(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    n_intervals = cfg.days * (24 * 60 // cfg.interval_minutes)
    grid = cfg.grid(n_intervals)
    with open(args.trips, "r", encoding="utf-8") as fh:
        trips = parse_trips(fh, grid)
    demand = build_demand(trips, grid)
    graphs = build_dynamic_graphs(trips, grid, theta=cfg.data.theta)
    fixed = build_fixed_graph(grid)
    calendar = None
    if grid.intervals_per_day:
        calendar = Calendar(grid.intervals_per_day, cfg.start_weekday)
    dataset = make_windows(
        demand, graphs, fixed, grid, cfg.data.seq_len, cfg.data.split_fractions, calendar=calendar
    )
    path = out / "dataset.fgds"
    save_dataset(path, dataset, config_echo=cfg.echo())
    log.info(
        "wrote %s (%d trips, %d dynamic edges)", path, demand.total(), dataset.graphs.edge_count()
    )
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    dataset = load_dataset(args.dataset)
    ckpt = tr.train(
        dataset,
        cfg.variant,
        cfg.train,
        cfg.model_config(),
        log_path=out / "train_log.tsv",
    )
    path = out / "checkpoint.fgck"
    tr.save_checkpoint(path, ckpt)
    log.info("wrote %s (best epoch %d, val mse %.6g)", path, ckpt.epoch, ckpt.val_loss)
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    dataset = load_dataset(args.dataset)
    ckpt = tr.load_checkpoint(args.checkpoint)
    report = ev.evaluate_checkpoint(dataset, ckpt, split=args.split)
    row = ev._row(ckpt.config["variant"], report, ckpt.config)
    paths = write_report(out / "metrics", [row])
    log.info("wrote %s and %s", *paths)
    return 0


def cmd_ablate(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    dataset = load_dataset(args.dataset)
    rows = ev.run_ablation_suite(
        dataset,
        cfg.train,
        cfg.model_config(),
        baseline_kwargs=cfg.eval.baseline_kwargs(),
    )
    paths = write_report(out / "ablation", rows)
    log.info("wrote %s and %s", *paths)
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    dataset = load_dataset(args.dataset)
    axis = {"seq-len": "sequence_length", "gat-layers": "gat_layers"}[args.axis]
    values = list(range(args.min, args.max + 1))
    rows = ev.run_sweeps(dataset, axis, values, cfg.train, cfg.model_config(), variant=cfg.variant)
    paths = write_report(out / f"sweep_{axis}", rows)
    log.info("wrote %s and %s", *paths)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowgat",
        description="Demand forecasting over per-interval commuting graphs.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="INI config file")
    common.add_argument("--seed", type=int, default=None, help="seed for data and training")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic city trips file")
    p.add_argument("--days", type=int, default=None)
    p.add_argument("--rows", type=int, default=None)
    p.add_argument("--cols", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", parents=[common], help="build the dataset artifact from trips")
    p.add_argument("--trips", type=Path, required=True)
    p.add_argument("--days", type=int, default=None)
    p.add_argument("--rows", type=int, default=None)
    p.add_argument("--cols", type=int, default=None)
    p.add_argument("--theta", type=int, default=None, help="commuting edge threshold")
    p.add_argument("--seq-len", dest="seq_len", type=int, default=None)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", parents=[common], help="train one model variant")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--variant", choices=m.VARIANTS, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a split")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="train all variants plus baselines")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", parents=[common], help="sweep sequence length or layer count")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--axis", choices=("seq-len", "gat-layers"), required=True)
    p.add_argument("--min", type=int, required=True)
    p.add_argument("--max", type=int, required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FlowgatError as e:
        log.error("%s", e)
        return 1
    except OSError as e:
        log.error("%s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
