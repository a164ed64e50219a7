"""
Command-line interface for dogfit: fit, eval, synth and export.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import torch
from rich.console import Console
from rich.table import Table

from .exceptions import DivergenceError, DogfitError, SchemaError
from .fitting.config import load_settings
from .fitting.pipeline import fit_sequence
from .io.layout import SequenceMeta, load_sequence, save_sequence
from .io.solution import (
    export_solution,
    load_ground_truth,
    load_solution,
    save_ground_truth,
    save_solution,
)
from .logger import configure_logging
from .metrics import TABLE_COLUMNS, MetricsReport, evaluate_solution
from .model.assets import load_assets, save_assets
from .synth.motion import SynthSpec, load_spec
from .synth.render import synth_sequence
from .types import Setting

logger = logging.getLogger(__name__)

ASSETS_FILE = "assets.json"
GROUND_TRUTH_FILE = "ground_truth.json"


def parse_args(args: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    parser = argparse.ArgumentParser(
        prog="dogfit", description="Recover scaled quadruped motion from RGB(-D) sequences"
    )
    parser.add_argument(
        "--log-level",
        choices=["debug", "info", "warning", "error", "critical"],
        default=None,
        help="Logging level (default: DOGFIT_LOG or info)",
    )
    parser.add_argument("--threads", type=int, default=None, help="Cap on torch CPU threads")
    commands = parser.add_subparsers(dest="command", required=True)

    fit = commands.add_parser("fit", help="Fit the body model to a sequence")
    fit.add_argument("--seq", required=True, help="Sequence directory")
    fit.add_argument("--assets", default=None, help=f"Template assets (default: <seq>/{ASSETS_FILE})")
    fit.add_argument("--setting", choices=[s.value for s in Setting], default=None)
    fit.add_argument("--config", default=None, help="FitSettings JSON")
    fit.add_argument("--out", required=True, help="Output directory")
    fit.add_argument("--export-mesh", action="store_true", help="Also write per-frame OBJ meshes")
    fit.add_argument("--seed", type=int, default=None)

    evaluate = commands.add_parser("eval", help="Compute metrics of a solution")
    evaluate.add_argument("--seq", required=True)
    evaluate.add_argument("--solution", required=True)
    evaluate.add_argument("--assets", default=None, help=f"Template assets (default: <seq>/{ASSETS_FILE})")
    evaluate.add_argument("--out", required=True)
    evaluate.add_argument("--floor-z", type=float, default=0.0)
    evaluate.add_argument("--seed", type=int, default=0, help="Seed of the F-score surface samples")

    synth = commands.add_parser("synth", help="Generate a synthetic sequence")
    synth.add_argument("--spec", default=None, help="SynthSpec JSON (defaults when omitted)")
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int, default=None)

    export = commands.add_parser("export", help="Write OBJ meshes and a joint CSV")
    export.add_argument("--solution", required=True)
    export.add_argument("--assets", required=True)
    export.add_argument("--out", required=True)
    export.add_argument("--no-mesh", action="store_true")

    return parser.parse_args(args)


def _assets_path(args: argparse.Namespace) -> Path:
    return Path(args.assets) if args.assets else Path(args.seq) / ASSETS_FILE


def run_fit(args: argparse.Namespace) -> int:
    rig, observations, meta = load_sequence(args.seq)
    assets = load_assets(_assets_path(args))
    settings = load_settings(args.config, setting=args.setting, seed=args.seed)
    out = Path(args.out)
    try:
        solution = fit_sequence(observations, rig, assets, settings)
    except DivergenceError as e:
        if e.checkpoint is None:
            raise
        save_solution(e.checkpoint, out / "solution.json")
        logger.error(f"{e}; last finite checkpoint saved to {out / 'solution.json'}")
        return 2
    save_solution(solution, out / "solution.json")
    if args.export_mesh:
        export_solution(solution, assets, out, meshes=True, joints=False)
    return 0


def print_metrics(report: MetricsReport, console: Optional[Console] = None) -> None:
    table = Table(title="dogfit metrics")
    for column in TABLE_COLUMNS:
        table.add_column(column, justify="right")
    table.add_row(*report.row())
    (console or Console()).print(table)


def run_eval(args: argparse.Namespace) -> int:
    rig, observations, meta = load_sequence(args.seq)
    assets = load_assets(_assets_path(args))
    solution = load_solution(args.solution, assets)
    if solution.frame_count != meta.frames:
        raise SchemaError(
            f"solution has {solution.frame_count} frames but the sequence has {meta.frames}",
            file=str(args.solution),
        )
    truth_path = Path(args.seq) / GROUND_TRUTH_FILE
    gt_joints = load_ground_truth(truth_path).joints.numpy() if truth_path.exists() else None
    report = evaluate_solution(
        solution, observations, rig, assets, floor_z=args.floor_z, seed=args.seed, gt_joints=gt_joints
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(report.model_dump_json(indent=2))
    print_metrics(report)
    return 0


def run_synth(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec) if args.spec else SynthSpec()
    if args.seed is not None:
        spec = spec.model_copy(update={"seed": args.seed})
    assets, rig, observations, truth = synth_sequence(spec)
    out = Path(args.out)
    meta = SequenceMeta(frames=spec.frames, fps=spec.fps, setting=Setting.MV_RGBD, seed=spec.seed)
    save_sequence(out, rig, observations, meta)
    save_assets(assets, out / ASSETS_FILE)
    save_ground_truth(truth, out / GROUND_TRUTH_FILE)
    (out / "synth_spec.json").write_text(json.dumps(spec.model_dump(mode="json"), indent=2))
    return 0


def run_export(args: argparse.Namespace) -> int:
    assets = load_assets(args.assets)
    solution = load_solution(args.solution, assets)
    export_solution(solution, assets, args.out, meshes=not args.no_mesh, joints=True)
    return 0


COMMANDS = {"fit": run_fit, "eval": run_eval, "synth": run_synth, "export": run_export}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the CLI."""
    args = parse_args(argv)
    level = configure_logging(args.log_level)
    if args.threads:
        torch.set_num_threads(args.threads)

    try:
        status = COMMANDS[args.command](args)
    except SchemaError as e:
        logger.error(str(e))
        for line in e.diagnostics:
            logger.error(line)
        status = 1
    except DogfitError as e:
        logger.error(str(e), exc_info=level <= logging.DEBUG)
        status = 1
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        status = 1
    return status


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
