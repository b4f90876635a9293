"""Command-line entry point.

Subcommands: train, reflow, compare, validate, plot. All runs are
deterministic given the config (seeds included); --seed overrides the
config's top-level seed. Exit codes: 0 success, 1 validation or config
error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile

from . import csvio
from .checkpoint import CheckpointFormatError, load_checkpoint, save_checkpoint
from .config import ConfigError, load_config
from .experiment import run_compare, run_validation
from .flow import (TrainConfig, TrainingDivergedError, reflow_distill,
                   straightness, train)
from .oracle import OracleDegeneracyError
from .samplers import StepError
from .svgplot import scatter_panels_svg

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2

STRAIGHTNESS_EVAL = {"n_eval": 2000, "n_steps": 100, "seed": 2024}


def _load(args):
    overrides = {"seed": args.seed} if args.seed is not None else None
    return load_config(args.config, overrides=overrides)


def cmd_train(args) -> int:
    cfg = _load(args)
    os.makedirs(args.out, exist_ok=True)
    loss_log: list = []
    model = train(cfg.mixture, cfg.train, loss_log=loss_log)
    ckpt_path = os.path.join(args.out, "model_level1.ckpt")
    save_checkpoint(ckpt_path, model)
    csvio.write_rows(os.path.join(args.out, "training_loss.csv"),
                     ["step", "loss", "running_loss"], loss_log)
    print(f"wrote {ckpt_path} "
          f"(final running loss {model.training_meta['final_running_loss']:.6f})")
    return EXIT_OK


def cmd_reflow(args) -> int:
    cfg = _load(args)
    model = load_checkpoint(args.checkpoint)
    stage_cfg = TrainConfig(
        seed=cfg.train.seed + model.rectification_level,
        num_steps=cfg.reflow.num_steps, batch_size=cfg.train.batch_size,
        learning_rate=cfg.train.learning_rate,
        hidden_width=model.params.hidden_width,
        hidden_depth=model.params.hidden_depth)
    distilled = reflow_distill(model, cfg.mixture, stage_cfg,
                               integration_steps=cfg.reflow.integration_steps,
                               pool_size=cfg.reflow.pool_size)
    os.makedirs(args.out, exist_ok=True)
    level = distilled.rectification_level
    ckpt_path = os.path.join(args.out, f"model_level{level}.ckpt")
    save_checkpoint(ckpt_path, distilled)
    value = straightness(distilled, **STRAIGHTNESS_EVAL)
    report = os.path.join(args.out, "straightness.csv")
    new_file = not os.path.exists(report)
    with open(report, "a", newline="") as fh:
        if new_file:
            fh.write("level,straightness\n")
        fh.write(f"{level},{csvio.fmt(value)}\n")
    print(f"wrote {ckpt_path}")
    print(f"straightness level={level} value={value:.6f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    model = load_checkpoint(args.checkpoint)
    output = run_compare(model, cfg, args.out)
    print(f"oracle effective sample size: {output.oracle_ess:.1f}")
    for method, metric, value, _, _ in output.results_rows:
        if metric in ("mmd_vs_oracle", "energy_p_value", "mean_best_reward",
                      "mean_nfe_to_threshold"):
            print(f"{method:>20s}  {metric:<22s} {value}")
    print(f"wrote {output.sample_files['results']}")
    return EXIT_OK


def cmd_validate(args) -> int:
    out_dir = args.out or tempfile.mkdtemp(prefix="guidedflow_validate_")
    os.makedirs(out_dir, exist_ok=True)
    checks = run_validation(out_dir, corrupt_update=args.corrupt_update)
    failed = 0
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status}  {check.name:<28s} {check.detail}")
        failed += 0 if check.passed else 1
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_CONFIG


def cmd_plot(args) -> int:
    panels = []
    for path in args.csvs:
        points = csvio.read_points(path)
        title = os.path.splitext(os.path.basename(path))[0]
        for prefix in ("samples_latent_", "samples_data_"):
            if title.startswith(prefix):
                title = title[len(prefix):]
        panels.append((title, [tuple(p) for p in points]))
    svg = scatter_panels_svg(panels)
    with open(args.out, "w", newline="") as fh:
        fh.write(svg)
    print(f"wrote {args.out} ({len(panels)} panels)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="guidedflow",
        description="Train toy rectified flows and compare reward-guided "
                    "latent samplers against the exact target law.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", default=None, help="YAML config path")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        if checkpoint:
            p.add_argument("--checkpoint", required=True,
                           help="input checkpoint path")

    common(sub.add_parser("train", help="train a level-1 model"))
    common(sub.add_parser("reflow", help="distill a model one level"),
           checkpoint=True)
    common(sub.add_parser("compare", help="equal-budget method comparison"),
           checkpoint=True)

    val = sub.add_parser("validate", help="run the property suite")
    val.add_argument("--out", default=None, help="scratch directory")
    val.add_argument("--corrupt-update", action="store_true",
                     help="negative control: drop the correction drift and "
                          "expect the stationarity check to fail")

    plot = sub.add_parser("plot", help="scatter SVG from sample CSVs")
    plot.add_argument("csvs", nargs="+", help="sample CSV files (x,y columns)")
    plot.add_argument("--out", required=True, help="output SVG path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"train": cmd_train, "reflow": cmd_reflow,
                "compare": cmd_compare, "validate": cmd_validate,
                "plot": cmd_plot}
    try:
        return handlers[args.command](args)
    except (ConfigError, CheckpointFormatError, csvio.CsvFormatError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDivergedError, OracleDegeneracyError, StepError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
