#!/usr/bin/env python3
# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""
wngan - weight-normalized GAN toolkit, command-line entry point.

Commands:
    train            train a GAN pair, writing checkpoints, metrics.csv and sample grids
    eval             reconstruction-loss evaluation of a checkpoint's generator
    compare          rank variants by the mean loss of their eval reports
    gradcheck        autodiff vs finite differences for every layer kind
    equiv-check      plain <-> weight-normalized stack round trip
    lipschitz-check  per-layer gradient bounds and an empirical Lipschitz probe
    sample           draw a sample grid from a checkpoint
    curve            extract a metrics column as CSV or an SVG plot

Exit codes: 0 success, 1 failed check or runtime error, 2 usage error.

Usage:
    python wngan.py train --config train.yaml --dataset synthetic-shapes-8x8 --variant wn --out runs/wn
    python wngan.py eval --checkpoint runs/wn/checkpoints/best.ckpt --dataset synthetic-shapes-8x8 \\
        --steps 2000 --lr 0.01 --out report.json
    python wngan.py compare --report wn=wn.json --report vanilla=vanilla.json --report bn=bn.json
    python wngan.py gradcheck --trials 100
    python wngan.py equiv-check --depth 2 --width 8 --trials 1000
"""

from __future__ import annotations

import argparse
import csv
import json
import pathlib
import sys
from typing import List, Optional

import numpy as np

from checkpoint import load_checkpoint
from config import EvalConfig, TrainConfig, load_train_config, read_config_file
from constants import ARCHITECTURES, FINAL_EVAL_STEPS, EVAL_LR, VARIANTS
from data_sources import BUILTIN_DATASETS, load_dataset
from evaluation import EvalReport, budget_exceptions, final_eval, ordering_summary
from image_io import write_sample_grid
from layers.checks import GRADIENT_CASES, run_gradient_suite, select_cases
from lipschitz import budget_for, check_network_bounds, empirical_lipschitz, make_critic
from netbuild import check_equivalence, instantiate, spec_from_json
from tensor_autodiff import constant
from training import train_loop
from utils.error_handling import (
    CheckpointError,
    WNGANError,
    error_handler,
    get_logger,
    initialize_error_handling,
)
from utils.structure import atomic_write_bytes, atomic_write_json, find_latest_checkpoint, load_run_info
from version import CHECKPOINT_FORMAT_VERSION, PROJECT_NAME, __version__

logger = get_logger("cli")

DEFAULT_DATASET = "gauss2d-mixture"


class UsageError(Exception):
    """Bad command-line input discovered after parsing; exits with status 2."""


def _write_report(path: Optional[str], data: dict) -> None:
    if path:
        out = pathlib.Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        atomic_write_json(out, data)
        logger.info(f"Report written to {out}")
    else:
        print(json.dumps(data, indent=2))


# ── commands ───────────────────────────────────────────────────────

def _resolve_resume(path: Optional[str]):
    """A checkpoint file, or a run directory whose newest checkpoint and run.json are used."""
    if not path:
        return None, {}
    resume = pathlib.Path(path)
    if not resume.is_dir():
        return resume, {}
    ckpt = find_latest_checkpoint(resume)
    if ckpt is None:
        raise CheckpointError(f"No checkpoint to resume from in {resume}")
    return ckpt, load_run_info(resume)


@error_handler("train", reraise=True)
def cmd_train(args) -> int:
    resume, run_info = _resolve_resume(args.resume)
    config_path = pathlib.Path(args.config) if args.config else None
    overrides = dict(variant=args.variant, seed=args.seed, total_iters=args.iters,
                     architecture=args.architecture)
    if config_path is None and run_info.get("config"):
        raw = dict(run_info["config"])
        cfg = TrainConfig.from_dict({**raw, **{k: v for k, v in overrides.items() if v is not None}})
        logger.info(f"Using the config saved with {args.resume}")
    else:
        raw = read_config_file(config_path) if config_path else {}
        cfg = load_train_config(config_path, **overrides)
    dataset_name = args.dataset or run_info.get("dataset") or DEFAULT_DATASET
    dataset = load_dataset(dataset_name, n_samples=cfg.n_samples, seed=cfg.seed,
                           image_size=cfg.image_size)
    if not dataset.is_image and "architecture" not in raw and args.architecture is None:
        cfg = cfg.replace(architecture="mlp")
        logger.info("Vector dataset: using the mlp architecture")
    result = train_loop(cfg, dataset, pathlib.Path(args.out), resume_from=resume)
    atomic_write_json(result.run_dir / "train_result.json", result.to_dict())
    print(f"✅ Trained {cfg.variant} for {result.iterations} iterations: baseline loss "
          f"{result.baseline_loss:.6f}, best {result.best_loss} at iteration {result.best_iteration}")
    return 0


@error_handler("eval", reraise=True)
def cmd_eval(args) -> int:
    ckpt = load_checkpoint(pathlib.Path(args.checkpoint))
    gen = ckpt.network("generator")
    saved_cfg = ckpt.state.get("config", {})
    dataset = load_dataset(args.dataset, n_samples=saved_cfg.get("n_samples", 2000),
                           seed=saved_cfg.get("seed", 0), image_size=saved_cfg.get("image_size"))
    split = ckpt.state.get("split")
    if split:
        test_idx = dataset.split(split["test_size"], split["seed"]).test_indices
    else:
        test_idx = np.arange(len(dataset))
    eval_cfg = EvalConfig(steps=args.steps, lr=args.lr, n_samples=args.samples, seed=args.seed,
                          record_every=args.record_every)
    report = final_eval(gen, dataset.take(test_idx), eval_cfg, test_idx,
                        checkpoint_id=f"{pathlib.Path(args.checkpoint).name}@{ckpt.iteration}")
    out = pathlib.Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.write_json(out)
    report.write_csv(out.with_suffix(".csv"))
    print(f"✅ Mean reconstruction loss {report.mean_loss:.6f} over {len(report.per_sample_loss)} samples "
          f"({report.steps} steps, {report.n_failed} failed)")
    if args.baseline:
        baseline = EvalReport.read_json(pathlib.Path(args.baseline))
        exceptions = budget_exceptions(baseline, report)
        atomic_write_json(out.with_suffix(".budget.json"), {
            "baseline": str(args.baseline),
            "baseline_steps": baseline.steps,
            "steps": report.steps,
            "compared": len(set(baseline.sample_indices) & set(report.sample_indices)),
            "exceptions": exceptions,
        })
        if exceptions:
            logger.warning(f"{len(exceptions)} samples lost more after {report.steps} steps than after "
                           f"{baseline.steps}: {exceptions[:10]}")
        print(f"   {len(exceptions)} samples worse than the {baseline.steps}-step baseline")
    return 0


@error_handler("compare", reraise=True)
def cmd_compare(args) -> int:
    losses = {}
    for item in args.report:
        variant, sep, path = item.partition("=")
        if not sep or not variant or not path:
            raise UsageError(f"--report expects VARIANT=PATH, got '{item}'")
        losses[variant] = EvalReport.read_json(pathlib.Path(path)).mean_loss
    summary = ordering_summary(losses)
    _write_report(args.out, summary)
    print(("✅" if summary["matches_expected"] else "⚠️") + " ranked "
          + " < ".join(f"{v} ({losses[v]:.6f})" for v in summary["ranked"]))
    return 0


@error_handler("gradcheck", reraise=True)
def cmd_gradcheck(args) -> int:
    reports = run_gradient_suite(trials=args.trials, layer=args.layer, seed=args.seed)
    failed = [r for r in reports if not r.passed]
    _write_report(args.out, {
        "trials": args.trials,
        "checks": len(reports),
        "failed": len(failed),
        "max_rel_error": max(r.max_rel_error for r in reports),
        "failures": [r.to_dict() for r in failed],
    })
    print(("✅" if not failed else "❌") + f" {len(reports) - len(failed)}/{len(reports)} gradient checks passed")
    return 1 if failed else 0


@error_handler("equiv-check", reraise=True)
def cmd_equiv_check(args) -> int:
    report = check_equivalence(args.depth, args.width, args.trials, seed=args.seed,
                               n_inputs=args.inputs, prelu=not args.relu)
    _write_report(args.out, report.to_dict())
    print(("✅" if report.passed else "❌") + f" max output discrepancy {report.max_output_discrepancy:.3e}, "
          f"max round-trip error {report.max_roundtrip_error:.3e}")
    return 0 if report.passed else 1


@error_handler("lipschitz-check", reraise=True)
def cmd_lipschitz_check(args) -> int:
    spec = spec_from_json(pathlib.Path(args.spec).read_text(encoding="utf-8"))
    critic_spec = make_critic(spec)
    budget = budget_for(critic_spec)
    critic = instantiate(critic_spec, seed=args.seed)
    layer_reports = check_network_bounds(critic, trials=args.trials, seed=args.seed)
    probe = empirical_lipschitz(critic, budget.K, pairs=args.pairs, seed=args.seed)
    passed = probe.passed and all(r.passed for r in layer_reports)
    _write_report(args.out, {
        "budget": budget.to_dict(),
        "layers": [r.to_dict() for r in layer_reports],
        "probe": probe.to_dict(),
        "passed": passed,
    })
    print(("✅" if passed else "❌") + f" budget K={budget.K:.4f}, probe ratio {probe.max_ratio:.4f}, "
          f"gradient L1 {probe.max_gradient_l1:.4f}")
    return 0 if passed else 1


@error_handler("sample", reraise=True)
def cmd_sample(args) -> int:
    gen = load_checkpoint(pathlib.Path(args.checkpoint)).network("generator")
    codes = np.random.default_rng(args.seed).standard_normal((args.count, gen.latent_dim))
    gen.eval()
    with gen.frozen():
        samples = gen(constant(codes)).value
    out = pathlib.Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_sample_grid(out, samples, cols=args.cols)
    print(f"✅ Wrote {args.count} samples to {out}")
    return 0


def _window_std(values: List[float], window: int) -> List[float]:
    return [float(np.std(values[max(0, i - window + 1):i + 1])) for i in range(len(values))]


@error_handler("curve", reraise=True)
def cmd_curve(args) -> int:
    with open(args.metrics, newline="") as f:
        rows = list(csv.DictReader(f))
    if rows and args.column not in rows[0]:
        raise UsageError(f"Column '{args.column}' not in {args.metrics}; available: {', '.join(rows[0])}")
    points = [(int(r["iter"]), float(r[args.column])) for r in rows if r.get(args.column)]
    iters = [p[0] for p in points]
    values = [p[1] for p in points]
    stds = _window_std(values, args.window)
    out = pathlib.Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix.lower() == ".svg":
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(iters, values, label=args.column)
        ax.set_xlabel("iteration")
        ax.set_ylabel(args.column)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out, format="svg")
        plt.close(fig)
    else:
        lines = [f"iter,{args.column},window_std"]
        lines += [f"{i},{v!r},{s!r}" for i, v, s in zip(iters, values, stds)]
        atomic_write_bytes(out, ("\n".join(lines) + "\n").encode("utf-8"))
    print(f"✅ Wrote {len(points)} points of '{args.column}' to {out}")
    return 0


# ── parser ─────────────────────────────────────────────────────────

def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wngan",
        description="Weight-normalized GAN layers, training, reconstruction evaluation and checks.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version",
                        version=f"{PROJECT_NAME} {__version__} (checkpoint format {CHECKPOINT_FORMAT_VERSION})")
    parser.add_argument("--log-dir", type=str, default=None, help="Also write a dated DEBUG log here")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Train a GAN pair")
    p.add_argument("--config", type=str, help="JSON or YAML training config")
    p.add_argument("--dataset", type=str, default=None,
                   help=f"Builtin ({', '.join(BUILTIN_DATASETS)}), image-dir:<path> or a directory "
                        f"(default: the resumed run's dataset, else {DEFAULT_DATASET})")
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p.add_argument("--architecture", choices=ARCHITECTURES, default=None)
    p.add_argument("--iters", type=_positive_int, default=None, help="Override total_iters")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resume", type=str, default=None,
                   help="Checkpoint to resume from, or a run directory (its latest checkpoint and config)")
    p.add_argument("--out", type=str, required=True, help="Run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Reconstruction-loss evaluation of a checkpoint")
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--dataset", type=str, required=True)
    p.add_argument("--steps", type=_positive_int, default=FINAL_EVAL_STEPS)
    p.add_argument("--lr", type=float, default=EVAL_LR)
    p.add_argument("--samples", type=_positive_int, default=None, help="Evaluate a seeded subset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--record-every", type=int, default=0, help="Record the loss every N steps")
    p.add_argument("--baseline", type=str, default=None,
                   help="Smaller-budget report.json of the same checkpoint; lists samples that got worse")
    p.add_argument("--out", type=str, required=True, help="report.json (a .csv is written next to it)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="Rank variants by the mean loss of their eval reports")
    p.add_argument("--report", action="append", required=True, metavar="VARIANT=PATH",
                   help="Evaluation report of one variant; repeat per variant")
    p.add_argument("--out", type=str, default=None, help="JSON summary path (default stdout)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="Autodiff against finite differences")
    p.add_argument("--layer", type=str, default=None, help="Layer kind or case name")
    p.add_argument("--trials", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, default=None, help="JSON report path (default stdout)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("equiv-check", help="Plain <-> weight-normalized equivalence")
    p.add_argument("--depth", type=_positive_int, required=True, help="Hidden layer pairs n (2n+1 layers)")
    p.add_argument("--width", type=_positive_int, required=True)
    p.add_argument("--trials", type=_positive_int, default=100)
    p.add_argument("--inputs", type=_positive_int, default=1000)
    p.add_argument("--relu", action="store_true", help="Plain ReLU instead of random PReLU slopes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_equiv_check)

    p = sub.add_parser("lipschitz-check", help="Critic gradient bounds and Lipschitz probe")
    p.add_argument("--spec", type=str, required=True, help="Discriminator NetworkSpec JSON")
    p.add_argument("--trials", type=_positive_int, default=1000)
    p.add_argument("--pairs", type=_positive_int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_lipschitz_check)

    p = sub.add_parser("sample", help="Sample grid from a checkpoint")
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cols", type=_positive_int, default=None)
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("curve", help="Loss curve from metrics.csv")
    p.add_argument("--metrics", type=str, required=True)
    p.add_argument("--column", type=str, required=True)
    p.add_argument("--window", type=_positive_int, default=10, help="Sliding window for the std column")
    p.add_argument("--out", type=str, required=True, help=".csv or .svg")
    p.set_defaults(func=cmd_curve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "sample" and args.count < 1:
        parser.error(f"--count must be at least 1, got {args.count}")
    if args.command == "gradcheck" and args.layer and not select_cases(args.layer):
        parser.error(f"no gradient cases match --layer {args.layer}; known: {', '.join(GRADIENT_CASES)}")
    initialize_error_handling(pathlib.Path(args.log_dir) if args.log_dir else None)
    try:
        return args.func(args)
    except UsageError as e:
        parser.error(str(e))
    except (WNGANError, OSError, ValueError) as e:
        logger.debug(f"{args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
