"""Batch entry point: synth / evaluate / panels / inspect subcommands.

Logs go to stderr, artifacts to --out, and stdout carries only rendered
tables (or the inspect JSON). Every run writes run_meta.json capturing the
full configuration; equal meta implies byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .convoluted import DEFAULT_FRACTIONS, split_dataset
from .core_types import EncoderCombo, ModelSpec, enumerate_combos
from .evaluation import (
    EvalConfig,
    kfold_evaluate,
    panel_sweep,
    summary_table,
    table1_csv,
    table1_markdown,
    table2_csv,
)
from .feature_store import IngestError, load_dataset
from .mlp import TrainConfig
from .synthetic import GenConfig, generate

log = logging.getLogger("hedonic_fusion")

METHOD_ALIASES = {
    "pols": "penalized_ols",
    "penalized_ols": "penalized_ols",
    "nn": "neural_network",
    "neural_network": "neural_network",
    "conv": "convoluted",
    "convoluted": "convoluted",
}


def _parse_combos(tokens: str, encoders) -> list[EncoderCombo]:
    all_combos = enumerate_combos(encoders)
    by_label = {c.label: c for c in all_combos}
    out: list[EncoderCombo] = []
    for token in tokens.split(","):
        token = token.strip()
        if not token:
            continue
        if token == "all":
            out.extend(all_combos)
            continue
        if token == "tout":
            out.append(EncoderCombo.tout(encoders))
            continue
        members = tuple(sorted(token.split("+")))
        label = "+".join(members)
        if label in by_label:
            out.append(by_label[label])
            continue
        unknown = [m for m in members if m not in encoders]
        if unknown:
            raise ValueError(f"unknown encoder(s) {unknown} in combo {token!r}")
        raise ValueError(f"combo {token!r} is not a single, pair, or the ensemble")
    seen = set()
    unique = []
    for c in out:
        if c.members not in seen:
            seen.add(c.members)
            unique.append(c)
    return unique


def build_specs(combos, methods, inputs: str, seed: int) -> list[ModelSpec]:
    """The evaluate grid: per combo one penalized OLS, one NN, two convoluted
    (regression-stage attributes fixed by the input row), plus one
    attributes-only baseline per requested method."""
    specs: list[ModelSpec] = []
    rows = ("attributes_images",) if inputs == "attributes_images" else (
        ("images",) if inputs == "images" else ("attributes_images", "images")
    )
    for combo in combos:
        for row in rows:
            with_attributes = row == "attributes_images"
            if "penalized_ols" in methods:
                specs.append(
                    ModelSpec("penalized_ols", combo, False, with_attributes, seed)
                )
            if "neural_network" in methods:
                specs.append(
                    ModelSpec("neural_network", combo, with_attributes, False, seed)
                )
            if "convoluted" in methods:
                specs.append(ModelSpec("convoluted", combo, False, with_attributes, seed))
                specs.append(ModelSpec("convoluted", combo, True, with_attributes, seed))
    if "penalized_ols" in methods:
        specs.append(ModelSpec("penalized_ols", None, False, True, seed))
    if "neural_network" in methods:
        specs.append(ModelSpec("neural_network", None, True, False, seed))
    if "convoluted" in methods:
        specs.append(ModelSpec("convoluted", None, True, True, seed))
    return specs


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, help="dataset directory")
    parser.add_argument("--manifest", default=None, help="schema manifest (default: <data>/manifest.json)")
    parser.add_argument("--seed", type=int, required=True)


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", required=True, help="output directory for artifacts")
    parser.add_argument("--combos", default="all")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--nn-epochs", type=int, default=None)
    parser.add_argument("--nn-lr", type=float, default=None)
    parser.add_argument("--nn-batch", type=int, default=None)
    parser.add_argument("--nn-patience", type=int, default=None)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hedonic-fusion",
        description="Multi-encoder image-feature fusion for hedonic price prediction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, default=6887)
    p.add_argument("--attributes", type=int, default=12)
    p.add_argument("--cnn-categories", type=int, default=40)
    p.add_argument("--panoptic-categories", type=int, default=24)
    p.add_argument("--signal", type=float, default=0.15)
    p.add_argument("--noise-sd", type=float, default=0.18)
    p.add_argument("--clusters", type=int, default=30)

    p = sub.add_parser("evaluate", help="5-fold out-of-sample MSE sweep")
    _add_common(p)
    _add_run_flags(p)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--methods", default="all", help="comma list of pols,nn,convoluted or all")
    p.add_argument(
        "--inputs",
        choices=("attributes_images", "images", "both"),
        default="attributes_images",
    )
    p.add_argument("--grid-size", type=int, default=100, help="LASSO lambda grid points")
    p.add_argument("--inner-k", type=int, default=5, help="inner CV folds for lambda")
    p.add_argument(
        "--grid-min-ratio",
        type=float,
        default=1e-4,
        help="lambda grid floor as a fraction of lambda_max; raise to ~1e-2 "
        "when confidence blocks make the far bottom of the path crawl",
    )

    p = sub.add_parser("panels", help="four-panel in-sample regressions")
    _add_common(p)
    _add_run_flags(p)
    p.add_argument("--split", default=",".join(str(f) for f in DEFAULT_FRACTIONS))

    p = sub.add_parser("inspect", help="validate a dataset and print a summary")
    _add_common(p)
    return parser


def _train_config(args, seed: int) -> TrainConfig:
    cfg = TrainConfig(seed=seed, standardize_target=True)
    if args.nn_epochs is not None:
        cfg = replace(cfg, epochs=args.nn_epochs)
    if args.nn_lr is not None:
        cfg = replace(cfg, learning_rate=args.nn_lr)
    if args.nn_batch is not None:
        cfg = replace(cfg, batch_size=args.nn_batch)
    if args.nn_patience is not None:
        cfg = replace(cfg, patience=args.nn_patience)
    return cfg


def _load(args):
    manifest = args.manifest or str(Path(args.data) / "manifest.json")
    return load_dataset(manifest, args.data)


def _write_meta(out_dir: Path, args) -> None:
    meta = {
        "command": args.command,
        "args": {k: v for k, v in sorted(vars(args).items()) if k != "command"},
        "version": __version__,
    }
    (out_dir / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def cmd_synth(args) -> int:
    cfg = GenConfig(
        n=args.n,
        n_attributes=args.attributes,
        cnn_categories=args.cnn_categories,
        panoptic_categories=args.panoptic_categories,
        signal_strength=args.signal,
        noise_sd=args.noise_sd,
        n_clusters=args.clusters,
        seed=args.seed,
    )
    summary = generate(cfg, args.out)
    log.info(
        "wrote %d properties to %s (mean log price %.4f)",
        summary["n"],
        summary["out_dir"],
        summary["mean_log_price"],
    )
    _write_meta(Path(args.out), args)
    return 0


def cmd_evaluate(args) -> int:
    dataset = _load(args)
    methods = set()
    for token in args.methods.split(","):
        token = token.strip()
        if token == "all":
            methods.update(METHOD_ALIASES.values())
        elif token in METHOD_ALIASES:
            methods.add(METHOD_ALIASES[token])
        elif token:
            raise ValueError(f"unknown method {token!r}")
    combos = _parse_combos(args.combos, dataset.manifest.encoder_names)
    specs = build_specs(combos, methods, args.inputs, args.seed)
    config = EvalConfig(
        jobs=max(1, args.jobs),
        lasso_grid_size=args.grid_size,
        lasso_inner_k=args.inner_k,
        lasso_min_ratio=args.grid_min_ratio,
        nn=_train_config(args, args.seed),
    )
    log.info("evaluating %d specs on %d folds (jobs=%d)", len(specs), args.k, config.jobs)
    report = kfold_evaluate(dataset, specs, k=args.k, seed=args.seed, config=config)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json())
    (out_dir / "table2.csv").write_text(table2_csv(report))
    rendered = summary_table(report)
    (out_dir / "table2.md").write_text(rendered)
    _write_meta(out_dir, args)
    sys.stdout.write(rendered)

    failures = [k for k, r in report.per_spec.items() if r.error is not None]
    for key in failures:
        log.warning("spec failed: %s (%s)", key, report.per_spec[key].error)
    if specs and len(failures) == len(specs):
        log.error("every spec failed")
        return 1
    return 0


def cmd_panels(args) -> int:
    dataset = _load(args)
    fractions = tuple(float(f) for f in args.split.split(","))
    if len(fractions) != 3:
        raise ValueError("--split needs three comma-separated fractions")
    combos = _parse_combos(args.combos, dataset.manifest.encoder_names)
    splits = split_dataset(dataset, fractions, seed=args.seed)
    log.info(
        "split sizes: train=%d ols=%d eval=%d; %d combos",
        len(splits.train_ids),
        len(splits.ols_ids),
        len(splits.eval_ids),
        len(combos),
    )
    panels = panel_sweep(dataset, combos, splits, seed=args.seed, nn_cfg=_train_config(args, args.seed))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "table1.csv").write_text(table1_csv(panels))
    rendered = table1_markdown(panels)
    (out_dir / "table1.md").write_text(rendered)
    _write_meta(out_dir, args)
    sys.stdout.write(rendered)
    return 0


def cmd_inspect(args) -> int:
    dataset = _load(args)
    summary = {
        "n_records": dataset.n,
        "n_dropped_join": dataset.n_dropped_join,
        "warnings": list(dataset.warnings),
        "blocks": {name: b.n_columns for name, b in sorted(dataset.blocks.items())},
        "attributes": list(dataset.manifest.attributes),
        "n_clusters": len(set(dataset.clusters)),
    }
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "evaluate": cmd_evaluate,
    "panels": cmd_panels,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    args = _build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (IngestError, ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
