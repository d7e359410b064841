"""
MMN toolkit - command-line entry point.

Subcommands:
    synth-gen   write a synthetic micro-action dataset (train/val/test files)
    train       train a model and log/checkpoint every epoch
    eval        score a checkpoint (optionally a two-stream ensemble)
    gradcheck   finite-difference check of every op and a toy model
    bench       parameter count, MAC estimate and forward latency
    inspect     export channel-max feature maps of MSTF blocks

Exit codes: 0 on success, 1 on validation failure, 2 on usage error.
"""

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config, ModelConfig, RunConfig
from errors import MMNError, UsageError
from evaluation import (PredictionSet, align_predictions, ensemble_scores, evaluate, predict_sequences,
                        read_predictions, write_evaluation)
from network import MmnModel, count_params_flops, model_gradcheck, toy_config
from network.complexity import REFERENCE_FLOPS_G, REFERENCE_LATENCY_MS, REFERENCE_PARAMS_M
from engine.gradcheck import op_suite
from skeleton import (LabelTaxonomy, SkeletonSequence, SynthSpec, load_dataset, prepare_sample, save_dataset,
                      split_sequences, synth_generate)
from training import CheckpointManager, Trainer, load_model

# Set up logging
logging.basicConfig(
    level=getattr(logging, Config.get_log_level(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
RESERVED_FLAGS = {"seed", "epochs"}
WARMUP_PASSES = 10


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _override_dest(section: str, name: str) -> str:
    return f"override__{section}__{name}"


def build_parser() -> argparse.ArgumentParser:
    """Build the parser; every config field is also exposed as --kebab-case."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--out", help="output directory (default: MMN_OUTPUT_DIR or ./runs)")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--preset", help=f"ablation preset ({', '.join(Config.PRESETS)})")
    common.add_argument("--dataset", help="dataset directory (train/val/test.jsonl) or a single dataset file")
    common.add_argument("--checkpoint", help="checkpoint archive")
    common.add_argument("--epochs", type=int, help="training epochs")
    common.add_argument("--batch", type=int, help="batch size")
    common.add_argument("--modality", choices=[Config.MODALITY_JOINT, Config.MODALITY_BONE],
                        help="input modality")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    defaults = RunConfig()
    overrides = common.add_argument_group("config overrides")
    for section in RunConfig.SECTIONS:
        for f in dataclasses.fields(getattr(defaults, section)):
            if f.name in RESERVED_FLAGS:
                continue
            overrides.add_argument(f"--{f.name.replace('_', '-')}", dest=_override_dest(section, f.name),
                                   metavar=f.name.upper(), help=f"{section}.{f.name}")

    parser = argparse.ArgumentParser(prog="mmn", description="Motion-guided modulation network toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth-gen", parents=[common], help="generate a synthetic dataset")
    synth.add_argument("--classes", type=int, default=4)
    synth.add_argument("--per-class", type=int, default=100)
    synth.add_argument("--amplitude", type=float, default=0.3)
    synth.add_argument("--noise", type=float, default=0.01)
    synth.add_argument("--similarity", type=float, default=0.0)
    synth.add_argument("--joints", type=int, default=12)
    synth.add_argument("--raw-len", type=int, default=64)
    synth.add_argument("--split", default="70/15/15", help="train/val/test ratios")

    sub.add_parser("train", parents=[common], help="train a model")

    evaluate_cmd = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    evaluate_cmd.add_argument("--split", default="test", choices=SPLITS)
    evaluate_cmd.add_argument("--checkpoint-b", help="second checkpoint for a two-stream ensemble")
    evaluate_cmd.add_argument("--modality-b", choices=[Config.MODALITY_JOINT, Config.MODALITY_BONE],
                              default=Config.MODALITY_BONE)
    evaluate_cmd.add_argument("--weight", type=float, default=0.5, help="ensemble weight of the first stream")
    evaluate_cmd.add_argument("--predictions-a", help="prediction file of the first stream")
    evaluate_cmd.add_argument("--predictions-b", help="prediction file of the second stream")

    sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks")

    bench = sub.add_parser("bench", parents=[common], help="params, MACs and latency")
    bench.add_argument("--runs", type=int, default=100, help="timed forwards after warmup")

    inspect = sub.add_parser("inspect", parents=[common], help="export feature maps")
    inspect.add_argument("--split", default="test", choices=SPLITS)
    inspect.add_argument("--sample", default="0", help="sample id or index within the split")
    inspect.add_argument("--stage", type=int, help="0-based stage (default: all)")
    inspect.add_argument("--block", type=int, help="0-based block (default: all)")
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Explicit command-line values, keyed by qualified field name."""
    overrides: Dict[str, Any] = {}
    for key, value in vars(args).items():
        if key.startswith("override__") and value is not None:
            _, section, name = key.split("__", 2)
            overrides[f"{section}.{name}"] = value
    if args.seed is not None:
        overrides["train.seed"] = args.seed
    if args.epochs is not None:
        overrides["train.epochs"] = args.epochs
    if args.batch is not None:
        overrides["train.batch_size"] = args.batch
    if args.modality is not None:
        overrides["modality"] = args.modality
    for name in ("dataset", "checkpoint", "out"):
        if getattr(args, name) is not None:
            overrides[name] = getattr(args, name)
    return overrides


def resolve_run(args: argparse.Namespace, defaults: Optional[Dict[str, Any]] = None) -> RunConfig:
    run = Config.resolve(args.config, args.preset, collect_overrides(args), defaults)
    if not run.out:
        run.out = Config.get_output_dir()
    return run


# ---------------------------------------------------------------------------
# Dataset helpers
# ---------------------------------------------------------------------------

def load_splits(path: str, seed: int = 0) -> Tuple[Dict[str, List[SkeletonSequence]], LabelTaxonomy]:
    """
    Load train/val/test splits from a directory, or split a single file 70/15/15.

    Raises:
        UsageError: If the path does not exist
    """
    if not path:
        raise UsageError("--dataset is required")
    if os.path.isdir(path):
        splits: Dict[str, List[SkeletonSequence]] = {}
        taxonomy = None
        for split in SPLITS:
            file_path = os.path.join(path, f"{split}.jsonl")
            if os.path.isfile(file_path):
                splits[split], split_taxonomy = load_dataset(file_path)
                taxonomy = taxonomy or split_taxonomy
            else:
                splits[split] = []
        if taxonomy is None:
            raise UsageError(f"no train/val/test .jsonl files in {path}")
        return splits, taxonomy
    if not os.path.isfile(path):
        raise UsageError(f"dataset not found: {path}")
    sequences, taxonomy = load_dataset(path)
    return split_sequences(sequences, seed=seed), taxonomy


def dataset_defaults(splits: Dict[str, List[SkeletonSequence]], taxonomy: LabelTaxonomy) -> Dict[str, Any]:
    """Model shape fields implied by a dataset."""
    sample = next(seq for split in SPLITS for seq in splits[split])
    return {
        "model.num_joints": sample.num_joints,
        "model.in_channels": sample.in_channels,
        "model.num_classes": taxonomy.num_actions,
    }


def parse_ratios(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.replace(",", "/").split("/"))
    except ValueError:
        raise UsageError(f"--split expects ratios like 70/15/15, got {text!r}")


def require_checkpoint(path: Optional[str], flag: str = "--checkpoint") -> str:
    if not path:
        raise UsageError(f"{flag} is required")
    if not os.path.isfile(path):
        raise UsageError(f"{flag} not found: {path}")
    return path


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth_gen(args: argparse.Namespace) -> int:
    """Write train/val/test dataset files under --out."""
    out = args.out or Config.get_output_dir()
    paths = {split: os.path.join(out, f"{split}.jsonl") for split in SPLITS}
    existing = [p for p in paths.values() if os.path.exists(p)]
    if existing and not args.force:
        raise UsageError(f"{existing[0]} exists; pass --force to overwrite")
    spec = SynthSpec(
        num_classes=args.classes,
        per_class=args.per_class,
        num_joints=args.joints,
        raw_len=args.raw_len,
        raw_len_jitter=min(SynthSpec.raw_len_jitter, args.raw_len - 1),
        amplitude=args.amplitude,
        noise_sigma=args.noise,
        similarity=args.similarity,
        seed=args.seed if args.seed is not None else SynthSpec.seed,
    )
    sequences, taxonomy = synth_generate(spec)
    splits = split_sequences(sequences, parse_ratios(args.split), seed=spec.seed)
    comment = (f"synthetic: classes={spec.num_classes} per_class={spec.per_class} amplitude={spec.amplitude} "
               f"noise={spec.noise_sigma} similarity={spec.similarity} seed={spec.seed}")
    if not spec.separable:
        comment += " inseparable"
    os.makedirs(out, exist_ok=True)
    for split, path in paths.items():
        if splits[split]:
            save_dataset(path, splits[split], taxonomy, comment=comment)
        elif os.path.exists(path):
            os.remove(path)
        logger.info(f"{split}: {len(splits[split])} samples")
    with open(os.path.join(out, "synth_spec.txt"), "w", encoding="utf-8") as f:
        f.write("\n".join(f"{k}={v}" for k, v in dataclasses.asdict(spec).items()) + "\n")
    print(f"Wrote {len(sequences)} samples to {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else Config.get_seed()
    splits, taxonomy = load_splits(args.dataset, seed)
    run = resolve_run(args, dataset_defaults(splits, taxonomy))
    Config.write_config(run, run.out)
    trainer = Trainer(run, splits["train"], splits["val"], taxonomy)
    if run.checkpoint:
        trainer.resume(require_checkpoint(run.checkpoint))
    state = trainer.fit()
    if state.history:
        last = state.history[-1]
        print(f"Trained {state.epoch} epochs: train_top1={last['train_top1']:.4f} "
              f"val_f1_mean={last['val_f1_mean']:.4f} (best epoch {state.best_epoch})")
    return 0


def _stream_predictions(checkpoint: str, sequences: Sequence[SkeletonSequence], taxonomy: LabelTaxonomy,
                        batch_size: int, modality: str) -> PredictionSet:
    model, _ = load_model(checkpoint)
    return predict_sequences(model, sequences, taxonomy, batch_size, modality == Config.MODALITY_BONE)


def cmd_eval(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else Config.get_seed()
    splits, taxonomy = load_splits(args.dataset, seed)
    sequences = splits[args.split]
    if not sequences:
        raise UsageError(f"split {args.split} is empty")
    run = resolve_run(args, dataset_defaults(splits, taxonomy))
    Config.write_config(run, run.out)
    batch = run.train.batch_size
    extra: Dict[str, Any] = {"split": args.split}

    if args.predictions_a or args.predictions_b:
        if not (args.predictions_a and args.predictions_b):
            raise UsageError("--predictions-a and --predictions-b go together")
        reference = PredictionSet(np.zeros((len(sequences), taxonomy.num_actions)),
                                  [s.label for s in sequences], [s.sample_id for s in sequences], taxonomy)
        a = align_predictions(*read_predictions(args.predictions_a), reference)
        b = align_predictions(*read_predictions(args.predictions_b), reference)
        preds = ensemble_scores(a, b, args.weight)
        extra.update({"ensemble": [args.predictions_a, args.predictions_b], "weight": args.weight})
    else:
        checkpoint = require_checkpoint(run.checkpoint)
        preds = _stream_predictions(checkpoint, sequences, taxonomy, batch, run.modality)
        if args.checkpoint_b:
            preds_b = _stream_predictions(require_checkpoint(args.checkpoint_b, "--checkpoint-b"), sequences,
                                          taxonomy, batch, args.modality_b)
            report_a = evaluate(preds)
            report_b = evaluate(preds_b)
            write_evaluation(run.out, preds, report_a, prefix="a_")
            write_evaluation(run.out, preds_b, report_b, prefix="b_")
            preds = ensemble_scores(preds, preds_b, args.weight)
            extra.update({"ensemble": [checkpoint, args.checkpoint_b], "weight": args.weight,
                          "stream_top1": [report_a.top1_action, report_b.top1_action]})
        else:
            extra["checkpoint"] = checkpoint

    report = evaluate(preds)
    write_evaluation(run.out, preds, report, extra=extra)
    print(f"top1={100 * report.top1_action:.2f} top5={100 * report.top5_action:.2f} "
          f"f1_mean={100 * report.f1_mean:.2f}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    tolerance = 1e-4
    seed = args.seed if args.seed is not None else 0
    ops = op_suite(seed=seed, tolerance=tolerance)
    model_report = model_gradcheck(toy_config(), seed=seed, tolerance=tolerance)
    failed = [name for name, report in ops.items() if not report.passed]
    if not model_report.passed:
        failed.append("model")
    worst = max([r.max_rel_error for r in ops.values()] + [model_report.max_rel_error])
    document = {
        "passed": not failed,
        "tolerance": tolerance,
        "max_rel_error": worst,
        "failed": failed,
        "ops": {name: report.to_dict() for name, report in ops.items()},
        "model": model_report.to_dict(),
    }
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "gradcheck.json"), "w", encoding="utf-8") as f:
            json.dump(document, f, indent=2)
    if failed:
        print(f"FAIL, max rel err {worst:.3e} >= {tolerance:g} in {', '.join(failed)}")
        return 1
    print(f"PASS, max rel err {worst:.3e} < {tolerance:g}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    if args.checkpoint:
        model, _ = load_model(require_checkpoint(args.checkpoint))
        run = resolve_run(args)
    else:
        run = resolve_run(args)
        model = MmnModel(run.model).eval()
        # untrained weights: identity running statistics
        for state in model.batch_norm_states().values():
            state.settle()
    if args.runs < 1:
        raise UsageError("--runs must be at least 1")
    cfg: ModelConfig = model.config
    complexity = count_params_flops(model)
    frames = np.random.default_rng(run.train.seed).normal(size=(1, cfg.num_frames, cfg.num_joints,
                                                                cfg.in_channels))
    for _ in range(WARMUP_PASSES):
        model.predict(frames)
    timings = []
    for _ in range(args.runs):
        start = time.perf_counter()
        model.predict(frames)
        timings.append(1000.0 * (time.perf_counter() - start))
    document = complexity.to_dict()
    document.update({
        "latency_ms_median": float(np.median(timings)),
        "latency_ms_p90": float(np.percentile(timings, 90)),
        "runs": args.runs,
        "warmup": WARMUP_PASSES,
        "batch": 1,
        "reference": {"params_m": REFERENCE_PARAMS_M, "gflops": REFERENCE_FLOPS_G,
                      "latency_ms": REFERENCE_LATENCY_MS},
    })
    Config.write_config(run, run.out)
    with open(os.path.join(run.out, "bench.json"), "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2)
    print(f"{'':>10} {'Params (M)':>11} {'FLOPs (G)':>10} {'Time (ms)':>10}")
    print(f"{'this run':>10} {complexity.params_m:>11.4f} {complexity.gflops:>10.4f} "
          f"{document['latency_ms_median']:>10.3f}")
    print(f"{'reference':>10} {REFERENCE_PARAMS_M:>11.2f} {REFERENCE_FLOPS_G:>10.2f} {REFERENCE_LATENCY_MS:>10.2f}")
    return 0


def _find_sample(sequences: Sequence[SkeletonSequence], key: str) -> SkeletonSequence:
    for seq in sequences:
        if seq.sample_id == key:
            return seq
    try:
        return sequences[int(key)]
    except (ValueError, IndexError):
        raise UsageError(f"no sample {key!r} in the selected split ({len(sequences)} samples)")


def cmd_inspect(args: argparse.Namespace) -> int:
    checkpoint = require_checkpoint(args.checkpoint)
    seed = args.seed if args.seed is not None else Config.get_seed()
    splits, taxonomy = load_splits(args.dataset, seed)
    model, _ = load_model(checkpoint)
    run = resolve_run(args, dataset_defaults(splits, taxonomy))
    seq = _find_sample(splits[args.split], args.sample)
    frames = prepare_sample(seq, model.config.num_frames, parents=taxonomy.joint_parents,
                            bone=run.modality == Config.MODALITY_BONE)
    maps = model.export_all_feature_maps(frames)
    selected = {key: value for key, value in maps.items()
                if (args.stage is None or key[0] == args.stage) and (args.block is None or key[1] == args.block)}
    if not selected:
        # delegate to the exporter so out-of-range indices raise its error
        model.export_feature_maps(frames, args.stage or 0, args.block or 0)
    Config.write_config(run, run.out)
    path = os.path.join(run.out, "feature_maps.jsonl")
    with open(path, "w", encoding="utf-8") as f:
        for (stage, block), fmap in sorted(selected.items()):
            f.write(json.dumps({"id": seq.sample_id, "label": seq.label, "stage": stage, "block": block,
                                "shape": list(fmap.shape), "map": fmap.tolist()}) + "\n")
    print(f"Wrote {len(selected)} feature maps for {seq.sample_id} to {path}")
    return 0


COMMANDS = {
    "synth-gen": cmd_synth_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "bench": cmd_bench,
    "inspect": cmd_inspect,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        logger.error(f"Usage error: {str(e)}")
        return 2
    except MMNError as e:
        logger.error(f"{type(e).__name__}: {str(e)}")
        return 1


if __name__ == '__main__':
    sys.exit(main())
