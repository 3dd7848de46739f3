"""Main entry point for the semantic white balance toolkit."""

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from src.augment.manifest import (
    MANIFEST_FILENAME,
    load_manifest,
    load_samples,
    write_dataset,
)
from src.augment.synthesis import Sample, Split
from src.baselines import BaselineMethod, get_baseline
from src.colorcast.cast import apply_correction
from src.colorcast.metrics import RmseNormalization
from src.config import (
    ExperimentConfig,
    get_default_config_path,
    load_experiment_config,
)
from src.errors import SemanticWBError
from src.evaluation.evaluator import (
    evaluate_baselines,
    evaluate_model,
    run_ablation,
    synthesize_experiment,
)
from src.evaluation.report import Report, print_report_summary, save_report
from src.evaluation.sensitivity import evaluate_mask_swap, run_mask_sensitivity
from src.imaging.image_io import load_image, load_mask, save_image
from src.models import NetworkVariant, init_weights
from src.nn.checkpoint import load_checkpoint
from src.training.predictor import correct_image
from src.training.trainer import (
    build_training_set,
    load_trained_model,
    model_meta,
    train,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        config = load_experiment_config(args.config)
    elif get_default_config_path().exists():
        config = load_experiment_config(get_default_config_path())
    else:
        config = ExperimentConfig()
    return config.with_overrides(
        seed=args.seed,
        epochs=getattr(args, "epochs", None),
        output_dir=getattr(args, "out_dir", None),
    )


def _cmd_synth(args: argparse.Namespace) -> int:
    config = _load_config(args)
    out_dir = Path(args.out_dir) if args.out_dir else config.output_dir / "dataset"
    result, sources = synthesize_experiment(config, show_progress=not args.quiet)
    manifest_path = write_dataset(result, sources, out_dir)

    records = result.manifest.records
    print(f"Synthesized {len(records)} samples from {len(sources)} sources")
    print(f"  train: {len(result.manifest.records_for(Split.TRAIN))}")
    print(f"  test:  {len(result.manifest.records_for(Split.TEST))}")
    print(f"Manifest saved: {manifest_path}")
    return EXIT_OK


def _cmd_train(args: argparse.Namespace) -> int:
    config = _load_config(args)
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path)
    samples = load_samples(manifest, manifest_path.parent, split=Split.TRAIN)

    variant = NetworkVariant(args.variant)
    spec = config.specs.for_variant(variant)
    train_config = config.train
    network = init_weights(spec, np.random.default_rng(train_config.seed))
    resume = load_checkpoint(args.resume) if args.resume else None

    data = build_training_set(network, manifest, samples)
    result = train(
        network,
        data,
        train_config,
        checkpoint_path=args.out,
        checkpoint_meta=model_meta(spec, manifest),
        resume=resume,
        show_progress=not args.quiet,
    )
    print(f"Trained {variant.value} network on {len(data)} samples")
    if result.history:
        print(f"  loss: {result.history[0]:.6f} -> {result.history[-1]:.6f}")
    print(f"Checkpoint saved: {args.out}")
    return EXIT_OK


def _cmd_correct(args: argparse.Namespace) -> int:
    model = load_trained_model(args.model)
    image = load_image(args.image)
    mask = load_mask(args.mask, model.class_count)
    corrected = correct_image(
        model.network,
        image,
        mask,
        model.normalization,
        model.class_count,
        use_gamma=not args.no_gamma,
    )
    save_image(corrected, args.out)
    print(f"Corrected image saved: {args.out}")
    return EXIT_OK


def _scored_samples(args: argparse.Namespace) -> list[Sample]:
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path)
    return load_samples(manifest, manifest_path.parent, split=Split(args.split))


def _finish_report(report: Report, args: argparse.Namespace, stem: str) -> None:
    print_report_summary(report)
    if args.out_dir:
        json_path, text_path = save_report(report, args.out_dir, stem)
        print(f"\nReport JSON saved: {json_path}")
        print(f"Report text saved: {text_path}")


def _cmd_eval(args: argparse.Namespace) -> int:
    model = load_trained_model(args.model)
    samples = _scored_samples(args)
    rows = evaluate_model(
        model, samples, model.spec.variant.value, max_workers=args.workers, per=args.per
    )
    if args.baselines:
        rows.extend(evaluate_baselines(samples, max_workers=args.workers, per=args.per))
    report = Report(
        title=f"Evaluation on {args.split} split",
        rows=rows,
        rmse_per=RmseNormalization(args.per),
    )
    _finish_report(report, args, "eval")
    return EXIT_OK


def _cmd_baseline(args: argparse.Namespace) -> int:
    if args.image:
        if not args.out:
            print("Error: --out is required with --image", file=sys.stderr)
            return EXIT_FAILURE
        image = load_image(args.image)
        params = get_baseline(args.method)(image)
        save_image(apply_correction(image, params), args.out)
        print(
            f"{args.method}: gains "
            f"r={params.r:.4f} g={params.g:.4f} b={params.b:.4f}"
        )
        print(f"Corrected image saved: {args.out}")
        return EXIT_OK

    if not args.manifest:
        print("Error: either --image or --manifest is required", file=sys.stderr)
        return EXIT_FAILURE
    samples = _scored_samples(args)
    rows = evaluate_baselines(
        samples, [BaselineMethod(args.method)], max_workers=args.workers, per=args.per
    )
    report = Report(
        title=f"Baseline {args.method} on {args.split} split",
        rows=rows,
        rmse_per=RmseNormalization(args.per),
    )
    _finish_report(report, args, f"baseline_{args.method}")
    return EXIT_OK


def _cmd_ablation(args: argparse.Namespace) -> int:
    config = _load_config(args)
    print("Starting ablation")
    print("=" * 60)
    print(f"Seeds: {config.seeds}")
    print(f"Epochs: {config.train.epochs}")
    report = run_ablation(config, show_progress=not args.quiet)
    print_report_summary(report)
    print(f"\nReport saved under: {config.output_dir}")
    return EXIT_OK


def _cmd_mask_sens(args: argparse.Namespace) -> int:
    model = load_trained_model(args.model)
    if args.manifest:
        samples = _scored_samples(args)
        swap = evaluate_mask_swap(model, samples, seed=args.seed or 0, per=args.per)
        print(f"Mask swap over {len(samples)} samples")
        print(f"  RMSE with correct masks:  {swap.mean_rmse_correct:.4f}")
        print(f"  RMSE with shuffled masks: {swap.mean_rmse_shuffled:.4f}")
        print(f"  Mean parameter delta:     {swap.mean_parameter_delta:.6f}")
        return EXIT_OK

    if not (args.image and args.mask and args.mask_b):
        print(
            "Error: --image, --mask and --mask-b are required without --manifest",
            file=sys.stderr,
        )
        return EXIT_FAILURE
    image = load_image(args.image)
    result = run_mask_sensitivity(
        model,
        image,
        load_mask(args.mask, model.class_count),
        load_mask(args.mask_b, model.class_count),
    )
    print(f"Mask A: {result.params_a.to_dict()}")
    print(f"Mask B: {result.params_b.to_dict()}")
    print(f"Parameter delta: {result.parameter_delta:.6f}")
    print(f"RMSE between corrections: {result.correction_rmse:.4f}")
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_image(result.corrected_a, out_dir / "corrected_mask_a.png")
        save_image(result.corrected_b, out_dir / "corrected_mask_b.png")
        print(f"Corrected images saved under: {out_dir}")
    return EXIT_OK


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Global seed override")
    common.add_argument(
        "--config",
        type=str,
        default=None,
        help="Experiment config JSON (default: configs/default_experiment.json)",
    )
    common.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="ログレベル (デフォルト: WARNING)",
    )
    common.add_argument("--quiet", action="store_true", help="Hide progress bars")
    return common


def _add_scoring_args(parser: argparse.ArgumentParser, manifest_required: bool) -> None:
    parser.add_argument(
        "--manifest", required=manifest_required, default=None, help="Dataset manifest"
    )
    parser.add_argument(
        "--split", default=Split.TEST.value, choices=[s.value for s in Split]
    )
    parser.add_argument(
        "--workers", type=int, default=1, help="並列ワーカー数 (デフォルト: 1)"
    )
    parser.add_argument(
        "--per", default="value", choices=["value", "pixel"], help="RMSE denominator"
    )
    parser.add_argument("--out-dir", default=None, help="Directory for report files")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="semantic-wb",
        description="White balance correction with semantic masks",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    synth = subparsers.add_parser(
        "synth", parents=[common], help="Synthesize a distorted dataset"
    )
    synth.add_argument("--out-dir", default=None, help="Dataset output directory")
    synth.set_defaults(handler=_cmd_synth)

    train_p = subparsers.add_parser("train", parents=[common], help="Train a network")
    train_p.add_argument(
        "--manifest", required=True, help=f"Dataset {MANIFEST_FILENAME}"
    )
    train_p.add_argument(
        "--variant",
        default=NetworkVariant.SEMANTIC.value,
        choices=[v.value for v in NetworkVariant],
    )
    train_p.add_argument("--out", required=True, help="Checkpoint path (.npz)")
    train_p.add_argument(
        "--epochs", type=int, default=None, help="Epoch count override"
    )
    train_p.add_argument("--resume", default=None, help="Checkpoint to resume from")
    train_p.set_defaults(handler=_cmd_train)

    correct = subparsers.add_parser(
        "correct", parents=[common], help="Correct one image with a trained model"
    )
    correct.add_argument("--image", required=True)
    correct.add_argument("--mask", required=True)
    correct.add_argument("--model", required=True, help="Checkpoint path")
    correct.add_argument("--out", required=True)
    correct.add_argument(
        "--no-gamma", action="store_true", help="Apply gains only (gamma = 1)"
    )
    correct.set_defaults(handler=_cmd_correct)

    eval_p = subparsers.add_parser(
        "eval", parents=[common], help="Score a trained model on a dataset split"
    )
    _add_scoring_args(eval_p, manifest_required=True)
    eval_p.add_argument("--model", required=True, help="Checkpoint path")
    eval_p.add_argument(
        "--baselines", action="store_true", help="Also score the baseline methods"
    )
    eval_p.set_defaults(handler=_cmd_eval)

    baseline = subparsers.add_parser(
        "baseline", parents=[common], help="Run a statistics-based baseline"
    )
    _add_scoring_args(baseline, manifest_required=False)
    baseline.add_argument(
        "--method", required=True, choices=[m.value for m in BaselineMethod]
    )
    baseline.add_argument("--image", default=None)
    baseline.add_argument("--out", default=None)
    baseline.set_defaults(handler=_cmd_baseline)

    ablation = subparsers.add_parser(
        "ablation", parents=[common], help="Train and compare RGB vs. semantic networks"
    )
    ablation.add_argument(
        "--epochs", type=int, default=None, help="Epoch count override"
    )
    ablation.add_argument("--out-dir", default=None, help="Output directory override")
    ablation.set_defaults(handler=_cmd_ablation)

    mask_sens = subparsers.add_parser(
        "mask-sens", parents=[common], help="Measure how predictions depend on the mask"
    )
    _add_scoring_args(mask_sens, manifest_required=False)
    mask_sens.add_argument("--model", required=True, help="Checkpoint path")
    mask_sens.add_argument("--image", default=None)
    mask_sens.add_argument("--mask", default=None, help="First mask")
    mask_sens.add_argument("--mask-b", default=None, help="Second mask")
    mask_sens.set_defaults(handler=_cmd_mask_sens)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Run the CLI.

    Returns:
        Exit code: 0 on success, 1 on failure. Usage errors exit with 2.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except (SemanticWBError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
