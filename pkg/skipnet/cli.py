"""Command-line entry point: ``skipnet <command> [flags] [--key value ...]``.

Commands print ``key=value`` lines on stdout; diagnostics and errors go to
stderr. Exit codes: 0 success, 1 a check ran and failed, 2 usage, config or
data error.
"""

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from contextlib import nullcontext
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from skipnet import checkpoint
from skipnet.autodiff import gradcheck, inject_gradient_fault
from skipnet.config import RunConfig, load_run_config
from skipnet.data import (
    CLASS_NAMES,
    DatasetManifest,
    NearestCentroid,
    Split,
    SplitProvenance,
    encode_png,
    generate_synthetic,
    load_dataset,
    load_image,
    load_manifest,
    load_split,
    quantize,
    split_by_patient,
)
from skipnet.errors import CheckFailure, ConfigurationError, SkipnetError, UsageError
from skipnet.logging import log_context, setup_logging
from skipnet.model import (
    ModelConfig,
    SKIPNetModel,
    attention_maps,
    parameter_counts,
    predict_proba,
)
from skipnet.storage import ArtifactStore
from skipnet.tensor import Precision, precision
from skipnet.training import (
    TrainConfig,
    confusion_entries,
    evaluate,
    format_summary,
    metrics_csv,
    train,
)

logger = logging.getLogger(__name__)

METRICS_NAME = "metrics.csv"
SUMMARY_NAME = "summary.txt"
SPLITS_NAME = "splits.csv"

# Options argparse owns; any other ``--key`` is a RunConfig override
_FLAGS = {"--config", "--seed", "--out", "--threads", "--split", "--help", "-h"}


def _class_names(classes: int) -> list[str]:
    if classes == len(CLASS_NAMES):
        return list(CLASS_NAMES)
    return [str(k) for k in range(classes)]


def _emit(values: dict[str, Any]) -> None:
    sys.stdout.write(format_summary(values))
    sys.stdout.flush()


def _require_manifest(
    config: RunConfig, provenance: SplitProvenance | None = None
) -> DatasetManifest:
    """
    Load the configured manifest and make sure every record has a split.

    Without a split column the manifest is split by patient, using the seed
    and fractions recorded in ``provenance`` when given.
    """
    if config.manifest is None:
        raise ConfigurationError("No manifest configured (set manifest=PATH)")
    manifest = load_manifest(
        config.manifest, config.dataset_root, config.expect_reference_counts
    )
    if manifest.has_splits:
        manifest.check_patient_isolation()
        return manifest
    if provenance is None:
        return split_by_patient(manifest, config.split_fractions, config.seed)
    recorded = (provenance.seed, provenance.fractions)
    if recorded != (config.seed, config.split_fractions):
        logger.info(
            f"Splitting with the training run's seed {provenance.seed} and fractions "
            f"{','.join(map(str, provenance.fractions))}"
        )
    return split_by_patient(manifest, provenance.fractions, provenance.seed)


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    """Train on the configured dataset and write checkpoint, metrics and summary."""
    manifest = _require_manifest(config)
    provenance = SplitProvenance.of(manifest, config.split_fractions, config.seed)
    dataset = load_dataset(manifest, config.input_size, config.resolved_threads())
    model = SKIPNetModel(ModelConfig.from_run_config(config), seed=config.seed)
    train_config = TrainConfig.from_run_config(config)
    optimizer = train_config.make_optimizer()
    logger.info(
        f"Training {model.num_parameters()} parameters on {len(dataset.train)} "
        f"train / {len(dataset.val)} val / {len(dataset.test)} test slices"
    )
    result = train(model, dataset, train_config, optimizer)
    test = evaluate(model, dataset.test, config.eval_batch_size)
    baseline = NearestCentroid.fit(dataset.train, config.num_classes)
    names = _class_names(config.num_classes)

    store = ArtifactStore(config.output_dir)
    checkpoint_path = checkpoint.save(
        model, optimizer, config.checkpoint_path(), provenance
    )
    splits_path = store.save_text(SPLITS_NAME, manifest.to_csv())
    metrics_path = store.save_text(
        METRICS_NAME, metrics_csv(result.history, test.confusion, names)
    )

    summary: dict[str, Any] = {
        "checkpoint": checkpoint_path,
        "metrics": metrics_path,
        "splits": splits_path,
        "epochs_run": len(result.history),
        "best_epoch": result.best_epoch,
        "best_val_accuracy": result.best_val_accuracy,
        "stopped_early": str(result.stopped_early).lower(),
        "test_samples": len(dataset.test),
        "test_loss": test.loss,
        "test_accuracy": test.accuracy,
        **confusion_entries(test.confusion, names),
        "baseline_test_accuracy": baseline.accuracy(dataset.test),
    }
    for layer, count in parameter_counts(model).items():
        summary[f"params.{layer}"] = count
    summary["params.total"] = model.num_parameters()
    store.save_text(SUMMARY_NAME, format_summary(summary))
    _emit(summary)
    return 0


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> int:
    """
    Metrics of a saved model on one split of the configured dataset.

    Raises:
        SplitError: If the split holds a patient the checkpoint was trained on
    """
    model, _ = checkpoint.load(args.checkpoint)
    provenance = checkpoint.load_split_provenance(args.checkpoint)
    manifest = _require_manifest(config, provenance)
    if provenance is None:
        logger.warning(
            f"{args.checkpoint} records no training split; "
            "patient isolation is unchecked"
        )
    else:
        provenance.check_disjoint(manifest, args.split)
    split = load_split(
        manifest, args.split, model.config.input_size, config.resolved_threads()
    )
    result = evaluate(model, split, config.eval_batch_size)
    values: dict[str, Any] = {
        "split": split.name,
        "samples": len(split),
        "loss": result.loss,
        "accuracy": result.accuracy,
        "correct": result.confusion.correct,
        "total": result.confusion.total,
        **confusion_entries(result.confusion, _class_names(model.config.num_classes)),
    }
    if provenance is not None:
        values["split_seed"] = provenance.seed
    _emit(values)
    return 0


def cmd_predict(args: argparse.Namespace, config: RunConfig) -> int:
    model, _ = checkpoint.load(args.checkpoint)
    image = load_image(args.image, model.config.input_size)
    probabilities = predict_proba(model, image[None])[0]
    names = _class_names(model.config.num_classes)
    values: dict[str, Any] = {"label": names[int(probabilities.argmax())]}
    for name, p in zip(names, probabilities, strict=True):
        values[f"prob.{name}"] = f"{float(p):.9f}"
    _emit(values)
    return 0


def cmd_gradcheck(args: argparse.Namespace, config: RunConfig) -> int:
    """
    Finite-difference check of a reduced model in float64.

    Raises:
        CheckFailure: If any parameter's relative error reaches the threshold
    """
    model_config = ModelConfig.from_run_config(config).model_copy(
        update={
            "channels": list(config.gradcheck_channels),
            "input_size": config.gradcheck_input_size,
        }
    )
    rng = np.random.default_rng(config.seed)
    with precision(Precision.FLOAT64):
        model = SKIPNetModel(model_config, seed=config.seed).astype(np.float64)
        size = config.gradcheck_input_size
        x = rng.random((config.gradcheck_batch, config.in_channels, size, size))
        labels = np.arange(config.gradcheck_batch) % config.num_classes
        fault = inject_gradient_fault() if config.gradcheck_fault_injection else nullcontext()
        with fault:
            report = gradcheck(
                model,
                x,
                labels,
                config.gradcheck_step,
                threshold=config.gradcheck_threshold,
                samples=config.gradcheck_samples,
                seed=config.seed,
            )

    values: dict[str, Any] = {
        f"rel_err.{p.name}": f"{p.max_relative_error:.3e}" for p in report.parameters
    }
    values["max_relative_error"] = f"{report.max_relative_error:.3e}"
    values["threshold"] = f"{report.threshold:.3e}"
    values["passed"] = str(report.passed).lower()
    _emit(values)
    if not report.passed:
        failing = ", ".join(p.name for p in report.failing())
        raise CheckFailure(
            f"gradient check failed (threshold {report.threshold:g}): {failing}"
        )
    return 0


def cmd_attention(args: argparse.Namespace, config: RunConfig) -> int:
    """Write each SAL map of one image as ``sal_<i>.png`` (i from 1)."""
    model, _ = checkpoint.load(args.checkpoint)
    image = load_image(args.image, model.config.input_size)
    store = ArtifactStore(config.output_dir)
    values: dict[str, Any] = {}
    for i, attention in enumerate(attention_maps(model, image[None]), start=1):
        path = store.save(f"sal_{i}.png", encode_png(quantize(attention[0, 0])))
        values[f"sal_{i}"] = path
        values[f"sal_{i}.shape"] = "x".join(map(str, attention.shape[2:]))
    _emit(values)
    return 0


def cmd_synth(args: argparse.Namespace, config: RunConfig) -> int:
    manifest = generate_synthetic(
        config.output_dir, config.synth_per_class, config.synth_size, config.seed
    )
    _emit(
        {
            "manifest": config.output_dir / "manifest.csv",
            "samples": len(manifest.records),
            "class_counts": ",".join(map(str, manifest.class_counts())),
        }
    )
    return 0


COMMANDS: dict[str, Callable[[argparse.Namespace, RunConfig], int]] = {
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "gradcheck": cmd_gradcheck,
    "attention": cmd_attention,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key=value run config")
    common.add_argument("--seed", type=int, help="overrides the seed key")
    common.add_argument("--out", type=Path, help="overrides output_dir")
    common.add_argument("--threads", type=int, help="image decode workers")

    parser = argparse.ArgumentParser(
        prog="skipnet",
        description="SKIPNet brain-tumor slice classifier.",
        epilog="Any other --key value pair overrides that run-config key.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("train", parents=[common], help="train and evaluate")
    evaluate_cmd = commands.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    evaluate_cmd.add_argument("checkpoint", type=Path)
    evaluate_cmd.add_argument(
        "--split", default=Split.TEST.value, choices=[s.value for s in Split]
    )
    predict_cmd = commands.add_parser("predict", parents=[common], help="classify one image")
    predict_cmd.add_argument("checkpoint", type=Path)
    predict_cmd.add_argument("image", type=Path)
    commands.add_parser("gradcheck", parents=[common], help="finite-difference check")
    attention_cmd = commands.add_parser(
        "attention", parents=[common], help="export attention maps of one image"
    )
    attention_cmd.add_argument("checkpoint", type=Path)
    attention_cmd.add_argument("image", type=Path)
    commands.add_parser("synth", parents=[common], help="write a synthetic dataset")
    return parser


def split_overrides(argv: Sequence[str]) -> tuple[list[str], dict[str, str]]:
    """
    Separate ``--key value`` / ``--key=value`` config overrides from the rest.

    Raises:
        UsageError: If an override has no value
    """
    rest: list[str] = []
    overrides: dict[str, str] = {}
    tokens = iter(argv)
    for token in tokens:
        name, has_value, value = token.partition("=")
        if not token.startswith("--") or name in _FLAGS:
            rest.append(token)
            continue
        if not has_value:
            value = next(tokens, None)  # type: ignore[assignment]
            if value is None:
                raise UsageError(f"Override {name} needs a value")
        overrides[name[2:]] = value
    return rest, overrides


def main(argv: Sequence[str] | None = None) -> int:
    setup_logging()
    try:
        rest, overrides = split_overrides(sys.argv[1:] if argv is None else argv)
        args = build_parser().parse_args(rest)
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["output_dir"] = args.out
        if args.threads is not None:
            overrides["threads"] = args.threads
        config = load_run_config(args.config, overrides)
        with log_context(command=args.command, seed=config.seed):
            return COMMANDS[args.command](args, config)
    except ValidationError as e:
        print(f"error: invalid configuration: {e}", file=sys.stderr)
        return 2
    except SkipnetError as e:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
