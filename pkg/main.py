"""Main application module.

This module contains the command-line interface of the spleen length toolkit:
phantom generation, training, measurement, nested cross-validation, gradient checks,
caliper inpainting and model description.
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import pandas as pd
from threadpoolctl import threadpool_limits

from src.data.phantom import generate
from src.data.preprocess import inpaint_biharmonic
from src.data.processing import (
    read_dataset,
    read_image,
    read_mask,
    write_dataset,
    write_image,
)
from src.networks.bundle import ModelBundle, describe_plan, get_architecture
from src.nn.gradcheck import NN_GRADCHECK_CASES, run_suite
from src.reporting.generator import ReportGenerator, table1
from src.services.backends import (
    FittedModel,
    ModelSettings,
    NetworkBackend,
    OracleBackend,
    make_backend,
    model_config,
    predict_with_model,
)
from src.services.experiment import ExperimentService
from src.services.folds import make_fold_plan
from src.training.losses import LOSS_GRADCHECK_CASES
from src.training.trainer import TrainResult, write_loss_curve
from src.utils.config import (
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_USAGE,
    METHOD_ARCHITECTURE,
    METHOD_DEW,
    PUBLISHED_PARAMETER_COUNTS,
    PUBLISHED_PRESET,
)
from src.utils.exceptions import ConfigError, SpleenLenError
from src.utils.logging_setup import configure_logging
from src.utils.models import (
    AugmentationSpec,
    PhantomConfig,
    RunConfig,
    Sample,
    TrainPlan,
)
from src.version import VERSION

logger = logging.getLogger("src.cli")

PATH_FIELDS = [
    "dataset_dir",
    "output_dir",
    "checkpoint",
    "init_from",
    "image",
    "defect_mask",
]
TUPLE_FIELDS = ["image_shape", "rotation_range"]


def _csv_list(value: str) -> List[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _float_list(value: str) -> List[float]:
    try:
        return [float(v) for v in _csv_list(value)]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected numbers, got {value}") from e


def _shape(value: str) -> Tuple[int, int]:
    try:
        h, w = (int(v) for v in value.lower().split("x"))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected HxW, got {value}") from e
    return h, w


def _range(value: str) -> Tuple[float, float]:
    values = _float_list(value)
    if len(values) != 2:  # noqa: PLR2004
        raise argparse.ArgumentTypeError(f"expected LOW,HIGH, got {value}")
    return values[0], values[1]


def _parent() -> argparse.ArgumentParser:
    return argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser; unset flags are absent from the namespace."""
    common = _parent()
    common.add_argument("--config", dest="config_file", type=Path, help="JSON file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--threads", type=int, help="BLAS/OpenMP thread limit")
    common.add_argument("--out", dest="output_dir", type=Path, help="output directory")
    common.add_argument(
        "--paper-faithful",
        action="store_true",
        help="use the published hyperparameters",
    )
    common.add_argument("--log-file", type=Path, help="copy log records to a file")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")

    data = _parent()
    data.add_argument("--dataset", dest="dataset_dir", type=Path, help="dataset folder")

    phantom = _parent()
    phantom.add_argument("--count", type=int, help="number of phantoms")
    phantom.add_argument("--n-patients", type=int)
    phantom.add_argument("--contrast", type=float)
    phantom.add_argument("--speckle", type=float)
    phantom.add_argument("--calipers", action="store_true")
    phantom.add_argument("--image-shape", type=_shape, help="HxW, e.g. 64x96")

    model = _parent()
    model.add_argument("--base-channels", type=int)
    model.add_argument("--depth", type=int)
    model.add_argument("--vgg-width-divisor", type=int)

    training = _parent()
    training.add_argument("--epochs", type=int)
    training.add_argument("--batch-size", type=int)
    training.add_argument("--lr", dest="learning_rate", type=float)
    training.add_argument("--rotation-range", type=_range)
    training.add_argument("--no-augment", dest="augment", action="store_false")
    training.add_argument("--freeze-encoder", action="store_true")

    parser = argparse.ArgumentParser(
        prog="spleenlen", description=__doc__.splitlines()[0]
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_command(name: str, parents: list, text: str) -> argparse.ArgumentParser:
        return sub.add_parser(
            name, parents=parents, help=text, argument_default=argparse.SUPPRESS
        )

    add_command("phantom", [common, phantom], "generate a phantom dataset")

    p = add_command("train", [common, data, phantom, model, training], "train a model")
    p.add_argument("--method", choices=list(METHOD_ARCHITECTURE))
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--init-from", type=Path, help="SB checkpoint (DEW)")

    p = add_command("measure", [common, data], "measure a dataset")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--backend", choices=["network", "oracle"])

    p = add_command(
        "crossval",
        [common, data, phantom, model, training],
        "nested cross-validation",
    )
    p.add_argument("--methods", type=_csv_list)
    p.add_argument("--grouping", choices=["patient", "case"])
    p.add_argument("--grid", dest="weight_decay_grid", type=_float_list)
    p.add_argument("--r-mode", choices=["pooled", "fold_mean"])
    p.add_argument("--backend", choices=["network", "oracle"])
    p.add_argument("--pdf", action="store_true")

    add_command("gradcheck", [common], "finite-difference gradient checks")

    p = add_command("inpaint", [common], "remove calipers from an image")
    p.add_argument("--image", type=Path)
    p.add_argument("--defect-mask", type=Path)
    p.add_argument("--inpaint-method", choices=["direct", "jacobi"])

    p = add_command("describe", [common, model], "parameter table")
    p.add_argument("--method", choices=list(METHOD_ARCHITECTURE))
    p.add_argument("--image-shape", type=_shape)
    return parser


def _load_config_file(path: Path) -> Dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    unknown = sorted(set(data) - set(RunConfig.field_names()) - {"command"})
    if unknown:
        raise ConfigError(f"Unknown config keys: {unknown}")
    return data


def resolve_config(command: str, flags: Dict[str, Any]) -> RunConfig:
    """Merge defaults, the published preset, the config file and flags, in that order.

    Raises:
        ConfigError: On unknown keys or invalid values.
    """
    file_values = {}
    if "config_file" in flags:
        file_values = _load_config_file(flags.pop("config_file"))
    values = asdict(RunConfig(command=command))
    if flags.get("paper_faithful", file_values.get("paper_faithful", False)):
        values.update(PUBLISHED_PRESET)
        values["paper_faithful"] = True
    values.update(file_values)
    values.update(flags)
    values["command"] = command
    for name in PATH_FIELDS:
        if values.get(name) is not None:
            values[name] = Path(values[name]).expanduser().resolve()
    for name in TUPLE_FIELDS:
        values[name] = tuple(values[name])
    try:
        config = RunConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    return config.validate()


def phantom_config(config: RunConfig) -> PhantomConfig:
    return PhantomConfig(
        height=config.image_shape[0],
        width=config.image_shape[1],
        contrast=config.contrast,
        speckle=config.speckle,
        calipers=config.calipers,
        count=config.count,
        n_patients=config.n_patients,
        seed=config.seed,
    )


def train_plan(config: RunConfig) -> TrainPlan:
    return TrainPlan(
        epochs=config.epochs,
        batch_size=config.batch_size,
        seed=config.seed,
        augment=config.augment,
        learning_rate=config.learning_rate,
        augmentation=AugmentationSpec(
            rotation_range=config.rotation_range, paper_faithful=config.paper_faithful
        ),
    ).validate()


def _dataset(config: RunConfig) -> List[Sample]:
    if config.dataset_dir is not None:
        return read_dataset(config.dataset_dir)
    samples, _ = generate(phantom_config(config))
    return samples


def _provenance(config: RunConfig) -> Dict[str, Any]:
    values = asdict(config)
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in values.items()}


def cmd_phantom(config: RunConfig) -> Path:
    """Generate phantoms and write them to the output directory."""
    samples, manifest = generate(phantom_config(config))
    write_dataset(samples, config.output_dir, seed=config.seed)
    summary = manifest[["length_mm", "length_px"]].describe().round(2)
    patients = manifest["patient_id"].nunique()
    print(f"{len(samples)} cas, {patients} patients -> {config.output_dir}")
    print(summary.to_string())
    return config.output_dir


def cmd_train(config: RunConfig) -> Path:
    """Train one model on a dataset and save its checkpoint and loss curve."""
    samples = _dataset(config)
    backend = NetworkBackend(ModelSettings.from_run_config(config))
    source = None
    if config.method == METHOD_DEW:
        if config.init_from is None:
            raise ConfigError("DEW training needs --init-from with an SB checkpoint")
        source = FittedModel("SB", ModelBundle.load(config.init_from))
    plan = train_plan(config)
    fitted = backend.fit(config.method, samples, config.weight_decay, plan, source)
    out = config.checkpoint or config.output_dir / f"model_{config.method}.json"
    fitted.model.metadata["run_config"] = _provenance(config)
    fitted.model.save(out)
    write_loss_curve(
        TrainResult(fitted.model, fitted.loss_curve, plan, config.weight_decay),
        config.output_dir / f"loss_{config.method}.csv",
        extra={"run_config": _provenance(config)},
    )
    logger.info("Saved %s checkpoint to %s", config.method, out)
    return out


def cmd_measure(config: RunConfig) -> Path:
    """Measure every case of a dataset and write (case_id, length_mm) rows."""
    if config.dataset_dir is None:
        raise ConfigError("measure needs --dataset")
    samples = read_dataset(config.dataset_dir)
    if config.backend == "oracle":
        backend = OracleBackend(measure_masks=True)
        fitted = backend.fit("SB", samples, 0.0, TrainPlan())
        measurements = backend.predict(fitted, samples)
    else:
        if config.checkpoint is None:
            raise ConfigError("measure needs --checkpoint or --backend oracle")
        measurements = predict_with_model(ModelBundle.load(config.checkpoint), samples)
    df = pd.DataFrame(
        {
            "case_id": [m.case_id for m in measurements],
            "length_mm": [m.pred_mm for m in measurements],
            "length_px": [m.pred_px for m in measurements],
        }
    )
    config.output_dir.mkdir(parents=True, exist_ok=True)
    path = config.output_dir / "measurements.csv"
    df.to_csv(path, index=False)
    logger.info("Measured %d cases -> %s", len(df), path)
    return path


def cmd_crossval(config: RunConfig) -> Path:
    """Run the nested cross-validation and write every result file."""
    samples = _dataset(config)
    if config.dataset_dir is None:
        write_dataset(samples, config.output_dir / "dataset", seed=config.seed)
    plan = make_fold_plan(
        [s.case_id for s in samples],
        [s.patient_id for s in samples],
        grouping=config.grouping,
        seed=config.seed,
    )
    service = ExperimentService(
        make_backend(config), config.weight_decay_grid, config.r_mode
    )
    results = service.run_experiment(samples, config.methods, plan, train_plan(config))
    written = ReportGenerator().write_results(
        results,
        plan,
        config.output_dir,
        run_config=_provenance(config),
        samples=samples,
        pdf=config.pdf,
    )
    print(table1(results).round(3).to_string())
    return written["table1"]


def cmd_gradcheck(config: RunConfig) -> pd.DataFrame:
    """Run the gradient suite over every differentiable operation and loss."""
    table = run_suite(NN_GRADCHECK_CASES + LOSS_GRADCHECK_CASES, seed=config.seed)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.2e}"))
    config.output_dir.mkdir(parents=True, exist_ok=True)
    table.to_csv(config.output_dir / "gradcheck.csv", index=False)
    return table


def cmd_inpaint(config: RunConfig) -> Path:
    """Fill a defect (caliper) mask of an image with biharmonic inpainting."""
    if config.image is None or config.defect_mask is None:
        raise ConfigError("inpaint needs --image and --defect-mask")
    image = read_image(config.image)
    defect = read_mask(config.defect_mask, image.spacing)
    cleaned = inpaint_biharmonic(image, defect, method=config.inpaint_method)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    path = config.output_dir / f"{config.image.stem}_inpainted.png"
    write_image(path, cleaned)
    logger.info("Inpainted %d pixels -> %s", defect.count, path)
    return path


def cmd_describe(config: RunConfig) -> Path:
    """Write the per-layer parameter table of one architecture without allocating it."""
    architecture, cfg = model_config(
        config.method, config.image_shape, ModelSettings.from_run_config(config)
    )
    table = describe_plan(get_architecture(architecture).layer_plan(cfg))
    config.output_dir.mkdir(parents=True, exist_ok=True)
    path = config.output_dir / f"describe_{config.method}.csv"
    table.to_csv(path, index=False)
    total = int(table["parameters"].sum())
    published = PUBLISHED_PARAMETER_COUNTS.get(architecture)
    print(f"{config.method} ({architecture}) : {total:,} paramètres")
    if published:
        print(f"Valeur publiée : {published:,}")
    return path


HANDLERS: Dict[str, Callable[[RunConfig], Any]] = {
    "phantom": cmd_phantom,
    "train": cmd_train,
    "measure": cmd_measure,
    "crossval": cmd_crossval,
    "gradcheck": cmd_gradcheck,
    "inpaint": cmd_inpaint,
    "describe": cmd_describe,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code.

    Returns:
        int: 0 on success, 2 for usage or validation errors, 3 for runtime failures.
    """
    parser = build_parser()
    try:
        args = vars(parser.parse_args(argv))
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    command = args.pop("command")
    verbose, quiet = args.pop("verbose", False), args.pop("quiet", False)
    log_file = args.pop("log_file", None)
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    configure_logging(level, log_file)

    try:
        config = resolve_config(command, args)
        with threadpool_limits(limits=config.threads):
            result = HANDLERS[command](config)
    except ConfigError as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except (SpleenLenError, OSError) as e:
        logger.error("%s failed: %s", command, e)
        return EXIT_RUNTIME

    if command == "gradcheck" and (result["status"] != "PASS").any():
        failed = result.loc[result["status"] != "PASS", "op"].tolist()
        logger.error("Gradient check failed for %s", failed)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
