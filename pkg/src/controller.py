from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from src.config import settings
from src.errors import CheckpointError, ConfigError, ShapeError
from src.models.params import UgmmLayerParams
from src.models.run_config import RunConfig, format_validation_error, load_run_config
from src.services import checkpoint_service, export_service, gradcheck_service, network_service, training_service
from src.services.checkpoint_service import Checkpoint
from src.services.dataset_service import Dataset, prepare_dataset
from src.utils.numkit import Rng

log = logging.getLogger(__name__)

REPORT_FILE = "report.csv"
CHECKPOINT_FILE = "checkpoint.bin"


@dataclass
class TrainOutcome:
    config: RunConfig
    accuracy: float
    report_path: Path
    checkpoint_path: Path
    result: training_service.TrainResult


def _check_dataset_fits(config: RunConfig, train: Dataset) -> None:
    widths = config.layer_widths
    if train.n_features != widths[0]:
        raise ConfigError(f"layer_widths: input width {widths[0]} but {config.dataset} has {train.n_features} features")
    if train.class_count != widths[-1]:
        raise ConfigError(f"layer_widths: output width {widths[-1]} but {config.dataset} has {train.class_count} classes")


def run_directory(config: RunConfig, output_dir: Optional[str] = None) -> Path:
    """`<output_dir>/<run name>`; CLI override, then the config, then OUTPUT_DIR."""
    return Path(output_dir or config.output_dir or settings.output_dir) / config.name


def train_from_config(config: RunConfig, output_dir: Optional[str] = None) -> TrainOutcome:
    """Train, evaluate, and write the checkpoint and report CSV."""
    train, test = prepare_dataset(config)
    _check_dataset_fits(config, train)

    spec = config.network_spec()
    result = training_service.train_run(
        spec,
        train,
        test,
        config.optim_config(),
        config.schedule_config(),
        epochs=config.epochs,
        batch_size=config.batch_size,
        rng=Rng(config.seed),
        clip_norm=config.clip_norm,
    )
    accuracy = result.report.final_accuracy
    if accuracy is None:
        accuracy = training_service.evaluate(result.params, test.X, test.y, spec.mode)

    out_dir = run_directory(config, output_dir)
    report_path = export_service.write_report_csv(result.report, out_dir / REPORT_FILE)
    checkpoint_path = out_dir / CHECKPOINT_FILE
    checkpoint_service.save_checkpoint(
        checkpoint_path,
        Checkpoint(
            spec=spec,
            params=result.params,
            state=result.state,
            epoch=result.epochs_done,
            run_config=config.model_dump(mode="json"),
        ),
    )
    log.info(f"Run '{config.name}' finished: test accuracy {accuracy:.4f}")
    return TrainOutcome(config, accuracy, report_path, checkpoint_path, result)


def train_from_file(config_path: str, output_dir: Optional[str] = None) -> TrainOutcome:
    return train_from_config(load_run_config(config_path), output_dir)


def _load_checked(checkpoint_path: str) -> Checkpoint:
    ckpt = checkpoint_service.load_checkpoint(checkpoint_path)
    try:
        network_service.check_compatible(ckpt.params, ckpt.spec)
    except ShapeError as e:
        raise CheckpointError(f"{checkpoint_path}: {e}") from e
    return ckpt


def _eval_config(ckpt: Checkpoint, dataset: str) -> RunConfig:
    if ckpt.run_config is None:
        raise CheckpointError("checkpoint carries no run configuration to rebuild its test split")
    fields = dict(ckpt.run_config)
    if fields.get("dataset") != dataset:
        fields["dataset"] = dataset
        fields["iris_path"] = fields.get("iris_path") or str(Path(settings.data_dir) / "iris.csv")
        fields["mnist_dir"] = fields.get("mnist_dir") or str(Path(settings.data_dir) / "mnist")
    try:
        return RunConfig.model_validate(fields)
    except ValidationError as e:
        raise CheckpointError(f"checkpoint run configuration is invalid: {format_validation_error(e)}") from e


def evaluate_checkpoint(checkpoint_path: str, dataset: str) -> float:
    """Accuracy of a checkpoint on the test split its run configuration defines."""
    ckpt = _load_checked(checkpoint_path)
    config = _eval_config(ckpt, dataset)
    _, test = prepare_dataset(config)
    widths = ckpt.spec.layer_widths
    if test.n_features != widths[0] or test.class_count != widths[-1]:
        raise CheckpointError(
            f"checkpoint widths {widths} do not fit {dataset} "
            f"({test.n_features} features, {test.class_count} classes)"
        )
    return training_service.evaluate(ckpt.params, test.X, test.y, ckpt.spec.mode)


def gradcheck(seed: int = 0, sizes: Optional[Tuple[int, int, int]] = None) -> List[gradcheck_service.AuditResult]:
    return gradcheck_service.run_audits(seed=seed, sizes=sizes)


def inspect_neuron(
    checkpoint_path: str,
    layer: int,
    neuron: int,
    grid_min: float,
    grid_max: float,
    points: int,
    output_dir: Optional[str] = None,
) -> List[Path]:
    """Density CSV plus HTML and SVG plots for one neuron of a uGMM checkpoint."""
    ckpt = _load_checked(checkpoint_path)
    layers = ckpt.params.layers
    if not 0 <= layer < len(layers):
        raise IndexError(f"layer {layer} out of range (checkpoint has {len(layers)} layers)")
    params = layers[layer]
    if not isinstance(params, UgmmLayerParams):
        raise ConfigError("inspect needs a uGMM checkpoint")
    if not 0 <= neuron < params.n_out:
        raise IndexError(f"neuron {neuron} out of range (layer {layer} has {params.n_out} neurons)")
    if points < 2 or not grid_max > grid_min:
        raise ValueError("inspect needs points >= 2 and max > min")

    grid = np.linspace(grid_min, grid_max, points)
    frame = export_service.density_table(params, neuron, grid)
    out_dir = Path(output_dir) if output_dir else Path(checkpoint_path).parent
    stem = out_dir / f"density_layer{layer}_neuron{neuron}"
    written = [export_service.write_density_csv(frame, stem.with_suffix(".csv"))]
    written += export_service.save_density_plots(frame, stem, f"Layer {layer}, neuron {neuron}: mixture density")
    return written


def compare_configs(config_a: str, config_b: str, output_dir: Optional[str] = None) -> pd.DataFrame:
    configs = [load_run_config(config_a), load_run_config(config_b)]
    if configs[0].dataset != configs[1].dataset:
        raise ConfigError(f"dataset: compare needs one dataset, got {configs[0].dataset} and {configs[1].dataset}")

    rows = []
    for config in configs:
        outcome = train_from_config(config, output_dir)
        rows.append(
            {
                "dataset": config.dataset,
                "model": "uGMM-NN" if config.kind == "ugmm" else "FFNN",
                "accuracy": outcome.accuracy,
                "loss": config.loss_name,
            }
        )
    return export_service.comparison_table(rows)
