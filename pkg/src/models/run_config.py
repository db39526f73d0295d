from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.errors import ConfigError

UGMM_DEFAULT_CLIP_NORM = 10.0

ModelKind = Literal["ugmm", "ffnn"]
TrainingMode = Literal["discriminative", "generative"]
DatasetName = Literal["iris", "mnist"]


def check_widths(widths: List[int]) -> List[int]:
    if len(widths) < 2:
        raise ValueError("layer_widths needs at least an input and an output width")
    if any(w < 1 for w in widths):
        raise ValueError("layer_widths entries must be >= 1")
    if widths[-1] < 2:
        raise ValueError("layer_widths output width (class count) must be >= 2")
    return widths


def check_milestones(milestones: List[int]) -> List[int]:
    if any(m < 0 for m in milestones):
        raise ValueError("milestones must be non-negative epochs")
    if any(b <= a for a, b in zip(milestones, milestones[1:])):
        raise ValueError("milestones must be strictly increasing")
    return milestones


class DropoutPlacement(BaseModel):
    """Dropout on the layer producing hidden width `layer`."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    layer: int = Field(ge=1)
    p: float = Field(ge=0.0, lt=1.0)


def check_dropout(dropout: List[DropoutPlacement], widths: List[int]) -> None:
    last_hidden = len(widths) - 2
    seen = set()
    for placement in dropout:
        if placement.layer > last_hidden:
            raise ValueError(
                f"dropout layer {placement.layer} is not a hidden layer (hidden indices are 1..{last_hidden})"
            )
        if placement.layer in seen:
            raise ValueError(f"dropout layer {placement.layer} listed twice")
        seen.add(placement.layer)


class NetworkSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: ModelKind
    layer_widths: List[int]
    dropout: List[DropoutPlacement] = Field(default_factory=list)
    mode: TrainingMode = "discriminative"
    seed: int = 0

    @field_validator("layer_widths")
    @classmethod
    def valid_widths(cls, v: List[int]) -> List[int]:
        return check_widths(v)

    @model_validator(mode="after")
    def dropout_on_hidden(self) -> "NetworkSpec":
        check_dropout(self.dropout, self.layer_widths)
        return self

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def class_count(self) -> int:
        return self.layer_widths[-1]

    def dropout_for_layer(self, layer: int) -> float:
        """Dropout probability of parameter layer `layer` (0-based), 0.0 if none."""
        for placement in self.dropout:
            if placement.layer == layer + 1:
                return placement.p
        return 0.0


class OptimConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    lr0: float = Field(gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)


class ScheduleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    milestones: List[int] = Field(default_factory=list)
    gamma: float = Field(default=0.1, gt=0.0, lt=1.0)

    @field_validator("milestones")
    @classmethod
    def valid_milestones(cls, v: List[int]) -> List[int]:
        return check_milestones(v)


class RunConfig(BaseModel):
    """One experiment: architecture, optimizer, schedule, data and outputs."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = "run"
    kind: ModelKind
    mode: TrainingMode = "discriminative"
    layer_widths: List[int]
    dropout: List[DropoutPlacement] = Field(default_factory=list)

    lr0: float = Field(gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    milestones: List[int] = Field(default_factory=lambda: [20, 45, 60])
    gamma: float = Field(default=0.1, gt=0.0, lt=1.0)
    clip_norm: Optional[float] = Field(default=None, gt=0.0)

    epochs: int = Field(default=100, ge=0)
    batch_size: Optional[int] = Field(default=None, ge=1)
    seed: int = 0

    dataset: DatasetName
    iris_path: Optional[str] = None
    mnist_dir: Optional[str] = None
    train_subset: Optional[int] = Field(default=None, ge=1)
    test_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    output_dir: Optional[str] = None

    @model_validator(mode="before")
    @classmethod
    def default_clip_norm(cls, data):
        # uGMM runs clip unless the config says otherwise; an explicit null disables it
        if isinstance(data, dict) and data.get("kind") == "ugmm" and "clip_norm" not in data:
            data = {**data, "clip_norm": UGMM_DEFAULT_CLIP_NORM}
        return data

    @field_validator("layer_widths")
    @classmethod
    def valid_widths(cls, v: List[int]) -> List[int]:
        return check_widths(v)

    @field_validator("milestones")
    @classmethod
    def valid_milestones(cls, v: List[int]) -> List[int]:
        return check_milestones(v)

    @model_validator(mode="after")
    def cross_field(self) -> "RunConfig":
        check_dropout(self.dropout, self.layer_widths)
        if self.dataset == "iris" and not self.iris_path:
            raise ValueError("iris_path is required when dataset is 'iris'")
        if self.dataset == "mnist" and not self.mnist_dir:
            raise ValueError("mnist_dir is required when dataset is 'mnist'")
        return self

    def network_spec(self) -> NetworkSpec:
        return NetworkSpec(
            kind=self.kind,
            layer_widths=self.layer_widths,
            dropout=self.dropout,
            mode=self.mode,
            seed=self.seed,
        )

    def optim_config(self) -> OptimConfig:
        return OptimConfig(lr0=self.lr0, beta1=self.beta1, beta2=self.beta2, eps=self.eps)

    def schedule_config(self) -> ScheduleConfig:
        return ScheduleConfig(milestones=self.milestones, gamma=self.gamma)

    @property
    def loss_name(self) -> str:
        return "NLL (Generative)" if self.mode == "generative" else "Cross-Entropy"


def format_validation_error(err: ValidationError) -> str:
    lines = []
    for item in err.errors():
        field = ".".join(str(p) for p in item.get("loc", ())) or "config"
        lines.append(f"{field}: {item.get('msg')}")
    return "; ".join(lines)


def load_run_config(path: str | Path) -> RunConfig:
    """
    Read and validate a RunConfig JSON file.

    Raises:
        ConfigError: unreadable file, malformed JSON, unknown key or invariant violation
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e

    try:
        return RunConfig.model_validate_json(text)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}: {format_validation_error(e)}") from e
