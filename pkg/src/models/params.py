"""
Parameter and state containers.

Gradients reuse the parameter classes: a gradient of a layer is a layer-shaped
container holding derivatives instead of values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar, Dict, List, Tuple, Union

import numpy as np
import pandas as pd

from src.errors import FullyDroppedError, ShapeError


@dataclass
class UgmmLayerParams:
    """
    One uGMM layer of M neurons over N inputs.

    Row j of each matrix holds the N components of neuron j: means, log standard
    deviations (variance = exp(2 * log_sigma)) and unconstrained mixing logits
    (pi = softmax of the row).
    """

    mu: np.ndarray
    log_sigma: np.ndarray
    pi_logit: np.ndarray

    kind: ClassVar[str] = "ugmm"
    TENSOR_NAMES: ClassVar[Tuple[str, ...]] = ("mu", "log_sigma", "pi_logit")

    def __post_init__(self) -> None:
        shape = np.shape(self.mu)
        if len(shape) != 2 or np.shape(self.log_sigma) != shape or np.shape(self.pi_logit) != shape:
            raise ShapeError(
                f"uGMM tensors must share one M×N shape, got {np.shape(self.mu)}, "
                f"{np.shape(self.log_sigma)}, {np.shape(self.pi_logit)}"
            )

    @property
    def n_out(self) -> int:
        return self.mu.shape[0]

    @property
    def n_in(self) -> int:
        return self.mu.shape[1]

    def tensors(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.TENSOR_NAMES}

    def copy(self) -> "UgmmLayerParams":
        return UgmmLayerParams(self.mu.copy(), self.log_sigma.copy(), self.pi_logit.copy())

    @classmethod
    def zeros(cls, n_in: int, n_out: int) -> "UgmmLayerParams":
        return cls(np.zeros((n_out, n_in)), np.zeros((n_out, n_in)), np.zeros((n_out, n_in)))


@dataclass
class DenseLayerParams:
    """Affine baseline layer, y = x W^T + b with W of shape out×in."""

    W: np.ndarray
    b: np.ndarray

    kind: ClassVar[str] = "ffnn"
    TENSOR_NAMES: ClassVar[Tuple[str, ...]] = ("W", "b")

    def __post_init__(self) -> None:
        if np.ndim(self.W) != 2 or np.shape(self.b) != (np.shape(self.W)[0],):
            raise ShapeError(f"dense layer expects W out×in and b of length out, got {np.shape(self.W)}, {np.shape(self.b)}")

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    def tensors(self) -> Dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}

    def copy(self) -> "DenseLayerParams":
        return DenseLayerParams(self.W.copy(), self.b.copy())

    @classmethod
    def zeros(cls, n_in: int, n_out: int) -> "DenseLayerParams":
        return cls(np.zeros((n_out, n_in)), np.zeros(n_out))


LayerParams = Union[UgmmLayerParams, DenseLayerParams]


def layer_from_tensors(kind: str, tensors: Dict[str, np.ndarray]) -> LayerParams:
    if kind == "ugmm":
        return UgmmLayerParams(**{name: tensors[name] for name in UgmmLayerParams.TENSOR_NAMES})
    if kind == "ffnn":
        return DenseLayerParams(**{name: tensors[name] for name in DenseLayerParams.TENSOR_NAMES})
    raise ValueError(f"Unknown layer kind: {kind}")


@dataclass
class NetworkParams:
    layers: List[LayerParams]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ShapeError("a network needs at least one layer")
        kinds = {layer.kind for layer in self.layers}
        if len(kinds) != 1:
            raise ShapeError(f"layers mix kinds {sorted(kinds)}")
        for i, (prev, nxt) in enumerate(zip(self.layers, self.layers[1:])):
            if nxt.n_in != prev.n_out:
                raise ShapeError(f"layer {i + 1} expects {nxt.n_in} inputs but layer {i} emits {prev.n_out}")

    @property
    def kind(self) -> str:
        return self.layers[0].kind

    @property
    def widths(self) -> List[int]:
        return [self.layers[0].n_in] + [layer.n_out for layer in self.layers]

    def copy(self) -> "NetworkParams":
        return NetworkParams([layer.copy() for layer in self.layers])

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams([type(layer).zeros(layer.n_in, layer.n_out) for layer in self.layers])

    def named_tensors(self) -> List[Tuple[str, np.ndarray]]:
        """Tensors in declaration order: layer by layer, then by TENSOR_NAMES."""
        out = []
        for i, layer in enumerate(self.layers):
            for name, value in layer.tensors().items():
                out.append((f"layers.{i}.{name}", value))
        return out


@dataclass(frozen=True)
class DropoutSpec:
    p: float
    training: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"dropout probability must lie in [0, 1), got {self.p}")


@dataclass(frozen=True)
class ComponentMask:
    """Kept (True) / dropped (False) components, M×N; no row may be all dropped."""

    keep: np.ndarray

    def __post_init__(self) -> None:
        if np.ndim(self.keep) != 2:
            raise ShapeError(f"component mask must be 2-D, got shape {np.shape(self.keep)}")
        if not np.all(np.any(self.keep, axis=1)):
            raise FullyDroppedError("component mask drops every component of at least one neuron")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.keep.shape


@dataclass
class AdamState:
    m: NetworkParams
    v: NetworkParams
    t: int = 0

    @classmethod
    def for_params(cls, params: NetworkParams) -> "AdamState":
        return cls(m=params.zeros_like(), v=params.zeros_like(), t=0)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    test_accuracy: float


@dataclass
class TrainReport:
    records: List[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    @property
    def final_accuracy(self) -> float | None:
        return self.records[-1].test_accuracy if self.records else None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.epoch, r.lr, r.train_loss, r.test_accuracy) for r in self.records],
            columns=["epoch", "lr", "train_loss", "test_accuracy"],
        )
