"""
Feedforward assembly of uGMM or dense (FFNN baseline) layers.

uGMM networks feed each layer the previous layer's log-density activations.
The baseline applies affine + ReLU on hidden layers and affine only at the
output, with inverted unit dropout on configured hidden layers.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from src.errors import ShapeError
from src.models.params import ComponentMask, DenseLayerParams, DropoutSpec, NetworkParams
from src.models.run_config import NetworkSpec
from src.services import ugmm_service
from src.utils.numkit import Matrix, Rng, as_matrix, matmul, relu

log = logging.getLogger(__name__)

LayerMask = Union[ComponentMask, np.ndarray]


@dataclass
class ForwardCache:
    """
    Everything net_backward needs: per-layer inputs and outputs, dense
    pre-activations, and the dropout masks that were applied.

    For uGMM layers `masks[i]` is a ComponentMask or None; for dense layers it
    is the inverted-dropout scale (0 or 1/(1-p) per unit) or None. Training
    passes also keep each uGMM layer's B×M×N responsibilities.
    """

    inputs: List[Matrix] = field(default_factory=list)
    outputs: List[Matrix] = field(default_factory=list)
    pre_activations: List[Optional[Matrix]] = field(default_factory=list)
    masks: List[Optional[LayerMask]] = field(default_factory=list)
    responsibilities: List[Optional[np.ndarray]] = field(default_factory=list)

    @property
    def logits(self) -> Matrix:
        return self.outputs[-1]


def init(spec: NetworkSpec, rng: Rng) -> NetworkParams:
    widths = spec.layer_widths
    layers = []
    for n_in, n_out in zip(widths, widths[1:]):
        if spec.kind == "ugmm":
            layers.append(ugmm_service.init_layer(n_in, n_out, rng))
        else:
            bound = math.sqrt(6.0 / (n_in + n_out))
            layers.append(DenseLayerParams(W=rng.uniform((n_out, n_in), -bound, bound), b=np.zeros(n_out)))
    params = NetworkParams(layers)
    log.info(f"Initialized {spec.kind} network {widths}")
    return params


def check_compatible(params: NetworkParams, spec: NetworkSpec) -> None:
    if params.kind != spec.kind or params.widths != list(spec.layer_widths):
        raise ShapeError(
            f"parameters ({params.kind}, widths {params.widths}) do not match spec "
            f"({spec.kind}, widths {list(spec.layer_widths)})"
        )


def _sample_dense_scale(p: float, n_rows: int, n_units: int, rng: Rng) -> np.ndarray:
    kept = rng.uniform((n_rows, n_units)) >= p
    return kept / (1.0 - p)


def net_forward(
    params: NetworkParams,
    X,
    training: bool = False,
    rng: Optional[Rng] = None,
    spec: Optional[NetworkSpec] = None,
    masks: Optional[List[Optional[LayerMask]]] = None,
) -> ForwardCache:
    """
    Run the network on a B×D batch.

    Masks are sampled from `rng` only when `training` is set and `spec` places
    dropout on a layer; passing `masks` replays a previous pass instead.
    Inference (training=False, no masks) never reads `rng`.
    """
    X = as_matrix(X, "network input")
    if X.shape[1] != params.layers[0].n_in:
        raise ShapeError(f"network expects {params.layers[0].n_in} features, got {X.shape[1]}")
    if masks is not None and len(masks) != len(params.layers):
        raise ShapeError(f"expected {len(params.layers)} masks, got {len(masks)}")

    cache = ForwardCache()
    h = X
    last = len(params.layers) - 1
    for i, layer in enumerate(params.layers):
        mask = None
        if masks is not None:
            mask = masks[i]
        elif training and spec is not None and spec.dropout_for_layer(i) > 0.0:
            if rng is None:
                raise ValueError("training with dropout needs an rng")
            p = spec.dropout_for_layer(i)
            if layer.kind == "ugmm":
                mask = ugmm_service.sample_mask(DropoutSpec(p=p, training=True), layer.n_out, layer.n_in, rng)
            else:
                mask = _sample_dense_scale(p, h.shape[0], layer.n_out, rng)

        cache.inputs.append(h)
        if layer.kind == "ugmm":
            if training:
                out, resp = ugmm_service.forward_with_responsibilities(layer, h, mask)
            else:
                out, resp = ugmm_service.forward(layer, h, mask), None
            cache.pre_activations.append(None)
            cache.responsibilities.append(resp)
        else:
            z = matmul(h, layer.W.T) + layer.b
            cache.pre_activations.append(z)
            cache.responsibilities.append(None)
            out = z if i == last else relu(z)
            if mask is not None:
                out = out * mask
        cache.outputs.append(out)
        cache.masks.append(mask)
        h = out
    return cache


def net_backward(params: NetworkParams, cache: ForwardCache, dOut) -> NetworkParams:
    """Reverse sweep; returns a NetworkParams of gradients."""
    dOut = as_matrix(dOut, "output gradient")
    if len(cache.outputs) != len(params.layers) or dOut.shape != cache.logits.shape:
        raise ShapeError("forward cache does not match these parameters or this output gradient")

    grads = []
    last = len(params.layers) - 1
    g = dOut
    for i in range(last, -1, -1):
        layer = params.layers[i]
        mask = cache.masks[i]
        if layer.kind == "ugmm":
            resp = cache.responsibilities[i] if cache.responsibilities else None
            grad, g = ugmm_service.backward(
                layer, cache.inputs[i], cache.outputs[i], g, mask, resp=resp, need_input_grad=i > 0
            )
        else:
            if mask is not None:
                g = g * mask
            if i != last:
                g = g * (cache.pre_activations[i] > 0.0)
            grad = DenseLayerParams(W=matmul(g.T, cache.inputs[i]), b=g.sum(axis=0))
            g = matmul(g, layer.W)
        grads.append(grad)
    grads.reverse()
    return NetworkParams(grads)


def predict(outputs, mode: str = "discriminative") -> np.ndarray:
    """
    Class labels from root activations.

    Discriminative: argmax of softmax, equal to argmax of the raw outputs.
    Generative: argmax_c log P(y=c, x), which is also the posterior argmax since
    the evidence term is shared. Ties go to the lowest class index.
    """
    outputs = as_matrix(outputs, "outputs")
    if outputs.shape[1] < 2:
        raise ShapeError("prediction needs at least two classes")
    return np.argmax(outputs, axis=1)
