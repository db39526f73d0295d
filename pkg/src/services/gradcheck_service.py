"""
Central finite-difference audits of the analytic uGMM and network gradients.

An entry passes when its absolute error is within `atol` or its relative error
(against the larger magnitude of the two estimates) is within `rtol`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.config import settings
from src.models.params import DropoutSpec, NetworkParams, UgmmLayerParams
from src.models.run_config import DropoutPlacement, NetworkSpec
from src.services import network_service, ugmm_service
from src.utils.numkit import Rng

log = logging.getLogger(__name__)


@dataclass
class AuditResult:
    name: str
    instances: int = 0
    max_rel_error: float = 0.0
    max_abs_error: float = 0.0
    failures: int = 0

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def absorb(self, rel: float, abs_: float, failures: int) -> None:
        self.instances += 1
        self.max_rel_error = max(self.max_rel_error, rel)
        self.max_abs_error = max(self.max_abs_error, abs_)
        self.failures += failures


def central_difference(f: Callable[[], float], array: np.ndarray, step: float) -> np.ndarray:
    """d f / d array, perturbing `array` in place one entry at a time."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = f()
        flat[i] = orig - step
        f_minus = f()
        flat[i] = orig
        out[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def compare(analytic: np.ndarray, numeric: np.ndarray, rtol: float, atol: float) -> Tuple[float, float, int]:
    """
    Returns (max relative error over entries whose magnitude exceeds `atol`,
    max absolute error, number of failing entries).
    """
    abs_err = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.divide(abs_err, scale, out=np.zeros_like(abs_err), where=scale > 0)
    failing = (abs_err > atol) & (rel > rtol)
    measurable = scale > atol
    max_rel = float(rel[measurable].max()) if measurable.any() else 0.0
    return max_rel, float(abs_err.max(initial=0.0)), int(failing.sum())


def _random_ugmm_layer(n_in: int, n_out: int, rng: Rng) -> UgmmLayerParams:
    return UgmmLayerParams(
        mu=rng.normal((n_out, n_in)),
        log_sigma=rng.uniform((n_out, n_in), -0.5, 0.5),
        pi_logit=rng.normal((n_out, n_in)),
    )


def audit_layer(
    rng: Rng,
    batch: int,
    n_in: int,
    n_out: int,
    with_mask: bool,
    rtol: float,
    atol: float,
    step: float,
) -> Tuple[float, float, int]:
    params = _random_ugmm_layer(n_in, n_out, rng)
    X = rng.normal((batch, n_in))
    dA = rng.normal((batch, n_out))
    mask = ugmm_service.sample_mask(DropoutSpec(p=0.3), n_out, n_in, rng) if with_mask else None

    def objective() -> float:
        return float(np.sum(dA * ugmm_service.forward(params, X, mask)))

    A = ugmm_service.forward(params, X, mask)
    grad, dX = ugmm_service.backward(params, X, A, dA, mask)

    pairs = [(getattr(grad, name), central_difference(objective, getattr(params, name), step)) for name in params.TENSOR_NAMES]
    pairs.append((dX, central_difference(objective, X, step)))
    return _fold(pairs, rtol, atol)


def audit_network(
    rng: Rng,
    kind: str,
    widths: List[int],
    batch: int,
    with_dropout: bool,
    rtol: float,
    atol: float,
    step: float,
) -> Tuple[float, float, int]:
    dropout = [DropoutPlacement(layer=1, p=0.3)] if with_dropout and len(widths) > 2 else []
    spec = NetworkSpec(kind=kind, layer_widths=widths, dropout=dropout)
    params = network_service.init(spec, rng)
    if kind == "ugmm":
        params = NetworkParams([_random_ugmm_layer(layer.n_in, layer.n_out, rng) for layer in params.layers])
    X = rng.normal((batch, widths[0]))
    d_out = rng.normal((batch, widths[-1]))

    cache = network_service.net_forward(params, X, training=True, rng=rng, spec=spec)
    masks = cache.masks

    def objective() -> float:
        return float(np.sum(d_out * network_service.net_forward(params, X, masks=masks).logits))

    grads = network_service.net_backward(params, cache, d_out)
    pairs = [
        (g, central_difference(objective, p, step))
        for (_, p), (_, g) in zip(params.named_tensors(), grads.named_tensors())
    ]
    return _fold(pairs, rtol, atol)


def _fold(pairs, rtol: float, atol: float) -> Tuple[float, float, int]:
    max_rel, max_abs, failures = 0.0, 0.0, 0
    for analytic, numeric in pairs:
        rel, abs_, fails = compare(analytic, numeric, rtol, atol)
        max_rel, max_abs, failures = max(max_rel, rel), max(max_abs, abs_), failures + fails
    return max_rel, max_abs, failures


def run_audits(
    seed: int = 0,
    sizes: Optional[Tuple[int, int, int]] = None,
    instances: Optional[int] = None,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    step: Optional[float] = None,
) -> List[AuditResult]:
    """
    Layer audits (half with component masks) and whole-network audits for both
    kinds (half with dropout). `sizes` = (batch, inputs, neurons) pins every
    instance to one shape; otherwise shapes are drawn at random up to 4×4×5.
    """
    rtol = settings.gradcheck_rtol if rtol is None else rtol
    atol = settings.gradcheck_atol if atol is None else atol
    step = settings.gradcheck_step if step is None else step
    instances = settings.gradcheck_instances if instances is None else instances
    rng = Rng(seed)

    layer = AuditResult("ugmm layer")
    for i in range(instances):
        if sizes is not None:
            batch, n_in, n_out = sizes
        else:
            batch, n_in, n_out = 1 + int(rng.integers(4)), 1 + int(rng.integers(4)), 1 + int(rng.integers(5))
        layer.absorb(*audit_layer(rng, batch, n_in, n_out, i % 2 == 1, rtol, atol, step))

    results = [layer]
    n_net = max(1, instances // 5)
    for kind in ("ugmm", "ffnn"):
        net = AuditResult(f"{kind} network")
        for i in range(n_net):
            if sizes is not None:
                batch, n_in, n_out = sizes
                widths = [n_in, n_out, max(n_out, 2)]
            else:
                batch = 1 + int(rng.integers(3))
                widths = [1 + int(rng.integers(5)), 1 + int(rng.integers(4)), 2 + int(rng.integers(2))]
            net.absorb(*audit_network(rng, kind, widths, batch, i % 2 == 1, rtol, atol, step))
        results.append(net)

    for result in results:
        log.info(
            f"{result.name}: {result.instances} instances, max rel err {result.max_rel_error:.3e}, "
            f"max abs err {result.max_abs_error:.3e}, failures {result.failures}"
        )
    return results
