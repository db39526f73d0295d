"""
Losses, Adam, the multi-step learning-rate schedule and the epoch loop.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.errors import NumericalError, ShapeError
from src.models.params import AdamState, EpochRecord, NetworkParams, TrainReport, UgmmLayerParams
from src.models.run_config import NetworkSpec, OptimConfig, ScheduleConfig
from src.services import network_service, ugmm_service
from src.services.dataset_service import Dataset, batches
from src.utils.numkit import Matrix, Rng, as_matrix, logsumexp, softmax, trapezoid

log = logging.getLogger(__name__)

EVAL_BATCH_ROWS = 512


def _check_labels(outputs: Matrix, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (outputs.shape[0],):
        raise ShapeError(f"expected {outputs.shape[0]} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= outputs.shape[1]):
        raise ValueError(f"labels must lie in [0, {outputs.shape[1]})")
    return labels


def cross_entropy(outputs, labels) -> Tuple[float, Matrix]:
    """Mean softmax cross-entropy over root activations and its gradient."""
    outputs = as_matrix(outputs, "outputs")
    labels = _check_labels(outputs, labels)
    batch = outputs.shape[0]
    rows = np.arange(batch)

    loss = float(np.mean(logsumexp(outputs, axis=1) - outputs[rows, labels]))
    d_out = softmax(outputs, axis=1)
    d_out[rows, labels] -= 1.0
    return loss, d_out / batch


def generative_nll(outputs, labels) -> Tuple[float, Matrix]:
    """
    Negative joint log-likelihood: root c is log P(y=c, x), so only the
    true-class root is pushed up. No normalization across roots.
    """
    outputs = as_matrix(outputs, "outputs")
    labels = _check_labels(outputs, labels)
    batch = outputs.shape[0]
    rows = np.arange(batch)

    loss = float(-np.mean(outputs[rows, labels]))
    d_out = np.zeros_like(outputs)
    d_out[rows, labels] = -1.0 / batch
    return loss, d_out


LOSSES = {"discriminative": cross_entropy, "generative": generative_nll}


def lr_at_epoch(sched: ScheduleConfig, lr0: float, epoch: int) -> float:
    """lr0 multiplied by gamma once for every milestone <= epoch."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    lr = lr0
    for milestone in sched.milestones:
        if milestone <= epoch:
            lr *= sched.gamma
    return lr


def clip_grad_norm(grads: NetworkParams, max_norm: Optional[float]) -> Tuple[NetworkParams, float]:
    """Scale all gradients together so their global L2 norm is at most max_norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for _, g in grads.named_tensors()))
    if max_norm is None or total <= max_norm or total == 0.0:
        return grads, total
    scale = max_norm / total
    for _, g in grads.named_tensors():
        g *= scale
    return grads, total


def adam_step(
    params: NetworkParams,
    grads: NetworkParams,
    state: AdamState,
    cfg: OptimConfig,
    lr: float,
) -> Tuple[NetworkParams, AdamState]:
    """
    One bias-corrected Adam update, applied in place; uGMM log_sigma is clamped
    afterwards. Returns the (same) params and state objects.
    """
    if grads.widths != params.widths or state.m.widths != params.widths:
        raise ShapeError("gradients / optimizer state do not match the parameters")

    state.t += 1
    bias1 = 1.0 - cfg.beta1 ** state.t
    bias2 = 1.0 - cfg.beta2 ** state.t
    for layer, g_layer, m_layer, v_layer in zip(params.layers, grads.layers, state.m.layers, state.v.layers):
        for name in layer.TENSOR_NAMES:
            p, g = getattr(layer, name), getattr(g_layer, name)
            m, v = getattr(m_layer, name), getattr(v_layer, name)
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p -= lr * (m / bias1) / (np.sqrt(v / bias2) + cfg.eps)
        if isinstance(layer, UgmmLayerParams):
            ugmm_service.clamp_log_sigma(layer)
    return params, state


def evaluate(params: NetworkParams, X, y, mode: str = "discriminative") -> float:
    """Fraction of rows whose predicted class matches y."""
    X = as_matrix(X, "features")
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        return 0.0
    correct = 0
    for start in range(0, X.shape[0], EVAL_BATCH_ROWS):
        stop = start + EVAL_BATCH_ROWS
        logits = network_service.net_forward(params, X[start:stop], training=False).logits
        correct += int(np.sum(network_service.predict(logits, mode) == y[start:stop]))
    return correct / X.shape[0]


@dataclass
class TrainResult:
    params: NetworkParams
    report: TrainReport
    state: AdamState
    epochs_done: int = 0


def train_run(
    spec: NetworkSpec,
    train: Dataset,
    test: Dataset,
    optim: OptimConfig,
    sched: ScheduleConfig,
    epochs: int,
    batch_size: Optional[int],
    rng: Rng,
    clip_norm: Optional[float] = None,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> TrainResult:
    """
    Train from a fresh initialization.

    The run rng is consumed in this order: parameter init, then per epoch one
    shuffle permutation followed by the dropout masks of each minibatch.
    batch_size None means full batch.
    """
    params = network_service.init(spec, rng)
    state = AdamState.for_params(params)
    report = TrainReport()
    loss_fn = LOSSES[spec.mode]
    size = batch_size or train.n_samples

    for epoch in range(epochs):
        lr = lr_at_epoch(sched, optim.lr0, epoch)
        losses: List[float] = []
        weights: List[int] = []
        for X_batch, y_batch in batches(train, size, shuffle=True, rng=rng):
            cache = network_service.net_forward(params, X_batch, training=True, rng=rng, spec=spec)
            loss, d_out = loss_fn(cache.logits, y_batch)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch}")
            grads = network_service.net_backward(params, cache, d_out)
            grads, _ = clip_grad_norm(grads, clip_norm)
            adam_step(params, grads, state, optim, lr)
            losses.append(loss)
            weights.append(len(y_batch))

        train_loss = float(np.average(losses, weights=weights)) if losses else float("nan")
        accuracy = evaluate(params, test.X, test.y, spec.mode)
        record = EpochRecord(epoch=epoch, lr=lr, train_loss=train_loss, test_accuracy=accuracy)
        report.append(record)
        log.info(f"epoch {epoch:3d} | lr={lr:.1e} | loss={train_loss:.6f} | test_acc={accuracy:.4f}")
        if on_epoch is not None:
            on_epoch(record)

    return TrainResult(params=params, report=report, state=state, epochs_done=epochs)


def fit_univariate_density(
    samples,
    n_components: int,
    steps: int,
    lr: float,
    rng: Rng,
    optim: Optional[OptimConfig] = None,
) -> Tuple[UgmmLayerParams, List[float]]:
    """
    Fit one uGMM neuron to 1-D samples by maximizing mean log-likelihood.

    Every input of the neuron is tied to the sample value, so its activation is
    the mixture log-density log sum_k pi_k N(y; mu_k, sigma_k^2).
    Returns the fitted layer and the per-step mean log-likelihood.
    """
    y = np.asarray(samples, dtype=np.float64).reshape(-1)
    X = np.repeat(y[:, None], n_components, axis=1)
    net = NetworkParams([ugmm_service.init_layer(n_components, 1, rng)])
    state = AdamState.for_params(net)
    cfg = optim or OptimConfig(lr0=lr)
    d_a = np.full((y.size, 1), -1.0 / y.size)

    trace = []
    for _ in range(steps):
        layer = net.layers[0]
        a = ugmm_service.forward(layer, X)
        trace.append(float(a.mean()))
        grad, _ = ugmm_service.backward(layer, X, a, d_a)
        adam_step(net, NetworkParams([grad]), state, cfg, lr)
    return net.layers[0], trace


def mean_log_likelihood(layer: UgmmLayerParams, samples) -> float:
    y = np.asarray(samples, dtype=np.float64).reshape(-1)
    X = np.repeat(y[:, None], layer.n_in, axis=1)
    return float(ugmm_service.forward(layer, X).mean())


def expected_log_likelihood(logpdf: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, points: int = 200_001) -> float:
    """E_p[log p] = integral of p(y) log p(y) dy over [lo, hi], trapezoidal rule."""
    grid = np.linspace(lo, hi, points)
    lp = logpdf(grid)
    return trapezoid(np.exp(lp) * lp, grid)
