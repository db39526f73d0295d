"""
uGMM layer: each neuron j outputs the log-density of a univariate Gaussian
mixture whose k-th component is evaluated at the k-th input,

    a_j = log sum_k pi_{j,k} N(x_k; mu_{j,k}, sigma_{j,k}^2)

Dropped components are excluded inside the logsumexp (a -inf contribution);
surviving mixing weights are not renormalized.
"""
from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np

from src.config import settings
from src.errors import ShapeError
from src.models.params import ComponentMask, DropoutSpec, UgmmLayerParams
from src.utils.numkit import LOG_2PI, Matrix, Rng, as_matrix, logsumexp

log = logging.getLogger(__name__)

LOG_SIGMA_MIN = -10.0
LOG_SIGMA_MAX = 10.0


def init_layer(n_in: int, n_out: int, rng: Rng) -> UgmmLayerParams:
    """mu ~ N(0, 1), unit variances, uniform mixing weights."""
    mu = rng.normal((n_out, n_in))
    return UgmmLayerParams(mu=mu, log_sigma=np.zeros((n_out, n_in)), pi_logit=np.zeros((n_out, n_in)))


def log_mixing_weights(params: UgmmLayerParams) -> Matrix:
    """log pi, row-normalized over each neuron's components."""
    return params.pi_logit - logsumexp(params.pi_logit, axis=1)[:, None]


def clamp_log_sigma(params: UgmmLayerParams) -> None:
    np.clip(params.log_sigma, LOG_SIGMA_MIN, LOG_SIGMA_MAX, out=params.log_sigma)


def _check_inputs(params: UgmmLayerParams, X, mask: Optional[ComponentMask]) -> Matrix:
    X = as_matrix(X, "uGMM input")
    if X.shape[1] != params.n_in:
        raise ShapeError(f"uGMM layer expects {params.n_in} inputs per row, got {X.shape[1]}")
    if mask is not None and mask.shape != (params.n_out, params.n_in):
        raise ShapeError(f"component mask shape {mask.shape} does not match layer {(params.n_out, params.n_in)}")
    return X


def _component_log_terms(params: UgmmLayerParams, log_pi: Matrix, X: Matrix) -> np.ndarray:
    """ln pi_{j,k} + ln N(x_{b,k}; mu_{j,k}, sigma_{j,k}^2), shape B×M×N."""
    inv_sigma = np.exp(-params.log_sigma)
    terms = X[:, None, :] - params.mu[None, :, :]
    terms *= inv_sigma[None, :, :]
    np.square(terms, out=terms)
    terms *= -0.5
    terms += (log_pi - params.log_sigma - 0.5 * LOG_2PI)[None, :, :]
    return terms


def _mixture_block(params, log_pi, X, keep, want_resp: bool):
    """Activations of one row block and, on request, the normalized responsibilities."""
    terms = _component_log_terms(params, log_pi, X)
    if keep is not None:
        np.copyto(terms, -np.inf, where=~keep)
    peak = terms.max(axis=2, keepdims=True)
    terms -= peak
    np.exp(terms, out=terms)
    total = terms.sum(axis=2, keepdims=True)
    A = (np.log(total) + peak)[:, :, 0]
    if not want_resp:
        return A, None
    terms /= total
    return A, terms


def _row_chunks(n_rows: int, per_row: int):
    step = max(1, settings.chunk_elements // max(per_row, 1))
    for start in range(0, n_rows, step):
        yield slice(start, min(start + step, n_rows))


def _run_forward(params: UgmmLayerParams, X, mask: Optional[ComponentMask], want_resp: bool):
    X = _check_inputs(params, X, mask)
    log_pi = log_mixing_weights(params)
    keep = None if mask is None else mask.keep[None, :, :]

    out = np.empty((X.shape[0], params.n_out))
    resp = np.empty((X.shape[0], params.n_out, params.n_in)) if want_resp else None
    for rows in _row_chunks(X.shape[0], params.n_out * params.n_in):
        out[rows], block = _mixture_block(params, log_pi, X[rows], keep, want_resp)
        if resp is not None:
            resp[rows] = block
    return out, resp


def forward(params: UgmmLayerParams, X, mask: Optional[ComponentMask] = None) -> Matrix:
    """Layer activations, B×M."""
    return _run_forward(params, X, mask, want_resp=False)[0]


def forward_with_responsibilities(
    params: UgmmLayerParams, X, mask: Optional[ComponentMask] = None
) -> Tuple[Matrix, np.ndarray]:
    """Activations plus the B×M×N responsibilities that backward would otherwise recompute."""
    return _run_forward(params, X, mask, want_resp=True)


def responsibilities(params: UgmmLayerParams, x, mask: Optional[ComponentMask] = None) -> Matrix:
    """Posterior weight of each component for one input vector, M×N; rows sum to 1."""
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if X.ndim != 2 or X.shape[0] != 1:
        raise ShapeError(f"responsibilities takes a single input vector, got shape {np.shape(x)}")
    return forward_with_responsibilities(params, X, mask)[1][0]


def backward(
    params: UgmmLayerParams,
    X,
    A,
    dA,
    mask: Optional[ComponentMask] = None,
    resp: Optional[np.ndarray] = None,
    need_input_grad: bool = True,
) -> Tuple[UgmmLayerParams, Optional[Matrix]]:
    """
    Gradients of sum_{b,j} dA[b,j] * a[b,j].

    Returns the parameter gradient (a UgmmLayerParams holding dMu, dLogSigma,
    dPiLogit) and dX (B×N), or None for dX when `need_input_grad` is off.
    `resp` takes the responsibilities cached by forward_with_responsibilities;
    without it they are recomputed from X and A. Rows are reduced chunk by
    chunk in a fixed order.
    """
    X = _check_inputs(params, X, mask)
    A = as_matrix(A, "activations")
    dA = as_matrix(dA, "activation gradient")
    expected = (X.shape[0], params.n_out)
    if A.shape != expected or dA.shape != expected:
        raise ShapeError(f"activations and their gradient must be {expected}, got {A.shape} and {dA.shape}")
    if resp is not None and resp.shape != expected + (params.n_in,):
        raise ShapeError(f"responsibilities must be {expected + (params.n_in,)}, got {resp.shape}")

    log_pi = log_mixing_weights(params)
    pi = np.exp(log_pi)
    inv_sigma = np.exp(-params.log_sigma)
    keep = None if mask is None else mask.keep[None, :, :]

    grad = UgmmLayerParams.zeros(params.n_in, params.n_out)
    dX = np.empty_like(X) if need_input_grad else None
    for rows in _row_chunks(X.shape[0], params.n_out * params.n_in):
        Xc = X[rows]
        if resp is not None:
            r = resp[rows]
        else:
            r = _component_log_terms(params, log_pi, Xc)
            r -= A[rows][:, :, None]
            np.exp(r, out=r)
            if keep is not None:
                np.copyto(r, 0.0, where=~keep)
        z = Xc[:, None, :] - params.mu[None, :, :]
        z *= inv_sigma[None, :, :]
        w = dA[rows][:, :, None] * r
        wz = w * z

        grad.mu += wz.sum(axis=0) * inv_sigma
        wz *= z
        grad.log_sigma += wz.sum(axis=0)
        w_sum = w.sum(axis=0)
        grad.log_sigma -= w_sum
        # sum over kept k of r is 1, so d a_j / d logit_{j,k} = r_{j,k} - pi_{j,k}
        grad.pi_logit += w_sum - dA[rows].sum(axis=0)[:, None] * pi
        if dX is not None:
            w *= z
            w *= inv_sigma[None, :, :]
            dX[rows] = -w.sum(axis=1)
    return grad, dX


def sample_mask(spec: DropoutSpec, n_out: int, n_in: int, rng: Rng) -> ComponentMask:
    """
    Keep each component with probability 1 - p. A neuron that loses every
    component gets one uniformly chosen component back.
    """
    if not spec.training:
        raise ValueError("component masks are only sampled in training mode")
    keep = rng.uniform((n_out, n_in)) >= spec.p
    empty_rows = np.flatnonzero(~keep.any(axis=1))
    if empty_rows.size:
        log.warning(f"Repairing {empty_rows.size} fully dropped neuron(s)")
        keep[empty_rows, rng.integers(n_in, size=empty_rows.size)] = True
    return ComponentMask(keep=keep)


def _check_neuron(params: UgmmLayerParams, neuron: int) -> None:
    if not 0 <= neuron < params.n_out:
        raise IndexError(f"neuron {neuron} out of range for a layer of {params.n_out} neurons")


def component_densities(params: UgmmLayerParams, neuron: int, grid) -> Matrix:
    """pi_k * N(y; mu_k, sigma_k^2) for every grid point y and component k, G×N."""
    _check_neuron(params, neuron)
    y = np.asarray(grid, dtype=np.float64).reshape(-1, 1)
    log_pi = log_mixing_weights(params)[neuron]
    sigma = np.exp(params.log_sigma[neuron])
    z = (y - params.mu[neuron]) / sigma
    return np.exp(log_pi - np.log(sigma) - 0.5 * LOG_2PI - 0.5 * z * z)


def density_curve(params: UgmmLayerParams, neuron: int, grid) -> np.ndarray:
    """Mixture density P_j(y) of one neuron over a grid of y values."""
    return component_densities(params, neuron, grid).sum(axis=1)


def default_grid(params: UgmmLayerParams, neuron: int, points: int = 10_001, width: float = 8.0) -> np.ndarray:
    """Grid spanning [min mu - width*sigma_max, max mu + width*sigma_max]."""
    _check_neuron(params, neuron)
    sigma_max = float(np.exp(params.log_sigma[neuron]).max())
    lo = float(params.mu[neuron].min()) - width * sigma_max
    hi = float(params.mu[neuron].max()) + width * sigma_max
    return np.linspace(lo, hi, points)
