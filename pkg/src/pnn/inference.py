"""Forward evaluation of trained 0-1 networks and weight extraction from solver output."""
from __future__ import annotations

from typing import List, Tuple

import numpy as np

from .core import Architecture, NetworkWeights
from .mip.model import MipModel
from .mip.solver import SolveResult

BOUND_TOL = 1e-6


def _read(result: SolveResult, model: MipModel, name: str) -> float:
    if not model.has_var(name):
        raise KeyError(f"model has no variable {name!r}")
    return float(result.incumbent[model.var(name).id])


def _clamp(value: float, lo: float, hi: float, name: str) -> float:
    if value < lo - BOUND_TOL or value > hi + BOUND_TOL:
        raise ValueError(f"{name} = {value!r} outside [{lo}, {hi}]")
    return min(max(value, lo), hi)


def extract_weights(
    model: MipModel,
    result: SolveResult,
    arch: Architecture,
    alpha_bounds=(-1.0, 1.0),
    beta_bounds=(-1.0, 1.0),
) -> NetworkWeights:
    """Read ``alpha``/``beta`` values out of a solution.

    Values within 1e-6 of the box are clamped onto it; anything further out is
    an error.
    """
    if result.incumbent is None:
        raise ValueError(f"no incumbent to extract (status {result.status.value})")
    alo, ahi = alpha_bounds
    blo, bhi = beta_bounds
    alphas = []
    for layer, (src, dst) in enumerate(arch.weight_shapes()):
        A = np.empty((src, dst))
        for a in range(src):
            for b in range(dst):
                nm = f"alpha_{a}_{b}_{layer}"
                A[a, b] = _clamp(_read(result, model, nm), alo, ahi, nm)
        alphas.append(A)
    biases = []
    for layer, units in enumerate(arch.bias_shapes()):
        B = np.empty(units)
        for b in range(units):
            nm = f"beta_{b}_{layer}"
            B[b] = _clamp(_read(result, model, nm), blo, bhi, nm)
        biases.append(B)
    return NetworkWeights(alphas[0], tuple(alphas[1:-1]), alphas[-1], tuple(biases), alpha_bounds, beta_bounds)


def pre_activations(weights: NetworkWeights, X) -> Tuple[List[np.ndarray], np.ndarray]:
    """Per-layer pre-activations and hidden activations for a batch ``X``.

    Returns ``(pre, hidden)`` where ``pre[l]`` has shape ``(n, units)`` for
    every layer including the output, and ``hidden[l]`` the 0/1 activations
    of hidden layer ``l``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != weights.input_alpha.shape[0]:
        raise ValueError(f"input has {X.shape[1]} features, network expects {weights.input_alpha.shape[0]}")
    pre = []
    hidden = []
    h = X
    for A, B in zip(weights.alphas[:-1], weights.biases[:-1]):
        p = h @ A + B
        pre.append(p)
        h = (p >= 0).astype(float)
        hidden.append(h)
    pre.append(h @ weights.output_alpha + weights.biases[-1])
    return pre, hidden


def forward(weights: NetworkWeights, x) -> Tuple[List[np.ndarray], np.ndarray]:
    """Hidden 0/1 activations per layer and raw output scores.

    ``x`` may be a single vector or a batch; the output keeps the input's
    dimensionality.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pre, hidden = pre_activations(weights, x)
    if single:
        return [h[0] for h in hidden], pre[-1][0]
    return hidden, pre[-1]


def prescribe(weights: NetworkWeights, x):
    """Treatment with the largest output score; ties go to the lowest id."""
    _, scores = forward(weights, x)
    # np.argmax returns the first maximum
    t = np.argmax(scores, axis=-1)
    return int(t) if np.ndim(t) == 0 else t


def softmax(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def predict(weights: NetworkWeights, x):
    """Class id and soft-max probabilities."""
    _, scores = forward(weights, x)
    probs = softmax(scores)
    c = np.argmax(scores, axis=-1)
    return (int(c) if np.ndim(c) == 0 else c), probs


def resolve_boundary(weights: NetworkWeights, epsilon: float) -> NetworkWeights:
    """Shift every hidden bias down by ``epsilon / 2``.

    Training only forces ``pre <= 0`` for inactive units, while the forward
    pass maps ``pre == 0`` to 1. After the shift, units the solver switched on
    have ``pre >= epsilon / 2`` and units it switched off have
    ``pre <= -epsilon / 2``, so forward evaluation on the training data agrees
    with the solver. The formulation reserves this room in the bias bounds.
    """
    lo = weights.beta_bounds[0]
    biases = [np.maximum(b - epsilon / 2, lo) for b in weights.biases[:-1]] + [weights.biases[-1]]
    return NetworkWeights(
        weights.input_alpha,
        weights.hidden_alpha,
        weights.output_alpha,
        tuple(biases),
        weights.alpha_bounds,
        weights.beta_bounds,
    )
