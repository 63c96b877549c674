"""Translate an architecture, a dataset and a loss into a :class:`MipModel`.

Variable names encode quantity and indices (sample ``i``, source unit, target
unit, layer ``l``):

``alpha_{src}_{dst}_{l}``, ``beta_{k}_{l}``, ``h_{i}_{k}_{l}``,
``z_{i}_{src}_{dst}_{l}``, ``omega_{i}``, ``r_{i}_{j}_{j2}``,
``u_{alpha-name}`` (l0 indicator) and ``a_{alpha-name}`` (l1 magnitude).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    DEFAULT_ALPHA_BOUNDS,
    DEFAULT_BETA_BOUNDS,
    Architecture,
    CounterfactualScores,
    Mode,
)
from .mip.model import Direction, MipModel, VarRef

DEFAULT_EPSILON = 1e-4
DEFAULT_INTEGRALITY_TOL = 1e-6


def _absmax(bounds) -> float:
    return max(abs(bounds[0]), abs(bounds[1]))


def compute_big_m(arch: Architecture, weight_bounds, feature_bounds, layer: int) -> float:
    """Upper bound on the magnitude of any pre-activation in ``layer``.

    ``weight_bounds`` is ``((alpha_lo, alpha_hi), (beta_lo, beta_hi))``.
    """
    if not 0 <= layer <= arch.hidden_layers:
        raise ValueError(f"layer {layer} outside [0, {arch.hidden_layers}]")
    alpha_b, beta_b = weight_bounds
    a, b = _absmax(alpha_b), _absmax(beta_b)
    if layer == 0:
        fb = np.asarray(feature_bounds, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(fb)):
            raise ValueError("feature bounds must be finite to derive big-M")
        return float(a * np.maximum(np.abs(fb[:, 0]), np.abs(fb[:, 1])).sum() + b)
    # earlier activations are 0/1
    return float(arch.width * a + b)


@dataclass(frozen=True)
class BigMConfig:
    epsilon: float
    layer_M: Tuple[float, ...]
    integrality_tol: float = DEFAULT_INTEGRALITY_TOL

    def __post_init__(self):
        object.__setattr__(self, "layer_M", tuple(float(m) for m in self.layer_M))
        if self.epsilon <= 0 or self.integrality_tol <= 0:
            raise ValueError("epsilon and integrality_tol must be positive")
        if self.epsilon <= 10 * self.integrality_tol * max(self.layer_M):
            raise ValueError(
                f"epsilon {self.epsilon:g} must exceed 10 * integrality_tol * max(M) = "
                f"{10 * self.integrality_tol * max(self.layer_M):g}"
            )

    @classmethod
    def derive(
        cls,
        arch: Architecture,
        feature_bounds,
        alpha_bounds=DEFAULT_ALPHA_BOUNDS,
        beta_bounds=DEFAULT_BETA_BOUNDS,
        epsilon: float = DEFAULT_EPSILON,
        integrality_tol: float = DEFAULT_INTEGRALITY_TOL,
    ) -> "BigMConfig":
        """Tightest per-layer M; epsilon is raised when M is too large for it."""
        wb = (alpha_bounds, beta_bounds)
        Ms = [compute_big_m(arch, wb, feature_bounds, l) for l in range(arch.hidden_layers + 1)]
        floor = 20 * integrality_tol * max(Ms)
        return cls(max(epsilon, floor), tuple(Ms), integrality_tol)


class LossKind(str, enum.Enum):
    DR = "dr"
    IPW = "ipw"
    DM = "dm"
    NLL = "nll"


@dataclass(frozen=True)
class LossSpec:
    kind: LossKind
    scores: Optional[CounterfactualScores] = None
    labels: Optional[np.ndarray] = None
    baseline_policy: Optional[np.ndarray] = None
    # observed treatments and outcomes, used by the IPW objective
    treatments: Optional[np.ndarray] = None
    outcomes: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if self.kind is LossKind.NLL:
            if self.labels is None or self.scores is not None:
                raise ValueError("NLL loss needs labels and no counterfactual scores")
        else:
            if self.scores is None or self.labels is not None:
                raise ValueError(f"{self.kind.value} loss needs counterfactual scores and no labels")
            if self.kind is LossKind.IPW and (self.treatments is None or self.outcomes is None):
                raise ValueError("IPW loss needs observed treatments and outcomes")
        if self.baseline_policy is not None and self.kind is LossKind.NLL:
            raise ValueError("baseline policy only applies to prescription losses")

    def coefficients(self) -> np.ndarray:
        """Per-sample, per-treatment value of assigning that treatment."""
        s = self.scores
        if self.kind is LossKind.DR:
            return np.asarray(s.psi_hat)
        if self.kind is LossKind.DM:
            return np.asarray(s.mu_hat)
        n, T = s.psi_hat.shape
        t = np.asarray(self.treatments, dtype=int)
        y = np.asarray(self.outcomes, dtype=float)
        out = np.zeros((n, T))
        out[np.arange(n), t] = y / s.propensity[np.arange(n), t]
        return out


class RegKind(str, enum.Enum):
    NONE = "none"
    L0 = "l0"
    L1 = "l1"


@dataclass(frozen=True)
class RegularizerSpec:
    kind: RegKind = RegKind.NONE
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", RegKind(self.kind))
        if self.lam < 0 or not math.isfinite(self.lam):
            raise ValueError("lambda must be a nonnegative finite number")
        if (self.lam == 0) != (self.kind is RegKind.NONE):
            raise ValueError("lambda is zero exactly when the regularizer kind is none")

    @classmethod
    def make(cls, kind, lam: float) -> "RegularizerSpec":
        """Like the constructor but maps ``lam == 0`` to no regularizer."""
        if lam == 0:
            return cls(RegKind.NONE, 0.0)
        return cls(RegKind(kind), lam)


@dataclass
class PNNFormulation:
    """A model under construction plus handles to every network variable."""

    model: MipModel
    arch: Architecture
    bigm: BigMConfig
    X: np.ndarray
    alpha_bounds: Tuple[float, float]
    beta_bounds: Tuple[float, float]
    alpha: List[np.ndarray] = field(default_factory=list)  # per layer, object arrays (src, dst)
    beta: List[np.ndarray] = field(default_factory=list)
    h: List[np.ndarray] = field(default_factory=list)  # per layer, (n, units)
    z: Dict[int, np.ndarray] = field(default_factory=dict)  # layer -> (n, src, dst)
    omega: Optional[np.ndarray] = None
    r: Dict[Tuple[int, int, int], VarRef] = field(default_factory=dict)
    reg_vars: List[VarRef] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def alpha_vars(self) -> List[VarRef]:
        return [v for a in self.alpha for v in a.ravel()]


def _z_big_m(f: PNNFormulation) -> float:
    # z = alpha * h_prev, so |z - alpha| and |z| never exceed max |alpha|
    return _absmax(f.alpha_bounds)


def new_formulation(
    X,
    arch: Architecture,
    bigm: BigMConfig,
    alpha_bounds=DEFAULT_ALPHA_BOUNDS,
    beta_bounds=DEFAULT_BETA_BOUNDS,
    name: str = "PNN",
) -> PNNFormulation:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != arch.input_dim:
        raise ValueError(f"data has {X.shape[1]} features, architecture expects {arch.input_dim}")
    if len(bigm.layer_M) != arch.hidden_layers + 1:
        raise ValueError("big-M config must hold one value per layer")
    return PNNFormulation(MipModel(name), arch, bigm, X, tuple(alpha_bounds), tuple(beta_bounds))


def _weights(f: PNNFormulation, src: int, dst: int, layer: int) -> Tuple[np.ndarray, np.ndarray]:
    m = f.model
    alo, ahi = f.alpha_bounds
    blo, bhi = f.beta_bounds
    if layer < f.arch.hidden_layers:
        # room for resolve_boundary to move hidden biases down by eps/2
        blo += f.bigm.epsilon / 2
    A = np.empty((src, dst), dtype=object)
    for a in range(src):
        for b in range(dst):
            A[a, b] = m.add_continuous(f"alpha_{a}_{b}_{layer}", alo, ahi)
    B = np.empty(dst, dtype=object)
    for b in range(dst):
        B[b] = m.add_continuous(f"beta_{b}_{layer}", blo, bhi)
    f.alpha.append(A)
    f.beta.append(B)
    return A, B


def _activation_constraints(f: PNNFormulation, pre_terms, h: VarRef, M: float, tag: str) -> None:
    """``pre <= M h`` and ``pre >= eps + (-M - eps)(1 - h)``."""
    eps = f.bigm.epsilon
    m = f.model
    m.add_constraint(list(pre_terms) + [(-M, h)], "L", 0.0, f"act_ub_{tag}")
    # pre - (M + eps) h >= -M
    m.add_constraint(list(pre_terms) + [(-(M + eps), h)], "G", -M, f"act_lb_{tag}")


def _product_constraints(f: PNNFormulation, z: VarRef, alpha: VarRef, h_prev: VarRef, tag: str) -> None:
    """Exact linearisation of ``z = alpha * h_prev`` for binary ``h_prev``."""
    m = f.model
    Mz = _z_big_m(f)
    # z <= alpha + M (1 - h)
    m.add_constraint([(1.0, z), (-1.0, alpha), (Mz, h_prev)], "L", Mz, f"zub_{tag}")
    # z >= alpha - M (1 - h)
    m.add_constraint([(1.0, z), (-1.0, alpha), (-Mz, h_prev)], "G", -Mz, f"zlb_{tag}")
    # -M h <= z <= M h
    m.add_constraint([(1.0, z), (-Mz, h_prev)], "L", 0.0, f"zon_{tag}")
    m.add_constraint([(1.0, z), (Mz, h_prev)], "G", 0.0, f"zoff_{tag}")


def build_input_layer(f: PNNFormulation) -> np.ndarray:
    """Binary units of the first hidden layer, driven directly by the features."""
    K = f.arch.width
    A, B = _weights(f, f.arch.input_dim, K, 0)
    M = f.bigm.layer_M[0]
    H = np.empty((f.n, K), dtype=object)
    for i in range(f.n):
        x = f.X[i]
        for k in range(K):
            H[i, k] = f.model.add_binary(f"h_{i}_{k}_0")
            pre = [(x[d], A[d, k]) for d in range(f.arch.input_dim) if x[d] != 0.0] + [(1.0, B[k])]
            _activation_constraints(f, pre, H[i, k], M, f"{i}_{k}_0")
    f.h.append(H)
    return H


def _linear_layer(f: PNNFormulation, layer: int, units: int):
    K = f.arch.width
    A, B = _weights(f, K, units, layer)
    Hprev = f.h[layer - 1]
    m = f.model
    Mz = _z_big_m(f)
    Z = np.empty((f.n, K, units), dtype=object)
    for i in range(f.n):
        for j in range(units):
            for kp in range(K):
                z = m.add_continuous(f"z_{i}_{kp}_{j}_{layer}", -Mz, Mz)
                Z[i, kp, j] = z
                _product_constraints(f, z, A[kp, j], Hprev[i, kp], f"{i}_{kp}_{j}_{layer}")
    f.z[layer] = Z
    return A, B, Z


def build_hidden_layers(f: PNNFormulation) -> List[np.ndarray]:
    """Binary layers 1..L-1, each fed by the previous layer through ``z`` products."""
    out = []
    K = f.arch.width
    for layer in range(1, f.arch.hidden_layers):
        _, B, Z = _linear_layer(f, layer, K)
        M = f.bigm.layer_M[layer]
        H = np.empty((f.n, K), dtype=object)
        for i in range(f.n):
            for k in range(K):
                H[i, k] = f.model.add_binary(f"h_{i}_{k}_{layer}")
                pre = [(1.0, Z[i, kp, k]) for kp in range(K)] + [(1.0, B[k])]
                _activation_constraints(f, pre, H[i, k], M, f"{i}_{k}_{layer}")
        f.h.append(H)
        out.append(H)
    return out


def build_output_layer_prescription(f: PNNFormulation) -> np.ndarray:
    """One binary per treatment with exactly one switched on for every sample."""
    if f.arch.mode is not Mode.PRESCRIPTION:
        raise ValueError("architecture is not in prescription mode")
    L = f.arch.hidden_layers
    T = f.arch.output_dim
    K = f.arch.width
    _, B, Z = _linear_layer(f, L, T)
    M = f.bigm.layer_M[L]
    H = np.empty((f.n, T), dtype=object)
    for i in range(f.n):
        for t in range(T):
            H[i, t] = f.model.add_binary(f"h_{i}_{t}_{L}")
            pre = [(1.0, Z[i, kp, t]) for kp in range(K)] + [(1.0, B[t])]
            _activation_constraints(f, pre, H[i, t], M, f"{i}_{t}_{L}")
        f.model.add_constraint([(1.0, H[i, t]) for t in range(T)], "E", 1.0, f"one_treatment_{i}")
    f.h.append(H)
    return H


def build_output_layer_prediction(f: PNNFormulation) -> np.ndarray:
    """Continuous class scores equal to the affine output of the last hidden layer."""
    if f.arch.mode is not Mode.PREDICTION:
        raise ValueError("architecture is not in prediction mode")
    L = f.arch.hidden_layers
    J = f.arch.output_dim
    K = f.arch.width
    _, B, Z = _linear_layer(f, L, J)
    M = f.bigm.layer_M[L]
    H = np.empty((f.n, J), dtype=object)
    m = f.model
    for i in range(f.n):
        for j in range(J):
            H[i, j] = m.add_continuous(f"h_{i}_{j}_{L}", -M, M)
            terms = [(1.0, H[i, j])] + [(-1.0, Z[i, kp, j]) for kp in range(K)] + [(-1.0, B[j])]
            m.add_constraint(terms, "L", 0.0, f"out_ub_{i}_{j}")
            m.add_constraint(terms, "G", 0.0, f"out_lb_{i}_{j}")
    f.h.append(H)
    return H


def attach_objective_dr(f: PNNFormulation, loss: LossSpec) -> None:
    """Maximise the average estimated outcome of the induced policy.

    DR uses the doubly robust scores, DM the outcome-model predictions and IPW
    the inverse-propensity-weighted observed outcomes. A baseline policy turns
    the objective into the improvement over that baseline; it only shifts the
    constant.
    """
    if loss.kind is LossKind.NLL:
        raise ValueError("use attach_objective_nll for the NLL loss")
    H = f.h[-1]
    coef = loss.coefficients()
    if coef.shape != H.shape:
        raise ValueError(f"score shape {coef.shape} does not match outputs {H.shape}")
    n = f.n
    terms = [(coef[i, t] / n, H[i, t]) for i in range(n) for t in range(H.shape[1]) if coef[i, t] != 0.0]
    const = 0.0
    if loss.baseline_policy is not None:
        s0 = np.asarray(loss.baseline_policy, dtype=int)
        if s0.shape != (n,):
            raise ValueError("baseline policy needs one treatment per sample")
        const = -float(coef[np.arange(n), s0].sum()) / n
    f.model.set_objective(terms, Direction.MAXIMIZE, const)


def attach_objective_nll(f: PNNFormulation, loss: LossSpec) -> None:
    """Linear surrogate of the soft-max negative log-likelihood.

    ``omega_i`` upper-bounds every class score of sample ``i`` and the
    objective charges ``omega_i - h_{i,y_i}``. Binary ``r`` variables force
    every pair of class scores apart by at least epsilon.
    """
    if loss.kind is not LossKind.NLL:
        raise ValueError("attach_objective_nll needs an NLL loss")
    H = f.h[-1]
    n, J = H.shape
    y = np.asarray(loss.labels, dtype=int)
    if y.shape != (n,):
        raise ValueError("need one label per sample")
    if y.min() < 0 or y.max() >= J:
        raise ValueError(f"labels must lie in [0, {J - 1}]")
    m = f.model
    eps = f.bigm.epsilon
    ML = f.bigm.layer_M[-1]
    Mr = 2 * ML + eps  # |h_j' - h_j| <= 2 M_L
    omega = np.empty(n, dtype=object)
    for i in range(n):
        omega[i] = m.add_continuous(f"omega_{i}", -ML, ML)
        for j in range(J):
            m.add_constraint([(1.0, omega[i]), (-1.0, H[i, j])], "G", 0.0, f"omega_{i}_{j}")
        for j in range(J):
            for j2 in range(J):
                if j == j2:
                    continue
                r = m.add_binary(f"r_{i}_{j}_{j2}")
                f.r[(i, j, j2)] = r
                # h_j + h_j2 - 2 h_j = h_j2 - h_j
                diff = [(1.0, H[i, j2]), (-1.0, H[i, j])]
                m.add_constraint(diff + [(-Mr, r)], "L", -eps, f"div_a_{i}_{j}_{j2}")
                m.add_constraint(diff + [(-Mr, r)], "G", eps - Mr, f"div_b_{i}_{j}_{j2}")
    f.omega = omega
    terms = [(1.0, omega[i]) for i in range(n)] + [(-1.0, H[i, y[i]]) for i in range(n)]
    m.set_objective(terms, Direction.MINIMIZE)


def attach_regularizer(f: PNNFormulation, spec: RegularizerSpec) -> None:
    """Penalise weights (never biases) by count (l0) or magnitude (l1)."""
    if spec.lam < 0:
        raise ValueError("negative lambda")
    if spec.kind is RegKind.NONE or spec.lam == 0:
        return
    m = f.model
    sign = -1.0 if m.direction is Direction.MAXIMIZE else 1.0
    A = _absmax(f.alpha_bounds)
    penalty = []
    for v in f.alpha_vars:
        if spec.kind is RegKind.L0:
            u = m.add_binary(f"u_{v.name}")
            m.add_constraint([(1.0, v), (-A, u)], "L", 0.0, f"l0ub_{v.name}")
            m.add_constraint([(1.0, v), (A, u)], "G", 0.0, f"l0lb_{v.name}")
        else:
            u = m.add_continuous(f"a_{v.name}", 0.0, A)
            m.add_constraint([(1.0, u), (-1.0, v)], "G", 0.0, f"l1p_{v.name}")
            m.add_constraint([(1.0, u), (1.0, v)], "G", 0.0, f"l1n_{v.name}")
        f.reg_vars.append(u)
        penalty.append((sign * spec.lam, u))
    m.add_objective_terms(penalty)


def build_pnn(
    X,
    arch: Architecture,
    loss: LossSpec,
    regularizer: Optional[RegularizerSpec] = None,
    bigm: Optional[BigMConfig] = None,
    feature_bounds=None,
    alpha_bounds=DEFAULT_ALPHA_BOUNDS,
    beta_bounds=DEFAULT_BETA_BOUNDS,
) -> PNNFormulation:
    """Assemble the complete training model for ``X`` (already standardized)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if bigm is None:
        if feature_bounds is None:
            feature_bounds = np.column_stack([X.min(axis=0), X.max(axis=0)])
        bigm = BigMConfig.derive(arch, feature_bounds, alpha_bounds, beta_bounds)
    f = new_formulation(X, arch, bigm, alpha_bounds, beta_bounds)
    build_input_layer(f)
    build_hidden_layers(f)
    if arch.mode is Mode.PRESCRIPTION:
        if loss.kind is LossKind.NLL:
            raise ValueError("prescription networks need a DR, IPW or DM loss")
        build_output_layer_prescription(f)
        attach_objective_dr(f, loss)
    else:
        if loss.kind is not LossKind.NLL:
            raise ValueError("prediction networks need the NLL loss")
        build_output_layer_prediction(f)
        attach_objective_nll(f, loss)
    attach_regularizer(f, regularizer or RegularizerSpec())
    return f


def expected_counts(n: int, F: int, K: int, L: int, T: int, mode: Mode = Mode.PRESCRIPTION) -> Dict[str, int]:
    """Closed-form variable and constraint counts (no loss-specific or regularizer extras)."""
    alpha = F * K + (L - 1) * K * K + K * T
    beta = K * L + T
    z = n * K * K * (L - 1) + n * K * T
    hidden_h = n * K * L
    out_h = n * T
    act = 2 * n * K * L
    zcons = 4 * z
    if Mode(mode) is Mode.PRESCRIPTION:
        out_cons = 2 * n * T + n
        binaries = hidden_h + out_h
    else:
        out_cons = 2 * n * T
        binaries = hidden_h
    return {
        "variables": alpha + beta + z + hidden_h + out_h,
        "binaries": binaries,
        "constraints": act + zcons + out_cons,
    }


def solution_from_weights(f: PNNFormulation, weights) -> np.ndarray:
    """Complete variable assignment induced by fixed network weights.

    Hidden units are switched on when their pre-activation reaches epsilon;
    prescription outputs take the argmax. The result may be infeasible (a
    pre-activation strictly between 0 and epsilon, or no output reaching
    epsilon); check it with ``f.model.max_violation``.
    """
    m = f.model
    x = np.zeros(m.num_vars)
    eps = f.bigm.epsilon
    alphas = weights.alphas
    for layer, A in enumerate(f.alpha):
        for (a, b), v in np.ndenumerate(A):
            x[v.id] = alphas[layer][a, b]
    for layer, B in enumerate(f.beta):
        for b, v in enumerate(B):
            x[v.id] = weights.biases[layer][b]
    h = f.X
    L = f.arch.hidden_layers
    for layer in range(L + 1):
        pre = h @ alphas[layer] + weights.biases[layer]
        if layer < L:
            new = (pre >= eps * (1 - 1e-9)).astype(float)
        elif f.arch.mode is Mode.PRESCRIPTION:
            new = np.eye(pre.shape[1])[np.argmax(pre, axis=1)]
        else:
            new = pre
        if layer > 0:
            Z = f.z[layer]
            for (i, kp, j), v in np.ndenumerate(Z):
                x[v.id] = alphas[layer][kp, j] * h[i, kp]
        for (i, k), v in np.ndenumerate(f.h[layer]):
            x[v.id] = new[i, k]
        h = new
    if f.omega is not None:
        for i, v in enumerate(f.omega):
            x[v.id] = h[i].max()
        for (i, j, j2), v in f.r.items():
            x[v.id] = 1.0 if h[i, j2] - h[i, j] >= eps else 0.0
    for v in f.reg_vars:
        w = x[m.var(v.name[2:]).id]
        x[v.id] = (1.0 if w != 0 else 0.0) if v.name.startswith("u_") else abs(w)
    return x
