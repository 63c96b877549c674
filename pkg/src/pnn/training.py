"""End-to-end training: standardize, estimate nuisances, formulate, solve, extract."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .causal import fit_nuisances, fit_propensity
from .core import (
    DEFAULT_ALPHA_BOUNDS,
    DEFAULT_BETA_BOUNDS,
    Architecture,
    CounterfactualScores,
    Dataset,
    Mode,
    NetworkWeights,
    PolicyModel,
    Standardizer,
    expanded_bounds,
)
from .formulation import (
    BigMConfig,
    LossKind,
    LossSpec,
    PNNFormulation,
    RegularizerSpec,
    build_pnn,
    solution_from_weights,
)
from .inference import extract_weights, resolve_boundary
from .mip import SolveResult, SolverConfig, Status, highs_command, solve, solve_external, write_mps

FEASIBLE_TOL = 1e-6


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainResult:
    policy: Optional[PolicyModel]
    solve_result: Optional[SolveResult]
    formulation: PNNFormulation
    runtime_s: float
    mps_path: Optional[str] = None

    def report(self) -> Dict[str, object]:
        r = self.solve_result
        out = dict(self.formulation.model.counts())
        out["runtime_s"] = self.runtime_s
        if r is not None:
            out.update(status=r.status.value, objective=r.objective, best_bound=r.best_bound, gap=r.gap, nodes=r.nodes_explored)
        if self.mps_path:
            out["mps"] = self.mps_path
        return out


# ---- warm starts ----------------------------------------------------------------


def _off_network(arch: Architecture, eps: float, alpha_b, beta_b):
    """Weight arrays for a network whose hidden units are all switched off."""
    shapes = arch.weight_shapes()
    alphas = [np.zeros(s) for s in shapes]
    biases = [np.full(k, beta_b[0] + eps / 2) for k in arch.bias_shapes()[:-1]]
    return alphas, biases


def _output_for_constant(arch: Architecture, best: int, beta_b) -> np.ndarray:
    T = arch.output_dim
    if arch.mode is Mode.PRESCRIPTION:
        out = np.full(T, beta_b[0])
        out[best] = beta_b[1]
        return out
    # prediction: distinct scores, best class highest
    ranks = np.linspace(beta_b[1], beta_b[0], T)
    order = [best] + [j for j in range(T) if j != best]
    out = np.empty(T)
    out[order] = ranks
    return out


def _pack(alphas, biases, alpha_b, beta_b) -> NetworkWeights:
    return NetworkWeights(alphas[0], tuple(alphas[1:-1]), alphas[-1], tuple(biases), alpha_b, beta_b)


def candidate_weights(f: PNNFormulation, coef_hint=None, direction=None) -> List[NetworkWeights]:
    """Simple feasible starting networks.

    A constant network prescribing (or predicting) the best single class,
    plus, for two outputs, a one-unit network splitting on the hyperplane
    ``direction = (w, c)`` with a few bias offsets.
    """
    arch = f.arch
    eps = f.bigm.epsilon
    ab, bb = f.alpha_bounds, f.beta_bounds
    out: List[NetworkWeights] = []
    if coef_hint is not None:
        best = int(np.argmax(coef_hint))
        alphas, biases = _off_network(arch, eps, ab, bb)
        out.append(_pack(alphas, biases + [_output_for_constant(arch, best, bb)], ab, bb))
    if direction is not None and arch.output_dim == 2:
        w, c = direction
        scale = max(np.max(np.abs(w)), abs(c), 1e-12)
        w = np.clip(w / scale * ab[1], *ab)
        c = c / scale * ab[1]
        for shift in (0.0, -2 * eps, 2 * eps, -10 * eps, 10 * eps):
            alphas, biases = _off_network(arch, eps, ab, bb)
            alphas[0][:, 0] = w
            biases[0][0] = np.clip(c + shift, bb[0] + eps / 2, bb[1])
            for l in range(1, arch.hidden_layers):
                alphas[l][0, 0] = 1.0
                biases[l][0] = -0.5
            alphas[-1][0] = (-1.0, 1.0)
            final = np.array([0.5, 0.0])
            out.append(_pack(alphas, biases + [final], ab, bb))
    return out


def best_warm_start(f: PNNFormulation, candidates: List[NetworkWeights]) -> Optional[np.ndarray]:
    best = None
    best_obj = -math.inf
    sign = 1.0 if f.model.direction.value == "max" else -1.0
    for w in candidates:
        x = solution_from_weights(f, w)
        if f.model.max_violation(x) > FEASIBLE_TOL:
            continue
        obj = sign * f.model.objective_value(x)
        if obj > best_obj:
            best, best_obj = x, obj
    return best


# ---- solving ---------------------------------------------------------------------


def run_solver(f: PNNFormulation, solver: str, config: SolverConfig, warm: Optional[np.ndarray], workdir=None, threads: int = 1):
    model = f.model
    names = [v.name for v in model.variables]
    start = dict(zip(names, warm.tolist())) if warm is not None else None
    if solver == "embedded":
        return solve(model, config, start)
    if solver == "highs":
        return solve_external(model, highs_command(config, start=start is not None, threads=threads), config, start, workdir)
    if solver.startswith("external:"):
        cmd = solver[len("external:") :]
        if start is None or "{start}" not in cmd:
            start = None
        return solve_external(model, cmd, config, start, workdir)
    raise ValueError(f"unknown solver {solver!r}; use embedded, highs, external:<cmd> or mps-only")


def train(
    dataset: Dataset,
    width: int = 3,
    hidden_layers: int = 1,
    loss: str = "dr",
    reg: str = "l0",
    lam: float = 0.0,
    solver: str = "embedded",
    config: Optional[SolverConfig] = None,
    scores: Optional[CounterfactualScores] = None,
    labels=None,
    baseline_policy=None,
    standardize: bool = True,
    warm_start: bool = True,
    outcome_family: str = "ols",
    alpha_bounds=DEFAULT_ALPHA_BOUNDS,
    beta_bounds=DEFAULT_BETA_BOUNDS,
    mps_path: Optional[str] = None,
    workdir=None,
    seed: int = 0,
    threads: int = 1,
) -> TrainResult:
    """Train a 0-1 network policy (``loss`` dr/ipw/dm) or classifier (``loss`` nll).

    For ``nll`` the class labels default to ``dataset.treatments``.
    ``solver="mps-only"`` writes ``mps_path`` and returns without solving.
    """
    t0 = time.perf_counter()
    cfg = config or SolverConfig()
    kind = LossKind(loss)
    X = dataset.features
    std = Standardizer.fit(X) if standardize else None
    Xs = std.transform(X) if std else np.asarray(X, dtype=float)
    T = dataset.treatment_count

    direction = None
    coef_hint = None
    family = ""
    if kind is LossKind.NLL:
        mode = Mode.PREDICTION
        y = np.asarray(dataset.treatments if labels is None else labels, dtype=int)
        spec = LossSpec(kind, labels=y)
        coef_hint = np.bincount(y, minlength=T).astype(float)
        if T == 2:
            try:
                pm = fit_propensity(Dataset.from_arrays(Xs, 1 - y, np.zeros(len(y)), T), l2_lambda=1e-3)
                direction = (pm.coefficients[0, :-1], pm.coefficients[0, -1])
            except ValueError:
                direction = None
    else:
        mode = Mode.PRESCRIPTION
        if scores is None:
            nm = fit_nuisances(dataset, outcome_family=outcome_family, seed=seed)
            scores = nm.scores(dataset)
            family = nm.outcome_family
            if T == 2:
                d = nm.direct.coefficients[1] - nm.direct.coefficients[0]
                slopes = d[:-1] * (std.scale if std else 1.0)
                icpt = d[-1] + (float(d[:-1] @ std.mean) if std else 0.0)
                direction = (slopes, icpt)
        spec = LossSpec(
            kind,
            scores=scores,
            baseline_policy=baseline_policy,
            treatments=dataset.treatments if kind is LossKind.IPW else None,
            outcomes=dataset.outcomes if kind is LossKind.IPW else None,
        )
        coef_hint = spec.coefficients().mean(axis=0)
        if direction is None and T == 2:
            cate = scores.psi_hat[:, 1] - scores.psi_hat[:, 0]
            A = np.hstack([Xs, np.ones((len(Xs), 1))])
            sol = np.linalg.lstsq(A, cate, rcond=None)[0]
            direction = (sol[:-1], sol[-1])

    arch = Architecture(Xs.shape[1], hidden_layers, width, T, mode)
    regularizer = RegularizerSpec.make(reg, lam)
    bounds = expanded_bounds(Xs)
    bigm = BigMConfig.derive(arch, bounds, alpha_bounds, beta_bounds)
    f = build_pnn(Xs, arch, spec, regularizer, bigm, alpha_bounds=alpha_bounds, beta_bounds=beta_bounds)

    if solver == "mps-only":
        if not mps_path:
            raise ValueError("mps-only needs an output path")
        write_mps(f.model, mps_path)
        return TrainResult(None, None, f, time.perf_counter() - t0, mps_path)

    warm = best_warm_start(f, candidate_weights(f, coef_hint, direction)) if warm_start else None
    result = run_solver(f, solver, cfg, warm, workdir, threads)
    if result.incumbent is None:
        dump = None
        if result.status is Status.INFEASIBLE and mps_path:
            write_mps(f.model, mps_path)
            dump = mps_path
        raise TrainingError(
            f"solver returned no solution (status {result.status.value})" + (f"; model written to {dump}" if dump else "")
        )
    weights = resolve_boundary(extract_weights(f.model, result, arch, alpha_bounds, beta_bounds), bigm.epsilon)
    meta = {
        "loss": kind.value,
        "regularizer": regularizer.kind.value,
        "lambda": repr(regularizer.lam),
        "solver": solver,
        "status": result.status.value,
        "best_bound": repr(result.best_bound),
        "epsilon": repr(bigm.epsilon),
        "layer_M": json.dumps(list(bigm.layer_M)),
        "runtime_s": repr(result.wall_time_s),
        "counts": json.dumps(f.model.counts()),
        "seed": str(seed),
    }
    if family:
        meta["outcome_model"] = family
    if std is not None:
        meta.update(std.meta())
    gap = result.gap if math.isfinite(result.gap) else math.inf
    policy = PolicyModel(arch, weights, float(result.objective), gap, meta)
    return TrainResult(policy, result, f, time.perf_counter() - t0)
