"""Policy metrics, cross-validated tuning of the penalty weight, paired comparisons."""
from __future__ import annotations

import csv
import dataclasses
import math
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.special import betainc

from .causal import fit_nuisances, policy_value, stratified_folds
from .core import Dataset, Mode, PolicyModel
from .inference import predict, prescribe
from .mip import SolverConfig
from .synthetic import SimData

RESULT_COLUMNS = ("model", "lambda", "fold", "metric", "value", "gap", "runtime")


def policy_assignments(policy: PolicyModel, features) -> np.ndarray:
    """Prescriptions (or predicted classes) for raw covariates."""
    Xs = policy.standardize(features)
    if policy.architecture.mode is Mode.PRESCRIPTION:
        return np.atleast_1d(prescribe(policy.weights, Xs))
    return np.atleast_1d(predict(policy.weights, Xs)[0])


def oosp(policy, sim: SimData) -> float:
    """Percentage of individuals given their correct treatment.

    ``policy`` is a :class:`PolicyModel` or an array of assignments.
    """
    if isinstance(policy, PolicyModel):
        s = policy_assignments(policy, sim.dataset.features)
    else:
        s = np.asarray(policy)
    return 100.0 * float(np.mean(s == sim.correct_treatment))


def evaluate_policy_value(policy, holdout: Dataset, method="dr", nuisances=None, scores=None) -> float:
    """Estimated value of ``policy`` on ``holdout``.

    Counterfactual scores come from ``scores`` if given, else from
    ``nuisances`` (fitted elsewhere, typically on the training fold) applied to
    the holdout rows.
    """
    if scores is None:
        if nuisances is None:
            raise ValueError("need fitted nuisance models or precomputed scores for the holdout")
        scores = nuisances.scores(holdout)
    if isinstance(policy, PolicyModel):
        s = policy_assignments(policy, holdout.features)
    else:
        s = np.asarray(policy)
    return policy_value(s, holdout, scores, method)


def accuracy(policy: PolicyModel, features, labels) -> float:
    return float(np.mean(policy_assignments(policy, features) == np.asarray(labels)))


# ---- statistics ------------------------------------------------------------------


def paired_t_test(values_a, values_b) -> Tuple[float, float]:
    """Two-sided paired t-test; returns ``(mean difference, p-value)``.

    With zero variance in the differences the p-value is 1 when the mean
    difference is 0 and 0 otherwise.
    """
    a = np.asarray(values_a, dtype=float)
    b = np.asarray(values_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be equal-length vectors")
    n = a.size
    if n < 2:
        raise ValueError("need at least two pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0 or sd <= 1e-14 * max(1.0, abs(mean)):
        return mean, 1.0 if mean == 0.0 else 0.0
    t = mean / (sd / math.sqrt(n))
    df = n - 1
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return mean, p


def confidence_interval(values, level: float = 0.95) -> Tuple[float, float]:
    """``mean -/+ t_{n-1,(1+level)/2} * sd / sqrt(n)``."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two values")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    m = float(v.mean())
    half = float(stats.t.ppf((1 + level) / 2, v.size - 1) * v.std(ddof=1) / math.sqrt(v.size))
    return m - half, m + half


# ---- tuning ----------------------------------------------------------------------


@dataclass
class CellResult:
    lam: float
    fold: int
    metric: str
    value: float
    gap: float
    runtime: float


def _default_trainer(train_set, lam, fold_cfg, **kw):
    from .training import train

    return train(train_set, lam=lam, config=fold_cfg, **kw)


def tune_lambda(
    dataset: Dataset,
    width: int = 3,
    hidden_layers: int = 1,
    loss_kind: str = "dr",
    grid: Sequence[float] = (0.0, 0.01, 0.1, 1.0, 10.0),
    k_folds: int = 10,
    config: Optional[SolverConfig] = None,
    seed: int = 0,
    correct_treatment=None,
    reg: str = "l0",
    solver: str = "embedded",
    total_budget_s: Optional[float] = None,
    trainer: Optional[Callable] = None,
    **train_kw,
) -> Tuple[float, Dict[float, float], List[CellResult]]:
    """Cross-validate the penalty weight; returns ``(best, mean score per lambda, cells)``.

    Held-out scoring uses the percentage of correct assignments when
    ``correct_treatment`` is known, the doubly robust value estimate
    (nuisances fitted on the training part) otherwise, and accuracy for the
    ``nll`` loss. Ties go to the smaller lambda.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty lambda grid")
    if k_folds < 2:
        raise ValueError("k_folds must be at least 2")
    if any(l < 0 for l in grid):
        raise ValueError("lambda values must be nonnegative")
    cfg = config or SolverConfig()
    if total_budget_s is not None:
        per = total_budget_s / (k_folds * len(grid))
        cfg = dataclasses.replace(cfg, time_limit_s=per)
    trainer = trainer or _default_trainer
    folds = stratified_folds(dataset.treatments, k_folds, seed)
    T = dataset.treatment_count
    truth = None if correct_treatment is None else np.asarray(correct_treatment)
    cells: List[CellResult] = []
    for f in range(k_folds):
        tr_idx = np.flatnonzero(folds != f)
        te_idx = np.flatnonzero(folds == f)
        tr, te = dataset.subset(tr_idx), dataset.subset(te_idx)
        if np.unique(tr.treatments).size < T or (loss_kind != "nll" and truth is None and np.unique(te.treatments).size < T):
            warnings.warn(f"fold {f} is missing a treatment; skipped", RuntimeWarning)
            continue
        nuis = None
        if loss_kind != "nll" and truth is None:
            nuis = fit_nuisances(tr, seed=seed)
        for lam in grid:
            t0 = time.perf_counter()
            res = trainer(
                tr, lam, cfg, width=width, hidden_layers=hidden_layers, loss=loss_kind, reg=reg, solver=solver,
                seed=seed, **train_kw
            )
            pol = res.policy
            if loss_kind == "nll":
                metric, value = "accuracy", accuracy(pol, te.features, te.treatments)
            elif truth is not None:
                s = policy_assignments(pol, te.features)
                metric, value = "oosp", 100.0 * float(np.mean(s == truth[te_idx]))
            else:
                metric, value = "dr_value", evaluate_policy_value(pol, te, "dr", nuisances=nuis)
            cells.append(CellResult(lam, f, metric, value, float(pol.gap), time.perf_counter() - t0))
    if not cells:
        raise ValueError("every fold was skipped")
    means = {lam: float(np.mean([c.value for c in cells if c.lam == lam])) for lam in grid}
    best = min(grid, key=lambda l: (-means[l], l))
    return best, means, cells


def write_results(path, rows: Iterable[dict]) -> None:
    """Append rows (dicts keyed by ``RESULT_COLUMNS``) to a CSV, writing the header once."""
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, extrasaction="ignore", lineterminator="\n")
        if new:
            w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in RESULT_COLUMNS})


def cells_to_rows(cells: Sequence[CellResult], model: str = "pnn") -> List[dict]:
    return [
        {"model": model, "lambda": c.lam, "fold": c.fold, "metric": c.metric, "value": c.value, "gap": c.gap, "runtime": c.runtime}
        for c in cells
    ]
