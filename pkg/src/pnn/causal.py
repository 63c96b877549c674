"""Nuisance models and counterfactual scores for off-policy evaluation.

The propensity model is a multinomial logit (last treatment as reference)
fitted by damped Newton iterations; the outcome model is one elastic-net
linear regression per treatment arm fitted by coordinate descent.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .core import CounterfactualScores, Dataset

DEFAULT_CLIP = (0.01, 0.99)


def _design(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.hstack([X, np.ones((X.shape[0], 1))])


@dataclass(frozen=True)
class PropensityModel:
    """``coefficients[k] = (slopes..., intercept)`` for class ``k``; the last class has all zeros."""

    coefficients: np.ndarray
    l2_lambda: float = 0.0
    clip: Tuple[float, float] = DEFAULT_CLIP
    iterations: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coefficients", np.atleast_2d(np.asarray(self.coefficients, dtype=float)))
        lo, hi = self.clip
        if not 0.0 < lo < hi < 1.0:
            raise ValueError(f"clip interval must satisfy 0 < lo < hi < 1, got {self.clip}")

    @property
    def treatment_count(self) -> int:
        return self.coefficients.shape[0] + 1

    def raw_proba(self, X) -> np.ndarray:
        eta = _design(X) @ self.coefficients.T
        eta = np.hstack([eta, np.zeros((eta.shape[0], 1))])
        return np.exp(eta - logsumexp(eta, axis=1, keepdims=True))

    def predict_proba(self, X) -> np.ndarray:
        """Probabilities clipped to ``clip`` and renormalised to sum to one."""
        return clip_probabilities(self.raw_proba(X), self.clip)


def clip_probabilities(P, clip=DEFAULT_CLIP) -> np.ndarray:
    P = np.clip(np.asarray(P, dtype=float), clip[0], clip[1])
    return P / P.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class DirectModel:
    """Per-treatment linear outcome models; row ``t`` is ``(slopes..., intercept)``."""

    coefficients: np.ndarray
    l1_lambda: float = 0.0
    l2_lambda: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "coefficients", np.atleast_2d(np.asarray(self.coefficients, dtype=float)))
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("direct model coefficients must be finite")

    def predict(self, X) -> np.ndarray:
        """``mu_hat`` matrix, one column per treatment."""
        return _design(X) @ self.coefficients.T


# ---- propensity -------------------------------------------------------------


def _check_all_present(t: np.ndarray, T: int) -> None:
    counts = np.bincount(t, minlength=T)
    absent = np.flatnonzero(counts == 0)
    if absent.size:
        raise ValueError(f"treatments {absent.tolist()} never observed")


def fit_propensity(
    dataset: Dataset,
    l2_lambda: float = 0.0,
    clip: Tuple[float, float] = DEFAULT_CLIP,
    max_iter: int = 200,
    tol: float = 1e-8,
) -> PropensityModel:
    """Multinomial logit by damped Newton on the mean log-likelihood.

    The objective is ``-mean log p(t_i | x_i) + l2/2 * ||slopes||^2``; the
    intercepts are not penalised. Iteration stops when the gradient's
    infinity norm falls below ``tol`` or after ``max_iter`` steps.
    """
    if l2_lambda < 0:
        raise ValueError("l2_lambda must be nonnegative")
    T = dataset.treatment_count
    t = np.asarray(dataset.treatments)
    _check_all_present(t, T)
    Z = _design(dataset.features)
    n, p = Z.shape
    K = T - 1
    Y = np.eye(T)[t][:, :K]
    pen = np.ones(p)
    pen[-1] = 0.0
    Pen = np.tile(pen, K)

    def loss(w):
        W = w.reshape(K, p)
        eta = np.hstack([Z @ W.T, np.zeros((n, 1))])
        ll = (eta[np.arange(n), t] - logsumexp(eta, axis=1)).mean()
        return -ll + 0.5 * l2_lambda * float((Pen * w * w).sum())

    w = np.zeros(K * p)
    it = 0
    for it in range(1, max_iter + 1):
        W = w.reshape(K, p)
        eta = np.hstack([Z @ W.T, np.zeros((n, 1))])
        P = np.exp(eta - logsumexp(eta, axis=1, keepdims=True))[:, :K]
        g = ((P - Y).T @ Z / n).ravel() + l2_lambda * Pen * w
        if np.max(np.abs(g)) < tol:
            break
        H = np.empty((K * p, K * p))
        for a in range(K):
            for b in range(K):
                wts = P[:, a] * ((a == b) - P[:, b])
                H[a * p : (a + 1) * p, b * p : (b + 1) * p] = (Z * wts[:, None]).T @ Z / n
        H += l2_lambda * np.diag(Pen)
        try:
            L = np.linalg.cholesky(H)
            if np.min(np.diag(L)) ** 2 < 1e-12 * max(1.0, np.max(np.diag(H))):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            raise ValueError(
                "propensity Hessian is singular (separable or collinear data); increase l2_lambda"
            ) from None
        step = np.linalg.solve(H, g)
        f0 = loss(w)
        s = 1.0
        # backtracking line search
        while s > 1e-10:
            if loss(w - s * step) <= f0 - 1e-4 * s * float(g @ step):
                break
            s *= 0.5
        w = w - s * step
    return PropensityModel(w.reshape(K, p), l2_lambda, clip, it)


# ---- direct model -----------------------------------------------------------


def elastic_net(X, y, l1_lambda: float = 0.0, l2_lambda: float = 0.0, tol: float = 1e-8, max_sweeps: int = 10_000):
    """Coordinate descent for ``1/(2n)||y - Xb - c||^2 + l1 ||b||_1 + l2/2 ||b||^2``.

    Returns ``(slopes..., intercept)``; the intercept is not penalised.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, F = X.shape
    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = X - xm
    yc = y - ym
    sq = (Xc * Xc).sum(axis=0) / n
    b = np.zeros(F)
    r = yc.copy()
    for _ in range(max_sweeps):
        biggest = 0.0
        for j in range(F):
            if sq[j] == 0.0:
                continue
            old = b[j]
            rho = Xc[:, j] @ r / n + sq[j] * old
            new = np.sign(rho) * max(abs(rho) - l1_lambda, 0.0) / (sq[j] + l2_lambda)
            if new != old:
                r -= Xc[:, j] * (new - old)
                b[j] = new
                biggest = max(biggest, abs(new - old) * math.sqrt(sq[j]))
        if biggest < tol:
            break
    else:
        warnings.warn("coordinate descent hit the sweep limit before converging", RuntimeWarning)
    return np.append(b, ym - xm @ b)


def fit_direct(dataset: Dataset, treatment: int, l1_lambda: float = 0.0, l2_lambda: float = 0.0) -> np.ndarray:
    """Elastic-net regression of outcome on covariates within one treatment arm."""
    if l1_lambda < 0 or l2_lambda < 0:
        raise ValueError("penalties must be nonnegative")
    mask = np.asarray(dataset.treatments) == treatment
    if mask.sum() < 2:
        raise ValueError(f"treatment {treatment} has {int(mask.sum())} samples; need at least 2")
    return elastic_net(dataset.features[mask], dataset.outcomes[mask], l1_lambda, l2_lambda)


def fit_direct_model(dataset: Dataset, l1_lambda: float = 0.0, l2_lambda: float = 0.0) -> DirectModel:
    coefs = [fit_direct(dataset, t, l1_lambda, l2_lambda) for t in range(dataset.treatment_count)]
    return DirectModel(np.vstack(coefs), l1_lambda, l2_lambda)


# ---- scores and policy values -------------------------------------------------


def dr_scores(treatments, outcomes, mu_hat, propensity) -> CounterfactualScores:
    """``psi[i, t] = mu[i, t] + 1(t = t_i) (Y_i - mu[i, t]) / P[i, t_i]``."""
    t = np.asarray(treatments, dtype=int)
    y = np.asarray(outcomes, dtype=float)
    mu = np.asarray(mu_hat, dtype=float)
    P = np.asarray(propensity, dtype=float)
    n = len(t)
    psi = mu.copy()
    rows = np.arange(n)
    psi[rows, t] += (y - mu[rows, t]) / P[rows, t]
    return CounterfactualScores(mu, P, psi)


def doubly_robust_scores(dataset: Dataset, propensity: PropensityModel, direct: DirectModel) -> CounterfactualScores:
    return dr_scores(
        dataset.treatments,
        dataset.outcomes,
        direct.predict(dataset.features),
        propensity.predict_proba(dataset.features),
    )


class Method(str, enum.Enum):
    IPW = "ipw"
    DM = "dm"
    DR = "dr"


def policy_value(policy_assignments, dataset: Dataset, scores: CounterfactualScores, method="dr") -> float:
    """Estimated mean outcome of assigning ``policy_assignments``."""
    method = Method(str(method).lower())
    s = np.asarray(policy_assignments)
    n = dataset.n
    if s.shape != (n,):
        raise ValueError(f"need {n} assignments, got shape {s.shape}")
    T = scores.treatment_count
    if not np.all(np.equal(np.mod(s, 1), 0)) or s.min() < 0 or s.max() >= T:
        raise ValueError(f"assignments must be integers in [0, {T - 1}]")
    s = s.astype(int)
    rows = np.arange(n)
    if method is Method.DR:
        return float(scores.psi_hat[rows, s].mean())
    if method is Method.DM:
        return float(scores.mu_hat[rows, s].mean())
    t = np.asarray(dataset.treatments)
    match = s == t
    return float((match * dataset.outcomes / scores.propensity[rows, t]).mean())


# ---- nuisance selection and fitting ---------------------------------------------


@dataclass(frozen=True)
class NuisanceModels:
    propensity: PropensityModel
    direct: DirectModel
    outcome_family: str = "ols"

    def scores(self, dataset: Dataset) -> CounterfactualScores:
        return doubly_robust_scores(dataset, self.propensity, self.direct)


def stratified_folds(treatments, k: int, seed: int = 0) -> np.ndarray:
    """Fold id per sample; each treatment's samples are dealt round-robin after a seeded shuffle."""
    t = np.asarray(treatments)
    gen = np.random.Generator(np.random.Philox(seed))
    folds = np.empty(len(t), dtype=np.int64)
    offset = 0
    for c in np.unique(t):
        idx = gen.permutation(np.flatnonzero(t == c))
        folds[idx] = (np.arange(idx.size) + offset) % k
        offset += idx.size
    return folds


def _lasso_penalty(dataset: Dataset) -> float:
    # a tenth of the smallest penalty that zeroes every slope, averaged over arms
    vals = []
    for c in range(dataset.treatment_count):
        m = dataset.treatments == c
        X = dataset.features[m]
        y = dataset.outcomes[m]
        if m.sum() < 2:
            continue
        vals.append(np.max(np.abs((X - X.mean(0)).T @ (y - y.mean()))) / m.sum())
    return 0.1 * float(np.mean(vals)) if vals else 0.0


def select_outcome_family(dataset: Dataset, k_folds: int = 5, seed: int = 0) -> Tuple[str, float, dict]:
    """Pick OLS or lasso for the outcome model by k-fold held-out RMSE on observed outcomes."""
    lam = _lasso_penalty(dataset)
    cands = {"ols": 0.0, "lasso": lam}
    folds = stratified_folds(dataset.treatments, k_folds, seed)
    rmse = {}
    for name, l1 in cands.items():
        errs = []
        for f in range(k_folds):
            tr = dataset.subset(folds != f)
            te = dataset.subset(folds == f)
            try:
                dm = fit_direct_model(tr, l1)
            except ValueError:
                continue
            mu = dm.predict(te.features)[np.arange(te.n), te.treatments]
            errs.append((te.outcomes - mu) ** 2)
        rmse[name] = math.sqrt(float(np.concatenate(errs).mean())) if errs else math.inf
    best = min(rmse, key=lambda k: (rmse[k], k != "ols"))
    return best, cands[best], rmse


def fit_nuisances(
    dataset: Dataset,
    outcome_family: str = "auto",
    l1_lambda: Optional[float] = None,
    l2_lambda: float = 0.0,
    clip: Tuple[float, float] = DEFAULT_CLIP,
    seed: int = 0,
) -> NuisanceModels:
    """Fit the propensity and outcome models on ``dataset``.

    ``outcome_family`` is ``ols``, ``lasso`` or ``auto`` (cross-validated choice).
    """
    if outcome_family == "auto":
        outcome_family, l1, _ = select_outcome_family(dataset, seed=seed)
    elif outcome_family == "ols":
        l1 = 0.0
    elif outcome_family == "lasso":
        l1 = _lasso_penalty(dataset) if l1_lambda is None else l1_lambda
    else:
        raise ValueError(f"unknown outcome family {outcome_family!r}")
    prop = fit_propensity(dataset, l2_lambda, clip)
    direct = fit_direct_model(dataset, l1)
    return NuisanceModels(prop, direct, outcome_family)


def cross_fit_scores(dataset: Dataset, k_folds: int = 5, seed: int = 0, **kw) -> CounterfactualScores:
    """Scores where each sample's nuisances come from models fitted on the other folds."""
    folds = stratified_folds(dataset.treatments, k_folds, seed)
    T = dataset.treatment_count
    mu = np.empty((dataset.n, T))
    P = np.empty((dataset.n, T))
    for f in range(k_folds):
        te = folds == f
        nm = fit_nuisances(dataset.subset(~te), seed=seed, **kw)
        mu[te] = nm.direct.predict(dataset.features[te])
        P[te] = nm.propensity.predict_proba(dataset.features[te])
    return dr_scores(dataset.treatments, dataset.outcomes, mu, P)
