"""Domain types shared across the package: datasets, architectures, trained models."""
from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

MODEL_SCHEMA = "pnn_model_v1"

DEFAULT_ALPHA_BOUNDS = (-1.0, 1.0)
DEFAULT_BETA_BOUNDS = (-1.0, 1.0)


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def expanded_bounds(features: np.ndarray, margin: float = 0.05) -> np.ndarray:
    """Column-wise (min, max) widened by ``margin`` of the range on each side."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    lo = features.min(axis=0)
    hi = features.max(axis=0)
    pad = margin * (hi - lo)
    # constant columns still get a nonzero box
    pad = np.where(pad > 0, pad, margin * np.maximum(np.abs(lo), 1.0))
    return np.column_stack([lo - pad, hi + pad])


@dataclass(frozen=True)
class Dataset:
    """Observational tuples ``(X_i, t_i, Y_i(t_i))`` held in memory.

    Construction does not raise on invariant violations; call
    :func:`validate_dataset` to get diagnostics.
    """

    features: np.ndarray
    treatments: np.ndarray
    outcomes: np.ndarray
    feature_bounds: np.ndarray
    treatment_count: int
    feature_names: Tuple[str, ...] = ()
    treatment_labels: Tuple[str, ...] = ()
    dropped_rows: int = 0

    def __post_init__(self):
        feats = np.atleast_2d(np.asarray(self.features, dtype=float))
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "treatments", _frozen(self.treatments, dtype=np.int64))
        object.__setattr__(self, "outcomes", _frozen(self.outcomes))
        object.__setattr__(self, "feature_bounds", _frozen(np.reshape(self.feature_bounds, (-1, 2))))
        object.__setattr__(self, "treatment_count", int(self.treatment_count))
        if not self.feature_names:
            names = tuple(f"x{d}" for d in range(feats.shape[1]))
            object.__setattr__(self, "feature_names", names)
        if not self.treatment_labels:
            object.__setattr__(self, "treatment_labels", tuple(str(t) for t in range(self.treatment_count)))

    @classmethod
    def from_arrays(cls, features, treatments, outcomes, treatment_count=None, feature_bounds=None, **kw) -> "Dataset":
        features = np.atleast_2d(np.asarray(features, dtype=float))
        treatments = np.asarray(treatments, dtype=np.int64)
        if treatment_count is None:
            treatment_count = int(treatments.max()) + 1 if treatments.size else 1
        if feature_bounds is None:
            feature_bounds = expanded_bounds(features)
        return cls(features, treatments, outcomes, feature_bounds, treatment_count, **kw)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(
            self.features[rows],
            self.treatments[rows],
            self.outcomes[rows],
            self.feature_bounds,
            self.treatment_count,
            self.feature_names,
            self.treatment_labels,
        )


def validate_dataset(d: Dataset) -> List[str]:
    """Return one message per violated invariant; empty when the dataset is sound."""
    msgs = []
    n = d.features.shape[0]
    if n < 1:
        msgs.append("dataset has no rows")
    if d.treatments.shape != (n,) or d.outcomes.shape != (n,):
        msgs.append(
            f"row counts differ: features {n}, treatments {d.treatments.shape[0]}, outcomes {d.outcomes.shape[0]}"
        )
        return msgs
    if d.treatment_count < 1:
        msgs.append(f"treatment_count must be positive, got {d.treatment_count}")
    bad = np.flatnonzero((d.treatments < 0) | (d.treatments >= d.treatment_count))
    for i in bad:
        msgs.append(f"row {i}: treatment {d.treatments[i]} outside [0, {d.treatment_count - 1}]")
    if d.feature_bounds.shape != (d.features.shape[1], 2):
        msgs.append(f"feature_bounds shape {d.feature_bounds.shape} does not match {d.features.shape[1]} columns")
    else:
        lo, hi = d.feature_bounds[:, 0], d.feature_bounds[:, 1]
        out = (d.features < lo) | (d.features > hi)
        for i, col in zip(*np.nonzero(out)):
            msgs.append(f"row {i}: feature {d.feature_names[col]}={d.features[i, col]:g} outside declared bounds")
    if not np.all(np.isfinite(d.outcomes)):
        msgs.append("outcomes contain non-finite values")
    present = set(np.unique(d.treatments[(d.treatments >= 0) & (d.treatments < d.treatment_count)]).tolist())
    missing = [t for t in range(d.treatment_count) if t not in present]
    if missing:
        msgs.append(f"positivity: treatments {missing} never observed")
    return msgs


def check_positivity(d: Dataset) -> None:
    counts = np.bincount(d.treatments, minlength=d.treatment_count)
    if np.any(counts == 0):
        warnings.warn(f"treatments {np.flatnonzero(counts == 0).tolist()} never observed", stacklevel=2)


class Mode(str, enum.Enum):
    PRESCRIPTION = "prescription"
    PREDICTION = "prediction"


@dataclass(frozen=True)
class Architecture:
    """Network shape: ``hidden_layers`` binary layers of ``width`` units plus a linear output layer."""

    input_dim: int
    hidden_layers: int
    width: int
    output_dim: int
    mode: Mode = Mode.PRESCRIPTION

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.hidden_layers < 1:
            raise ValueError("hidden_layers must be >= 1")
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if self.output_dim < 2:
            raise ValueError("output_dim must be >= 2")

    def weight_shapes(self) -> List[Tuple[int, int]]:
        K = self.width
        return [(self.input_dim, K)] + [(K, K)] * (self.hidden_layers - 1) + [(K, self.output_dim)]

    def bias_shapes(self) -> List[int]:
        return [self.width] * self.hidden_layers + [self.output_dim]

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_layers": self.hidden_layers,
            "width": self.width,
            "output_dim": self.output_dim,
            "mode": self.mode.value,
        }


@dataclass(frozen=True)
class NetworkWeights:
    input_alpha: np.ndarray
    hidden_alpha: Tuple[np.ndarray, ...]
    output_alpha: np.ndarray
    biases: Tuple[np.ndarray, ...]
    alpha_bounds: Tuple[float, float] = DEFAULT_ALPHA_BOUNDS
    beta_bounds: Tuple[float, float] = DEFAULT_BETA_BOUNDS

    def __post_init__(self):
        object.__setattr__(self, "input_alpha", _frozen(np.atleast_2d(self.input_alpha)))
        object.__setattr__(self, "hidden_alpha", tuple(_frozen(np.atleast_2d(a)) for a in self.hidden_alpha))
        object.__setattr__(self, "output_alpha", _frozen(np.atleast_2d(self.output_alpha)))
        object.__setattr__(self, "biases", tuple(_frozen(np.ravel(b)) for b in self.biases))
        object.__setattr__(self, "alpha_bounds", (float(self.alpha_bounds[0]), float(self.alpha_bounds[1])))
        object.__setattr__(self, "beta_bounds", (float(self.beta_bounds[0]), float(self.beta_bounds[1])))

        K = self.input_alpha.shape[1]
        for a in self.hidden_alpha:
            if a.shape != (K, K):
                raise ValueError(f"hidden weight shape {a.shape} inconsistent with width {K}")
        if self.output_alpha.shape[0] != K:
            raise ValueError(f"output weight shape {self.output_alpha.shape} inconsistent with width {K}")
        expected = [K] * (len(self.hidden_alpha) + 1) + [self.output_alpha.shape[1]]
        if [b.shape[0] for b in self.biases] != expected:
            raise ValueError(f"bias lengths {[b.shape[0] for b in self.biases]} != {expected}")
        a_lo, a_hi = self.alpha_bounds
        b_lo, b_hi = self.beta_bounds
        if a_lo > a_hi or b_lo > b_hi:
            raise ValueError("empty weight box")
        for a in self.alphas:
            if a.size and (a.min() < a_lo or a.max() > a_hi):
                raise ValueError("weight outside alpha bounds")
        for b in self.biases:
            if b.size and (b.min() < b_lo or b.max() > b_hi):
                raise ValueError("bias outside beta bounds")

    @property
    def alphas(self) -> List[np.ndarray]:
        return [self.input_alpha, *self.hidden_alpha, self.output_alpha]

    def matches(self, arch: Architecture) -> bool:
        return [a.shape for a in self.alphas] == arch.weight_shapes() and [
            b.shape[0] for b in self.biases
        ] == arch.bias_shapes()

    @classmethod
    def zeros(cls, arch: Architecture, **kw) -> "NetworkWeights":
        shapes = arch.weight_shapes()
        return cls(
            np.zeros(shapes[0]),
            tuple(np.zeros(s) for s in shapes[1:-1]),
            np.zeros(shapes[-1]),
            tuple(np.zeros(k) for k in arch.bias_shapes()),
            **kw,
        )

    def to_dict(self) -> dict:
        return {
            "input_alpha": self.input_alpha.tolist(),
            "hidden_alpha": [a.tolist() for a in self.hidden_alpha],
            "output_alpha": self.output_alpha.tolist(),
            "biases": [b.tolist() for b in self.biases],
            "alpha_bounds": list(self.alpha_bounds),
            "beta_bounds": list(self.beta_bounds),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkWeights":
        return cls(
            np.array(d["input_alpha"], dtype=float),
            tuple(np.array(a, dtype=float) for a in d["hidden_alpha"]),
            np.array(d["output_alpha"], dtype=float),
            tuple(np.array(b, dtype=float) for b in d["biases"]),
            tuple(d["alpha_bounds"]),
            tuple(d["beta_bounds"]),
        )

    def __eq__(self, other):
        if not isinstance(other, NetworkWeights):
            return NotImplemented
        same = lambda xs, ys: len(xs) == len(ys) and all(np.array_equal(x, y) for x, y in zip(xs, ys))
        return (
            same(self.alphas, other.alphas)
            and same(self.biases, other.biases)
            and self.alpha_bounds == other.alpha_bounds
            and self.beta_bounds == other.beta_bounds
        )


@dataclass(frozen=True)
class PolicyModel:
    """A trained network plus the bookkeeping needed to apply it to raw covariates."""

    architecture: Architecture
    weights: NetworkWeights
    objective_value: float
    gap: float
    training_meta: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.weights.matches(self.architecture):
            raise ValueError("weights do not match architecture")
        if not np.isfinite(self.objective_value):
            raise ValueError("objective_value must be finite")
        if not self.gap >= 0:
            raise ValueError("gap must be nonnegative")
        object.__setattr__(self, "training_meta", {str(k): str(v) for k, v in self.training_meta.items()})

    def standardize(self, X) -> np.ndarray:
        """Apply the training-time z-score transform stored in ``training_meta``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if "feature_mean" not in self.training_meta:
            return X
        mean = np.array(json.loads(self.training_meta["feature_mean"]))
        scale = np.array(json.loads(self.training_meta["feature_scale"]))
        return (X - mean) / scale

    def to_dict(self) -> dict:
        return {
            "schema": MODEL_SCHEMA,
            "architecture": self.architecture.to_dict(),
            "weights": self.weights.to_dict(),
            "objective_value": self.objective_value,
            "gap": self.gap,
            "training_meta": dict(self.training_meta),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyModel":
        if d.get("schema") != MODEL_SCHEMA:
            raise ValueError(f"unsupported model schema {d.get('schema')!r}")
        return cls(
            Architecture(**d["architecture"]),
            NetworkWeights.from_dict(d["weights"]),
            float(d["objective_value"]),
            float(d["gap"]),
            dict(d["training_meta"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "PolicyModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(X.mean(axis=0), scale)

    def transform(self, X) -> np.ndarray:
        return (np.atleast_2d(np.asarray(X, dtype=float)) - self.mean) / self.scale

    def meta(self) -> Dict[str, str]:
        return {"feature_mean": json.dumps(self.mean.tolist()), "feature_scale": json.dumps(self.scale.tolist())}


@dataclass(frozen=True)
class CounterfactualScores:
    """Per-individual, per-treatment nuisance estimates and doubly robust scores."""

    mu_hat: np.ndarray
    propensity: np.ndarray
    psi_hat: np.ndarray

    def __post_init__(self):
        for name in ("mu_hat", "propensity", "psi_hat"):
            object.__setattr__(self, name, _frozen(np.atleast_2d(getattr(self, name))))
        if not (self.mu_hat.shape == self.propensity.shape == self.psi_hat.shape):
            raise ValueError("score matrices must share shape n x |T|")
        if np.any(np.abs(self.propensity.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("propensity rows must sum to 1")
        if np.any(self.propensity <= 0) or np.any(self.propensity >= 1):
            raise ValueError("propensities must lie strictly inside (0, 1)")
        if not np.all(np.isfinite(self.psi_hat)):
            raise ValueError("psi_hat must be finite")

    @property
    def n(self) -> int:
        return self.psi_hat.shape[0]

    @property
    def treatment_count(self) -> int:
        return self.psi_hat.shape[1]

    def subset(self, rows) -> "CounterfactualScores":
        return CounterfactualScores(self.mu_hat[rows], self.propensity[rows], self.psi_hat[rows])
