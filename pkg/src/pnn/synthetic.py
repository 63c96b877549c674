"""Simulated treatment-effect benchmarks, decile binarization and file loaders.

Potential outcomes follow ``Y(t) = eta(x) + (t - 1/2) kappa(x) + noise`` with
three covariate designs. Random numbers come from the Philox counter-based
generator; normals are produced by inverting the standard normal CDF so that
the stream is identical on every platform.
"""
from __future__ import annotations

import csv
import enum
import gzip
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtri

from .core import Dataset, expanded_bounds


class Design(enum.IntEnum):
    D1 = 1
    D2 = 2
    D3 = 3


DESIGN_FEATURES = {Design.D1: 2, Design.D2: 10, Design.D3: 20}


@dataclass(frozen=True)
class SimSpec:
    """Simulation settings.

    ``shared_noise=False`` (default) draws separate noise for the two
    potential outcomes and labels the correct treatment by the larger
    realised outcome. ``shared_noise=True`` uses one draw per individual, in
    which case the correct treatment is ``1[kappa > 0]``.
    """

    design: Design
    n: int
    p_correct: float = 0.5
    seed: int = 0
    noise_sd: float = 0.1
    shared_noise: bool = False

    def __post_init__(self):
        object.__setattr__(self, "design", Design(int(self.design)))
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0.0 < self.p_correct < 1.0:
            raise ValueError(f"p_correct must lie in (0, 1), got {self.p_correct}")
        if not self.noise_sd > 0:
            raise ValueError("noise_sd must be positive")

    @property
    def n_features(self) -> int:
        return DESIGN_FEATURES[self.design]


@dataclass(frozen=True)
class SimData:
    dataset: Dataset
    potential_outcomes: np.ndarray
    correct_treatment: np.ndarray
    kappa: np.ndarray
    eta: np.ndarray

    @property
    def n(self) -> int:
        return self.dataset.n


def _uniforms(bitgen: np.random.Philox, size: int) -> np.ndarray:
    # 53-bit midpoints: never exactly 0 or 1
    raw = bitgen.random_raw(size)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def _normals(bitgen, size: int) -> np.ndarray:
    return ndtri(_uniforms(bitgen, size))


def eta_kappa(design: Design, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Mean effect ``eta`` and treatment effect ``kappa`` for each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    design = Design(int(design))
    if X.shape[1] != DESIGN_FEATURES[design]:
        raise ValueError(f"design {design.value} needs {DESIGN_FEATURES[design]} features")
    if design is Design.D1:
        return 0.5 * X[:, 0] + X[:, 1], 0.5 * X[:, 0]
    q = 2 if design is Design.D2 else 4
    eta = 0.5 * X[:, :q].sum(axis=1) + X[:, q : 3 * q].sum(axis=1)
    kappa = np.where(X[:, :q] > 0, X[:, :q], 0.0).sum(axis=1)
    return eta, kappa


def potential_outcome(design, X, t, noise=0.0) -> np.ndarray:
    eta, kappa = eta_kappa(design, X)
    return eta + 0.5 * (2 * np.asarray(t) - 1) * kappa + noise


def simulate(spec: SimSpec) -> SimData:
    """Draw covariates, potential outcomes and observed treatments."""
    bitgen = np.random.Philox(spec.seed)
    n, F = spec.n, spec.n_features
    X = _normals(bitgen, n * F).reshape(n, F)
    if spec.shared_noise:
        e = spec.noise_sd * _normals(bitgen, n)
        noise = np.column_stack([e, e])
    else:
        noise = spec.noise_sd * _normals(bitgen, 2 * n).reshape(n, 2)
    eta, kappa = eta_kappa(spec.design, X)
    Y = np.column_stack([eta - 0.5 * kappa, eta + 0.5 * kappa]) + noise
    # ties go to treatment 0
    correct = (Y[:, 1] > Y[:, 0]).astype(np.int64)
    hit = _uniforms(bitgen, n) < spec.p_correct
    t = np.where(hit, correct, 1 - correct)
    ds = Dataset(
        features=X,
        treatments=t,
        outcomes=Y[np.arange(n), t],
        feature_bounds=expanded_bounds(X),
        treatment_count=2,
        treatment_labels=("0", "1"),
    )
    return SimData(ds, Y, correct, kappa, eta)


DECILE_EDGES = ndtri(np.arange(1, 10) / 10.0)


def binarize_deciles(features) -> np.ndarray:
    """One-hot decile encoding with standard-normal thresholds, 10 columns per feature."""
    X = np.atleast_2d(np.asarray(features, dtype=float))
    n, F = X.shape
    idx = np.searchsorted(DECILE_EDGES, X, side="right")  # 0..9
    out = np.zeros((n, F, 10))
    out[np.arange(n)[:, None], np.arange(F)[None, :], idx] = 1.0
    return out.reshape(n, F * 10)


def adapted_binarize(onehot, block: int = 10) -> np.ndarray:
    """Cumulative fill: within each block every column after the hot one is set too."""
    B = np.atleast_2d(np.asarray(onehot, dtype=float))
    n, w = B.shape
    if block < 1 or w % block:
        raise ValueError(f"width {w} is not a multiple of block size {block}")
    blocks = B.reshape(n, w // block, block)
    if not np.all(np.isin(blocks, (0.0, 1.0))) or np.any(blocks.sum(axis=2) != 1):
        raise ValueError("each block must be one-hot")
    return np.maximum.accumulate(blocks, axis=2).reshape(n, w)


# ---- files ----------------------------------------------------------------


def load_schema(path) -> dict:
    return json.loads(Path(path).read_text())


def _is_missing(v: str) -> bool:
    return v.strip() == "" or v.strip().lower() in ("na", "nan", "null")


def load_csv(path, schema: dict) -> Dataset:
    """Read an observational dataset described by a JSON-like schema.

    Schema keys: ``covariates`` (list of column names), ``categorical``
    (mapping column -> list of levels, or list of columns whose levels are
    taken in sorted order), ``treatment``, ``outcome`` and optionally
    ``treatment_labels`` (the allowed labels, in id order).
    Rows with any missing value are dropped and counted in ``dropped_rows``.
    """
    covs = list(schema.get("covariates", []))
    cats = schema.get("categorical", {})
    if isinstance(cats, list):
        cats = {c: None for c in cats}
    tcol = schema["treatment"]
    ycol = schema["outcome"]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    need = covs + list(cats) + [tcol, ycol]
    missing = [c for c in need if c not in header]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    col = {h: j for j, h in enumerate(header)}
    kept = []
    dropped = 0
    for r in rows:
        if len(r) != len(header):
            raise ValueError(f"{path}: row has {len(r)} fields, header has {len(header)}")
        if any(_is_missing(r[col[c]]) for c in need):
            dropped += 1
            continue
        kept.append(r)

    def numeric(name: str) -> np.ndarray:
        try:
            return np.array([float(r[col[name]]) for r in kept], dtype=float)
        except ValueError:
            raise ValueError(f"{path}: column {name!r} is not numeric") from None

    y = numeric(ycol)
    parts = [numeric(c)[:, None] for c in covs]
    names = list(covs)
    for c, levels in cats.items():
        vals = [r[col[c]].strip() for r in kept]
        levels = list(levels) if levels else sorted(set(vals))
        unknown = sorted(set(vals) - set(levels))
        if unknown:
            raise ValueError(f"{path}: column {c!r} has levels {unknown} not in schema")
        parts.append(np.array([[v == lv for lv in levels] for v in vals], dtype=float).reshape(len(vals), len(levels)))
        names.extend(f"{c}={lv}" for lv in levels)
    tv = [r[col[tcol]].strip() for r in kept]
    labels = [str(l) for l in schema.get("treatment_labels", [])] or sorted(set(tv))
    unknown = sorted(set(tv) - set(labels))
    if unknown:
        raise ValueError(f"{path}: unknown treatment labels {unknown}")
    lid = {l: k for k, l in enumerate(labels)}
    t = np.array([lid[v] for v in tv], dtype=np.int64)
    X = np.hstack(parts) if parts else np.zeros((len(kept), 0))
    if X.shape[1] == 0:
        raise ValueError(f"{path}: schema names no covariates")
    if len(kept) == 0:
        raise ValueError(f"{path}: no complete rows")
    return Dataset(
        features=X,
        treatments=t,
        outcomes=y,
        feature_bounds=expanded_bounds(X),
        treatment_count=len(labels),
        feature_names=tuple(names),
        treatment_labels=tuple(labels),
        dropped_rows=dropped,
    )


def write_csv(dataset: Dataset, path) -> None:
    """Write covariates, treatment and outcome with a header row."""
    names = list(dataset.feature_names)
    labels = list(dataset.treatment_labels)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["treatment", "outcome"])
        for x, t, y in zip(dataset.features, dataset.treatments, dataset.outcomes):
            w.writerow([repr(float(v)) for v in x] + [labels[t], repr(float(y))])


def csv_schema(dataset: Dataset) -> dict:
    return {
        "covariates": list(dataset.feature_names),
        "treatment": "treatment",
        "outcome": "outcome",
        "treatment_labels": list(dataset.treatment_labels),
    }


def write_truth(sim: SimData, path) -> None:
    """Ground-truth sidecar: potential outcomes and correct treatment per row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y0", "y1", "correct_treatment"])
        for (y0, y1), c in zip(sim.potential_outcomes, sim.correct_treatment):
            w.writerow([repr(float(y0)), repr(float(y1)), int(c)])


def read_truth(path) -> Tuple[np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "correct_treatment" not in rows[0]:
        raise ValueError(f"{path}: not a ground-truth file")
    Y = np.array([[float(r["y0"]), float(r["y1"])] for r in rows])
    c = np.array([int(r["correct_treatment"]) for r in rows], dtype=np.int64)
    return Y, c


# ---- IDX image files --------------------------------------------------------


def _open(path):
    path = str(path)
    return gzip.open(path, "rb") if path.endswith(".gz") else open(path, "rb")


def read_idx(path) -> np.ndarray:
    """Read an IDX file (unsigned-byte payload: 0x0801 labels, 0x0803 images)."""
    with _open(path) as fh:
        data = fh.read()
    if len(data) < 4:
        raise ValueError(f"{path}: truncated IDX header")
    zero, dtype, ndim = struct.unpack(">HBB", data[:4])
    if zero != 0 or dtype != 0x08:
        raise ValueError(f"{path}: unsupported IDX magic {data[:4].hex()}")
    dims = struct.unpack(f">{ndim}I", data[4 : 4 + 4 * ndim])
    payload = np.frombuffer(data, dtype=np.uint8, offset=4 + 4 * ndim)
    if payload.size != int(np.prod(dims)):
        raise ValueError(f"{path}: payload size does not match header")
    return payload.reshape(dims)


def two_class_subsample(images, labels, classes: Sequence[int], n_train: int, n_test: int, seed: int):
    """Seeded split of two classes into train/test without replacement.

    ``n_train``/``n_test`` are per class. Images are flattened and scaled to
    [0, 1]; labels are mapped to 0/1 in the order of ``classes``.
    """
    a, b = classes
    gen = np.random.Generator(np.random.Philox(seed))
    X = np.asarray(images, dtype=float).reshape(len(images), -1) / 255.0
    labels = np.asarray(labels)
    tr, te = [], []
    for c in (a, b):
        idx = np.flatnonzero(labels == c)
        if idx.size < n_train + n_test:
            raise ValueError(f"class {c} has {idx.size} samples, need {n_train + n_test}")
        pick = gen.permutation(idx)[: n_train + n_test]
        tr.append(pick[:n_train])
        te.append(pick[n_train:])
    tr = np.concatenate(tr)
    te = np.concatenate(te)
    y = (labels == b).astype(np.int64)
    return X[tr], y[tr], X[te], y[te]


def separable_two_class(n: int, n_features: int = 2, seed: int = 0, margin: float = 0.25):
    """Linearly separable two-class points: label is the side of a random hyperplane.

    Points within ``margin`` of the hyperplane are pushed out to it so that a
    separating network with bounded weights exists.
    """
    bitgen = np.random.Philox(seed)
    w = _normals(bitgen, n_features)
    w /= np.linalg.norm(w)
    X = _normals(bitgen, n * n_features).reshape(n, n_features)
    s = X @ w
    y = (s > 0).astype(np.int64)
    sign = np.where(y == 1, 1.0, -1.0)
    shift = np.where(np.abs(s) < margin, sign * margin - s, 0.0)
    X = X + shift[:, None] * w[None, :]
    return X, y
