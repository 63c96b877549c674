"""Solver-agnostic representation of a mixed-integer linear program."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

MAX_NAME_LEN = 255


class VarKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


class Sense(str, enum.Enum):
    LE = "L"
    GE = "G"
    EQ = "E"


class Direction(str, enum.Enum):
    MINIMIZE = "min"
    MAXIMIZE = "max"


@dataclass(frozen=True)
class VarRef:
    id: int
    kind: VarKind
    lower: float
    upper: float
    name: str

    def __hash__(self):
        return hash(self.id)

    def __eq__(self, other):
        return isinstance(other, VarRef) and other.id == self.id and other.name == self.name


@dataclass(frozen=True)
class LinearConstraint:
    terms: Tuple[Tuple[float, VarRef], ...]
    sense: Sense
    rhs: float
    name: str


Terms = Iterable[Tuple[float, VarRef]]


def _check_name(name: str) -> None:
    if not name or len(name) > MAX_NAME_LEN:
        raise ValueError(f"name must have 1..{MAX_NAME_LEN} characters: {name[:40]!r}")
    if any(ch.isspace() for ch in name):
        raise ValueError(f"name contains whitespace: {name!r}")


class MipModel:
    """Variables, linear constraints and a linear objective.

    Variables and constraints keep registration order; that order is what the
    MPS writer and the solvers see.
    """

    def __init__(self, name: str = "PNN"):
        _check_name(name)
        self.name = name
        self.variables: List[VarRef] = []
        self.constraints: List[LinearConstraint] = []
        self.objective: Tuple[Tuple[float, VarRef], ...] = ()
        self.objective_constant = 0.0
        self.direction = Direction.MINIMIZE
        self._by_name: Dict[str, VarRef] = {}
        self._con_names: set = set()

    # -- construction -----------------------------------------------------
    def add_variable(self, kind=VarKind.CONTINUOUS, lower: float = 0.0, upper: float = math.inf, name: str = "") -> VarRef:
        kind = VarKind(kind)
        name = name or f"v{len(self.variables)}"
        _check_name(name)
        if name in self._by_name:
            raise ValueError(f"duplicate variable name {name!r}")
        lower, upper = float(lower), float(upper)
        if math.isnan(lower) or math.isnan(upper):
            raise ValueError("NaN bound")
        if lower > upper:
            raise ValueError(f"{name}: lower bound {lower} exceeds upper bound {upper}")
        if kind is VarKind.BINARY and (lower, upper) != (0.0, 1.0):
            raise ValueError(f"binary variable {name} must have bounds [0, 1]")
        if lower == math.inf or upper == -math.inf:
            raise ValueError(f"{name}: invalid infinite bound")
        v = VarRef(len(self.variables), kind, lower, upper, name)
        self.variables.append(v)
        self._by_name[name] = v
        return v

    def add_binary(self, name: str) -> VarRef:
        return self.add_variable(VarKind.BINARY, 0.0, 1.0, name)

    def add_continuous(self, name: str, lower: float = -math.inf, upper: float = math.inf) -> VarRef:
        return self.add_variable(VarKind.CONTINUOUS, lower, upper, name)

    def _merge(self, terms: Terms) -> Tuple[Tuple[float, VarRef], ...]:
        merged: Dict[int, float] = {}
        refs: Dict[int, VarRef] = {}
        for coef, var in terms:
            coef = float(coef)
            if not math.isfinite(coef):
                raise ValueError(f"non-finite coefficient {coef} on {getattr(var, 'name', var)}")
            if not isinstance(var, VarRef) or var.id >= len(self.variables) or self.variables[var.id] != var:
                raise ValueError(f"variable {getattr(var, 'name', var)!r} is not registered in this model")
            merged[var.id] = merged.get(var.id, 0.0) + coef
            refs[var.id] = var
        return tuple((merged[i], refs[i]) for i in merged)

    def add_constraint(self, terms: Terms, sense, rhs: float, name: str = "") -> LinearConstraint:
        sense = Sense(sense)
        rhs = float(rhs)
        if not math.isfinite(rhs):
            raise ValueError("rhs must be finite")
        name = name or f"c{len(self.constraints)}"
        _check_name(name)
        if name in self._con_names:
            raise ValueError(f"duplicate constraint name {name!r}")
        con = LinearConstraint(self._merge(terms), sense, rhs, name)
        self.constraints.append(con)
        self._con_names.add(name)
        return con

    def set_objective(self, terms: Terms, direction=Direction.MINIMIZE, constant: float = 0.0) -> None:
        self.objective = self._merge(terms)
        self.direction = Direction(direction)
        self.objective_constant = float(constant)

    def add_objective_terms(self, terms: Terms, constant: float = 0.0) -> None:
        self.objective = self._merge(list(self.objective) + list(terms))
        self.objective_constant += float(constant)

    # -- queries ----------------------------------------------------------
    def var(self, name: str) -> VarRef:
        return self._by_name[name]

    def has_var(self, name: str) -> bool:
        return name in self._by_name

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    @property
    def binary_ids(self) -> np.ndarray:
        return np.array([v.id for v in self.variables if v.kind is VarKind.BINARY], dtype=np.int64)

    def counts(self) -> Dict[str, int]:
        nb = len(self.binary_ids)
        return {
            "variables": self.num_vars,
            "binaries": nb,
            "continuous": self.num_vars - nb,
            "constraints": self.num_constraints,
        }

    def to_arrays(self) -> "MatrixForm":
        n = self.num_vars
        rows, cols, vals = [], [], []
        senses, rhs = [], []
        for r, con in enumerate(self.constraints):
            for coef, v in con.terms:
                rows.append(r)
                cols.append(v.id)
                vals.append(coef)
            senses.append(con.sense.value)
            rhs.append(con.rhs)
        A = sparse.csr_matrix((vals, (rows, cols)), shape=(len(self.constraints), n))
        c = np.zeros(n)
        for coef, v in self.objective:
            c[v.id] = coef
        lb = np.array([v.lower for v in self.variables], dtype=float)
        ub = np.array([v.upper for v in self.variables], dtype=float)
        return MatrixForm(
            c=c,
            constant=self.objective_constant,
            maximize=self.direction is Direction.MAXIMIZE,
            A=A,
            senses=np.array(senses, dtype="<U1"),
            rhs=np.array(rhs, dtype=float),
            lb=lb,
            ub=ub,
            binary=np.array([v.kind is VarKind.BINARY for v in self.variables], dtype=bool),
            names=[v.name for v in self.variables],
        )

    def objective_value(self, x: Sequence[float]) -> float:
        x = np.asarray(x, dtype=float)
        return self.objective_constant + sum(coef * x[v.id] for coef, v in self.objective)

    def max_violation(self, x: Sequence[float]) -> float:
        """Largest constraint or bound violation of the point ``x``."""
        form = self.to_arrays()
        return form.max_violation(np.asarray(x, dtype=float))


@dataclass
class MatrixForm:
    c: np.ndarray
    constant: float
    maximize: bool
    A: sparse.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray
    names: List[str]

    @property
    def row_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lo = np.where(self.senses == "L", -np.inf, self.rhs)
        hi = np.where(self.senses == "G", np.inf, self.rhs)
        return lo, hi

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x + self.constant)

    def max_violation(self, x: np.ndarray) -> float:
        viol = 0.0
        if self.A.shape[0]:
            ax = self.A @ x
            lo, hi = self.row_bounds
            viol = max(viol, float(np.max(np.maximum(lo - ax, 0.0), initial=0.0)))
            viol = max(viol, float(np.max(np.maximum(ax - hi, 0.0), initial=0.0)))
        if x.size:
            viol = max(viol, float(np.max(np.maximum(self.lb - x, 0.0))), float(np.max(np.maximum(x - self.ub, 0.0))))
        return viol
