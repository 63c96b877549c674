"""Branch-and-bound over the simplex LP relaxation, plus a brute-force oracle."""
from __future__ import annotations

import enum
import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .model import MatrixForm, MipModel
from .simplex import Basis, LPResult, LPStatus, SimplexOptions, solve_lp

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6
INT_TOL = 1e-6


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    FEASIBLE_TIME_LIMIT = "FeasibleTimeLimit"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NODE_LIMIT = "NodeLimit"
    # limit reached before any feasible point was found
    NO_SOLUTION = "NoSolution"


class Branching(str, enum.Enum):
    MOST_FRACTIONAL = "MostFractional"


class Search(str, enum.Enum):
    BEST_BOUND = "BestBound"
    DEPTH_FIRST = "DepthFirst"


@dataclass(frozen=True)
class SolverConfig:
    time_limit_s: float = 3600.0
    rel_gap_tol: float = 1e-4
    abs_gap_tol: float = 1e-9
    node_limit: int = 10_000_000
    branching: Branching = Branching.MOST_FRACTIONAL
    search: Search = Search.BEST_BOUND
    seed: int = 0
    integrality_tol: float = INT_TOL
    heuristic_every: int = 50

    def __post_init__(self):
        if not self.time_limit_s > 0:
            raise ValueError("time_limit_s must be positive")
        if not 0 <= self.rel_gap_tol < 1:
            raise ValueError("rel_gap_tol must lie in [0, 1)")
        if self.abs_gap_tol < 0:
            raise ValueError("abs_gap_tol must be nonnegative")
        if self.node_limit < 1:
            raise ValueError("node_limit must be positive")
        object.__setattr__(self, "branching", Branching(self.branching))
        object.__setattr__(self, "search", Search(self.search))


@dataclass
class SolveResult:
    status: Status
    incumbent: Optional[np.ndarray]
    objective: float
    best_bound: float
    gap: float
    nodes_explored: int
    wall_time_s: float
    names: Optional[List[str]] = None

    @property
    def has_solution(self) -> bool:
        return self.incumbent is not None

    def value(self, name: str) -> float:
        if self.incumbent is None or self.names is None:
            raise KeyError(name)
        return float(self.incumbent[self.names.index(name)])

    def values(self) -> Dict[str, float]:
        if self.incumbent is None:
            return {}
        return dict(zip(self.names, self.incumbent.tolist()))


def relative_gap(objective: float, bound: float) -> float:
    if not (math.isfinite(objective) and math.isfinite(bound)):
        return math.inf
    return abs(bound - objective) / max(1e-10, abs(objective))


class _Problem:
    """Matrix form in minimisation sense, shared by every node."""

    def __init__(self, model: MipModel):
        self.form: MatrixForm = model.to_arrays()
        f = self.form
        self.sign = -1.0 if f.maximize else 1.0
        self.c = self.sign * f.c
        self.A = f.A.toarray()
        self.row_lo, self.row_hi = f.row_bounds
        self.lb = f.lb
        self.ub = f.ub
        self.bin_idx = np.flatnonzero(f.binary)

    def user_objective(self, min_obj: float) -> float:
        return self.sign * min_obj + self.form.constant

    def lp(self, lb, ub, basis=None, time_limit=np.inf) -> LPResult:
        opts = SimplexOptions(time_limit=time_limit)
        return solve_lp(self.c, self.A, self.row_lo, self.row_hi, lb, ub, basis=basis, options=opts)


def solve_lp_relaxation(model: MipModel, fixed_bounds: Optional[Mapping[int, Tuple[float, float]]] = None):
    """Solve the continuous relaxation with optional per-variable bound overrides.

    Returns ``(status, objective, solution)`` with the objective in the
    model's own sense, constant included.
    """
    prob = _Problem(model)
    lb, ub = prob.lb.copy(), prob.ub.copy()
    for j, (lo, hi) in (fixed_bounds or {}).items():
        lb[j] = max(lb[j], lo)
        ub[j] = min(ub[j], hi)
    res = prob.lp(lb, ub)
    if res.status is not LPStatus.OPTIMAL:
        return res.status, math.nan, None
    return res.status, prob.user_objective(res.objective), res.x


@dataclass(order=True)
class _Node:
    key: Tuple
    lb: np.ndarray = field(compare=False)
    ub: np.ndarray = field(compare=False)
    bound: float = field(compare=False)
    x: np.ndarray = field(compare=False)
    basis: Optional[Basis] = field(compare=False)
    depth: int = field(compare=False)


def _most_fractional(x: np.ndarray, bin_idx: np.ndarray, tol: float) -> int:
    if bin_idx.size == 0:
        return -1
    v = x[bin_idx]
    frac = np.minimum(v - np.floor(v), np.ceil(v) - v)
    frac[frac <= tol] = -1.0
    k = int(np.argmax(frac))  # argmax returns the first maximiser: lowest id wins ties
    return -1 if frac[k] < 0 else int(bin_idx[k])


def solve(
    model: MipModel,
    config: Optional[SolverConfig] = None,
    warm_start: Optional[Union[Mapping[str, float], Sequence[float]]] = None,
) -> SolveResult:
    """Branch-and-bound with most-fractional branching.

    ``warm_start`` supplies values (by name or position) for the binaries; the
    continuous part is recovered by an LP with those binaries fixed, and a
    feasible result seeds the incumbent.
    """
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    deadline = t0 + cfg.time_limit_s
    prob = _Problem(model)
    names = prob.form.names
    bin_idx = prob.bin_idx
    itol = cfg.integrality_tol

    inc_x: Optional[np.ndarray] = None
    inc_obj = math.inf  # minimisation sense
    nodes = 0
    tol_pruned_bound = math.inf  # smallest bound among nodes discarded by the gap tolerances
    unresolved_bound = math.inf  # parent bounds of children whose LP could not be solved

    def remaining():
        return max(0.0, deadline - time.perf_counter())

    def finish(status: Status, open_bound: float) -> SolveResult:
        wall = time.perf_counter() - t0
        if inc_x is None:
            return SolveResult(status, None, math.nan, math.nan if not math.isfinite(open_bound) else prob.user_objective(open_bound), math.inf, nodes, wall, names)
        bound = min(open_bound, tol_pruned_bound, unresolved_bound, inc_obj)
        obj = prob.user_objective(inc_obj)
        best = prob.user_objective(bound)
        return SolveResult(status, inc_x.copy(), obj, best, relative_gap(obj, best), nodes, wall, names)

    def try_incumbent(x: np.ndarray, basis: Optional[Basis]) -> bool:
        """Fix binaries at their rounded values, re-solve, accept if it improves."""
        nonlocal inc_x, inc_obj
        lb, ub = prob.lb.copy(), prob.ub.copy()
        r = np.round(x[bin_idx])
        lb[bin_idx] = r
        ub[bin_idx] = r
        res = prob.lp(lb, ub, basis, time_limit=remaining())
        if res.status is not LPStatus.OPTIMAL:
            return False
        cand = res.x.copy()
        cand[bin_idx] = r
        if prob.form.max_violation(cand) > FEAS_TOL:
            return False
        obj = float(prob.c @ cand)
        if obj < inc_obj - 1e-12:
            inc_x, inc_obj = cand, obj
            return True
        return False

    if warm_start is not None:
        if isinstance(warm_start, Mapping):
            x0 = np.zeros(len(names))
            pos = {nm: i for i, nm in enumerate(names)}
            for nm, val in warm_start.items():
                if nm in pos:
                    x0[pos[nm]] = val
        else:
            x0 = np.asarray(warm_start, dtype=float)
        # a complete feasible point is taken as is; the LP re-solve may only improve it
        if x0.shape == (len(names),) and np.all(x0[bin_idx] == np.round(x0[bin_idx])) and prob.form.max_violation(x0) <= FEAS_TOL:
            inc_x, inc_obj = x0.copy(), float(prob.c @ x0)
        try_incumbent(x0, None)

    root = prob.lp(prob.lb, prob.ub, time_limit=remaining())
    nodes += 1
    if root.status is LPStatus.NUMERIC_ERROR:
        root = prob.lp(prob.lb, prob.ub, time_limit=remaining())
    if root.status is LPStatus.INFEASIBLE:
        return finish(Status.INFEASIBLE if inc_x is None else Status.OPTIMAL, math.inf)
    if root.status is LPStatus.UNBOUNDED:
        return SolveResult(Status.UNBOUNDED, None, math.nan, math.nan, math.inf, nodes, time.perf_counter() - t0, names)
    if root.status is not LPStatus.OPTIMAL:
        return finish(Status.NO_SOLUTION if inc_x is None else Status.FEASIBLE_TIME_LIMIT, -math.inf)

    counter = itertools.count()
    depth_first = cfg.search is Search.DEPTH_FIRST

    def key_for(bound: float, depth: int):
        seq = next(counter)
        if depth_first:
            return (-depth, -seq)
        return (bound, seq)

    def prune_threshold() -> float:
        if not math.isfinite(inc_obj):
            return math.inf
        user_inc = prob.user_objective(inc_obj)
        return inc_obj - max(cfg.abs_gap_tol, cfg.rel_gap_tol * max(1e-10, abs(user_inc)))

    heap: List[_Node] = []

    def consider(res: LPResult, lb, ub, depth: int) -> None:
        nonlocal tol_pruned_bound
        if res.status is not LPStatus.OPTIMAL:
            return
        bound = res.objective
        if bound >= inc_obj - 1e-12:
            return
        if bound >= prune_threshold():
            tol_pruned_bound = min(tol_pruned_bound, bound)
            return
        j = _most_fractional(res.x, bin_idx, itol)
        if j < 0:
            try_incumbent(res.x, res.basis)
            return
        heapq.heappush(heap, _Node(key_for(bound, depth), lb, ub, bound, res.x, res.basis, depth))

    # root rounding heuristic before branching
    if inc_x is None and bin_idx.size:
        try_incumbent(root.x, root.basis)
    consider(root, prob.lb.copy(), prob.ub.copy(), 0)

    status = None
    while heap:
        if time.perf_counter() >= deadline:
            status = Status.FEASIBLE_TIME_LIMIT
            break
        if nodes >= cfg.node_limit:
            status = Status.NODE_LIMIT
            break
        if math.isfinite(inc_obj) and not depth_first:
            best_open = heap[0].bound
            gap = relative_gap(prob.user_objective(inc_obj), prob.user_objective(min(best_open, tol_pruned_bound, unresolved_bound)))
            if gap <= cfg.rel_gap_tol:
                break
        node = heapq.heappop(heap)
        if node.bound >= inc_obj - 1e-12:
            continue
        if node.bound >= prune_threshold():
            tol_pruned_bound = min(tol_pruned_bound, node.bound)
            continue
        j = _most_fractional(node.x, bin_idx, itol)
        val = node.x[j]
        # explore the nearer side first under depth-first search
        sides = (1.0, 0.0) if val >= 0.5 else (0.0, 1.0)
        if depth_first:
            sides = sides[::-1]  # the last pushed is popped first
        for side in sides:
            lb, ub = node.lb.copy(), node.ub.copy()
            lb[j] = ub[j] = side
            res = prob.lp(lb, ub, node.basis, time_limit=remaining())
            nodes += 1
            if res.status is LPStatus.NUMERIC_ERROR:
                res = prob.lp(lb, ub, None, time_limit=remaining())
                if res.status is LPStatus.NUMERIC_ERROR:
                    # the child stays unexplored; its parent bound keeps the global bound valid
                    unresolved_bound = min(unresolved_bound, node.bound)
                    if remaining() > 0:
                        log.warning("node LP failed twice (%s); dropping node at depth %d", res.message, node.depth + 1)
                    continue
            consider(res, lb, ub, node.depth + 1)
        if cfg.heuristic_every and nodes % cfg.heuristic_every < 2 and inc_x is None:
            try_incumbent(node.x, node.basis)

    open_bound = min((nd.bound for nd in heap), default=math.inf)
    if status is None:
        if inc_x is None:
            if math.isfinite(unresolved_bound):
                return finish(Status.NO_SOLUTION, unresolved_bound)
            return finish(Status.INFEASIBLE, math.inf)
        gap = relative_gap(prob.user_objective(inc_obj), prob.user_objective(min(open_bound, tol_pruned_bound, unresolved_bound, inc_obj)))
        abs_gap = abs(min(open_bound, tol_pruned_bound, unresolved_bound, inc_obj) - inc_obj)
        status = Status.OPTIMAL if (gap <= cfg.rel_gap_tol or abs_gap <= cfg.abs_gap_tol) else Status.FEASIBLE_TIME_LIMIT
    elif inc_x is None:
        status = Status.NO_SOLUTION
    return finish(status, open_bound)


def _lagrangian_bound(form: MatrixForm, sign: float, bin_idx, cont_idx, linprog):
    """Affine lower bound ``w @ xb + const`` on the objective of every binary assignment.

    Multipliers come from the HiGHS LP relaxation; any multipliers of the
    right sign give a valid bound by weak duality. Returns ``None`` when the
    relaxation yields nothing usable.
    """
    A = form.A.toarray()
    senses, rhs = form.senses, form.rhs
    le, ge, eq = senses == "L", senses == "G", senses == "E"
    A_ub = np.vstack([A[le], -A[ge]])
    b_ub = np.concatenate([rhs[le], -rhs[ge]])
    c = sign * form.c
    bounds = [(None if not np.isfinite(l) else l, None if not np.isfinite(u) else u) for l, u in zip(form.lb, form.ub)]
    res = linprog(
        c,
        A_ub=A_ub if A_ub.shape[0] else None,
        b_ub=b_ub if A_ub.shape[0] else None,
        A_eq=A[eq] if eq.any() else None,
        b_eq=rhs[eq] if eq.any() else None,
        bounds=bounds,
        method="highs",
    )
    if res.status != 0:
        return None
    lam = -res.ineqlin.marginals if A_ub.shape[0] else np.zeros(0)
    mu = -res.eqlin.marginals if eq.any() else np.zeros(0)
    lam = np.maximum(lam, 0.0)
    # L(x) = c x + lam (A_ub x - b_ub) + mu (A_eq x - b_eq) <= c x on the feasible set
    red = c + lam @ A_ub + (mu @ A[eq] if eq.any() else 0.0)
    const = -float(lam @ b_ub) - (float(mu @ rhs[eq]) if eq.any() else 0.0)
    rc = red[cont_idx]
    lo, hi = form.lb[cont_idx], form.ub[cont_idx]
    with np.errstate(invalid="ignore"):
        part = np.where(rc > 0, rc * lo, rc * hi)
    part = np.where(np.abs(rc) <= 1e-12, 0.0, part)
    cmin = float(part.sum())
    if not math.isfinite(cmin):
        return None
    # shave a little for the LP's own tolerances
    return red[bin_idx], const + cmin - 1e-7 * (1.0 + abs(const) + abs(cmin))


def brute_force_oracle(model: MipModel, binary_limit: int = 20, chunk: int = 1 << 14) -> SolveResult:
    """Enumerate every binary assignment and solve the residual LP with HiGHS.

    Exact up to LP tolerance; independent of the embedded simplex. Assignments
    that interval arithmetic over the continuous bounds already rules out are
    skipped without an LP, as are those whose objective cannot beat the best
    value found even with every continuous variable at its cheapest bound.
    """
    from scipy.optimize import linprog

    t0 = time.perf_counter()
    form = model.to_arrays()
    bin_idx = np.flatnonzero(form.binary)
    if bin_idx.size > binary_limit:
        raise ValueError(f"{bin_idx.size} binaries exceed the oracle limit of {binary_limit}")
    cont_idx = np.flatnonzero(~form.binary)
    sign = -1.0 if form.maximize else 1.0
    A = form.A.toarray()
    senses, rhs = form.senses, form.rhs
    lo_row, hi_row = form.row_bounds
    Ab = A[:, bin_idx]
    Ac = A[:, cont_idx]
    cb = sign * form.c[bin_idx]
    # reachable range of the continuous part of each row
    clb, cub = form.lb[cont_idx], form.ub[cont_idx]
    with np.errstate(invalid="ignore"):
        cmin = np.where(Ac > 0, Ac * clb, Ac * cub)
        cmax = np.where(Ac > 0, Ac * cub, Ac * clb)
    cmin = np.where(Ac == 0, 0.0, cmin).sum(axis=1)
    cmax = np.where(Ac == 0, 0.0, cmax).sum(axis=1)
    le, ge, eq = senses == "L", senses == "G", senses == "E"
    A_ub = np.vstack([Ac[le], -Ac[ge]])
    bounds = [
        (None if not np.isfinite(form.lb[j]) else form.lb[j], None if not np.isfinite(form.ub[j]) else form.ub[j])
        for j in cont_idx
    ]
    cc = sign * form.c[cont_idx]
    with np.errstate(invalid="ignore"):
        cheapest = np.where(cc > 0, cc * clb, cc * cub)
    cc_min = float(np.where(cc == 0, 0.0, cheapest).sum())  # -inf when the LP part may be unbounded
    dual_bound = _lagrangian_bound(form, sign, bin_idx, cont_idx, linprog)
    best_obj, best_x, unbounded = math.inf, None, False
    k = bin_idx.size
    shifts = np.arange(k - 1, -1, -1, dtype=np.int64)
    count = 1 << k
    # pass 1: interval screen and objective lower bound for every assignment
    cand_ids, cand_lower = [], []
    for s in range(0, count, chunk):
        ids = np.arange(s, min(count, s + chunk), dtype=np.int64)
        XB = ((ids[:, None] >> shifts[None, :]) & 1).astype(float)
        act = XB @ Ab.T
        ok = np.all((act + cmax >= lo_row - FEAS_TOL) & (act + cmin <= hi_row + FEAS_TOL), axis=1)
        cand_ids.append(ids[ok])
        low = XB[ok] @ cb + cc_min
        if dual_bound is not None:
            w, const = dual_bound
            low = np.maximum(low, XB[ok] @ w + const)
        cand_lower.append(low)
    ids = np.concatenate(cand_ids)
    lower = np.concatenate(cand_lower)
    order = np.argsort(lower, kind="stable")
    # pass 2: cheapest first, stop once no assignment can improve
    for pos in order:
        if lower[pos] >= best_obj - 1e-9:
            break
        xb = ((ids[pos] >> shifts) & 1).astype(float)
        if cont_idx.size == 0:
            if Ab.shape[0] and (np.any(Ab @ xb < lo_row - FEAS_TOL) or np.any(Ab @ xb > hi_row + FEAS_TOL)):
                continue
            best_obj = float(cb @ xb)
            best_x = np.zeros(form.c.size)
            best_x[bin_idx] = xb
            break
        resid = rhs - Ab @ xb
        b_ub = np.concatenate([resid[le], -resid[ge]])
        res = linprog(
            cc,
            A_ub=A_ub if A_ub.shape[0] else None,
            b_ub=b_ub if A_ub.shape[0] else None,
            A_eq=Ac[eq] if eq.any() else None,
            b_eq=resid[eq] if eq.any() else None,
            bounds=bounds,
            method="highs",
        )
        if res.status == 3:
            unbounded = True
            break
        if res.status != 0:
            continue
        obj = float(cb @ xb) + float(res.fun)
        if obj < best_obj - 1e-12:
            x = np.zeros(form.c.size)
            x[bin_idx] = xb
            x[cont_idx] = res.x
            best_obj, best_x = obj, x
    wall = time.perf_counter() - t0
    names = form.names
    if unbounded:
        return SolveResult(Status.UNBOUNDED, None, math.nan, math.nan, math.inf, count, wall, names)
    if best_x is None:
        return SolveResult(Status.INFEASIBLE, None, math.nan, math.nan, math.inf, count, wall, names)
    obj = sign * best_obj + form.constant
    return SolveResult(Status.OPTIMAL, best_x, obj, obj, 0.0, count, wall, names)
