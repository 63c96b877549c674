"""Bounded-variable primal revised simplex.

Problems are taken in the computational form

    min c'x   s.t.   row_lo <= A x <= row_hi,   lb <= x <= ub

with one logical column per row (``A x - s = 0``, ``row_lo <= s <= row_hi``),
so the all-logical basis is always a valid starting point. Phase 1 minimises
the sum of bound infeasibilities of the basic variables with a cost vector
that is recomputed every iteration; phase 2 runs on the true costs. The basis
inverse is kept explicitly, updated by elementary row operations after every
pivot, and recomputed from scratch every ``refactor_every`` pivots.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import linalg, sparse


class LPStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERIC_ERROR = "NumericError"


# nonbasic position codes
BASIC, AT_LOWER, AT_UPPER, AT_ZERO = 0, 1, 2, 3


@dataclass
class Basis:
    """Warm-start information: basic column indices plus nonbasic positions."""

    basic: np.ndarray
    status: np.ndarray

    def copy(self) -> "Basis":
        return Basis(self.basic.copy(), self.status.copy())


@dataclass
class LPResult:
    status: LPStatus
    objective: float = np.nan
    x: Optional[np.ndarray] = None
    basis: Optional[Basis] = None
    iterations: int = 0
    duals: Optional[np.ndarray] = None
    message: str = ""


@dataclass
class SimplexOptions:
    feas_tol: float = 1e-9
    opt_tol: float = 1e-9
    pivot_tol: float = 1e-9
    refactor_every: int = 100
    max_iter: Optional[int] = None
    bland_after: Optional[int] = None  # default 10 * (#columns)
    time_limit: float = np.inf


class _Simplex:
    def __init__(self, c, A, row_lo, row_hi, lb, ub, opts: SimplexOptions):
        A = A.toarray() if sparse.issparse(A) else np.asarray(A, dtype=float)
        self.m, self.n = A.shape
        m, n = self.m, self.n
        self.A = A
        self.N = n + m
        self.c = np.concatenate([np.asarray(c, dtype=float), np.zeros(m)])
        self.lo = np.concatenate([np.asarray(lb, dtype=float), np.asarray(row_lo, dtype=float)])
        self.hi = np.concatenate([np.asarray(ub, dtype=float), np.asarray(row_hi, dtype=float)])
        self.opts = opts
        self.bland_after = opts.bland_after if opts.bland_after is not None else 10 * self.N
        self.max_iter = opts.max_iter if opts.max_iter is not None else max(1000, 50 * self.N)

    def column(self, j: int) -> np.ndarray:
        if j < self.n:
            return self.A[:, j]
        e = np.zeros(self.m)
        e[j - self.n] = -1.0
        return e

    def basis_matrix(self, basic: np.ndarray) -> np.ndarray:
        B = np.zeros((self.m, self.m))
        struct = basic < self.n
        B[:, struct] = self.A[:, basic[struct]]
        idx = np.flatnonzero(~struct)
        B[basic[idx] - self.n, idx] = -1.0
        return B

    def nonbasic_value(self, j: int, st: int) -> float:
        if st == AT_LOWER:
            return self.lo[j]
        if st == AT_UPPER:
            return self.hi[j]
        return 0.0

    def initial_basis(self) -> Basis:
        status = np.empty(self.N, dtype=np.int8)
        for j in range(self.n):
            if np.isfinite(self.lo[j]):
                status[j] = AT_LOWER
            elif np.isfinite(self.hi[j]):
                status[j] = AT_UPPER
            else:
                status[j] = AT_ZERO
        status[self.n :] = BASIC
        return Basis(np.arange(self.n, self.N), status)

    def sanitize(self, basis: Basis) -> Basis:
        """Re-anchor nonbasic positions to the (possibly changed) bounds."""
        basis = basis.copy()
        st = basis.status
        for j in np.flatnonzero(st != BASIC):
            lo_f, hi_f = np.isfinite(self.lo[j]), np.isfinite(self.hi[j])
            if st[j] == AT_LOWER and not lo_f:
                st[j] = AT_UPPER if hi_f else AT_ZERO
            elif st[j] == AT_UPPER and not hi_f:
                st[j] = AT_LOWER if lo_f else AT_ZERO
            elif st[j] == AT_ZERO and (lo_f or hi_f):
                st[j] = AT_LOWER if lo_f else AT_UPPER
        return basis

    def compute_primal(self, basic, status, Binv) -> np.ndarray:
        x = np.zeros(self.N)
        nonbasic = np.flatnonzero(status != BASIC)
        for j in nonbasic:
            x[j] = self.nonbasic_value(j, status[j])
        # B x_B + N x_N = 0
        struct = nonbasic[nonbasic < self.n]
        rhs = -(self.A[:, struct] @ x[struct])
        logical = nonbasic[nonbasic >= self.n]
        rhs[logical - self.n] += x[logical]
        x[basic] = Binv @ rhs
        return x

    def run(self, basis: Optional[Basis]) -> LPResult:
        opts = self.opts
        m, n, N = self.m, self.n, self.N
        t0 = time.perf_counter()
        if basis is None:
            basis = self.initial_basis()
        else:
            basis = self.sanitize(basis)
        basic = basis.basic.astype(np.int64).copy()
        status = basis.status.astype(np.int8).copy()

        try:
            Binv = linalg.inv(self.basis_matrix(basic)) if m else np.zeros((0, 0))
        except (linalg.LinAlgError, ValueError):
            return LPResult(LPStatus.NUMERIC_ERROR, message="basis matrix is singular")
        if not np.all(np.isfinite(Binv)):
            return LPResult(LPStatus.NUMERIC_ERROR, message="basis inverse is not finite")
        x = self.compute_primal(basic, status, Binv)

        lo, hi = self.lo, self.hi
        ftol, otol, ptol = opts.feas_tol, opts.opt_tol, opts.pivot_tol
        since_refactor = 0
        degenerate_run = 0
        bland = False
        it = 0
        while True:
            if it >= self.max_iter or time.perf_counter() - t0 > opts.time_limit:
                return LPResult(LPStatus.NUMERIC_ERROR, iterations=it, message="iteration or time limit")
            xb = x[basic]
            lob, hib = lo[basic], hi[basic]
            below = xb < lob - ftol
            above = xb > hib + ftol
            phase1 = bool(below.any() or above.any())
            if phase1:
                cb = np.where(below, -1.0, np.where(above, 1.0, 0.0))
                cfull = None
            else:
                cb = self.c[basic]
                cfull = self.c
            y = cb @ Binv
            d = -(y @ self.A)  # reduced costs of structurals (phase-1 cost is zero there)
            if cfull is not None:
                d = d + cfull[:n]
            d_all = np.concatenate([d, y if cfull is None else y + cfull[n:]])

            # pricing
            st = status
            elig_up = ((st == AT_LOWER) | (st == AT_ZERO)) & (d_all < -otol) & (hi > lo)
            elig_dn = ((st == AT_UPPER) | (st == AT_ZERO)) & (d_all > otol) & (hi > lo)
            elig = elig_up | elig_dn
            if not elig.any():
                if phase1:
                    return LPResult(LPStatus.INFEASIBLE, iterations=it, basis=Basis(basic, status))
                break
            if bland:
                q = int(np.flatnonzero(elig)[0])
            else:
                score = np.where(elig, np.abs(d_all), -1.0)
                q = int(np.argmax(score))
            direction = 1.0 if elig_up[q] else -1.0

            alpha = Binv @ self.column(q)
            delta = -direction * alpha  # change of x_B per unit step of the entering variable

            # ratio test
            theta = np.inf
            leave = -1  # -1: bound flip of entering variable / unbounded
            leave_to = 0
            if np.isfinite(hi[q]) and np.isfinite(lo[q]):
                theta = hi[q] - lo[q]
            ratios = np.full(m, np.inf)
            targets = np.zeros(m, dtype=np.int8)
            inc = delta > ptol
            dec = delta < -ptol
            # feasible basics block at their bounds; infeasible ones at the bound they are heading to
            fin_hi = inc & np.isfinite(hib) & ~below & ~above
            ratios[fin_hi] = (hib[fin_hi] - xb[fin_hi]) / delta[fin_hi]
            targets[fin_hi] = AT_UPPER
            fix_lo = inc & below
            ratios[fix_lo] = (lob[fix_lo] - xb[fix_lo]) / delta[fix_lo]
            targets[fix_lo] = AT_LOWER
            fin_lo = dec & np.isfinite(lob) & ~above & ~below
            ratios[fin_lo] = (lob[fin_lo] - xb[fin_lo]) / delta[fin_lo]
            targets[fin_lo] = AT_LOWER
            fix_hi = dec & above
            ratios[fix_hi] = (hib[fix_hi] - xb[fix_hi]) / delta[fix_hi]
            targets[fix_hi] = AT_UPPER
            ratios = np.maximum(ratios, 0.0)

            if m:
                rmin = ratios.min()
                if rmin < theta:
                    if bland:
                        cands = np.flatnonzero(ratios <= rmin + 1e-12)
                        r = min(cands, key=lambda i: basic[i])
                    else:
                        # among near-ties take the largest pivot for stability
                        cands = np.flatnonzero(ratios <= rmin + 1e-12 * max(1.0, rmin))
                        r = cands[np.argmax(np.abs(alpha[cands]))]
                    theta = ratios[r]
                    leave = int(r)
                    leave_to = targets[r]

            if not np.isfinite(theta):
                if phase1:
                    return LPResult(LPStatus.NUMERIC_ERROR, iterations=it, message="phase 1 found no blocking row")
                return LPResult(LPStatus.UNBOUNDED, iterations=it, basis=Basis(basic, status))

            it += 1
            if theta <= 1e-12:
                degenerate_run += 1
                if degenerate_run >= self.bland_after:
                    bland = True
            else:
                degenerate_run = 0

            step = direction * theta
            x[basic] += delta * theta
            x[q] += step
            if leave < 0:
                status[q] = AT_UPPER if direction > 0 else AT_LOWER
                x[q] = hi[q] if direction > 0 else lo[q]
                continue

            piv = alpha[leave]
            if abs(piv) < 1e-11:
                return LPResult(LPStatus.NUMERIC_ERROR, iterations=it, message="pivot element too small")
            out = basic[leave]
            status[out] = leave_to
            x[out] = lo[out] if leave_to == AT_LOWER else hi[out]
            basic[leave] = q
            status[q] = BASIC

            # eta update of the explicit inverse
            prow = Binv[leave] / piv
            Binv -= np.outer(alpha, prow)
            Binv[leave] = prow
            since_refactor += 1
            if since_refactor >= opts.refactor_every:
                since_refactor = 0
                try:
                    Binv = linalg.inv(self.basis_matrix(basic))
                except (linalg.LinAlgError, ValueError):
                    return LPResult(LPStatus.NUMERIC_ERROR, iterations=it, message="reinversion failed")
                if not np.all(np.isfinite(Binv)):
                    return LPResult(LPStatus.NUMERIC_ERROR, iterations=it, message="reinversion is not finite")
                x = self.compute_primal(basic, status, Binv)

        # final clean-up: recompute from a fresh inverse to shed drift
        try:
            Binv = linalg.inv(self.basis_matrix(basic)) if m else Binv
        except (linalg.LinAlgError, ValueError):
            return LPResult(LPStatus.NUMERIC_ERROR, iterations=it, message="final reinversion failed")
        x = self.compute_primal(basic, status, Binv)
        xb = x[basic]
        if np.any(xb < lo[basic] - 1e-7) or np.any(xb > hi[basic] + 1e-7):
            # drift pushed us out; let the caller retry from scratch
            return LPResult(LPStatus.NUMERIC_ERROR, iterations=it, message="primal drift after reinversion")
        xs = x[:n].copy()
        np.clip(xs, self.lo[:n], self.hi[:n], out=xs)
        y = self.c[basic] @ Binv
        return LPResult(
            LPStatus.OPTIMAL,
            objective=float(self.c[:n] @ xs),
            x=xs,
            basis=Basis(basic, status),
            iterations=it,
            duals=y,
        )


def solve_lp(
    c,
    A,
    row_lo,
    row_hi,
    lb,
    ub,
    basis: Optional[Basis] = None,
    options: Optional[SimplexOptions] = None,
) -> LPResult:
    """Minimise ``c'x`` over a box-and-range constrained polyhedron.

    ``basis`` may come from a previous solve of a problem with the same
    matrix; bounds may differ. The returned objective excludes any constant.
    """
    opts = options or SimplexOptions()
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    row_lo = np.asarray(row_lo, dtype=float)
    row_hi = np.asarray(row_hi, dtype=float)
    if np.any(lb > ub + opts.feas_tol) or np.any(row_lo > row_hi + opts.feas_tol):
        return LPResult(LPStatus.INFEASIBLE)
    solver = _Simplex(c, A, row_lo, row_hi, lb, ub, opts)
    result = solver.run(basis)
    if result.status is LPStatus.NUMERIC_ERROR and basis is not None:
        result = solver.run(None)
    return result
