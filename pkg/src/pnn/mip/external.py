"""Hand a model to an external MPS-reading solver and read its answer back."""
from __future__ import annotations

import math
import shlex
import shutil
import subprocess
import sys
import tempfile
import time
from pathlib import Path
from typing import Dict, Mapping, Optional

import numpy as np

from .model import MipModel
from .mps import write_mps
from .solver import FEAS_TOL, SolveResult, SolverConfig, Status, relative_gap


class ExternalSolverError(RuntimeError):
    pass


_STATUS_WORDS = [
    ("time limit", Status.FEASIBLE_TIME_LIMIT),
    ("timelimit", Status.FEASIBLE_TIME_LIMIT),
    ("node limit", Status.NODE_LIMIT),
    ("infeasible", Status.INFEASIBLE),
    ("unbounded", Status.UNBOUNDED),
    ("optimal", Status.OPTIMAL),
]


def highs_command(config: Optional[SolverConfig] = None, start: bool = False, threads: int = 1) -> str:
    """Command template running the bundled HiGHS adapter (needs ``highspy``)."""
    cfg = config or SolverConfig()
    cmd = (
        f"{shlex.quote(sys.executable)} -m pnn.mip.highs_runner {{mps}} {{sol}}"
        f" --time-limit {cfg.time_limit_s!r} --gap {cfg.rel_gap_tol!r} --threads {int(threads)} --seed {cfg.seed}"
    )
    if start:
        cmd += " --start {start}"
    return cmd


def highs_available() -> bool:
    try:
        import highspy  # noqa: F401
    except ImportError:
        return False
    return True


def parse_solution(text: str, model: MipModel) -> Dict[str, object]:
    """Read a ``name value`` per-line solution file.

    Lines that do not name a model variable are scanned for status words and
    for ``objective``/``bound`` annotations; everything else is ignored.
    """
    values: Dict[str, float] = {}
    status = None
    bound = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        toks = line.lstrip("#").split()
        if not toks:
            continue
        if len(toks) >= 2 and model.has_var(toks[0]) and not raw.lstrip().startswith("#"):
            try:
                values[toks[0]] = float(toks[1])
                continue
            except ValueError:
                pass
        low = line.lower()
        if toks[0].lower() in ("bound", "best_bound", "dual_bound") and len(toks) >= 2:
            try:
                bound = float(toks[-1])
            except ValueError:
                pass
            continue
        if toks[0].lower().startswith("objective"):
            continue
        if status is None:
            for word, st in _STATUS_WORDS:
                if word in low:
                    status = st
                    break
    return {"values": values, "status": status, "bound": bound}


def _result_from_solution(model: MipModel, parsed, wall: float) -> SolveResult:
    names = [v.name for v in model.variables]
    status = parsed["status"]
    values = parsed["values"]
    if not values:
        if status in (Status.INFEASIBLE, Status.UNBOUNDED):
            return SolveResult(status, None, math.nan, math.nan, math.inf, 0, wall, names)
        if status is Status.FEASIBLE_TIME_LIMIT or status is Status.NODE_LIMIT:
            return SolveResult(Status.NO_SOLUTION, None, math.nan, math.nan, math.inf, 0, wall, names)
        raise ExternalSolverError("solution file holds no variable values and no recognisable status")
    x = np.array([values.get(v.name, 0.0) for v in model.variables])
    bins = model.binary_ids
    x[bins] = np.round(x[bins])
    obj = model.objective_value(x)
    bound = parsed["bound"]
    if status is None:
        status = Status.OPTIMAL
    if bound is None or not math.isfinite(bound):
        bound = obj if status is Status.OPTIMAL else math.nan
    gap = relative_gap(obj, bound) if math.isfinite(bound) else math.inf
    return SolveResult(status, x, obj, bound, gap, 0, wall, names)


def solve_external(
    model: MipModel,
    solver_command_template: str,
    config: Optional[SolverConfig] = None,
    warm_start: Optional[Mapping[str, float]] = None,
    workdir: Optional[str] = None,
) -> SolveResult:
    """Write ``model`` as MPS, run the command, parse the solution file.

    The template is formatted with ``{mps}``, ``{sol}`` and optionally
    ``{start}`` (a ``name value`` file holding ``warm_start``).
    """
    cfg = config or SolverConfig()
    args = shlex.split(solver_command_template)
    if not args:
        raise ExternalSolverError("empty solver command")
    exe = args[0]
    if shutil.which(exe) is None and not Path(exe).exists():
        raise ExternalSolverError(f"solver executable not found: {exe}")

    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        tmp = Path(tmp)
        mps_path = tmp / "model.mps"
        sol_path = tmp / "model.sol"
        start_path = tmp / "start.sol"
        write_mps(model, str(mps_path))
        if warm_start is not None:
            start_path.write_text("".join(f"{k} {float(v)!r}\n" for k, v in warm_start.items()))
        fmt = {"mps": shlex.quote(str(mps_path)), "sol": shlex.quote(str(sol_path)), "start": shlex.quote(str(start_path))}
        cmd = solver_command_template.format(**fmt)
        t0 = time.perf_counter()
        try:
            proc = subprocess.run(
                cmd,
                shell=True,
                capture_output=True,
                text=True,
                timeout=cfg.time_limit_s + 120.0,
            )
        except subprocess.TimeoutExpired as exc:
            raise ExternalSolverError(f"external solver exceeded its time budget: {cmd}") from exc
        wall = time.perf_counter() - t0
        if not sol_path.exists():
            raise ExternalSolverError(
                f"solver produced no solution file (exit {proc.returncode}): {cmd}\n"
                f"stdout: {proc.stdout[-2000:]}\nstderr: {proc.stderr[-2000:]}"
            )
        text = sol_path.read_text()
    try:
        parsed = parse_solution(text, model)
        result = _result_from_solution(model, parsed, wall)
    except ExternalSolverError as exc:
        raise ExternalSolverError(f"{exc}\nstdout: {proc.stdout[-2000:]}\nstderr: {proc.stderr[-2000:]}") from None
    if result.incumbent is not None:
        viol = model.max_violation(result.incumbent)
        if viol > 1e-4:
            raise ExternalSolverError(f"external solution violates constraints by {viol:.3g}")
    return result
