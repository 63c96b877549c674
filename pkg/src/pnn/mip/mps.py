"""MPS export.

Section layout follows fixed MPS; names may exceed eight characters, so readers
must accept whitespace-separated fields (every mainstream solver does).
"""
from __future__ import annotations

import gzip
import math
from pathlib import Path
from typing import Dict, List, Optional

from .model import Direction, MipModel, VarKind

OBJ_ROW = "OBJ"


def _num(x: float) -> str:
    # repr is the shortest string that round-trips to the same double
    x = float(x)
    if x == 0.0:
        return "0"
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _field_line(*fields: str) -> str:
    line = "    " + fields[0].ljust(10)
    for f in fields[1:]:
        line += "  " + f.ljust(10)
    return line.rstrip()


def write_mps(model: MipModel, path: Optional[str] = None) -> str:
    """Render ``model`` as MPS text and optionally write it (gzipped for ``.gz``)."""
    if OBJ_ROW in {c.name for c in model.constraints}:
        raise ValueError(f"constraint name {OBJ_ROW!r} is reserved for the objective row")
    out: List[str] = [f"NAME          {model.name}"]
    if model.direction is Direction.MAXIMIZE:
        out += ["OBJSENSE", "    MAX"]
    out.append("ROWS")
    out.append(f" N  {OBJ_ROW}")
    for con in model.constraints:
        out.append(f" {con.sense.value}  {con.name}")

    # column-major coefficient lists in registration order
    col_entries: Dict[int, List[tuple]] = {v.id: [] for v in model.variables}
    obj = {v.id: coef for coef, v in model.objective}
    for con in model.constraints:
        for coef, v in con.terms:
            col_entries[v.id].append((con.name, coef))

    out.append("COLUMNS")
    in_int = False
    marker = 0
    for v in model.variables:
        is_bin = v.kind is VarKind.BINARY
        if is_bin and not in_int:
            out.append(_field_line(f"MARKER{marker}", "'MARKER'", "'INTORG'"))
            in_int = True
        elif not is_bin and in_int:
            out.append(_field_line(f"MARKER{marker}", "'MARKER'", "'INTEND'"))
            marker += 1
            in_int = False
        out.append(_field_line(v.name, OBJ_ROW, _num(obj.get(v.id, 0.0))))
        for row, coef in col_entries[v.id]:
            out.append(_field_line(v.name, row, _num(coef)))
    if in_int:
        out.append(_field_line(f"MARKER{marker}", "'MARKER'", "'INTEND'"))

    out.append("RHS")
    if model.objective_constant != 0.0:
        # objective offset convention: constant = -rhs(OBJ)
        out.append(_field_line("RHS", OBJ_ROW, _num(-model.objective_constant)))
    for con in model.constraints:
        if con.rhs != 0.0:
            out.append(_field_line("RHS", con.name, _num(con.rhs)))

    out.append("BOUNDS")
    for v in model.variables:
        lo, up = v.lower, v.upper
        if v.kind is VarKind.BINARY:
            out.append(f" BV BND       {v.name}")
            continue
        if lo == up:
            out.append(f" FX BND       {v.name.ljust(10)}  {_num(lo)}")
        elif lo == -math.inf and up == math.inf:
            out.append(f" FR BND       {v.name}")
        else:
            if lo == -math.inf:
                out.append(f" MI BND       {v.name}")
            elif lo != 0.0:
                out.append(f" LO BND       {v.name.ljust(10)}  {_num(lo)}")
            if up != math.inf:
                out.append(f" UP BND       {v.name.ljust(10)}  {_num(up)}")
    out.append("ENDATA")
    text = "\n".join(out) + "\n"

    if path is not None:
        path = Path(path)
        if path.suffix == ".gz":
            with open(path, "wb") as fh:
                # mtime pinned so identical models give identical bytes
                with gzip.GzipFile(filename="", mode="wb", fileobj=fh, mtime=0) as gz:
                    gz.write(text.encode())
        else:
            path.write_text(text)
    return text
