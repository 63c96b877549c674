"""Command-line adapter: read an MPS file with HiGHS, write a ``name value`` solution.

    python -m pnn.mip.highs_runner model.mps model.sol [--time-limit S] [--gap G] [--start FILE]
"""
from __future__ import annotations

import argparse
import sys


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="pnn.mip.highs_runner")
    ap.add_argument("mps")
    ap.add_argument("sol")
    ap.add_argument("--time-limit", type=float, default=3600.0)
    ap.add_argument("--gap", type=float, default=1e-4)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--start", default=None)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("time_limit", args.time_limit)
    h.setOptionValue("mip_rel_gap", args.gap)
    h.setOptionValue("mip_abs_gap", 1e-9)
    h.setOptionValue("random_seed", args.seed)
    h.setOptionValue("threads", args.threads)
    status = h.readModel(args.mps)
    if status != highspy.HighsStatus.kOk and status != highspy.HighsStatus.kWarning:
        print(f"could not read {args.mps}", file=sys.stderr)
        return 2
    lp = h.getLp()
    names = list(lp.col_names_)

    if args.start:
        values = {}
        with open(args.start) as fh:
            for line in fh:
                toks = line.split()
                if len(toks) >= 2:
                    values[toks[0]] = float(toks[1])
        sol = highspy.HighsSolution()
        sol.col_value = [values.get(nm, 0.0) for nm in names]
        sol.value_valid = True
        h.setSolution(sol)

    h.run()
    model_status = h.getModelStatus()
    text_status = h.modelStatusToString(model_status)
    info = h.getInfo()
    out = [f"# status {text_status}"]
    has_primal = info.primal_solution_status == 2  # kSolutionStatusFeasible
    if has_primal:
        out.append(f"# objective {info.objective_function_value!r}")
        out.append(f"# bound {info.mip_dual_bound!r}")
        out.append(f"# nodes {info.mip_node_count}")
        values = h.getSolution().col_value
        out.extend(f"{nm} {float(v)!r}" for nm, v in zip(names, values))
    with open(args.sol, "w") as fh:
        fh.write("\n".join(out) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
