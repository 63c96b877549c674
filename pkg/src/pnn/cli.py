"""Command-line interface: ``pnn simulate | train | evaluate | tune``.

Every flag may also come from a JSON file given with ``--config`` (keys are
flag names with or without leading dashes; explicit flags win). Errors are
reported as one line on stderr with a nonzero exit status.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import sys
import warnings
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .causal import fit_nuisances, policy_value
from .core import CounterfactualScores, Dataset, Mode, PolicyModel
from .evaluation import (
    cells_to_rows,
    confidence_interval,
    paired_t_test,
    policy_assignments,
    tune_lambda,
    write_results,
)
from .mip import SolverConfig
from .synthetic import (
    SimSpec,
    csv_schema,
    load_csv,
    load_schema,
    read_truth,
    simulate,
    write_csv,
    write_truth,
)

TRAIN_FILE = "train.csv"
TEST_FILE = "test.csv"
TRUTH_FILE = "test_truth.csv"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _probability(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _folds(text: str) -> int:
    v = int(text)
    if v < 2:
        raise argparse.ArgumentTypeError(f"need at least 2 folds, got {text}")
    return v


def _grid(text: str) -> List[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None
    if not vals or any(v < 0 or not math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError("grid needs nonnegative finite values")
    return vals


def _solver(text: str) -> str:
    if text in ("embedded", "highs", "mps-only") or (text.startswith("external:") and len(text) > 9):
        return text
    raise argparse.ArgumentTypeError("solver must be embedded, highs, mps-only or external:<command>")


def _add_solver_flags(p):
    p.add_argument("--time-limit", type=float, default=3600.0, help="seconds per MIP (default 3600)")
    p.add_argument("--gap", type=float, default=1e-4, help="relative optimality gap (default 1e-4)")
    p.add_argument("--solver", type=_solver, default="embedded", help="embedded | highs | external:<cmd> | mps-only")


def _add_net_flags(p):
    p.add_argument("--loss", choices=["dr", "ipw", "dm", "nll"], default="dr")
    p.add_argument("--width", type=_positive_int, default=3)
    p.add_argument("--layers", type=int, default=2, help="depth counting the output layer (2 = one hidden layer)")
    p.add_argument("--reg", choices=["l0", "l1"], default="l0")
    p.add_argument("--outcome-model", choices=["ols", "lasso", "auto"], default="ols")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pnn", description="Train and evaluate 0-1 neural network policies by mixed-integer programming.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--config", help="JSON file supplying flag values")
    ap.add_argument("--threads", type=_positive_int, default=None, help="solver threads (env PNN_THREADS, default: cores)")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", help="write simulated train/test data and a ground-truth sidecar")
    s.add_argument("--design", type=int, choices=[1, 2, 3], default=1)
    s.add_argument("--n-train", type=_positive_int, default=100)
    s.add_argument("--n-test", type=_positive_int, default=10000)
    s.add_argument("--p", type=_probability, default=0.5, help="probability of receiving the correct treatment")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise-sd", type=float, default=0.1)
    s.add_argument("--shared-noise", action="store_true", help="one noise draw shared by both potential outcomes")
    s.add_argument("--out-dir", required=True)

    t = sub.add_parser("train", help="fit a network by solving the training MIP")
    t.add_argument("--data", required=True)
    t.add_argument("--schema", help="JSON schema for the CSV (default: last two columns are treatment, outcome)")
    t.add_argument("--scores", help="CSV with mu_t, p_t, psi_t columns instead of fitting nuisances")
    _add_net_flags(t)
    t.add_argument("--lambda", dest="lam", type=float, default=0.0)
    _add_solver_flags(t)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--model-out", help="policy JSON path")
    t.add_argument("--report-out", help="run report JSON path")
    t.add_argument("--mps-out", help="MPS path (required for mps-only; also used to dump infeasible models)")

    e = sub.add_parser("evaluate", help="score trained models on held-out data")
    e.add_argument("--model", nargs="+", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--schema")
    e.add_argument("--train-data", help="data to fit nuisance models on (default: the evaluation data)")
    e.add_argument("--truth", help="ground-truth sidecar; enables OOSP")
    e.add_argument("--level", type=_probability, default=0.95)
    e.add_argument("--out", help="metrics CSV (default: stdout)")
    e.add_argument("--results", help="results CSV to append to")
    e.add_argument("--seed", type=int, default=0)

    u = sub.add_parser("tune", help="cross-validate lambda")
    u.add_argument("--data", required=True)
    u.add_argument("--schema")
    u.add_argument("--truth", help="ground truth for the data rows; scores folds by OOSP")
    _add_net_flags(u)
    u.add_argument("--grid", type=_grid, default=[0.0, 0.01, 0.1, 1.0, 10.0])
    u.add_argument("--folds", type=_folds, default=10)
    u.add_argument("--total-budget", type=float, default=None, help="seconds shared across all cells")
    _add_solver_flags(u)
    u.add_argument("--seed", type=int, default=0)
    u.add_argument("--out", required=True, help="per-cell table CSV")
    u.add_argument("--best-out", help="JSON with the chosen lambda (default: stdout)")
    return ap


# ---- helpers -----------------------------------------------------------------


def _apply_config(ap: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    pre = _Parser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        cfg = json.loads(Path(known.config).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {known.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    defaults = {str(k).lstrip("-").replace("-", "_"): v for k, v in cfg.items()}
    if "lambda" in defaults:
        defaults["lam"] = defaults.pop("lambda")
    ap.set_defaults(**defaults)
    for action in ap._subparsers._group_actions if ap._subparsers else []:
        for p in action.choices.values():
            p.set_defaults(**defaults)


def _threads(args) -> int:
    if args.threads:
        return args.threads
    env = os.environ.get("PNN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"PNN_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _load(path: str, schema_path: Optional[str]) -> Dataset:
    if not Path(path).exists():
        raise UsageError(f"no such data file: {path}")
    if schema_path:
        schema = load_schema(schema_path)
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), [])
        if len(header) < 3:
            raise UsageError(f"{path}: need covariate, treatment and outcome columns")
        schema = {"covariates": header[:-2], "treatment": header[-2], "outcome": header[-1]}
    return load_csv(path, schema)


def _read_scores(path: str) -> CounterfactualScores:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty scores file")
    T = sum(1 for k in rows[0] if k.startswith("psi_"))
    get = lambda pre: np.array([[float(r[f"{pre}_{t}"]) for t in range(T)] for r in rows])
    return CounterfactualScores(get("mu"), get("p"), get("psi"))


def _config(args) -> SolverConfig:
    return SolverConfig(time_limit_s=args.time_limit, rel_gap_tol=args.gap, seed=getattr(args, "seed", 0))


def _hidden(args) -> int:
    if args.layers < 2:
        raise UsageError("--layers counts the output layer and must be at least 2")
    return args.layers - 1


def _write_json(path: Optional[str], obj) -> None:
    text = json.dumps(obj, indent=2, default=float) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# ---- commands -------------------------------------------------------------------


def cmd_simulate(args) -> None:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    common = dict(design=args.design, p_correct=args.p, noise_sd=args.noise_sd, shared_noise=args.shared_noise)
    train = simulate(SimSpec(n=args.n_train, seed=args.seed, **common))
    # test stream seeded separately so n_train does not shift it
    test = simulate(SimSpec(n=args.n_test, seed=args.seed + 1_000_003, **common))
    write_csv(train.dataset, out / TRAIN_FILE)
    write_csv(test.dataset, out / TEST_FILE)
    write_truth(test, out / TRUTH_FILE)


def cmd_train(args) -> None:
    from .training import train

    ds = _load(args.data, args.schema)
    scores = _read_scores(args.scores) if args.scores else None
    if args.solver == "mps-only" and not args.mps_out:
        raise UsageError("--solver mps-only needs --mps-out")
    if args.solver != "mps-only" and not args.model_out:
        raise UsageError("--model-out is required")
    res = train(
        ds,
        width=args.width,
        hidden_layers=_hidden(args),
        loss=args.loss,
        reg=args.reg,
        lam=args.lam,
        solver=args.solver,
        config=_config(args),
        scores=scores,
        outcome_family=args.outcome_model,
        mps_path=args.mps_out,
        seed=args.seed,
        threads=_threads(args),
    )
    if res.policy is not None:
        res.policy.save(args.model_out)
    if args.report_out:
        _write_json(args.report_out, res.report())


def cmd_evaluate(args) -> None:
    ds = _load(args.data, args.schema)
    models = []
    for p in args.model:
        if not Path(p).exists():
            raise UsageError(f"no such model file: {p}")
        models.append(PolicyModel.load(p))
    for p, m in zip(args.model, models):
        if m.architecture.input_dim != ds.n_features:
            raise ValueError(f"{p}: model expects {m.architecture.input_dim} features, data has {ds.n_features}")
    truth = None
    if args.truth:
        _, truth = read_truth(args.truth)
        if truth.size != ds.n:
            raise ValueError(f"{args.truth}: {truth.size} rows, data has {ds.n}")
    prescriptive = all(m.architecture.mode is Mode.PRESCRIPTION for m in models)
    scores = None
    if prescriptive:
        if args.train_data:
            nuis = fit_nuisances(_load(args.train_data, args.schema), seed=args.seed)
        else:
            warnings.warn("nuisance models fitted on the evaluation data itself", RuntimeWarning)
            nuis = fit_nuisances(ds, seed=args.seed)
        scores = nuis.scores(ds)

    rows: List[Dict[str, object]] = []
    per_sample: Dict[str, np.ndarray] = {}
    rows_idx = np.arange(ds.n)
    for p, m in zip(args.model, models):
        s = policy_assignments(m, ds.features)
        row: Dict[str, object] = {"model": p}
        if truth is not None:
            hits = 100.0 * (s == truth)
            row["oosp"] = float(hits.mean())
            row["oosp_lo"], row["oosp_hi"] = confidence_interval(hits, args.level)
        if scores is not None:
            for method in ("ipw", "dm", "dr"):
                row[f"pi_{method}"] = policy_value(s, ds, scores, method)
            psi = scores.psi_hat[rows_idx, s]
            row["pi_dr_lo"], row["pi_dr_hi"] = confidence_interval(psi, args.level)
            per_sample[p] = psi
        else:
            row["accuracy"] = float(np.mean(s == ds.treatments))
            per_sample[p] = (s == ds.treatments).astype(float)
        row["gap"] = m.gap
        rows.append(row)
    for a, b in itertools.combinations(args.model, 2):
        diff, pval = paired_t_test(per_sample[a], per_sample[b])
        rows.append({"model": f"{a} - {b}", "mean_diff": diff, "p_value": pval})

    cols: List[str] = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    if args.results:
        out_rows = []
        for r in rows:
            for metric in ("oosp", "pi_ipw", "pi_dm", "pi_dr", "accuracy"):
                if metric in r:
                    out_rows.append({"model": r["model"], "lambda": "", "fold": "", "metric": metric, "value": r[metric], "gap": r.get("gap", ""), "runtime": ""})
        write_results(args.results, out_rows)


def cmd_tune(args) -> None:
    ds = _load(args.data, args.schema)
    truth = None
    if args.truth:
        _, truth = read_truth(args.truth)
        if truth.size != ds.n:
            raise ValueError(f"{args.truth}: {truth.size} rows, data has {ds.n}")
    if args.solver == "mps-only":
        raise UsageError("tuning needs a solver; mps-only is not allowed")
    best, means, cells = tune_lambda(
        ds,
        width=args.width,
        hidden_layers=_hidden(args),
        loss_kind=args.loss,
        grid=args.grid,
        k_folds=args.folds,
        config=_config(args),
        seed=args.seed,
        correct_treatment=truth,
        reg=args.reg,
        solver=args.solver,
        total_budget_s=args.total_budget,
        outcome_family=args.outcome_model,
        threads=_threads(args),
    )
    out = Path(args.out)
    if out.exists():
        out.unlink()
    write_results(out, cells_to_rows(cells))
    _write_json(args.best_out, {"best_lambda": best, "mean_score": {repr(k): v for k, v in means.items()}})


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "evaluate": cmd_evaluate, "tune": cmd_tune}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    prog = "pnn"
    try:
        ap = build_parser()
        _apply_config(ap, argv)
        args = ap.parse_args(argv)
        if not args.command:
            raise UsageError("a command is required: simulate, train, evaluate or tune")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                COMMANDS[args.command](args)
            finally:
                for w in caught:
                    print(f"{prog}: warning: {' '.join(str(w.message).split())}", file=sys.stderr)
    except UsageError as exc:
        print(f"{prog}: usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"{prog}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
