import json

import numpy as np
import pytest

from pnn.core import CounterfactualScores, Dataset, Mode
from pnn.evaluation import policy_assignments
from pnn.inference import forward
from pnn.mip import SolverConfig, Status
from pnn.synthetic import SimSpec, separable_two_class, simulate
from pnn.training import candidate_weights, best_warm_start, train

FAST = SolverConfig(time_limit_s=20.0)


def _check_consistency(res):
    f, r, w = res.formulation, res.solve_result, res.policy.weights
    hidden, _ = forward(w, f.X)
    for l, H in enumerate(hidden):
        for i in range(f.n):
            for k in range(H.shape[1]):
                assert H[i, k] == round(r.value(f"h_{i}_{k}_{l}"))


def test_tiny_dr_training():
    s = simulate(SimSpec(1, 6, 0.5, 2))
    res = train(s.dataset, width=1, lam=0.0, config=FAST)
    assert res.solve_result.status is Status.OPTIMAL
    pol = res.policy
    assert pol.architecture.mode is Mode.PRESCRIPTION
    meta = pol.training_meta
    for key in ("loss", "regularizer", "lambda", "status", "epsilon", "layer_M", "counts", "feature_mean"):
        assert key in meta
    assert json.loads(meta["counts"]) == res.formulation.model.counts()
    _check_consistency(res)
    s_train = policy_assignments(pol, s.dataset.features)
    assert set(s_train) <= {0, 1}
    rep = res.report()
    assert rep["status"] == "Optimal" and rep["binaries"] > 0


def test_given_scores_fix_objective():
    X = np.array([[-1.0], [-0.5], [0.5], [1.0]])
    psi = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    d = Dataset.from_arrays(X, [0, 1, 0, 1], [0.0, 0.0, 0.0, 0.0])
    res = train(d, width=1, scores=CounterfactualScores(psi, np.full((4, 2), 0.5), psi), config=FAST, standardize=False)
    assert res.policy.objective_value == pytest.approx(1.0)
    assert np.array_equal(policy_assignments(res.policy, X), [0, 0, 1, 1])


def test_heavy_penalty_gives_constant_policy():
    s = simulate(SimSpec(1, 6, 0.5, 3))
    res = train(s.dataset, width=1, lam=10.0, config=FAST)
    assert np.all(res.policy.weights.input_alpha == 0)
    assert np.all(res.policy.weights.output_alpha == 0)
    assert len(set(policy_assignments(res.policy, simulate(SimSpec(1, 200, 0.5, 9)).dataset.features))) == 1


def test_nll_training_separable():
    X, y = separable_two_class(8, 2, seed=1)
    d = Dataset.from_arrays(X, y, np.zeros(8))
    res = train(d, width=1, loss="nll", config=FAST)
    assert res.policy.architecture.mode is Mode.PREDICTION
    assert np.mean(policy_assignments(res.policy, X) == y) >= 0.95


def test_mps_only(tmp_path):
    s = simulate(SimSpec(1, 5, 0.5, 0))
    p = tmp_path / "m.mps"
    res = train(s.dataset, width=2, solver="mps-only", mps_path=str(p))
    assert res.policy is None and res.solve_result is None
    text = p.read_text()
    assert text.startswith("NAME") and text.rstrip().endswith("ENDATA")
    with pytest.raises(ValueError):
        train(s.dataset, solver="mps-only")


def test_unknown_solver():
    s = simulate(SimSpec(1, 5, 0.5, 0))
    with pytest.raises(ValueError):
        train(s.dataset, width=1, solver="gurobi")


def test_warm_start_candidates_are_feasible():
    s = simulate(SimSpec(1, 10, 0.5, 0))
    res = train(s.dataset, width=2, hidden_layers=2, solver="mps-only", mps_path="/dev/null")
    f = res.formulation
    cands = candidate_weights(f, np.array([0.1, 0.2]), (np.array([1.0, 0.0]), 0.0))
    assert len(cands) == 6
    x = best_warm_start(f, cands)
    assert x is not None and f.model.max_violation(x) <= 1e-6


def test_deterministic():
    s = simulate(SimSpec(1, 6, 0.5, 5))
    a = train(s.dataset, width=1, lam=0.01, config=FAST)
    b = train(s.dataset, width=1, lam=0.01, config=FAST)
    assert a.policy.weights == b.policy.weights
